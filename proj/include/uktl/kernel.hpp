#pragma once

#include "uktl/subspace.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace uktl {

enum class KernelCombine { sum, product, sum_product };

KernelCombine parse_combine(const std::string& name);
std::string combine_name(KernelCombine c);

struct KernelConfig {
    double sigma = 1.0;  // RBF bandwidth, shared across modes
    double mu = 0.5;     // sum-product mixture weight in [0, 1]
    KernelCombine combine = KernelCombine::sum_product;

    void validate() const;
};

/// One basis matrix per mode. Columns may carry uncertainty weights and
/// need not be unit norm.
using BasisTuple = std::vector<Matrix>;

BasisTuple bases_of(const SubspaceTuple& t);

/// ||A A^T - B B^T||_F^2 via the p x p trace expansion
/// ||A^T A||_F^2 + ||B^T B||_F^2 - 2 ||A^T B||_F^2; never materializes the
/// ambient projectors. Valid for weighted (non-orthonormal) bases.
double weighted_projector_distance_sq(const Matrix& a, const Matrix& b);

/// RBF factor kernel exp(-dist^2 / (2 sigma^2)) on one mode's bases.
double factor_kernel(const Matrix& a, const Matrix& b, double sigma);

/// Per-mode factor kernels combined per cfg.combine:
///   product     -> prod_m f_m
///   sum         -> sum_m f_m
///   sum_product -> mu * sum + (1 - mu) * prod
double tensor_kernel(const BasisTuple& a, const BasisTuple& b, const KernelConfig& cfg);
double tensor_kernel(const SubspaceTuple& a, const SubspaceTuple& b, const KernelConfig& cfg);

/// Rectangular Gram matrix: entry (i, j) = tensor_kernel(rows[i], cols[j]).
Matrix gram_matrix(const std::vector<BasisTuple>& rows, const std::vector<BasisTuple>& cols,
                   const KernelConfig& cfg);

/// Symmetric Gram over one point set; computes the upper triangle and
/// mirrors it, so K == K^T holds bit-exactly.
Matrix gram_matrix(const std::vector<BasisTuple>& points, const KernelConfig& cfg);

/// Median of pairwise per-mode projection distances over a seeded subsample;
/// a data-driven bandwidth initializer. Returns 1.0 for degenerate inputs.
double median_heuristic_sigma(const std::vector<SubspaceTuple>& data, std::uint64_t seed,
                              int max_samples = 64);

}  // namespace uktl
