#pragma once

#include "uktl/kernel.hpp"

#include <vector>

namespace uktl {

/// Explicit Nystrom feature map built from C pivot subspace tuples:
/// g(x) = k(x, Z) P^{-1} - mean, with P^{-1} the clamped inverse square
/// root of the pivot-pivot kernel matrix.
struct NystromMap {
    std::vector<BasisTuple> pivot_bases;  // uncertainty-weighted at fit time
    KernelConfig cfg;
    Matrix p_inv;         // C x C, symmetric
    Vector feature_mean;  // length C; training-set column means of G
    double clamp_eps = 1e-8;
    bool mean_set = false;

    int num_pivots() const { return static_cast<int>(pivot_bases.size()); }
};

/// Builds K_CC, eigendecomposes it, zeroes eigenvalues below
/// clamp_eps * lambda_max in the inverse square root (pseudo-inverse
/// convention) and stores P^{-1} = U Lambda^{-1/2} U^T. feature_mean is
/// zero until embed_fit.
NystromMap fit_nystrom(std::vector<BasisTuple> pivot_bases, const KernelConfig& cfg,
                       double clamp_eps = 1e-8);

/// Uncentered feature row k(x, Z) P^{-1} for one sample. The overload with
/// an explicit config lets callers evaluate the kernel with parameters that
/// moved after the fit (p_inv stays frozen).
Vector nystrom_feature_row(const NystromMap& map, const BasisTuple& sample);
Vector nystrom_feature_row(const NystromMap& map, const BasisTuple& sample,
                           const KernelConfig& cfg);

/// Embeds the training set, stores the per-feature means in the map and
/// returns the centered features (training columns become zero-mean).
Matrix embed_fit(NystromMap& map, const std::vector<BasisTuple>& train);

/// Centered feature row for a fitted map. Applying to the training set
/// reproduces embed_fit's output exactly.
Vector embed_apply(const NystromMap& map, const BasisTuple& sample);
Vector embed_apply(const NystromMap& map, const BasisTuple& sample, const KernelConfig& cfg);
Matrix embed_apply(const NystromMap& map, const std::vector<BasisTuple>& samples);

}  // namespace uktl
