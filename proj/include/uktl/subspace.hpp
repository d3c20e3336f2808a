#pragma once

#include "uktl/tensor.hpp"

#include <vector>

namespace uktl {

/// Orthonormal basis of a p-dimensional subspace of R^{ambient_dim},
/// plus the singular values that ranked its directions.
struct Subspace {
    Matrix basis;            // ambient_dim x p, orthonormal columns
    Vector singular_values;  // length p, nonincreasing

    int ambient_dim() const { return static_cast<int>(basis.rows()); }
    int order() const { return static_cast<int>(basis.cols()); }
};

/// One subspace per tensor mode, all derived from the same tensor.
using SubspaceTuple = std::vector<Subspace>;

/// Top-p left singular subspace of x, computed from the eigendecomposition
/// of the small Gram matrix x x^T. Deterministic sign convention: each
/// column's largest-magnitude entry is made positive (ties: lowest row).
Subspace truncated_subspace(const Matrix& x, int p);

/// matricize + truncated_subspace for every mode. orders[m] = p for mode m.
SubspaceTuple tensor_subspaces(const Tensor& t, const std::vector<int>& orders);

/// Principal angles in [0, pi/2], nondecreasing: arccos of the singular
/// values of a^T b (clamped to [0,1]).
Vector principal_angles(const Subspace& a, const Subspace& b);

/// ||A A^T - B B^T||_F^2 = 2p - 2||A^T B||_F^2, without materializing the
/// ambient projectors. Equals 2 * sum_k sin^2(theta_k).
double projection_distance_sq(const Subspace& a, const Subspace& b);

class Rng;

/// Seeded gaussian matrix orthonormalized by modified Gram-Schmidt.
Matrix random_orthonormal(int rows, int cols, Rng& rng);

}  // namespace uktl
