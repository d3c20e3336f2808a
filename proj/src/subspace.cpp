#include "uktl/subspace.hpp"

#include "uktl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uktl {

Subspace truncated_subspace(const Matrix& x, int p) {
    const int rows = static_cast<int>(x.rows());
    const int cols = static_cast<int>(x.cols());
    if (p < 1 || p > std::min(rows, cols)) {
        throw std::invalid_argument("truncated_subspace: p exceeds matrix rank budget");
    }
    if (!x.allFinite()) {
        throw std::invalid_argument("truncated_subspace: non-finite input");
    }

    // Only left singular vectors are needed; the Gram matrix is the small
    // rows x rows side.
    Matrix gram = x * x.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    if (es.info() != Eigen::Success) {
        throw std::runtime_error("truncated_subspace: eigendecomposition failed");
    }

    Subspace s;
    s.basis.resize(rows, p);
    s.singular_values.resize(p);
    // Eigen returns eigenvalues ascending; take the top p in descending order.
    for (int k = 0; k < p; ++k) {
        const int src = rows - 1 - k;
        s.singular_values(k) = std::sqrt(std::max(0.0, es.eigenvalues()(src)));
        s.basis.col(k) = es.eigenvectors().col(src);
    }

    // Sign convention: largest-magnitude entry positive, ties to lowest row.
    for (int k = 0; k < p; ++k) {
        int best = 0;
        for (int i = 1; i < rows; ++i) {
            if (std::abs(s.basis(i, k)) > std::abs(s.basis(best, k))) best = i;
        }
        if (s.basis(best, k) < 0.0) s.basis.col(k) = -s.basis.col(k);
    }
    return s;
}

SubspaceTuple tensor_subspaces(const Tensor& t, const std::vector<int>& orders) {
    if (static_cast<int>(orders.size()) != t.order()) {
        throw std::invalid_argument("tensor_subspaces: one order per mode required");
    }
    SubspaceTuple tuple;
    tuple.reserve(orders.size());
    for (int m = 0; m < t.order(); ++m) {
        tuple.push_back(truncated_subspace(matricize(t, m), orders[m]));
    }
    return tuple;
}

static void check_comparable(const Subspace& a, const Subspace& b) {
    if (a.ambient_dim() != b.ambient_dim()) {
        throw std::invalid_argument("subspace ambient dimension mismatch");
    }
    if (a.order() != b.order()) {
        throw std::invalid_argument("subspace order mismatch");
    }
}

Vector principal_angles(const Subspace& a, const Subspace& b) {
    check_comparable(a, b);
    Matrix cross = a.basis.transpose() * b.basis;
    Eigen::JacobiSVD<Matrix> svd(cross);
    Vector angles(cross.rows() < cross.cols() ? cross.rows() : cross.cols());
    for (int k = 0; k < angles.size(); ++k) {
        const double c = std::clamp(svd.singularValues()(k), 0.0, 1.0);
        angles(k) = std::acos(c);
    }
    return angles;  // singular values descend, so angles ascend
}

double projection_distance_sq(const Subspace& a, const Subspace& b) {
    check_comparable(a, b);
    const double cross = (a.basis.transpose() * b.basis).squaredNorm();
    return std::max(0.0, 2.0 * a.order() - 2.0 * cross);
}

Matrix random_orthonormal(int rows, int cols, Rng& rng) {
    Matrix a(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) a(i, j) = rng.gaussian();
    }
    // modified Gram-Schmidt, redrawing degenerate columns
    for (int j = 0; j < cols; ++j) {
        for (;;) {
            Vector v = a.col(j);
            for (int i = 0; i < j; ++i) v -= a.col(i).dot(v) * a.col(i);
            const double norm = v.norm();
            if (norm > 1e-10) {
                a.col(j) = v / norm;
                break;
            }
            for (int i = 0; i < rows; ++i) a(i, j) = rng.gaussian();
        }
    }
    return a;
}

}  // namespace uktl
