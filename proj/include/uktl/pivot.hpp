#pragma once

#include "uktl/tensor.hpp"

#include <cstdint>
#include <vector>

namespace uktl {

/// Result of soft k-means over tensors: C prototype tensors, the final
/// row-stochastic assignment matrix and the monitored objective per
/// iteration.
struct PivotSet {
    std::vector<Tensor> pivots;
    double temperature = 1.0;
    Matrix assignments;  // N x C, rows sum to 1
    std::vector<double> objective_history;

    int num_pivots() const { return static_cast<int>(pivots.size()); }
};

/// softmax over pivots of -||x - Z_j||_F^2 / T, with max-subtraction.
Vector soft_assign(const Tensor& x, const std::vector<Tensor>& pivots, double temperature);

/// Alternates soft assignment (E) and responsibility-weighted means (M)
/// until the soft objective sum_ij alpha_ij ||X_i - Z_j||_F^2 improves by
/// less than tol or max_iter is reached. Initialization is greedy
/// farthest-point from a seeded random start. Deterministic given seed.
PivotSet soft_kmeans(const std::vector<Tensor>& data, int num_pivots, double temperature,
                     int max_iter, double tol, std::uint64_t seed);

}  // namespace uktl
