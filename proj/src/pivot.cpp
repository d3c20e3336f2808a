#include "uktl/pivot.hpp"

#include "uktl/parallel.hpp"
#include "uktl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace uktl {

Vector soft_assign(const Tensor& x, const std::vector<Tensor>& pivots, double temperature) {
    if (pivots.empty()) {
        throw std::invalid_argument("soft_assign: no pivots");
    }
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("soft_assign: temperature must be positive");
    }
    const auto c = static_cast<Eigen::Index>(pivots.size());
    Vector logits(c);
    for (Eigen::Index j = 0; j < c; ++j) {
        logits(j) = -frobenius_distance_sq(x, pivots[static_cast<size_t>(j)]) / temperature;
    }
    const double zmax = logits.maxCoeff();
    double total = 0.0;
    Vector alpha(c);
    for (Eigen::Index j = 0; j < c; ++j) {
        alpha(j) = std::exp(logits(j) - zmax);
        total += alpha(j);
    }
    alpha /= total;
    return alpha;
}

// Greedy farthest-point: seeded random first pick, then repeatedly the
// datum maximizing the min distance to chosen pivots (ties: lowest index).
static std::vector<size_t> farthest_point_init(const std::vector<Tensor>& data, int c,
                                               std::uint64_t seed) {
    Rng rng(seed);
    std::vector<size_t> chosen;
    chosen.push_back(static_cast<size_t>(rng.uniform_index(data.size())));
    std::vector<double> min_dist(data.size(), std::numeric_limits<double>::infinity());
    while (static_cast<int>(chosen.size()) < c) {
        const Tensor& last = data[chosen.back()];
        size_t best = 0;
        double best_dist = -1.0;
        for (size_t i = 0; i < data.size(); ++i) {
            min_dist[i] = std::min(min_dist[i], frobenius_distance_sq(data[i], last));
            if (min_dist[i] > best_dist) {
                best_dist = min_dist[i];
                best = i;
            }
        }
        chosen.push_back(best);
    }
    return chosen;
}

PivotSet soft_kmeans(const std::vector<Tensor>& data, int num_pivots, double temperature,
                     int max_iter, double tol, std::uint64_t seed) {
    const auto n = static_cast<std::int64_t>(data.size());
    if (n == 0) {
        throw std::invalid_argument("soft_kmeans: empty data");
    }
    if (num_pivots < 1 || num_pivots > n) {
        throw std::invalid_argument("soft_kmeans: need 1 <= C <= N");
    }
    if (max_iter < 1) {
        throw std::invalid_argument("soft_kmeans: max_iter must be >= 1");
    }
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("soft_kmeans: temperature must be positive");
    }

    PivotSet set;
    set.temperature = temperature;
    for (size_t i : farthest_point_init(data, num_pivots, seed)) {
        set.pivots.push_back(data[i]);
    }

    const int c = num_pivots;
    Matrix dist2(n, c);
    set.assignments.resize(n, c);
    double prev_objective = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < max_iter; ++iter) {
        // E-step
        parallel_for(n, [&](std::int64_t i) {
            for (int j = 0; j < c; ++j) {
                dist2(i, j) =
                    frobenius_distance_sq(data[static_cast<size_t>(i)], set.pivots[static_cast<size_t>(j)]);
            }
            double zmax = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < c; ++j) zmax = std::max(zmax, -dist2(i, j) / temperature);
            double total = 0.0;
            for (int j = 0; j < c; ++j) {
                set.assignments(i, j) = std::exp(-dist2(i, j) / temperature - zmax);
                total += set.assignments(i, j);
            }
            for (int j = 0; j < c; ++j) set.assignments(i, j) /= total;
        });

        double objective = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            for (int j = 0; j < c; ++j) objective += set.assignments(i, j) * dist2(i, j);
        }
        set.objective_history.push_back(objective);
        if (prev_objective - objective < tol) break;
        prev_objective = objective;

        // M-step: responsibility-weighted means in fixed summation order.
        for (int j = 0; j < c; ++j) {
            double mass = 0.0;
            for (std::int64_t i = 0; i < n; ++i) mass += set.assignments(i, j);
            if (mass < 1e-12) {
                // near-empty cluster: re-seed at the datum contributing the
                // largest soft reconstruction error
                std::int64_t worst = 0;
                double worst_err = -1.0;
                for (std::int64_t i = 0; i < n; ++i) {
                    double err = 0.0;
                    for (int jj = 0; jj < c; ++jj) err += set.assignments(i, jj) * dist2(i, jj);
                    if (err > worst_err) {
                        worst_err = err;
                        worst = i;
                    }
                }
                set.pivots[static_cast<size_t>(j)] = data[static_cast<size_t>(worst)];
                continue;
            }
            Tensor mean(data[0].dims, 0.0);
            for (std::int64_t i = 0; i < n; ++i) {
                const double w = set.assignments(i, j);
                const auto& vals = data[static_cast<size_t>(i)].values;
                for (size_t v = 0; v < vals.size(); ++v) mean.values[v] += w * vals[v];
            }
            mean *= 1.0 / mass;
            set.pivots[static_cast<size_t>(j)] = std::move(mean);
        }
    }
    return set;
}

}  // namespace uktl
