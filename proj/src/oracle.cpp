#include "uktl/oracle.hpp"

#include "uktl/nystrom.hpp"
#include "uktl/pivot.hpp"
#include "uktl/subspace.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace uktl {

Tensor random_tensor(const std::vector<int>& dims, Rng& rng) {
    Tensor t(dims);
    for (double& v : t.values) v = rng.gaussian();
    return t;
}

Matrix brute_force_gram(const std::vector<Tensor>& tensors, const std::vector<int>& orders,
                        const KernelConfig& cfg,
                        const std::vector<std::vector<Vector>>* sigmas) {
    const size_t n = tensors.size();
    if (n == 0) {
        throw std::invalid_argument("brute_force_gram: empty input");
    }
    const size_t modes = orders.size();

    // subspace extraction is shared input preparation; everything downstream
    // is literal
    std::vector<std::vector<Matrix>> projectors(n, std::vector<Matrix>(modes));
    for (size_t i = 0; i < n; ++i) {
        const SubspaceTuple tuple = tensor_subspaces(tensors[i], orders);
        for (size_t m = 0; m < modes; ++m) {
            const Matrix& u = tuple[m].basis;
            const int rows = static_cast<int>(u.rows());
            const int p = static_cast<int>(u.cols());

            Matrix weighted(rows, p);
            for (int a = 0; a < rows; ++a) {
                for (int k = 0; k < p; ++k) {
                    double w = u(a, k);
                    if (sigmas) w /= std::sqrt((*sigmas)[i][m](k));
                    weighted(a, k) = w;
                }
            }
            Matrix proj(rows, rows);
            for (int a = 0; a < rows; ++a) {
                for (int b = 0; b < rows; ++b) {
                    double s = 0.0;
                    for (int k = 0; k < p; ++k) s += weighted(a, k) * weighted(b, k);
                    proj(a, b) = s;
                }
            }
            projectors[i][m] = std::move(proj);
        }
    }

    Matrix gram(n, n);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            double sum = 0.0;
            double prod = 1.0;
            for (size_t m = 0; m < modes; ++m) {
                const Matrix& pi = projectors[i][m];
                const Matrix& pj = projectors[j][m];
                double dist2 = 0.0;
                for (Eigen::Index a = 0; a < pi.rows(); ++a) {
                    for (Eigen::Index b = 0; b < pi.cols(); ++b) {
                        const double d = pi(a, b) - pj(a, b);
                        dist2 += d * d;
                    }
                }
                const double factor = std::exp(-dist2 / (2.0 * cfg.sigma * cfg.sigma));
                sum += factor;
                prod *= factor;
            }
            double value = 0.0;
            switch (cfg.combine) {
                case KernelCombine::sum: value = sum; break;
                case KernelCombine::product: value = prod; break;
                case KernelCombine::sum_product: value = cfg.mu * sum + (1.0 - cfg.mu) * prod; break;
            }
            gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value;
        }
    }
    return gram;
}

std::vector<std::pair<int, double>> nystrom_error_curve(const std::vector<Tensor>& tensors,
                                                        const std::vector<int>& orders,
                                                        const KernelConfig& cfg,
                                                        const std::vector<int>& pivot_counts,
                                                        std::uint64_t seed) {
    const auto n = static_cast<int>(tensors.size());
    std::vector<BasisTuple> sample_bases;
    sample_bases.reserve(tensors.size());
    for (const Tensor& t : tensors) {
        sample_bases.push_back(bases_of(tensor_subspaces(t, orders)));
    }
    const Matrix k_nn = gram_matrix(sample_bases, cfg);
    const double k_norm = k_nn.norm();

    std::vector<std::pair<int, double>> curve;
    for (int c : pivot_counts) {
        if (c < 1 || c > n) {
            throw std::invalid_argument("nystrom_error_curve: pivot count out of range");
        }
        std::vector<Tensor> pivots;
        if (c == n) {
            pivots = tensors;  // exactness identity: pivots are the samples
        } else {
            pivots = soft_kmeans(tensors, c, 1.0, 100, 1e-9, seed).pivots;
        }
        std::vector<BasisTuple> pivot_bases;
        pivot_bases.reserve(pivots.size());
        for (const Tensor& z : pivots) {
            pivot_bases.push_back(bases_of(tensor_subspaces(z, orders)));
        }
        NystromMap map = fit_nystrom(std::move(pivot_bases), cfg);

        Matrix g(n, c);
        for (int i = 0; i < n; ++i) {
            g.row(i) = nystrom_feature_row(map, sample_bases[static_cast<size_t>(i)]).transpose();
        }
        const double err = (k_nn - g * g.transpose()).norm() / k_norm;
        curve.emplace_back(c, err);
    }
    return curve;
}

std::vector<Tensor> hard_kmeans(const std::vector<Tensor>& tensors, int num_centroids,
                                std::uint64_t seed, int max_iter) {
    const auto n = static_cast<int>(tensors.size());
    if (n == 0 || num_centroids < 1 || num_centroids > n) {
        throw std::invalid_argument("hard_kmeans: need 1 <= C <= N");
    }

    auto dist2 = [](const Tensor& a, const Tensor& b) {
        double s = 0.0;
        for (size_t v = 0; v < a.values.size(); ++v) {
            const double d = a.values[v] - b.values[v];
            s += d * d;
        }
        return s;
    };

    // greedy farthest-point start, written out locally
    std::vector<Tensor> centroids;
    {
        Rng rng(seed);
        std::vector<int> chosen;
        chosen.push_back(static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n))));
        std::vector<double> min_dist(static_cast<size_t>(n),
                                     std::numeric_limits<double>::infinity());
        while (static_cast<int>(chosen.size()) < num_centroids) {
            int best = 0;
            double best_dist = -1.0;
            for (int i = 0; i < n; ++i) {
                min_dist[static_cast<size_t>(i)] =
                    std::min(min_dist[static_cast<size_t>(i)],
                             dist2(tensors[static_cast<size_t>(i)],
                                   tensors[static_cast<size_t>(chosen.back())]));
                if (min_dist[static_cast<size_t>(i)] > best_dist) {
                    best_dist = min_dist[static_cast<size_t>(i)];
                    best = i;
                }
            }
            chosen.push_back(best);
        }
        for (int i : chosen) centroids.push_back(tensors[static_cast<size_t>(i)]);
    }

    std::vector<int> assign(static_cast<size_t>(n), -1);
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_dist = dist2(tensors[static_cast<size_t>(i)], centroids[0]);
            for (int j = 1; j < num_centroids; ++j) {
                const double d = dist2(tensors[static_cast<size_t>(i)], centroids[static_cast<size_t>(j)]);
                if (d < best_dist) {
                    best_dist = d;
                    best = j;
                }
            }
            if (assign[static_cast<size_t>(i)] != best) {
                assign[static_cast<size_t>(i)] = best;
                changed = true;
            }
        }
        if (!changed) break;

        for (int j = 0; j < num_centroids; ++j) {
            int count = 0;
            Tensor mean(tensors[0].dims, 0.0);
            for (int i = 0; i < n; ++i) {
                if (assign[static_cast<size_t>(i)] != j) continue;
                ++count;
                for (size_t v = 0; v < mean.values.size(); ++v) {
                    mean.values[v] += tensors[static_cast<size_t>(i)].values[v];
                }
            }
            if (count > 0) {
                for (double& v : mean.values) v /= count;
                centroids[static_cast<size_t>(j)] = std::move(mean);
            }
        }
    }
    return centroids;
}

}  // namespace uktl
