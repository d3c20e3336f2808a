#include "uktl/kernel.hpp"

#include "uktl/parallel.hpp"
#include "uktl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace uktl {

KernelCombine parse_combine(const std::string& name) {
    if (name == "sum") return KernelCombine::sum;
    if (name == "product") return KernelCombine::product;
    if (name == "sum_product") return KernelCombine::sum_product;
    throw std::invalid_argument("unknown kernel combine '" + name +
                                "' (expected sum, product, or sum_product)");
}

std::string combine_name(KernelCombine c) {
    switch (c) {
        case KernelCombine::sum: return "sum";
        case KernelCombine::product: return "product";
        case KernelCombine::sum_product: return "sum_product";
    }
    return "?";
}

void KernelConfig::validate() const {
    if (!(sigma > 0.0)) {
        throw std::invalid_argument("kernel bandwidth sigma must be positive");
    }
    if (!(mu >= 0.0 && mu <= 1.0)) {
        throw std::invalid_argument("kernel mixture weight mu must be in [0, 1]");
    }
}

BasisTuple bases_of(const SubspaceTuple& t) {
    BasisTuple b;
    b.reserve(t.size());
    for (const Subspace& s : t) b.push_back(s.basis);
    return b;
}

double weighted_projector_distance_sq(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("factor kernel: ambient dimension mismatch");
    }
    const double taa = (a.transpose() * a).squaredNorm();
    const double tbb = (b.transpose() * b).squaredNorm();
    const double tab = (a.transpose() * b).squaredNorm();
    return std::max(0.0, taa + tbb - 2.0 * tab);
}

double factor_kernel(const Matrix& a, const Matrix& b, double sigma) {
    if (!(sigma > 0.0)) {
        throw std::invalid_argument("factor kernel: sigma must be positive");
    }
    return std::exp(-weighted_projector_distance_sq(a, b) / (2.0 * sigma * sigma));
}

static void check_tuples(const BasisTuple& a, const BasisTuple& b) {
    if (a.empty() || a.size() != b.size()) {
        throw std::invalid_argument("tensor kernel: mode-count mismatch");
    }
}

double tensor_kernel(const BasisTuple& a, const BasisTuple& b, const KernelConfig& cfg) {
    check_tuples(a, b);
    cfg.validate();
    double sum = 0.0;
    double prod = 1.0;
    for (size_t m = 0; m < a.size(); ++m) {
        const double f = factor_kernel(a[m], b[m], cfg.sigma);
        sum += f;
        prod *= f;
    }
    switch (cfg.combine) {
        case KernelCombine::sum: return sum;
        case KernelCombine::product: return prod;
        case KernelCombine::sum_product: return cfg.mu * sum + (1.0 - cfg.mu) * prod;
    }
    return 0.0;
}

double tensor_kernel(const SubspaceTuple& a, const SubspaceTuple& b, const KernelConfig& cfg) {
    return tensor_kernel(bases_of(a), bases_of(b), cfg);
}

Matrix gram_matrix(const std::vector<BasisTuple>& rows, const std::vector<BasisTuple>& cols,
                   const KernelConfig& cfg) {
    if (rows.empty() || cols.empty()) {
        throw std::invalid_argument("gram_matrix: empty input");
    }
    cfg.validate();
    Matrix k(rows.size(), cols.size());
    parallel_for(static_cast<std::int64_t>(rows.size()), [&](std::int64_t i) {
        for (size_t j = 0; j < cols.size(); ++j) {
            k(i, j) = tensor_kernel(rows[static_cast<size_t>(i)], cols[j], cfg);
        }
    });
    return k;
}

Matrix gram_matrix(const std::vector<BasisTuple>& points, const KernelConfig& cfg) {
    if (points.empty()) {
        throw std::invalid_argument("gram_matrix: empty input");
    }
    cfg.validate();
    const auto n = static_cast<std::int64_t>(points.size());
    Matrix k(n, n);
    parallel_for(n, [&](std::int64_t i) {
        for (std::int64_t j = i; j < n; ++j) {
            k(i, j) = tensor_kernel(points[static_cast<size_t>(i)],
                                    points[static_cast<size_t>(j)], cfg);
        }
    });
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < i; ++j) k(i, j) = k(j, i);
    }
    return k;
}

double median_heuristic_sigma(const std::vector<SubspaceTuple>& data, std::uint64_t seed,
                              int max_samples) {
    if (data.size() < 2) return 1.0;
    std::vector<size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    Rng rng(seed);
    for (size_t i = idx.size() - 1; i > 0; --i) {
        std::swap(idx[i], idx[rng.uniform_index(i + 1)]);
    }
    if (static_cast<int>(idx.size()) > max_samples) {
        idx.resize(static_cast<size_t>(max_samples));
    }

    std::vector<double> dists;
    for (size_t a = 0; a < idx.size(); ++a) {
        for (size_t b = a + 1; b < idx.size(); ++b) {
            const SubspaceTuple& ta = data[idx[a]];
            const SubspaceTuple& tb = data[idx[b]];
            for (size_t m = 0; m < ta.size(); ++m) {
                dists.push_back(std::sqrt(projection_distance_sq(ta[m], tb[m])));
            }
        }
    }
    if (dists.empty()) return 1.0;
    std::sort(dists.begin(), dists.end());
    const size_t n = dists.size();
    const double med = (n % 2 == 1) ? dists[n / 2] : 0.5 * (dists[n / 2 - 1] + dists[n / 2]);
    return med > 0.0 ? med : 1.0;
}

}  // namespace uktl
