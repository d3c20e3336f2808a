#include "uktl/nystrom.hpp"

#include "uktl/parallel.hpp"

#include <cmath>
#include <stdexcept>

namespace uktl {

NystromMap fit_nystrom(std::vector<BasisTuple> pivot_bases, const KernelConfig& cfg,
                       double clamp_eps) {
    if (pivot_bases.empty()) {
        throw std::invalid_argument("fit_nystrom: need at least one pivot");
    }
    if (!(clamp_eps > 0.0)) {
        throw std::invalid_argument("fit_nystrom: clamp_eps must be positive");
    }
    cfg.validate();

    NystromMap map;
    map.pivot_bases = std::move(pivot_bases);
    map.cfg = cfg;
    map.clamp_eps = clamp_eps;

    const Matrix kcc = gram_matrix(map.pivot_bases, cfg);
    Eigen::SelfAdjointEigenSolver<Matrix> es(kcc);
    if (es.info() != Eigen::Success) {
        throw std::runtime_error("fit_nystrom: eigendecomposition failed");
    }
    const double lambda_max = es.eigenvalues().maxCoeff();
    const double threshold = clamp_eps * lambda_max;
    if (!(lambda_max > 0.0)) {
        throw std::runtime_error("fit_nystrom: degenerate pivot set (no positive eigenvalue)");
    }

    Vector inv_sqrt(es.eigenvalues().size());
    int retained = 0;
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
        const double lam = es.eigenvalues()(k);
        if (lam >= threshold && lam > 0.0) {
            inv_sqrt(k) = 1.0 / std::sqrt(lam);
            ++retained;
        } else {
            inv_sqrt(k) = 0.0;  // pseudo-inverse: drop clamped directions
        }
    }
    if (retained == 0) {
        throw std::runtime_error("fit_nystrom: all eigenvalues below clamp threshold");
    }

    Matrix p = es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
    map.p_inv = 0.5 * (p + p.transpose());  // exact symmetry
    map.feature_mean = Vector::Zero(map.num_pivots());
    map.mean_set = false;
    return map;
}

Vector nystrom_feature_row(const NystromMap& map, const BasisTuple& sample) {
    return nystrom_feature_row(map, sample, map.cfg);
}

Vector nystrom_feature_row(const NystromMap& map, const BasisTuple& sample,
                           const KernelConfig& cfg) {
    const int c = map.num_pivots();
    Vector krow(c);
    for (int j = 0; j < c; ++j) {
        krow(j) = tensor_kernel(sample, map.pivot_bases[static_cast<size_t>(j)], cfg);
    }
    return map.p_inv * krow;
}

Matrix embed_fit(NystromMap& map, const std::vector<BasisTuple>& train) {
    if (train.empty()) {
        throw std::invalid_argument("embed_fit: empty training set");
    }
    const auto n = static_cast<std::int64_t>(train.size());
    Matrix g(n, map.num_pivots());
    parallel_for(n, [&](std::int64_t i) {
        g.row(i) = nystrom_feature_row(map, train[static_cast<size_t>(i)]).transpose();
    });
    map.feature_mean = g.colwise().mean();
    map.mean_set = true;
    g.rowwise() -= map.feature_mean.transpose();
    return g;
}

Vector embed_apply(const NystromMap& map, const BasisTuple& sample) {
    return embed_apply(map, sample, map.cfg);
}

Vector embed_apply(const NystromMap& map, const BasisTuple& sample, const KernelConfig& cfg) {
    if (!map.mean_set) {
        throw std::logic_error("embed_apply: map not fitted (run embed_fit first)");
    }
    return nystrom_feature_row(map, sample, cfg) - map.feature_mean;
}

Matrix embed_apply(const NystromMap& map, const std::vector<BasisTuple>& samples) {
    if (!map.mean_set) {
        throw std::logic_error("embed_apply: map not fitted (run embed_fit first)");
    }
    const auto n = static_cast<std::int64_t>(samples.size());
    Matrix g(n, map.num_pivots());
    parallel_for(n, [&](std::int64_t i) {
        g.row(i) = embed_apply(map, samples[static_cast<size_t>(i)]).transpose();
    });
    return g;
}

}  // namespace uktl
