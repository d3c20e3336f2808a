#include "uktl/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uktl {

MsnInput parse_msn_input(const std::string& name) {
    if (name == "projection_flat") return MsnInput::projection_flat;
    if (name == "singular_values") return MsnInput::singular_values;
    throw std::invalid_argument("unknown msn input '" + name +
                                "' (expected projection_flat or singular_values)");
}

std::string msn_input_name(MsnInput m) {
    return m == MsnInput::projection_flat ? "projection_flat" : "singular_values";
}

int msn_feature_dim(MsnInput input, int ambient_dim, int p) {
    return input == MsnInput::projection_flat ? ambient_dim * ambient_dim : p;
}

Vector msn_features(const Subspace& s, MsnInput input) {
    if (input == MsnInput::singular_values) {
        const double norm = s.singular_values.norm();
        if (norm > 0.0) return s.singular_values / norm;
        return s.singular_values;
    }
    const int n = s.ambient_dim();
    Matrix proj = s.basis * s.basis.transpose();
    Vector feat(n * n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) feat(i * n + j) = proj(i, j);
    }
    return feat;
}

void MsnParams::validate() const {
    if (!(sigma_min > 0.0 && sigma_min < sigma_max)) {
        throw std::invalid_argument("msn bounds require 0 < sigma_min < sigma_max");
    }
    if (weights.size() != biases.size() || weights.empty()) {
        throw std::invalid_argument("msn needs one weight/bias pair per mode");
    }
    for (size_t m = 0; m < weights.size(); ++m) {
        if (weights[m].rows() != biases[m].size()) {
            throw std::invalid_argument("msn weight rows must match bias length");
        }
    }
}

MsnParams make_msn(const std::vector<int>& ambient_dims, const std::vector<int>& orders,
                   MsnInput input, double sigma_min, double sigma_max) {
    if (ambient_dims.size() != orders.size() || ambient_dims.empty()) {
        throw std::invalid_argument("make_msn: one ambient dim and order per mode");
    }
    MsnParams params;
    params.sigma_min = sigma_min;
    params.sigma_max = sigma_max;
    params.input = input;

    double bias = 0.0;
    if (sigma_min < 1.0 && 1.0 < sigma_max) {
        const double q = (1.0 - sigma_min) / (sigma_max - sigma_min);
        bias = std::log(q / (1.0 - q));
    }
    for (size_t m = 0; m < orders.size(); ++m) {
        const int p = orders[m];
        const int fd = msn_feature_dim(input, ambient_dims[m], p);
        params.weights.push_back(Matrix::Zero(p, fd));
        params.biases.push_back(Vector::Constant(p, bias));
    }
    params.validate();
    return params;
}

double logistic(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double clamped_logistic(double z) {
    constexpr double eps = 0x1.0p-52;
    return std::clamp(logistic(z), eps, 1.0 - eps);
}

Vector msn_forward(const MsnParams& params, const Subspace& s, int mode) {
    params.validate();
    if (mode < 0 || mode >= params.num_modes()) {
        throw std::out_of_range("msn_forward: mode index out of range");
    }
    Vector feat = msn_features(s, params.input);
    const Matrix& w = params.weights[static_cast<size_t>(mode)];
    if (w.cols() != feat.size()) {
        throw std::invalid_argument("msn_forward: feature dimension mismatch");
    }
    Vector z = w * feat + params.biases[static_cast<size_t>(mode)];
    Vector sigma(z.size());
    const double span = params.sigma_max - params.sigma_min;
    for (int k = 0; k < z.size(); ++k) {
        sigma(k) = params.sigma_min + span * clamped_logistic(z(k));
    }
    return sigma;
}

Matrix weight_subspace(const Subspace& s, const Vector& sigma) {
    if (sigma.size() != s.order()) {
        throw std::invalid_argument("weight_subspace: sigma length must equal subspace order");
    }
    Matrix weighted = s.basis;
    for (int k = 0; k < sigma.size(); ++k) {
        if (!(sigma(k) > 0.0)) {
            throw std::invalid_argument("weight_subspace: sigma entries must be positive");
        }
        weighted.col(k) /= std::sqrt(sigma(k));
    }
    return weighted;
}

double uncertainty_penalty(const std::vector<std::vector<Vector>>& sigmas, double beta) {
    const size_t n = sigmas.size();
    if (n == 0) {
        throw std::invalid_argument("uncertainty_penalty: empty batch");
    }
    const size_t modes = sigmas[0].size();
    for (const auto& sample : sigmas) {
        if (sample.size() != modes) {
            throw std::invalid_argument("uncertainty_penalty: mode count mismatch across batch");
        }
    }

    double total = 0.0;
    for (size_t m = 0; m < modes; ++m) {
        const auto p = sigmas[0][m].size();
        for (Eigen::Index k = 0; k < p; ++k) {
            double denom = 0.0;
            for (size_t j = 0; j < n; ++j) {
                const double s = sigmas[j][m](k);
                if (!(s > 0.0)) {
                    throw std::invalid_argument("uncertainty_penalty: sigma must be positive");
                }
                denom += s + 1.0;
            }
            for (size_t i = 0; i < n; ++i) {
                total += std::log((sigmas[i][m](k) + 1.0) / denom);
            }
        }
    }
    return beta * total;
}

}  // namespace uktl
