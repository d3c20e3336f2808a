#pragma once

#include "uktl/subspace.hpp"

#include <string>
#include <vector>

namespace uktl {

/// Featurization feeding each MSN branch. projection_flat uses the
/// flattened projector U U^T (dim I_m^2); singular_values uses the
/// unit-normalized spectrum (dim p). Both are bounded, so the branches
/// train at the same learning rate as the classifier regardless of the
/// tensor scale.
enum class MsnInput { projection_flat, singular_values };

MsnInput parse_msn_input(const std::string& name);
std::string msn_input_name(MsnInput m);

int msn_feature_dim(MsnInput input, int ambient_dim, int p);
Vector msn_features(const Subspace& s, MsnInput input);

/// Multi-mode SigmaNet: one affine branch per mode followed by a scaled
/// sigmoid, so outputs stay strictly inside (sigma_min, sigma_max).
struct MsnParams {
    std::vector<Matrix> weights;  // per mode: p x feature_dim
    std::vector<Vector> biases;   // per mode: length p
    double sigma_min = 0.1;
    double sigma_max = 10.0;
    MsnInput input = MsnInput::singular_values;

    int num_modes() const { return static_cast<int>(weights.size()); }
    void validate() const;
};

/// Zero-weight parameters whose bias places every output at 1 when
/// sigma_min < 1 < sigma_max (mid-range otherwise), so training starts
/// from the unweighted kernel.
MsnParams make_msn(const std::vector<int>& ambient_dims, const std::vector<int>& orders,
                   MsnInput input, double sigma_min = 0.1, double sigma_max = 10.0);

double logistic(double z);

/// logistic clamped into the open unit interval, so the scaled sigmoid
/// stays strictly inside (sigma_min, sigma_max) even at saturation.
double clamped_logistic(double z);

/// sigma = sigma_min + (sigma_max - sigma_min) * clamped_logistic(W feat + b).
Vector msn_forward(const MsnParams& params, const Subspace& s, int mode);

/// Column k of the result is basis column k divided by sqrt(sigma_k):
/// directions with higher uncertainty shrink.
Matrix weight_subspace(const Subspace& s, const Vector& sigma);

/// Batch log-ratio regularizer
///   beta * sum_i sum_m sum_k log((sigma_{k,i,m}+1) / sum_j (sigma_{k,j,m}+1)),
/// denominator scoped to the batch. Always <= 0; exactly 0 for n = 1.
double uncertainty_penalty(const std::vector<std::vector<Vector>>& sigmas, double beta);

}  // namespace uktl
