#pragma once

#include "uktl/data.hpp"
#include "uktl/kernel.hpp"
#include "uktl/nystrom.hpp"
#include "uktl/pivot.hpp"
#include "uktl/uncertainty.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace uktl {

struct TrainConfig {
    std::vector<int> orders;  // subspace order p per mode (broadcast if size 1)

    // pivots
    int num_pivots = 16;
    double temperature = 1.0;
    int kmeans_max_iter = 100;
    double kmeans_tol = 1e-9;
    int refresh_period = 5;  // re-fit pivot weighting + eigendecomposition every R epochs

    // kernel
    KernelCombine combine = KernelCombine::sum_product;
    double sigma = 1.0;
    bool median_sigma = false;  // bandwidth from the median heuristic instead
    double mu_init = 0.5;
    double clamp_eps = 1e-8;

    // uncertainty
    bool use_msn = true;  // false = plain kernel pipeline (sigma == 1)
    MsnInput msn_input = MsnInput::singular_values;
    double sigma_min = 0.1;
    double sigma_max = 10.0;
    double beta = 0.01;

    // optimizer
    double learning_rate = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int batch_size = 32;
    int epochs = 30;
    std::vector<int> lr_decay_epochs;
    double lr_decay_factor = 0.1;
    bool learn_msn = true;
    bool learn_mu = true;
    bool learn_bandwidth = false;

    std::uint64_t seed = 0;

    void validate() const;
};

/// Fitted pipeline: subspace extraction -> MSN weighting -> Nystrom
/// embedding -> linear softmax classifier.
struct UktlModel {
    std::vector<int> dims;    // expected input tensor dims
    std::vector<int> orders;  // p per mode
    int num_classes = 0;

    bool use_msn = true;
    MsnParams msn;

    KernelCombine combine = KernelCombine::sum_product;
    double sigma = 1.0;
    double mu_raw = 0.0;  // mu = logistic(mu_raw), so mu stays in [0, 1]
    double beta = 0.01;

    std::vector<Tensor> pivots;
    std::vector<SubspaceTuple> pivot_subspaces;  // raw (unweighted)
    NystromMap map;

    Matrix classifier_w;  // num_classes x C
    Vector classifier_b;  // num_classes

    bool learn_mu = true;
    bool learn_bandwidth = false;

    double mu() const { return logistic(mu_raw); }
    KernelConfig kernel_config() const { return KernelConfig{sigma, mu(), combine}; }
    bool fitted() const { return map.mean_set; }

    SubspaceTuple subspaces(const Tensor& t) const;
    std::vector<Vector> sample_sigmas(const SubspaceTuple& tuple) const;  // ones when !use_msn
    BasisTuple weighted_bases(const SubspaceTuple& tuple) const;
};

Vector forward_from_subspaces(const UktlModel& model, const SubspaceTuple& tuple);
Vector forward(const UktlModel& model, const Tensor& t);

/// Mean cross-entropy over the batch plus the batch uncertainty penalty.
double loss(const UktlModel& model, const std::vector<Tensor>& batch,
            const std::vector<int>& labels);

struct ModelGrads {
    Matrix classifier_w;
    Vector classifier_b;
    std::vector<Matrix> msn_w;
    std::vector<Vector> msn_b;
    double mu_raw = 0.0;
    double log_sigma = 0.0;
};

/// Loss plus analytic gradients at fixed pivots / p_inv / feature_mean
/// (gradients flow through MSN -> weighted bases -> kernel -> embedding
/// -> classifier, and through the penalty). Pass grads = nullptr for the
/// loss alone.
double loss_and_grads(const UktlModel& model, const std::vector<const SubspaceTuple*>& batch,
                      const std::vector<int>& labels, ModelGrads* grads);

struct GradCheckReport {
    double classifier = 0.0;
    double msn = 0.0;
    double mu = 0.0;
    double bandwidth = 0.0;
    double max_overall = 0.0;
};

/// Central finite differences vs analytic gradients over every trainable
/// parameter; returns the max relative error per group.
GradCheckReport grad_check(const UktlModel& model, const std::vector<Tensor>& batch,
                           const std::vector<int>& labels, double step = 1e-5);

/// Seeded non-degenerate parameters (classifier + MSN + mu) so gradient
/// checks exercise every path.
void randomize_parameters(UktlModel& model, std::uint64_t seed);

struct EpochStats {
    double loss = 0.0;
    double train_accuracy = 0.0;
    double learning_rate = 0.0;
};

struct TrainResult {
    UktlModel model;
    std::vector<EpochStats> history;
};

using EpochCallback = std::function<void(int epoch, const EpochStats& stats)>;

TrainResult train(const Dataset& dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

int predict_label(const UktlModel& model, const Tensor& t);
std::vector<int> predict(const UktlModel& model, const std::vector<Tensor>& tensors);
double evaluate(const UktlModel& model, const Dataset& dataset);

// Checkpoint: single JSON document, format tag "uktl-ckpt-v1". Numbers are
// full-precision decimals; save -> load -> forward is bit-exact.
std::string encode_checkpoint(const UktlModel& model);
UktlModel decode_checkpoint(const std::string& text);
void save_checkpoint(const UktlModel& model, const std::filesystem::path& path);
UktlModel load_checkpoint(const std::filesystem::path& path);

}  // namespace uktl
