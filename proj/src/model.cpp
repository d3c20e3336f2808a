#include "uktl/model.hpp"

#include "uktl/parallel.hpp"
#include "uktl/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace uktl {

using nlohmann::json;

void TrainConfig::validate() const {
    if (num_pivots < 1) throw std::invalid_argument("train config: num_pivots must be >= 1");
    if (!(temperature > 0.0)) throw std::invalid_argument("train config: temperature must be positive");
    if (kmeans_max_iter < 1) throw std::invalid_argument("train config: kmeans_max_iter must be >= 1");
    if (refresh_period < 1) throw std::invalid_argument("train config: refresh_period must be >= 1");
    if (!(sigma > 0.0)) throw std::invalid_argument("train config: sigma must be positive");
    if (!(mu_init >= 0.0 && mu_init <= 1.0)) throw std::invalid_argument("train config: mu_init must be in [0, 1]");
    if (!(clamp_eps > 0.0)) throw std::invalid_argument("train config: clamp_eps must be positive");
    if (!(sigma_min > 0.0 && sigma_min < sigma_max)) {
        throw std::invalid_argument("train config: need 0 < sigma_min < sigma_max");
    }
    if (beta < 0.0) throw std::invalid_argument("train config: beta must be >= 0");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train config: momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw std::invalid_argument("train config: weight_decay must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
    if (!(lr_decay_factor > 0.0)) throw std::invalid_argument("train config: lr_decay_factor must be positive");
}

static std::vector<int> resolve_orders(const std::vector<int>& requested,
                                       const std::vector<int>& dims) {
    const int modes = static_cast<int>(dims.size());
    std::vector<int> orders;
    if (requested.empty()) {
        orders.assign(static_cast<size_t>(modes), 8);
    } else if (requested.size() == 1) {
        orders.assign(static_cast<size_t>(modes), requested[0]);
    } else if (static_cast<int>(requested.size()) == modes) {
        orders = requested;
    } else {
        throw std::invalid_argument("subspace orders must have one entry per mode");
    }
    const std::int64_t numel = checked_numel(dims);
    for (int m = 0; m < modes; ++m) {
        const std::int64_t budget = std::min<std::int64_t>(dims[m], numel / dims[m]);
        if (orders[static_cast<size_t>(m)] < 1 || orders[static_cast<size_t>(m)] > budget) {
            throw std::invalid_argument("subspace order exceeds rank budget for mode " +
                                        std::to_string(m));
        }
    }
    return orders;
}

SubspaceTuple UktlModel::subspaces(const Tensor& t) const {
    if (t.dims != dims) {
        throw std::invalid_argument("tensor dims do not match model dims");
    }
    return tensor_subspaces(t, orders);
}

std::vector<Vector> UktlModel::sample_sigmas(const SubspaceTuple& tuple) const {
    std::vector<Vector> sigmas;
    sigmas.reserve(tuple.size());
    for (size_t m = 0; m < tuple.size(); ++m) {
        if (use_msn) {
            sigmas.push_back(msn_forward(msn, tuple[m], static_cast<int>(m)));
        } else {
            sigmas.push_back(Vector::Ones(tuple[m].order()));
        }
    }
    return sigmas;
}

BasisTuple UktlModel::weighted_bases(const SubspaceTuple& tuple) const {
    const std::vector<Vector> sigmas = sample_sigmas(tuple);
    BasisTuple bases;
    bases.reserve(tuple.size());
    for (size_t m = 0; m < tuple.size(); ++m) {
        bases.push_back(weight_subspace(tuple[m], sigmas[m]));
    }
    return bases;
}

Vector forward_from_subspaces(const UktlModel& model, const SubspaceTuple& tuple) {
    if (!model.fitted()) {
        throw std::logic_error("forward: model not fitted");
    }
    // kernel parameters may have moved since the map was fitted; p_inv and
    // feature_mean stay frozen by design
    const Vector g = embed_apply(model.map, model.weighted_bases(tuple), model.kernel_config());
    return model.classifier_w * g + model.classifier_b;
}

Vector forward(const UktlModel& model, const Tensor& t) {
    return forward_from_subspaces(model, model.subspaces(t));
}

namespace {

double log_sum_exp(const Vector& z) {
    const double zmax = z.maxCoeff();
    double s = 0.0;
    for (Eigen::Index k = 0; k < z.size(); ++k) s += std::exp(z(k) - zmax);
    return zmax + std::log(s);
}

}  // namespace

double loss_and_grads(const UktlModel& model, const std::vector<const SubspaceTuple*>& batch,
                      const std::vector<int>& labels, ModelGrads* grads) {
    const auto n = batch.size();
    if (n == 0 || n != labels.size()) {
        throw std::invalid_argument("loss: batch and labels must be nonempty and equal length");
    }
    if (!model.fitted()) {
        throw std::logic_error("loss: model not fitted");
    }
    for (int y : labels) {
        if (y < 0 || y >= model.num_classes) {
            throw std::invalid_argument("loss: unknown label " + std::to_string(y));
        }
    }

    const int modes = static_cast<int>(model.orders.size());
    const int c = model.map.num_pivots();
    const double mu = model.mu();
    const double sig2 = model.sigma * model.sigma;

    if (grads) {
        grads->classifier_w = Matrix::Zero(model.classifier_w.rows(), model.classifier_w.cols());
        grads->classifier_b = Vector::Zero(model.classifier_b.size());
        grads->msn_w.clear();
        grads->msn_b.clear();
        if (model.use_msn) {
            for (int m = 0; m < modes; ++m) {
                grads->msn_w.push_back(Matrix::Zero(model.msn.weights[static_cast<size_t>(m)].rows(),
                                                    model.msn.weights[static_cast<size_t>(m)].cols()));
                grads->msn_b.push_back(Vector::Zero(model.msn.biases[static_cast<size_t>(m)].size()));
            }
        }
        grads->mu_raw = 0.0;
        grads->log_sigma = 0.0;
    }

    // MSN forward for the whole batch (penalty denominators span the batch).
    std::vector<std::vector<Vector>> sigmas(n);
    std::vector<std::vector<Vector>> feats(n), logistic_s(n);
    const double span = model.msn.sigma_max - model.msn.sigma_min;
    for (size_t i = 0; i < n; ++i) {
        const SubspaceTuple& tuple = *batch[i];
        if (static_cast<int>(tuple.size()) != modes) {
            throw std::invalid_argument("loss: subspace tuple mode count mismatch");
        }
        sigmas[i].resize(static_cast<size_t>(modes));
        feats[i].resize(static_cast<size_t>(modes));
        logistic_s[i].resize(static_cast<size_t>(modes));
        for (int m = 0; m < modes; ++m) {
            if (!model.use_msn) {
                sigmas[i][static_cast<size_t>(m)] = Vector::Ones(tuple[static_cast<size_t>(m)].order());
                continue;
            }
            Vector feat = msn_features(tuple[static_cast<size_t>(m)], model.msn.input);
            Vector z = model.msn.weights[static_cast<size_t>(m)] * feat +
                       model.msn.biases[static_cast<size_t>(m)];
            Vector s(z.size()), sig(z.size());
            for (Eigen::Index k = 0; k < z.size(); ++k) {
                s(k) = clamped_logistic(z(k));
                sig(k) = model.msn.sigma_min + span * s(k);
            }
            sigmas[i][static_cast<size_t>(m)] = std::move(sig);
            feats[i][static_cast<size_t>(m)] = std::move(feat);
            logistic_s[i][static_cast<size_t>(m)] = std::move(s);
        }
    }

    // Penalty denominators S_{m,k} = sum_j (sigma_{k,j,m} + 1).
    std::vector<Vector> denom(static_cast<size_t>(modes));
    for (int m = 0; m < modes; ++m) {
        denom[static_cast<size_t>(m)] = Vector::Zero(sigmas[0][static_cast<size_t>(m)].size());
        for (size_t j = 0; j < n; ++j) {
            denom[static_cast<size_t>(m)] += (sigmas[j][static_cast<size_t>(m)].array() + 1.0).matrix();
        }
    }

    double total = 0.0;
    double acc_mu = 0.0;
    double acc_log_sigma = 0.0;
    std::vector<double> f(static_cast<size_t>(modes)), d2(static_cast<size_t>(modes));
    std::vector<double> prefix(static_cast<size_t>(modes) + 1), suffix(static_cast<size_t>(modes) + 1);

    for (size_t i = 0; i < n; ++i) {
        const SubspaceTuple& tuple = *batch[i];

        BasisTuple wb;
        wb.reserve(static_cast<size_t>(modes));
        for (int m = 0; m < modes; ++m) {
            wb.push_back(weight_subspace(tuple[static_cast<size_t>(m)], sigmas[i][static_cast<size_t>(m)]));
        }

        // kernel row against the pivots; keep per-mode factors for backward
        Matrix factors(c, modes), dists(c, modes);
        Vector krow(c);
        for (int j = 0; j < c; ++j) {
            double sumf = 0.0, prodf = 1.0;
            for (int m = 0; m < modes; ++m) {
                const double dd = weighted_projector_distance_sq(
                    wb[static_cast<size_t>(m)],
                    model.map.pivot_bases[static_cast<size_t>(j)][static_cast<size_t>(m)]);
                // same expression as factor_kernel, so the value path stays
                // bit-identical to embed_apply
                const double ff = std::exp(-dd / (2.0 * model.sigma * model.sigma));
                dists(j, m) = dd;
                factors(j, m) = ff;
                sumf += ff;
                prodf *= ff;
            }
            switch (model.combine) {
                case KernelCombine::sum: krow(j) = sumf; break;
                case KernelCombine::product: krow(j) = prodf; break;
                case KernelCombine::sum_product: krow(j) = mu * sumf + (1.0 - mu) * prodf; break;
            }
        }

        const Vector g = model.map.p_inv * krow;
        const Vector gt = g - model.map.feature_mean;
        const Vector logits = model.classifier_w * gt + model.classifier_b;
        const double lse = log_sum_exp(logits);
        total += (lse - logits(labels[i])) / static_cast<double>(n);

        if (!grads) continue;

        Vector dlogits(logits.size());
        for (Eigen::Index k = 0; k < logits.size(); ++k) {
            dlogits(k) = std::exp(logits(k) - lse) / static_cast<double>(n);
        }
        dlogits(labels[i]) -= 1.0 / static_cast<double>(n);

        grads->classifier_w += dlogits * gt.transpose();
        grads->classifier_b += dlogits;

        const Vector dg = model.classifier_w.transpose() * dlogits;
        const Vector dkrow = model.map.p_inv * dg;

        // per-(sample, mode) quantities for the sigma backward
        std::vector<Vector> dsig(static_cast<size_t>(modes));
        std::vector<Vector> q(static_cast<size_t>(modes)), term1(static_cast<size_t>(modes));
        std::vector<Matrix> gu2(static_cast<size_t>(modes));
        for (int m = 0; m < modes; ++m) {
            const Vector& sg = sigmas[i][static_cast<size_t>(m)];
            dsig[static_cast<size_t>(m)] = Vector::Zero(sg.size());
            if (model.use_msn) {
                q[static_cast<size_t>(m)] = sg.cwiseInverse();
                const Matrix gu = tuple[static_cast<size_t>(m)].basis.transpose() *
                                  tuple[static_cast<size_t>(m)].basis;
                gu2[static_cast<size_t>(m)] = gu.cwiseAbs2();
                term1[static_cast<size_t>(m)] =
                    gu2[static_cast<size_t>(m)] * q[static_cast<size_t>(m)];
            }
        }

        for (int j = 0; j < c; ++j) {
            const double dk = dkrow(j);
            for (int m = 0; m < modes; ++m) f[static_cast<size_t>(m)] = factors(j, m);
            prefix[0] = 1.0;
            for (int m = 0; m < modes; ++m) prefix[static_cast<size_t>(m) + 1] = prefix[static_cast<size_t>(m)] * f[static_cast<size_t>(m)];
            suffix[static_cast<size_t>(modes)] = 1.0;
            for (int m = modes - 1; m >= 0; --m) suffix[static_cast<size_t>(m)] = suffix[static_cast<size_t>(m) + 1] * f[static_cast<size_t>(m)];

            if (model.combine == KernelCombine::sum_product) {
                double sumf = 0.0;
                for (int m = 0; m < modes; ++m) sumf += f[static_cast<size_t>(m)];
                acc_mu += dk * (sumf - prefix[static_cast<size_t>(modes)]);
            }

            for (int m = 0; m < modes; ++m) {
                double coef = 1.0;
                if (model.combine == KernelCombine::product) {
                    coef = prefix[static_cast<size_t>(m)] * suffix[static_cast<size_t>(m) + 1];
                } else if (model.combine == KernelCombine::sum_product) {
                    coef = mu + (1.0 - mu) * prefix[static_cast<size_t>(m)] * suffix[static_cast<size_t>(m) + 1];
                }
                const double df = dk * coef;
                const double ff = f[static_cast<size_t>(m)];
                acc_log_sigma += df * ff * dists(j, m) / sig2;
                if (!model.use_msn) continue;

                const double ddist = df * ff * (-1.0 / (2.0 * sig2));
                // d(dist^2)/d(sigma_k) = -2 (term1_k - r_k) / sigma_k^2, where
                // r_k is the squared norm of row k of U^T Z_j.
                const Matrix cross =
                    tuple[static_cast<size_t>(m)].basis.transpose() *
                    model.map.pivot_bases[static_cast<size_t>(j)][static_cast<size_t>(m)];
                Vector& ds = dsig[static_cast<size_t>(m)];
                const Vector& sg = sigmas[i][static_cast<size_t>(m)];
                for (Eigen::Index k = 0; k < ds.size(); ++k) {
                    const double rk = cross.row(k).squaredNorm();
                    ds(k) += ddist * (-2.0) * (term1[static_cast<size_t>(m)](k) - rk) /
                             (sg(k) * sg(k));
                }
            }
        }

        if (model.use_msn) {
            for (int m = 0; m < modes; ++m) {
                const Vector& sg = sigmas[i][static_cast<size_t>(m)];
                Vector ds = dsig[static_cast<size_t>(m)];
                // penalty: beta * (1/(sigma+1) - n/S)
                for (Eigen::Index k = 0; k < ds.size(); ++k) {
                    ds(k) += model.beta * (1.0 / (sg(k) + 1.0) -
                                           static_cast<double>(n) / denom[static_cast<size_t>(m)](k));
                }
                const Vector& s = logistic_s[i][static_cast<size_t>(m)];
                Vector dz(ds.size());
                for (Eigen::Index k = 0; k < ds.size(); ++k) {
                    dz(k) = ds(k) * span * s(k) * (1.0 - s(k));
                }
                grads->msn_w[static_cast<size_t>(m)] += dz * feats[i][static_cast<size_t>(m)].transpose();
                grads->msn_b[static_cast<size_t>(m)] += dz;
            }
        }
    }

    total += uncertainty_penalty(sigmas, model.beta);

    if (grads) {
        grads->mu_raw =
            (model.combine == KernelCombine::sum_product) ? acc_mu * mu * (1.0 - mu) : 0.0;
        grads->log_sigma = acc_log_sigma;
    }
    return total;
}

double loss(const UktlModel& model, const std::vector<Tensor>& batch,
            const std::vector<int>& labels) {
    std::vector<SubspaceTuple> tuples;
    tuples.reserve(batch.size());
    for (const Tensor& t : batch) tuples.push_back(model.subspaces(t));
    std::vector<const SubspaceTuple*> ptrs;
    ptrs.reserve(tuples.size());
    for (const auto& t : tuples) ptrs.push_back(&t);
    return loss_and_grads(model, ptrs, labels, nullptr);
}

void randomize_parameters(UktlModel& model, std::uint64_t seed) {
    Rng rng(seed);
    for (Eigen::Index i = 0; i < model.classifier_w.rows(); ++i) {
        for (Eigen::Index j = 0; j < model.classifier_w.cols(); ++j) {
            model.classifier_w(i, j) = 0.5 * rng.gaussian();
        }
    }
    for (Eigen::Index i = 0; i < model.classifier_b.size(); ++i) {
        model.classifier_b(i) = 0.1 * rng.gaussian();
    }
    if (model.use_msn) {
        for (auto& w : model.msn.weights) {
            for (Eigen::Index i = 0; i < w.rows(); ++i) {
                for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = 0.05 * rng.gaussian();
            }
        }
        for (auto& b : model.msn.biases) {
            for (Eigen::Index i = 0; i < b.size(); ++i) b(i) += 0.2 * rng.gaussian();
        }
    }
    model.mu_raw = 0.4 * rng.gaussian();
}

GradCheckReport grad_check(const UktlModel& model, const std::vector<Tensor>& batch,
                           const std::vector<int>& labels, double step) {
    if (batch.empty() || batch.size() != labels.size()) {
        throw std::invalid_argument("grad_check: batch and labels must be nonempty and equal length");
    }
    std::vector<SubspaceTuple> tuples;
    tuples.reserve(batch.size());
    for (const Tensor& t : batch) tuples.push_back(model.subspaces(t));
    std::vector<const SubspaceTuple*> ptrs;
    for (const auto& t : tuples) ptrs.push_back(&t);

    UktlModel work = model;
    ModelGrads grads;
    loss_and_grads(work, ptrs, labels, &grads);

    auto rel_err = [](double analytic, double numeric) {
        const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        return std::abs(analytic - numeric) / scale;
    };
    auto fd = [&](double* param) {
        const double saved = *param;
        *param = saved + step;
        const double lp = loss_and_grads(work, ptrs, labels, nullptr);
        *param = saved - step;
        const double lm = loss_and_grads(work, ptrs, labels, nullptr);
        *param = saved;
        return (lp - lm) / (2.0 * step);
    };

    GradCheckReport rep;
    for (Eigen::Index i = 0; i < work.classifier_w.rows(); ++i) {
        for (Eigen::Index j = 0; j < work.classifier_w.cols(); ++j) {
            rep.classifier = std::max(
                rep.classifier, rel_err(grads.classifier_w(i, j), fd(&work.classifier_w(i, j))));
        }
    }
    for (Eigen::Index i = 0; i < work.classifier_b.size(); ++i) {
        rep.classifier =
            std::max(rep.classifier, rel_err(grads.classifier_b(i), fd(&work.classifier_b(i))));
    }
    if (work.use_msn) {
        for (size_t m = 0; m < work.msn.weights.size(); ++m) {
            Matrix& w = work.msn.weights[m];
            for (Eigen::Index i = 0; i < w.rows(); ++i) {
                for (Eigen::Index j = 0; j < w.cols(); ++j) {
                    rep.msn = std::max(rep.msn, rel_err(grads.msn_w[m](i, j), fd(&w(i, j))));
                }
            }
            Vector& b = work.msn.biases[m];
            for (Eigen::Index i = 0; i < b.size(); ++i) {
                rep.msn = std::max(rep.msn, rel_err(grads.msn_b[m](i), fd(&b(i))));
            }
        }
    }
    rep.mu = rel_err(grads.mu_raw, fd(&work.mu_raw));
    {
        // bandwidth enters as log(sigma)
        const double saved = work.sigma;
        work.sigma = std::exp(std::log(saved) + step);
        const double lp = loss_and_grads(work, ptrs, labels, nullptr);
        work.sigma = std::exp(std::log(saved) - step);
        const double lm = loss_and_grads(work, ptrs, labels, nullptr);
        work.sigma = saved;
        rep.bandwidth = rel_err(grads.log_sigma, (lp - lm) / (2.0 * step));
    }
    rep.max_overall = std::max({rep.classifier, rep.msn, rep.mu, rep.bandwidth});
    return rep;
}

namespace {

struct Momentum {
    Matrix w_c;
    Vector b_c;
    std::vector<Matrix> msn_w;
    std::vector<Vector> msn_b;
    double mu_raw = 0.0;
    double log_sigma = 0.0;
};

void refresh_map(UktlModel& model, const std::vector<SubspaceTuple>& train_tuples,
                 double clamp_eps) {
    std::vector<BasisTuple> pivot_wb;
    pivot_wb.reserve(model.pivot_subspaces.size());
    for (const auto& tuple : model.pivot_subspaces) {
        pivot_wb.push_back(model.weighted_bases(tuple));
    }
    model.map = fit_nystrom(std::move(pivot_wb), model.kernel_config(), clamp_eps);

    std::vector<BasisTuple> train_wb(train_tuples.size());
    parallel_for(static_cast<std::int64_t>(train_tuples.size()), [&](std::int64_t i) {
        train_wb[static_cast<size_t>(i)] =
            model.weighted_bases(train_tuples[static_cast<size_t>(i)]);
    });
    embed_fit(model.map, train_wb);
}

double accuracy_from_tuples(const UktlModel& model, const std::vector<SubspaceTuple>& tuples,
                            const std::vector<int>& labels) {
    std::vector<int> hits(tuples.size(), 0);
    parallel_for(static_cast<std::int64_t>(tuples.size()), [&](std::int64_t i) {
        const Vector logits = forward_from_subspaces(model, tuples[static_cast<size_t>(i)]);
        int best = 0;
        for (Eigen::Index k = 1; k < logits.size(); ++k) {
            if (logits(k) > logits(best)) best = static_cast<int>(k);
        }
        hits[static_cast<size_t>(i)] = (best == labels[static_cast<size_t>(i)]) ? 1 : 0;
    });
    std::int64_t correct = 0;
    for (int h : hits) correct += h;
    return static_cast<double>(correct) / static_cast<double>(tuples.size());
}

}  // namespace

TrainResult train(const Dataset& dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    config.validate();
    if (dataset.size() == 0) {
        throw std::invalid_argument("train: empty dataset");
    }
    if (dataset.num_classes < 2) {
        throw std::invalid_argument("train: need at least 2 classes");
    }
    if (config.num_pivots > dataset.size()) {
        throw std::invalid_argument("train: more pivots than samples");
    }

    TrainResult result;
    UktlModel& model = result.model;
    model.dims = dataset.dims;
    model.orders = resolve_orders(config.orders, dataset.dims);
    model.num_classes = dataset.num_classes;
    model.use_msn = config.use_msn;
    model.msn = make_msn(dataset.dims, model.orders, config.msn_input, config.sigma_min,
                         config.sigma_max);
    model.combine = config.combine;
    model.sigma = config.sigma;
    const double mu0 = std::clamp(config.mu_init, 1e-9, 1.0 - 1e-9);
    model.mu_raw = std::log(mu0 / (1.0 - mu0));
    model.beta = config.beta;
    model.learn_mu = config.learn_mu;
    model.learn_bandwidth = config.learn_bandwidth;
    model.classifier_w = Matrix::Zero(dataset.num_classes, config.num_pivots);
    model.classifier_b = Vector::Zero(dataset.num_classes);

    // Subspaces are extracted once; no gradient flows through the SVD.
    const auto n = static_cast<std::int64_t>(dataset.size());
    std::vector<SubspaceTuple> tuples(static_cast<size_t>(n));
    parallel_for(n, [&](std::int64_t i) {
        tuples[static_cast<size_t>(i)] = tensor_subspaces(dataset.tensors[static_cast<size_t>(i)], model.orders);
    });

    if (config.median_sigma) {
        model.sigma = median_heuristic_sigma(tuples, config.seed);
    }

    PivotSet pivot_set = soft_kmeans(dataset.tensors, config.num_pivots, config.temperature,
                                     config.kmeans_max_iter, config.kmeans_tol, config.seed);
    model.pivots = std::move(pivot_set.pivots);
    model.pivot_subspaces.resize(model.pivots.size());
    parallel_for(static_cast<std::int64_t>(model.pivots.size()), [&](std::int64_t j) {
        model.pivot_subspaces[static_cast<size_t>(j)] =
            tensor_subspaces(model.pivots[static_cast<size_t>(j)], model.orders);
    });

    refresh_map(model, tuples, config.clamp_eps);

    Momentum vel;
    vel.w_c = Matrix::Zero(model.classifier_w.rows(), model.classifier_w.cols());
    vel.b_c = Vector::Zero(model.classifier_b.size());
    for (const auto& w : model.msn.weights) vel.msn_w.push_back(Matrix::Zero(w.rows(), w.cols()));
    for (const auto& b : model.msn.biases) vel.msn_b.push_back(Vector::Zero(b.size()));

    Rng shuffle_rng(config.seed);
    std::vector<size_t> order(static_cast<size_t>(n));
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    double lr = config.learning_rate;
    const bool train_msn = config.learn_msn && model.use_msn;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        if (epoch > 1 && (epoch - 1) % config.refresh_period == 0) {
            refresh_map(model, tuples, config.clamp_eps);
        }
        for (int de : config.lr_decay_epochs) {
            if (de == epoch) lr *= config.lr_decay_factor;
        }

        for (size_t i = order.size() - 1; i > 0; --i) {
            std::swap(order[i], order[shuffle_rng.uniform_index(i + 1)]);
        }

        double epoch_loss = 0.0;
        int num_batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
            std::vector<const SubspaceTuple*> batch;
            std::vector<int> labels;
            for (size_t i = start; i < end; ++i) {
                batch.push_back(&tuples[order[i]]);
                labels.push_back(dataset.labels[order[i]]);
            }

            ModelGrads grads;
            const double batch_loss = loss_and_grads(model, batch, labels, &grads);
            if (!std::isfinite(batch_loss)) {
                throw std::runtime_error("train: loss became non-finite (diverged)");
            }
            epoch_loss += batch_loss;
            ++num_batches;

            // weight decay on weight matrices only (not biases, not mu)
            if (config.weight_decay > 0.0) {
                grads.classifier_w += config.weight_decay * model.classifier_w;
                if (train_msn) {
                    for (size_t m = 0; m < grads.msn_w.size(); ++m) {
                        grads.msn_w[m] += config.weight_decay * model.msn.weights[m];
                    }
                }
            }

            vel.w_c = config.momentum * vel.w_c + grads.classifier_w;
            model.classifier_w -= lr * vel.w_c;
            vel.b_c = config.momentum * vel.b_c + grads.classifier_b;
            model.classifier_b -= lr * vel.b_c;
            if (train_msn) {
                for (size_t m = 0; m < grads.msn_w.size(); ++m) {
                    vel.msn_w[m] = config.momentum * vel.msn_w[m] + grads.msn_w[m];
                    model.msn.weights[m] -= lr * vel.msn_w[m];
                    vel.msn_b[m] = config.momentum * vel.msn_b[m] + grads.msn_b[m];
                    model.msn.biases[m] -= lr * vel.msn_b[m];
                }
            }
            if (config.learn_mu && model.combine == KernelCombine::sum_product) {
                vel.mu_raw = config.momentum * vel.mu_raw + grads.mu_raw;
                model.mu_raw -= lr * vel.mu_raw;
            }
            if (config.learn_bandwidth) {
                vel.log_sigma = config.momentum * vel.log_sigma + grads.log_sigma;
                model.sigma = std::exp(std::log(model.sigma) - lr * vel.log_sigma);
            }
            // keep the embedding's kernel config in sync with mu / sigma
            model.map.cfg = model.kernel_config();
        }

        EpochStats stats;
        stats.loss = epoch_loss / std::max(1, num_batches);
        stats.train_accuracy = accuracy_from_tuples(model, tuples, dataset.labels);
        stats.learning_rate = lr;
        result.history.push_back(stats);
        if (on_epoch) on_epoch(epoch, stats);
    }
    return result;
}

int predict_label(const UktlModel& model, const Tensor& t) {
    const Vector logits = forward(model, t);
    int best = 0;
    for (Eigen::Index k = 1; k < logits.size(); ++k) {
        if (logits(k) > logits(best)) best = static_cast<int>(k);
    }
    return best;
}

std::vector<int> predict(const UktlModel& model, const std::vector<Tensor>& tensors) {
    std::vector<int> out(tensors.size());
    parallel_for(static_cast<std::int64_t>(tensors.size()), [&](std::int64_t i) {
        out[static_cast<size_t>(i)] = predict_label(model, tensors[static_cast<size_t>(i)]);
    });
    return out;
}

double evaluate(const UktlModel& model, const Dataset& dataset) {
    if (dataset.size() == 0) {
        throw std::invalid_argument("evaluate: empty dataset (accuracy undefined)");
    }
    const std::vector<int> preds = predict(model, dataset.tensors);
    std::int64_t correct = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == dataset.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

namespace {

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty()) {
        throw std::runtime_error("checkpoint: expected a non-empty matrix");
    }
    const auto rows = j.size();
    const auto cols = j[0].size();
    Matrix m(rows, cols);
    for (size_t i = 0; i < rows; ++i) {
        if (j[i].size() != cols) {
            throw std::runtime_error("checkpoint: ragged matrix rows");
        }
        for (size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
    }
    return m;
}

json vector_to_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Vector vector_from_json(const json& j) {
    Vector v(j.size());
    for (size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

}  // namespace

std::string encode_checkpoint(const UktlModel& model) {
    json j;
    j["format"] = "uktl-ckpt-v1";
    j["dims"] = model.dims;
    j["orders"] = model.orders;
    j["num_classes"] = model.num_classes;
    json labels = json::array();
    for (int k = 0; k < model.num_classes; ++k) labels.push_back(k);
    j["labels"] = std::move(labels);
    j["use_msn"] = model.use_msn;
    j["combine"] = combine_name(model.combine);
    j["sigma"] = model.sigma;
    j["mu_raw"] = model.mu_raw;
    j["mu"] = model.mu();
    j["beta"] = model.beta;
    j["learn_mu"] = model.learn_mu;
    j["learn_bandwidth"] = model.learn_bandwidth;

    json msn;
    msn["input"] = msn_input_name(model.msn.input);
    msn["sigma_min"] = model.msn.sigma_min;
    msn["sigma_max"] = model.msn.sigma_max;
    msn["weights"] = json::array();
    msn["biases"] = json::array();
    for (const auto& w : model.msn.weights) msn["weights"].push_back(matrix_to_json(w));
    for (const auto& b : model.msn.biases) msn["biases"].push_back(vector_to_json(b));
    j["msn"] = std::move(msn);

    j["pivots"] = json::array();
    for (const Tensor& t : model.pivots) j["pivots"].push_back(encode_tensor(t));

    json pivot_bases = json::array();
    for (const auto& tuple : model.map.pivot_bases) {
        json per_mode = json::array();
        for (const auto& basis : tuple) per_mode.push_back(matrix_to_json(basis));
        pivot_bases.push_back(std::move(per_mode));
    }
    j["pivot_bases"] = std::move(pivot_bases);
    j["clamp_eps"] = model.map.clamp_eps;
    j["p_inv"] = matrix_to_json(model.map.p_inv);
    j["feature_mean"] = vector_to_json(model.map.feature_mean);

    j["classifier_w"] = matrix_to_json(model.classifier_w);
    j["classifier_b"] = vector_to_json(model.classifier_b);
    return j.dump(2) + "\n";
}

UktlModel decode_checkpoint(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("checkpoint parse error: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "uktl-ckpt-v1") {
            throw std::runtime_error("checkpoint: unsupported format tag");
        }
        UktlModel model;
        model.dims = j.at("dims").get<std::vector<int>>();
        model.orders = j.at("orders").get<std::vector<int>>();
        model.num_classes = j.at("num_classes").get<int>();
        const auto labels = j.at("labels").get<std::vector<int>>();
        if (static_cast<int>(labels.size()) != model.num_classes) {
            throw std::runtime_error("checkpoint: label map size mismatch");
        }
        model.use_msn = j.at("use_msn").get<bool>();
        model.combine = parse_combine(j.at("combine").get<std::string>());
        model.sigma = j.at("sigma").get<double>();
        model.mu_raw = j.at("mu_raw").get<double>();
        model.beta = j.at("beta").get<double>();
        model.learn_mu = j.at("learn_mu").get<bool>();
        model.learn_bandwidth = j.at("learn_bandwidth").get<bool>();

        const json& msn = j.at("msn");
        model.msn.input = parse_msn_input(msn.at("input").get<std::string>());
        model.msn.sigma_min = msn.at("sigma_min").get<double>();
        model.msn.sigma_max = msn.at("sigma_max").get<double>();
        for (const auto& w : msn.at("weights")) model.msn.weights.push_back(matrix_from_json(w));
        for (const auto& b : msn.at("biases")) model.msn.biases.push_back(vector_from_json(b));
        model.msn.validate();

        for (const auto& t : j.at("pivots")) {
            model.pivots.push_back(decode_tensor(t.get<std::string>()));
        }
        model.pivot_subspaces.resize(model.pivots.size());
        parallel_for(static_cast<std::int64_t>(model.pivots.size()), [&](std::int64_t i) {
            model.pivot_subspaces[static_cast<size_t>(i)] =
                tensor_subspaces(model.pivots[static_cast<size_t>(i)], model.orders);
        });

        for (const auto& tuple : j.at("pivot_bases")) {
            BasisTuple bases;
            for (const auto& b : tuple) bases.push_back(matrix_from_json(b));
            model.map.pivot_bases.push_back(std::move(bases));
        }
        model.map.cfg = model.kernel_config();
        model.map.clamp_eps = j.at("clamp_eps").get<double>();
        model.map.p_inv = matrix_from_json(j.at("p_inv"));
        model.map.feature_mean = vector_from_json(j.at("feature_mean"));
        model.map.mean_set = true;

        model.classifier_w = matrix_from_json(j.at("classifier_w"));
        model.classifier_b = vector_from_json(j.at("classifier_b"));

        if (model.classifier_w.cols() != model.map.num_pivots() ||
            model.classifier_w.rows() != model.num_classes ||
            model.classifier_b.size() != model.num_classes) {
            throw std::runtime_error("checkpoint: classifier dims inconsistent with pivots/classes");
        }
        return model;
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("checkpoint schema error: ") + e.what());
    }
}

void save_checkpoint(const UktlModel& model, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot open for writing: " + path.string());
    }
    f << encode_checkpoint(model);
    if (!f) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

UktlModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot open checkpoint: " + path.string());
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_checkpoint(ss.str());
}

}  // namespace uktl
