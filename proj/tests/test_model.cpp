#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "uktl/model.hpp"
#include "uktl/oracle.hpp"

#include <cmath>
#include <filesystem>

using namespace uktl;

namespace {

SyntheticSpec desk_spec(std::uint64_t seed = 51, double noise = 0.3) {
    SyntheticSpec spec;
    spec.num_classes = 3;
    spec.per_class = 20;
    spec.dims = {6, 8, 10};
    spec.signal_rank = 3;
    spec.noise_level = noise;
    spec.seed = seed;
    return spec;
}

TrainConfig desk_config() {
    TrainConfig cfg;
    cfg.orders = {3};
    cfg.num_pivots = 8;
    cfg.batch_size = 8;
    cfg.epochs = 10;
    cfg.seed = 5;
    return cfg;
}

// straight-line scalar reimplementation of the fitted pipeline
std::vector<double> scalar_forward(const UktlModel& model, const Tensor& t) {
    const SubspaceTuple tuple = tensor_subspaces(t, model.orders);
    const int modes = static_cast<int>(model.orders.size());
    const int c = model.map.num_pivots();
    const double mu = 1.0 / (1.0 + std::exp(-model.mu_raw));

    // per-mode weighted basis
    std::vector<Matrix> weighted(static_cast<size_t>(modes));
    for (int m = 0; m < modes; ++m) {
        const Subspace& s = tuple[static_cast<size_t>(m)];
        const int p = s.order();
        std::vector<double> sigma(static_cast<size_t>(p), 1.0);
        if (model.use_msn) {
            const int fd = msn_feature_dim(model.msn.input, s.ambient_dim(), p);
            std::vector<double> feat(static_cast<size_t>(fd));
            if (model.msn.input == MsnInput::singular_values) {
                double norm = 0.0;
                for (int k = 0; k < p; ++k) norm += s.singular_values(k) * s.singular_values(k);
                norm = std::sqrt(norm);
                for (int k = 0; k < p; ++k) {
                    feat[static_cast<size_t>(k)] = s.singular_values(k) / norm;
                }
            } else {
                const int n = s.ambient_dim();
                for (int a = 0; a < n; ++a) {
                    for (int b = 0; b < n; ++b) {
                        double acc = 0.0;
                        for (int k = 0; k < p; ++k) acc += s.basis(a, k) * s.basis(b, k);
                        feat[static_cast<size_t>(a * n + b)] = acc;
                    }
                }
            }
            for (int k = 0; k < p; ++k) {
                double z = model.msn.biases[static_cast<size_t>(m)](k);
                for (int j = 0; j < fd; ++j) {
                    z += model.msn.weights[static_cast<size_t>(m)](k, j) * feat[static_cast<size_t>(j)];
                }
                sigma[static_cast<size_t>(k)] =
                    model.msn.sigma_min +
                    (model.msn.sigma_max - model.msn.sigma_min) / (1.0 + std::exp(-z));
            }
        }
        Matrix w = s.basis;
        for (int k = 0; k < p; ++k) w.col(k) /= std::sqrt(sigma[static_cast<size_t>(k)]);
        weighted[static_cast<size_t>(m)] = std::move(w);
    }

    // kernel row against the stored (weighted) pivot bases, via literal
    // ambient projectors
    std::vector<double> krow(static_cast<size_t>(c));
    for (int j = 0; j < c; ++j) {
        double sum = 0.0, prod = 1.0;
        for (int m = 0; m < modes; ++m) {
            const Matrix& a = weighted[static_cast<size_t>(m)];
            const Matrix& b = model.map.pivot_bases[static_cast<size_t>(j)][static_cast<size_t>(m)];
            const int n = static_cast<int>(a.rows());
            double dist2 = 0.0;
            for (int r = 0; r < n; ++r) {
                for (int c2 = 0; c2 < n; ++c2) {
                    double pa = 0.0, pb = 0.0;
                    for (int k = 0; k < a.cols(); ++k) pa += a(r, k) * a(c2, k);
                    for (int k = 0; k < b.cols(); ++k) pb += b(r, k) * b(c2, k);
                    dist2 += (pa - pb) * (pa - pb);
                }
            }
            const double f = std::exp(-dist2 / (2.0 * model.sigma * model.sigma));
            sum += f;
            prod *= f;
        }
        switch (model.combine) {
            case KernelCombine::sum: krow[static_cast<size_t>(j)] = sum; break;
            case KernelCombine::product: krow[static_cast<size_t>(j)] = prod; break;
            case KernelCombine::sum_product:
                krow[static_cast<size_t>(j)] = mu * sum + (1.0 - mu) * prod;
                break;
        }
    }

    std::vector<double> logits(static_cast<size_t>(model.num_classes));
    for (int k = 0; k < model.num_classes; ++k) {
        double acc = model.classifier_b(k);
        for (int out = 0; out < c; ++out) {
            double g = -model.map.feature_mean(out);
            for (int j = 0; j < c; ++j) g += model.map.p_inv(out, j) * krow[static_cast<size_t>(j)];
            acc += model.classifier_w(k, out) * g;
        }
        logits[static_cast<size_t>(k)] = acc;
    }
    return logits;
}

double scalar_loss(const UktlModel& model, const std::vector<Tensor>& batch,
                   const std::vector<int>& labels) {
    const auto n = batch.size();
    double total = 0.0;
    std::vector<std::vector<std::vector<double>>> sigmas(n);
    for (size_t i = 0; i < n; ++i) {
        const std::vector<double> logits = scalar_forward(model, batch[i]);
        double zmax = logits[0];
        for (double z : logits) zmax = std::max(zmax, z);
        double acc = 0.0;
        for (double z : logits) acc += std::exp(z - zmax);
        const double lse = zmax + std::log(acc);
        total += (lse - logits[static_cast<size_t>(labels[i])]) / static_cast<double>(n);

        const SubspaceTuple tuple = tensor_subspaces(batch[i], model.orders);
        for (size_t m = 0; m < tuple.size(); ++m) {
            const Vector sg = model.use_msn
                                  ? msn_forward(model.msn, tuple[m], static_cast<int>(m))
                                  : Vector::Ones(tuple[m].order());
            std::vector<double> v(static_cast<size_t>(sg.size()));
            for (Eigen::Index k = 0; k < sg.size(); ++k) v[static_cast<size_t>(k)] = sg(k);
            sigmas[i].push_back(std::move(v));
        }
    }
    // penalty
    double penalty = 0.0;
    for (size_t m = 0; m < sigmas[0].size(); ++m) {
        for (size_t k = 0; k < sigmas[0][m].size(); ++k) {
            double denom = 0.0;
            for (size_t j = 0; j < n; ++j) denom += sigmas[j][m][k] + 1.0;
            for (size_t i = 0; i < n; ++i) penalty += std::log((sigmas[i][m][k] + 1.0) / denom);
        }
    }
    return total + model.beta * penalty;
}

}  // namespace

TEST_CASE("zero classifier gives uniform softmax and ln(K) loss") {
    const Dataset ds = gen_synthetic_memory(desk_spec(), true);
    TrainConfig cfg = desk_config();
    cfg.epochs = 0;
    cfg.beta = 0.0;
    const UktlModel model = train(ds, cfg).model;

    const Vector logits = forward(model, ds.tensors[0]);
    CHECK(logits.cwiseAbs().maxCoeff() == 0.0);
    CHECK(loss(model, {ds.tensors[0], ds.tensors[1]}, {ds.labels[0], ds.labels[1]}) ==
          doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("forward is deterministic and checks its inputs") {
    const Dataset ds = gen_synthetic_memory(desk_spec(), true);
    TrainConfig cfg = desk_config();
    cfg.epochs = 2;
    UktlModel model = train(ds, cfg).model;

    const Vector a = forward(model, ds.tensors[3]);
    const Vector b = forward(model, ds.tensors[3]);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(forward(model, Tensor({2, 2}, {1, 2, 3, 4})), std::invalid_argument);
    UktlModel unfitted = model;
    unfitted.map.mean_set = false;
    CHECK_THROWS_AS(forward(unfitted, ds.tensors[0]), std::logic_error);
}

TEST_CASE("forward matches the straight-line scalar pipeline") {
    const Dataset ds = gen_synthetic_memory(desk_spec(52), true);
    TrainConfig cfg = desk_config();
    cfg.epochs = 1;
    UktlModel model = train(ds, cfg).model;
    randomize_parameters(model, 7);

    for (int i = 0; i < 5; ++i) {
        const Vector got = forward(model, ds.tensors[static_cast<size_t>(i)]);
        const std::vector<double> expected = scalar_forward(model, ds.tensors[static_cast<size_t>(i)]);
        for (int k = 0; k < got.size(); ++k) {
            CHECK(got(k) == doctest::Approx(expected[static_cast<size_t>(k)]).epsilon(1e-10));
        }
    }
}

TEST_CASE("loss matches the scalar oracle and handles edge cases") {
    const Dataset ds = gen_synthetic_memory(desk_spec(53), true);
    TrainConfig cfg = desk_config();
    cfg.epochs = 1;
    UktlModel model = train(ds, cfg).model;
    randomize_parameters(model, 8);

    // n = 1: penalty vanishes, loss is the cross-entropy alone
    {
        const Vector logits = forward(model, ds.tensors[0]);
        double zmax = logits.maxCoeff(), acc = 0.0;
        for (Eigen::Index k = 0; k < logits.size(); ++k) acc += std::exp(logits(k) - zmax);
        const double ce = zmax + std::log(acc) - logits(ds.labels[0]);
        CHECK(loss(model, {ds.tensors[0]}, {ds.labels[0]}) == doctest::Approx(ce).epsilon(1e-12));
    }

    std::vector<Tensor> batch(ds.tensors.begin(), ds.tensors.begin() + 6);
    std::vector<int> labels(ds.labels.begin(), ds.labels.begin() + 6);
    CHECK(loss(model, batch, labels) ==
          doctest::Approx(scalar_loss(model, batch, labels)).epsilon(1e-10));

    CHECK_THROWS_AS(loss(model, batch, {0, 1, 2, 0, 1, 9}), std::invalid_argument);
    CHECK_THROWS_AS(loss(model, {}, {}), std::invalid_argument);
}

TEST_CASE("training fits the synthetic benchmark at desk scale") {
    const Dataset train_ds = gen_synthetic_memory(desk_spec(), true);
    const Dataset test_ds = gen_synthetic_memory(desk_spec(), false);
    const TrainResult res = train(train_ds, desk_config());

    CHECK(res.history.size() == 10);
    CHECK(evaluate(res.model, train_ds) >= 0.97);
    CHECK(evaluate(res.model, test_ds) >= 0.95);
    CHECK(res.model.mu() >= 0.0);
    CHECK(res.model.mu() <= 1.0);

    // per-sample predictions are pointwise: permuting the dataset does not
    // change them
    const std::vector<int> preds = predict(res.model, test_ds.tensors);
    std::vector<Tensor> reversed(test_ds.tensors.rbegin(), test_ds.tensors.rend());
    const std::vector<int> rev_preds = predict(res.model, reversed);
    for (size_t i = 0; i < preds.size(); ++i) {
        CHECK(preds[i] == rev_preds[preds.size() - 1 - i]);
    }

    CHECK_THROWS_AS(evaluate(res.model, Dataset{}), std::invalid_argument);
}

TEST_CASE("full-batch descent on fixed features is monotone") {
    const Dataset ds = gen_synthetic_memory(desk_spec(54), true);
    TrainConfig cfg = desk_config();
    cfg.epochs = 40;
    cfg.batch_size = ds.size();
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    cfg.learning_rate = 0.05;
    cfg.beta = 0.0;
    cfg.learn_msn = false;
    cfg.learn_mu = false;
    cfg.refresh_period = 1000;  // no refresh: features stay fixed

    const TrainResult res = train(ds, cfg);
    for (size_t e = 1; e < res.history.size(); ++e) {
        CHECK(res.history[e].loss <= res.history[e - 1].loss + 1e-6);
    }
}

TEST_CASE("analytic gradients agree with finite differences") {
    const Dataset ds = gen_synthetic_memory(desk_spec(55, 0.5), true);
    TrainConfig cfg = desk_config();
    cfg.epochs = 0;
    UktlModel model = train(ds, cfg).model;
    randomize_parameters(model, 99);

    const Dataset held = gen_synthetic_memory(desk_spec(55, 0.5), false);
    std::vector<Tensor> batch(held.tensors.begin(), held.tensors.begin() + 4);
    std::vector<int> labels(held.labels.begin(), held.labels.begin() + 4);

    const GradCheckReport rep = grad_check(model, batch, labels, 1e-5);
    CHECK(rep.classifier <= 1e-6);
    CHECK(rep.msn <= 1e-4);
    CHECK(rep.mu <= 1e-4);
    CHECK(rep.bandwidth <= 1e-4);

    // the check must be exercising real gradients, not zeros
    ModelGrads grads;
    std::vector<SubspaceTuple> tuples;
    for (const Tensor& t : batch) tuples.push_back(model.subspaces(t));
    std::vector<const SubspaceTuple*> ptrs;
    for (const auto& t : tuples) ptrs.push_back(&t);
    loss_and_grads(model, ptrs, labels, &grads);
    CHECK(grads.classifier_w.cwiseAbs().maxCoeff() > 1e-8);
    CHECK(grads.msn_w[0].cwiseAbs().maxCoeff() > 1e-10);
    CHECK(std::abs(grads.mu_raw) > 1e-10);
}

TEST_CASE("projection_flat featurization trains and gradchecks") {
    const Dataset ds = gen_synthetic_memory(desk_spec(62, 0.5), true);
    TrainConfig cfg = desk_config();
    cfg.msn_input = MsnInput::projection_flat;
    cfg.epochs = 3;
    const TrainResult res = train(ds, cfg);
    CHECK(evaluate(res.model, ds) >= 0.95);

    UktlModel model = res.model;
    randomize_parameters(model, 17);
    const Dataset held = gen_synthetic_memory(desk_spec(62, 0.5), false);
    std::vector<Tensor> batch(held.tensors.begin(), held.tensors.begin() + 3);
    std::vector<int> labels(held.labels.begin(), held.labels.begin() + 3);
    const GradCheckReport rep = grad_check(model, batch, labels, 1e-5);
    CHECK(rep.msn <= 1e-4);
    CHECK(rep.classifier <= 1e-6);

    // scalar-pipeline oracle covers this featurization too
    const std::vector<double> expected = scalar_forward(model, held.tensors[0]);
    const Vector got = forward(model, held.tensors[0]);
    for (int k = 0; k < got.size(); ++k) {
        CHECK(got(k) == doctest::Approx(expected[static_cast<size_t>(k)]).epsilon(1e-10));
    }
}

TEST_CASE("sum-only and product-only combines train") {
    const Dataset ds = gen_synthetic_memory(desk_spec(63), true);
    for (KernelCombine combine : {KernelCombine::sum, KernelCombine::product}) {
        TrainConfig cfg = desk_config();
        cfg.combine = combine;
        cfg.epochs = 5;
        const TrainResult res = train(ds, cfg);
        CHECK(evaluate(res.model, ds) >= 0.95);
        CHECK(res.model.mu() == 0.5);  // mu does not move outside sum_product
    }
}

TEST_CASE("median-heuristic bandwidth initializer") {
    const Dataset ds = gen_synthetic_memory(desk_spec(61), true);
    TrainConfig cfg = desk_config();
    cfg.epochs = 2;
    cfg.median_sigma = true;
    const TrainResult res = train(ds, cfg);
    CHECK(res.model.sigma > 0.0);
    CHECK(res.model.sigma != 1.0);
    CHECK(evaluate(res.model, ds) >= 0.9);
}

TEST_CASE("learnable bandwidth stays positive and trains") {
    const Dataset ds = gen_synthetic_memory(desk_spec(60), true);
    TrainConfig cfg = desk_config();
    cfg.epochs = 5;
    cfg.learn_bandwidth = true;
    const TrainResult res = train(ds, cfg);
    CHECK(res.model.sigma > 0.0);
    CHECK(res.model.sigma != 1.0);  // it moved
    CHECK(std::isfinite(res.model.sigma));
    CHECK(evaluate(res.model, ds) >= 0.9);

    // round-trips through the checkpoint
    const UktlModel loaded = decode_checkpoint(encode_checkpoint(res.model));
    CHECK(loaded.sigma == res.model.sigma);
}

TEST_CASE("sigma == 1 uncertainty pipeline equals the plain pipeline") {
    const Dataset ds = gen_synthetic_memory(desk_spec(56), true);
    TrainConfig cfg = desk_config();
    cfg.epochs = 2;
    cfg.use_msn = false;
    const UktlModel ktl = train(ds, cfg).model;

    UktlModel uktl = ktl;
    uktl.use_msn = true;
    uktl.msn = make_msn(uktl.dims, uktl.orders, MsnInput::singular_values, 0.1, 10.0);

    for (int i = 0; i < 6; ++i) {
        const Vector diff =
            forward(uktl, ds.tensors[static_cast<size_t>(i)]) - forward(ktl, ds.tensors[static_cast<size_t>(i)]);
        CHECK(diff.cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("checkpoint round trip is bit-exact") {
    const Dataset ds = gen_synthetic_memory(desk_spec(57), true);
    TrainConfig cfg = desk_config();
    cfg.epochs = 3;
    const UktlModel model = train(ds, cfg).model;

    const std::string bytes = encode_checkpoint(model);
    const UktlModel loaded = decode_checkpoint(bytes);
    CHECK(encode_checkpoint(loaded) == bytes);

    for (int i = 0; i < 4; ++i) {
        const Vector a = forward(model, ds.tensors[static_cast<size_t>(i)]);
        const Vector b = forward(loaded, ds.tensors[static_cast<size_t>(i)]);
        CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }

    const auto path = std::filesystem::temp_directory_path() / "uktl-test-ckpt.json";
    save_checkpoint(model, path);
    const UktlModel from_disk = load_checkpoint(path);
    CHECK(encode_checkpoint(from_disk) == bytes);

    CHECK_THROWS_AS(decode_checkpoint("{\"format\":\"other\"}"), std::runtime_error);
    CHECK_THROWS_AS(decode_checkpoint("not json"), std::runtime_error);
}

TEST_CASE("training is deterministic given the seed") {
    const Dataset ds = gen_synthetic_memory(desk_spec(58), true);
    TrainConfig cfg = desk_config();
    cfg.epochs = 4;
    const std::string a = encode_checkpoint(train(ds, cfg).model);
    const std::string b = encode_checkpoint(train(ds, cfg).model);
    CHECK(a == b);
}

TEST_CASE("train validates its inputs") {
    const Dataset ds = gen_synthetic_memory(desk_spec(59), true);
    TrainConfig cfg = desk_config();

    TrainConfig bad = cfg;
    bad.num_pivots = ds.size() + 1;
    CHECK_THROWS_AS(train(ds, bad), std::invalid_argument);

    bad = cfg;
    bad.orders = {7};  // exceeds the mode-0 rank budget (dim 6)
    CHECK_THROWS_AS(train(ds, bad), std::invalid_argument);

    bad = cfg;
    bad.momentum = 1.0;
    CHECK_THROWS_AS(train(ds, bad), std::invalid_argument);

    Dataset single = ds;
    single.num_classes = 1;
    for (auto& l : single.labels) l = 0;
    CHECK_THROWS_AS(train(single, cfg), std::invalid_argument);
}
