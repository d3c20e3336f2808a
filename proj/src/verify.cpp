#include "uktl/verify.hpp"

#include "uktl/data.hpp"
#include "uktl/model.hpp"
#include "uktl/oracle.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace uktl {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_seconds(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void finish(OracleReport& rep, Clock::time_point start) {
    rep.seconds = elapsed_seconds(start);
    const bool value_ok =
        rep.at_least ? (rep.measured >= rep.tolerance) : (rep.measured <= rep.tolerance);
    const bool time_ok = rep.time_limit <= 0.0 || rep.seconds < rep.time_limit;
    rep.pass = rep.pass && value_ok && time_ok;
}

std::vector<Tensor> seeded_tensors(int count, const std::vector<int>& dims, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) out.push_back(random_tensor(dims, rng));
    return out;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

// 1. Gram matrices agree with the literal projector-based oracle for all
//    combines, weighted and unweighted.
OracleReport check_kernel_vs_brute_force() {
    OracleReport rep;
    rep.name = "kernel-vs-brute-force";
    rep.tolerance = 1e-10;
    rep.time_limit = 10.0;
    rep.pass = true;
    const auto start = Clock::now();

    const std::vector<int> dims{6, 8, 10};
    const std::vector<int> orders{3, 3, 3};
    const std::vector<Tensor> tensors = seeded_tensors(20, dims, 42);

    std::vector<SubspaceTuple> tuples;
    for (const Tensor& t : tensors) tuples.push_back(tensor_subspaces(t, orders));

    Rng sigma_rng(43);
    std::vector<std::vector<Vector>> sigmas(tensors.size());
    for (size_t i = 0; i < tensors.size(); ++i) {
        for (size_t m = 0; m < orders.size(); ++m) {
            Vector s(orders[m]);
            for (int k = 0; k < orders[m]; ++k) {
                s(k) = std::exp(2.0 * sigma_rng.uniform() - 1.0);
            }
            sigmas[i].push_back(std::move(s));
        }
    }

    double worst = 0.0;
    for (KernelCombine combine :
         {KernelCombine::sum, KernelCombine::product, KernelCombine::sum_product}) {
        const KernelConfig cfg{1.0, 0.5, combine};
        for (bool weighted : {false, true}) {
            std::vector<BasisTuple> bases;
            for (size_t i = 0; i < tuples.size(); ++i) {
                if (!weighted) {
                    bases.push_back(bases_of(tuples[i]));
                } else {
                    BasisTuple wb;
                    for (size_t m = 0; m < tuples[i].size(); ++m) {
                        wb.push_back(weight_subspace(tuples[i][m], sigmas[i][m]));
                    }
                    bases.push_back(std::move(wb));
                }
            }
            const Matrix fast = gram_matrix(bases, cfg);
            const Matrix brute =
                brute_force_gram(tensors, orders, cfg, weighted ? &sigmas : nullptr);
            worst = std::max(worst, (fast - brute).cwiseAbs().maxCoeff());
        }
    }
    rep.measured = worst;
    rep.detail = "max |fast - brute| over 3 combines x {plain, weighted}";
    finish(rep, start);
    return rep;
}

// 2. Gram matrices of all combines stay PSD up to -1e-8 * lambda_max.
OracleReport check_psd() {
    OracleReport rep;
    rep.name = "gram-psd";
    rep.tolerance = -1e-8;
    rep.at_least = true;
    rep.time_limit = 30.0;
    rep.pass = true;
    const auto start = Clock::now();

    const std::vector<int> dims{6, 8, 10};
    const std::vector<int> orders{3, 3, 3};
    double worst_ratio = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const std::vector<Tensor> tensors = seeded_tensors(32, dims, seed);
        std::vector<BasisTuple> bases;
        for (const Tensor& t : tensors) bases.push_back(bases_of(tensor_subspaces(t, orders)));
        for (KernelCombine combine :
             {KernelCombine::sum, KernelCombine::product, KernelCombine::sum_product}) {
            const Matrix k = gram_matrix(bases, KernelConfig{1.0, 0.5, combine});
            Eigen::SelfAdjointEigenSolver<Matrix> es(k, Eigen::EigenvaluesOnly);
            const double ratio = es.eigenvalues().minCoeff() / es.eigenvalues().maxCoeff();
            worst_ratio = std::min(worst_ratio, ratio);
        }
    }
    rep.measured = worst_ratio;
    rep.detail = "worst min-eig / max-eig over 10 seeds x 3 combines";
    finish(rep, start);
    return rep;
}

// 3. ||A^T B||_F^2 = sum cos^2(theta); projection distance matches the
//    materialized projector difference; basis invariance under Q.
OracleReport check_grassmann_identities() {
    OracleReport rep;
    rep.name = "grassmann-identities";
    rep.tolerance = 1e-10;
    rep.pass = true;
    const auto start = Clock::now();

    Rng rng(7);
    const int n = 12, p = 4;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Subspace a{random_orthonormal(n, p, rng), Vector::Ones(p)};
        Subspace b{random_orthonormal(n, p, rng), Vector::Ones(p)};

        const double cross2 = (a.basis.transpose() * b.basis).squaredNorm();
        const Vector angles = principal_angles(a, b);
        double cos2 = 0.0;
        for (int k = 0; k < angles.size(); ++k) cos2 += std::cos(angles(k)) * std::cos(angles(k));
        worst = std::max(worst, std::abs(cross2 - cos2));

        const double pd = projection_distance_sq(a, b);
        const double literal = (a.basis * a.basis.transpose() - b.basis * b.basis.transpose())
                                   .squaredNorm();
        worst = std::max(worst, std::abs(pd - literal));

        const Matrix q = random_orthonormal(p, p, rng);
        Subspace aq{a.basis * q, Vector::Ones(p)};
        worst = std::max(worst, std::abs(projection_distance_sq(aq, b) - pd));
    }
    rep.measured = worst;
    rep.detail = "100 random pairs in G(4, 12)";
    finish(rep, start);
    return rep;
}

// 4. Nystrom exactness at C = N and the error trend over C in {2,4,8,16}.
OracleReport check_nystrom() {
    OracleReport rep;
    rep.name = "nystrom-exactness-and-trend";
    rep.tolerance = 1e-6;
    rep.time_limit = 60.0;
    rep.pass = true;
    const auto start = Clock::now();

    const std::vector<int> orders{3, 3, 3};
    const KernelConfig cfg{1.0, 0.5, KernelCombine::sum_product};
    const std::vector<int> counts{2, 4, 8, 16};

    double worst_exact = 0.0;
    std::vector<double> mean_err(counts.size(), 0.0);
    const int num_seeds = 5;
    for (int s = 0; s < num_seeds; ++s) {
        SyntheticSpec spec;
        spec.num_classes = 4;
        spec.per_class = 20;
        spec.dims = {6, 8, 10};
        spec.signal_rank = 3;
        spec.noise_level = 0.5;
        spec.seed = 200 + static_cast<std::uint64_t>(s);
        const Dataset ds = gen_synthetic_memory(spec, true);  // N = 64

        const auto exact = nystrom_error_curve(ds.tensors, orders, cfg, {ds.size()}, spec.seed);
        worst_exact = std::max(worst_exact, exact[0].second);

        const auto curve = nystrom_error_curve(ds.tensors, orders, cfg, counts, spec.seed);
        for (size_t k = 0; k < counts.size(); ++k) {
            mean_err[k] += curve[k].second / num_seeds;
        }
    }

    bool trend_ok = true;
    std::ostringstream trend;
    trend << "mean err over C={2,4,8,16}:";
    for (size_t k = 0; k < mean_err.size(); ++k) {
        trend << " " << fmt(mean_err[k]);
        if (k > 0 && mean_err[k] > 1.05 * mean_err[k - 1]) trend_ok = false;
    }
    rep.measured = worst_exact;
    rep.pass = trend_ok;
    rep.detail = trend.str() + (trend_ok ? " (nonincreasing)" : " (TREND VIOLATION)");
    finish(rep, start);
    return rep;
}

// 5. Analytic gradients match central finite differences.
OracleReport check_gradients() {
    OracleReport rep;
    rep.name = "gradient-check";
    rep.tolerance = 1e-4;
    rep.time_limit = 30.0;
    rep.pass = true;
    const auto start = Clock::now();

    SyntheticSpec spec;
    spec.num_classes = 3;
    spec.per_class = 10;
    spec.dims = {6, 8, 10};
    spec.signal_rank = 3;
    spec.noise_level = 0.5;
    spec.seed = 11;
    const Dataset train_ds = gen_synthetic_memory(spec, true);
    const Dataset held_out = gen_synthetic_memory(spec, false);

    TrainConfig cfg;
    cfg.orders = {3};
    cfg.num_pivots = 8;
    cfg.epochs = 0;
    cfg.seed = 11;
    UktlModel model = train(train_ds, cfg).model;
    randomize_parameters(model, 123);

    std::vector<Tensor> batch(held_out.tensors.begin(), held_out.tensors.begin() + 4);
    std::vector<int> labels(held_out.labels.begin(), held_out.labels.begin() + 4);
    const GradCheckReport gc = grad_check(model, batch, labels, 1e-5);
    rep.measured = std::max({gc.classifier, gc.msn, gc.mu});
    rep.detail = "classifier=" + fmt(gc.classifier) + " msn=" + fmt(gc.msn) +
                 " mu=" + fmt(gc.mu);
    finish(rep, start);
    return rep;
}

// 6. mu endpoints reproduce the sum / product kernels exactly; with
//    sigma == 1 the uncertainty pipeline matches the plain one.
OracleReport check_degenerate_equivalences() {
    OracleReport rep;
    rep.name = "degenerate-equivalences";
    rep.tolerance = 1e-15;
    rep.pass = true;
    const auto start = Clock::now();

    const std::vector<int> orders{3, 3, 3};
    const std::vector<Tensor> tensors = seeded_tensors(8, {6, 8, 10}, 5);
    std::vector<BasisTuple> bases;
    for (const Tensor& t : tensors) bases.push_back(bases_of(tensor_subspaces(t, orders)));

    const Matrix k_sum = gram_matrix(bases, KernelConfig{1.0, 0.5, KernelCombine::sum});
    const Matrix k_prod = gram_matrix(bases, KernelConfig{1.0, 0.5, KernelCombine::product});
    const Matrix k_mu1 = gram_matrix(bases, KernelConfig{1.0, 1.0, KernelCombine::sum_product});
    const Matrix k_mu0 = gram_matrix(bases, KernelConfig{1.0, 0.0, KernelCombine::sum_product});
    const double mu_diff = std::max((k_mu1 - k_sum).cwiseAbs().maxCoeff(),
                                    (k_mu0 - k_prod).cwiseAbs().maxCoeff());
    rep.measured = mu_diff;

    SyntheticSpec spec;
    spec.num_classes = 3;
    spec.per_class = 15;
    spec.dims = {6, 8, 10};
    spec.signal_rank = 3;
    spec.noise_level = 0.3;
    spec.seed = 21;
    const Dataset train_ds = gen_synthetic_memory(spec, true);
    const Dataset test_ds = gen_synthetic_memory(spec, false);

    TrainConfig cfg;
    cfg.orders = {3};
    cfg.num_pivots = 8;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.seed = 3;
    cfg.use_msn = false;
    const UktlModel ktl = train(train_ds, cfg).model;

    UktlModel uktl = ktl;  // same pivots, map and classifier
    uktl.use_msn = true;
    uktl.msn = make_msn(uktl.dims, uktl.orders, MsnInput::singular_values, 0.1, 10.0);

    double fwd_diff = 0.0;
    for (const Tensor& t : test_ds.tensors) {
        fwd_diff = std::max(fwd_diff, (forward(uktl, t) - forward(ktl, t)).cwiseAbs().maxCoeff());
    }
    rep.pass = fwd_diff <= 1e-12;
    rep.detail = "mu-endpoint max|Δ|=" + fmt(mu_diff) + ", sigma==1 forward max|Δ|=" +
                 fmt(fwd_diff) + " (tol 1e-12)";
    finish(rep, start);
    return rep;
}

// 7. End-to-end seeded benchmark: gen -> fit -> eval, accuracy >= 0.95 and
//    bit-identical checkpoint on rerun.
OracleReport check_end_to_end(const std::filesystem::path& work_dir) {
    OracleReport rep;
    rep.name = "end-to-end-synthetic";
    rep.tolerance = 0.95;
    rep.at_least = true;
    rep.time_limit = 300.0;
    rep.pass = true;
    const auto start = Clock::now();

    const std::filesystem::path dir = work_dir / "e2e";
    SyntheticSpec spec;
    spec.num_classes = 3;
    spec.per_class = 100;
    spec.dims = {8, 10, 12};
    spec.signal_rank = 4;
    spec.noise_level = 0.3;
    spec.seed = 7;
    const GenResult gen = gen_synthetic(spec, dir);
    const Dataset train_ds = load_dataset(gen.train_manifest);
    const Dataset test_ds = load_dataset(gen.test_manifest);

    TrainConfig cfg;
    cfg.orders = {4};
    cfg.num_pivots = 16;
    cfg.epochs = 30;
    cfg.batch_size = 16;
    cfg.seed = 7;

    const TrainResult first = train(train_ds, cfg);
    rep.measured = evaluate(first.model, test_ds);
    save_checkpoint(first.model, dir / "model.json");

    const TrainResult second = train(train_ds, cfg);
    save_checkpoint(second.model, dir / "model_rerun.json");

    const std::string bytes_a = encode_checkpoint(first.model);
    const std::string bytes_b = encode_checkpoint(second.model);
    const bool identical = bytes_a == bytes_b;
    rep.pass = identical;
    rep.detail = std::string("test accuracy=") + fmt(rep.measured) +
                 ", rerun checkpoint identical=" + (identical ? "yes" : "NO");
    finish(rep, start);
    return rep;
}

// 8. Preprocessing contracts: cyclic resample pattern, block count,
//    normalization range/reference/idempotence.
OracleReport check_preprocessing() {
    OracleReport rep;
    rep.name = "preprocessing-contracts";
    rep.tolerance = 1e-12;
    rep.pass = true;
    const auto start = Clock::now();

    double worst = 0.0;
    bool structure_ok = true;

    {
        Rng rng(17);
        const Tensor seq = random_tensor({2, 3, 70}, rng);
        const Tensor res = temporal_resample(seq, 200);
        if (res.dims.back() != 200) structure_ok = false;
        for (int t = 0; t < 200; ++t) {
            const int src = t % 70;
            for (int o = 0; o < 6; ++o) {
                if (res.values[static_cast<size_t>(o * 200 + t)] !=
                    seq.values[static_cast<size_t>(o * 70 + src)]) {
                    structure_ok = false;
                }
            }
        }
        const Tensor long_seq = random_tensor({2, 3, 400}, rng);
        const Tensor down = temporal_resample(long_seq, 200);
        for (int o = 0; o < 6; ++o) {
            if (down.values[static_cast<size_t>(o * 200)] !=
                    long_seq.values[static_cast<size_t>(o * 400)] ||
                down.values[static_cast<size_t>(o * 200 + 199)] !=
                    long_seq.values[static_cast<size_t>(o * 400 + 399)]) {
                structure_ok = false;
            }
        }
    }
    {
        Rng rng(18);
        const Tensor seq = random_tensor({3, 5, 200}, rng);
        if (temporal_blocks(seq, 30, 10).size() != 18) structure_ok = false;
        const auto whole = temporal_blocks(seq, 200, 10);
        if (whole.size() != 1 || !(whole[0] == seq)) structure_ok = false;
        const Tensor short_seq = random_tensor({3, 5, 35}, rng);
        if (temporal_blocks(short_seq, 30, 10).size() != 1) structure_ok = false;
    }
    {
        Rng rng(31);
        for (int trial = 0; trial < 50; ++trial) {
            const Tensor seq = random_tensor({3, 10, 40}, rng);
            const int ref = static_cast<int>(rng.uniform_index(10));
            const Tensor norm = normalize_skeleton(seq, ref);
            for (int a = 0; a < 3; ++a) {
                double max_abs = 0.0;
                for (int i = 0; i < 10; ++i) {
                    for (int f = 0; f < 40; ++f) {
                        const double v =
                            norm.values[static_cast<size_t>((a * 10 + i) * 40 + f)];
                        max_abs = std::max(max_abs, std::abs(v));
                        if (i == ref) worst = std::max(worst, std::abs(v));
                    }
                }
                worst = std::max(worst, std::abs(max_abs - 1.0));
            }
            const Tensor again = normalize_skeleton(norm, ref);
            for (size_t v = 0; v < norm.values.size(); ++v) {
                worst = std::max(worst, std::abs(again.values[v] - norm.values[v]));
            }
        }
    }
    rep.measured = worst;
    rep.pass = structure_ok;
    rep.detail = structure_ok ? "resample pattern + 18 blocks + 50 normalizations"
                              : "structural check failed";
    finish(rep, start);
    return rep;
}

// 9. Penalty identities: zero for a single sample, the closed form for an
//    identical-sigma batch.
OracleReport check_loss_identities() {
    OracleReport rep;
    rep.name = "loss-identities";
    rep.tolerance = 1e-12;
    rep.pass = true;
    const auto start = Clock::now();

    double worst = 0.0;
    const double beta = 0.01;
    {
        std::vector<std::vector<Vector>> sigmas(1);
        Vector s(4);
        s << 0.7, 1.3, 2.0, 9.5;
        sigmas[0] = {s, s, s};
        worst = std::max(worst, std::abs(uncertainty_penalty(sigmas, beta)));
    }
    {
        const int n = 5, modes = 3, p = 4;
        Vector s = Vector::Constant(p, 2.37);
        std::vector<std::vector<Vector>> sigmas(n, std::vector<Vector>(modes, s));
        const double expected = beta * n * modes * p * std::log(1.0 / n);
        worst = std::max(worst, std::abs(uncertainty_penalty(sigmas, beta) - expected));
    }
    {
        // model-level: single-sample loss is cross-entropy alone
        SyntheticSpec spec;
        spec.num_classes = 2;
        spec.per_class = 8;
        spec.dims = {5, 6, 7};
        spec.signal_rank = 2;
        spec.noise_level = 0.4;
        spec.seed = 33;
        const Dataset ds = gen_synthetic_memory(spec, true);
        TrainConfig cfg;
        cfg.orders = {2};
        cfg.num_pivots = 4;
        cfg.epochs = 1;
        cfg.batch_size = 4;
        cfg.seed = 33;
        UktlModel model = train(ds, cfg).model;

        const Tensor& t = ds.tensors[0];
        const Vector logits = forward(model, t);
        double lse = logits.maxCoeff();
        double acc = 0.0;
        for (Eigen::Index k = 0; k < logits.size(); ++k) acc += std::exp(logits(k) - lse);
        lse += std::log(acc);
        const double ce = lse - logits(ds.labels[0]);
        worst = std::max(worst, std::abs(loss(model, {t}, {ds.labels[0]}) - ce));
    }
    rep.measured = worst;
    rep.detail = "penalty(n=1), identical-sigma closed form, single-sample loss";
    finish(rep, start);
    return rep;
}

}  // namespace

std::vector<OracleReport> run_acceptance(const std::filesystem::path& work_dir) {
    std::filesystem::create_directories(work_dir);
    std::vector<OracleReport> reports;
    reports.push_back(check_kernel_vs_brute_force());
    reports.push_back(check_psd());
    reports.push_back(check_grassmann_identities());
    reports.push_back(check_nystrom());
    reports.push_back(check_gradients());
    reports.push_back(check_degenerate_equivalences());
    reports.push_back(check_end_to_end(work_dir));
    reports.push_back(check_preprocessing());
    reports.push_back(check_loss_identities());
    return reports;
}

void print_reports(std::ostream& os, const std::vector<OracleReport>& reports) {
    char line[256];
    for (size_t i = 0; i < reports.size(); ++i) {
        const OracleReport& r = reports[i];
        std::snprintf(line, sizeof(line), "[%zu/%zu] %-28s measured=%-11.4g tol%s%-9g %6.2fs %s",
                      i + 1, reports.size(), r.name.c_str(), r.measured,
                      r.at_least ? ">=" : "<=", r.tolerance, r.seconds,
                      r.pass ? "PASS" : "FAIL");
        os << line << "\n";
        if (!r.detail.empty()) os << "        " << r.detail << "\n";
    }
    size_t passed = 0;
    for (const auto& r : reports) passed += r.pass ? 1 : 0;
    os << "RESULT: " << passed << "/" << reports.size() << " criteria passed\n";
}

bool all_pass(const std::vector<OracleReport>& reports) {
    for (const auto& r : reports) {
        if (!r.pass) return false;
    }
    return true;
}

}  // namespace uktl
