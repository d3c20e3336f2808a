#include "uktl/data.hpp"
#include "uktl/model.hpp"
#include "uktl/oracle.hpp"
#include "uktl/parallel.hpp"
#include "uktl/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using nlohmann::json;

std::vector<int> parse_int_list(const std::string& text, const char* what) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            throw CLI::ValidationError(std::string(what) + ": expected comma-separated integers");
        }
    }
    if (out.empty()) {
        throw CLI::ValidationError(std::string(what) + ": empty list");
    }
    return out;
}

// Train settings come from an optional JSON config; explicitly passed flags
// win over config values. Unknown config keys are rejected.
struct FitOptions {
    std::string config_path;
    std::string orders = "8";
    int pivots = 16;
    double temperature = 1.0;
    int refresh = 5;
    std::string combine = "sum_product";
    double sigma = 1.0;
    bool median_sigma = false;
    double mu = 0.5;
    double beta = 0.01;
    bool no_msn = false;
    std::string msn_input = "singular_values";
    double sigma_min = 0.1;
    double sigma_max = 10.0;
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int batch = 32;
    int epochs = 30;
    std::string lr_decay_epochs;
    double lr_decay_factor = 0.1;
    double clamp_eps = 1e-8;
    bool freeze_msn = false;
    bool freeze_mu = false;
    bool learn_bandwidth = false;
    std::uint64_t seed = 0;
};

void apply_config_file(const std::string& path, FitOptions& opt, const CLI::App* cmd) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot open config: " + path);
    }
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("config parse error in " + path + ": " + e.what());
    }
    auto flag_given = [&](const std::string& name) {
        const CLI::Option* o = cmd->get_option_no_throw(name);
        return o != nullptr && o->count() > 0;
    };
    auto int_list_string = [](const json& value) {
        std::string s;
        for (int v : value.get<std::vector<int>>()) {
            if (!s.empty()) s += ',';
            s += std::to_string(v);
        }
        return s;
    };
    for (const auto& [key, value] : j.items()) {
        if (key == "orders") {
            if (!flag_given("--p")) opt.orders = int_list_string(value);
        } else if (key == "pivots") {
            if (!flag_given("--pivots")) opt.pivots = value.get<int>();
        } else if (key == "temperature") {
            if (!flag_given("--temperature")) opt.temperature = value.get<double>();
        } else if (key == "refresh") {
            if (!flag_given("--refresh")) opt.refresh = value.get<int>();
        } else if (key == "combine") {
            if (!flag_given("--combine")) opt.combine = value.get<std::string>();
        } else if (key == "sigma") {
            if (!flag_given("--sigma")) opt.sigma = value.get<double>();
        } else if (key == "median_sigma") {
            if (!flag_given("--median-sigma")) opt.median_sigma = value.get<bool>();
        } else if (key == "mu") {
            if (!flag_given("--mu")) opt.mu = value.get<double>();
        } else if (key == "beta") {
            if (!flag_given("--beta")) opt.beta = value.get<double>();
        } else if (key == "use_msn") {
            if (!flag_given("--no-msn")) opt.no_msn = !value.get<bool>();
        } else if (key == "msn_input") {
            if (!flag_given("--msn-input")) opt.msn_input = value.get<std::string>();
        } else if (key == "sigma_min") {
            if (!flag_given("--sigma-min")) opt.sigma_min = value.get<double>();
        } else if (key == "sigma_max") {
            if (!flag_given("--sigma-max")) opt.sigma_max = value.get<double>();
        } else if (key == "lr") {
            if (!flag_given("--lr")) opt.lr = value.get<double>();
        } else if (key == "momentum") {
            if (!flag_given("--momentum")) opt.momentum = value.get<double>();
        } else if (key == "weight_decay") {
            if (!flag_given("--weight-decay")) opt.weight_decay = value.get<double>();
        } else if (key == "batch") {
            if (!flag_given("--batch")) opt.batch = value.get<int>();
        } else if (key == "epochs") {
            if (!flag_given("--epochs")) opt.epochs = value.get<int>();
        } else if (key == "lr_decay_epochs") {
            if (!flag_given("--lr-decay-epochs")) opt.lr_decay_epochs = int_list_string(value);
        } else if (key == "lr_decay_factor") {
            if (!flag_given("--lr-decay-factor")) opt.lr_decay_factor = value.get<double>();
        } else if (key == "clamp_eps") {
            if (!flag_given("--clamp-eps")) opt.clamp_eps = value.get<double>();
        } else if (key == "learn_msn") {
            if (!flag_given("--freeze-msn")) opt.freeze_msn = !value.get<bool>();
        } else if (key == "learn_mu") {
            if (!flag_given("--freeze-mu")) opt.freeze_mu = !value.get<bool>();
        } else if (key == "learn_bandwidth") {
            if (!flag_given("--learn-bandwidth")) opt.learn_bandwidth = value.get<bool>();
        } else if (key == "seed") {
            if (!flag_given("--seed")) opt.seed = value.get<std::uint64_t>();
        } else {
            throw std::runtime_error("config: unknown key '" + key + "'");
        }
    }
}

uktl::TrainConfig to_train_config(const FitOptions& opt) {
    uktl::TrainConfig cfg;
    cfg.orders = parse_int_list(opt.orders, "--p");
    cfg.num_pivots = opt.pivots;
    cfg.temperature = opt.temperature;
    cfg.refresh_period = opt.refresh;
    cfg.combine = uktl::parse_combine(opt.combine);
    cfg.sigma = opt.sigma;
    cfg.median_sigma = opt.median_sigma;
    cfg.mu_init = opt.mu;
    cfg.beta = opt.beta;
    cfg.use_msn = !opt.no_msn;
    cfg.msn_input = uktl::parse_msn_input(opt.msn_input);
    cfg.sigma_min = opt.sigma_min;
    cfg.sigma_max = opt.sigma_max;
    cfg.learning_rate = opt.lr;
    cfg.momentum = opt.momentum;
    cfg.weight_decay = opt.weight_decay;
    cfg.batch_size = opt.batch;
    cfg.epochs = opt.epochs;
    if (!opt.lr_decay_epochs.empty()) {
        cfg.lr_decay_epochs = parse_int_list(opt.lr_decay_epochs, "--lr-decay-epochs");
    }
    cfg.lr_decay_factor = opt.lr_decay_factor;
    cfg.clamp_eps = opt.clamp_eps;
    cfg.learn_msn = !opt.freeze_msn;
    cfg.learn_mu = !opt.freeze_mu;
    cfg.learn_bandwidth = opt.learn_bandwidth;
    cfg.seed = opt.seed;
    return cfg;
}

uktl::Vector softmax(const uktl::Vector& logits) {
    const double zmax = logits.maxCoeff();
    uktl::Vector p(logits.size());
    double total = 0.0;
    for (Eigen::Index k = 0; k < logits.size(); ++k) {
        p(k) = std::exp(logits(k) - zmax);
        total += p(k);
    }
    return p / total;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"uktl: uncertainty-weighted tensor subspace kernels with Nystrom features"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    int threads = 0;
    app.add_option("--threads", threads, "Worker thread cap (0 = machine parallelism)")
        ->envname("UKTL_THREADS");

    // ---- gen ----
    auto* gen = app.add_subcommand("gen", "Generate a synthetic subspace-clustered dataset");
    uktl::SyntheticSpec spec;
    std::string gen_dims = "8,10,12";
    std::string gen_out;
    gen->add_option("--classes", spec.num_classes, "Number of classes");
    gen->add_option("--per-class", spec.per_class, "Samples per class");
    gen->add_option("--dims", gen_dims, "Tensor dims, comma separated");
    gen->add_option("--rank", spec.signal_rank, "Per-mode signal rank");
    gen->add_option("--noise", spec.noise_level, "Additive gaussian noise level");
    gen->add_option("--seed", spec.seed, "RNG seed");
    gen->add_option("--out", gen_out, "Output directory")->required();

    // ---- fit ----
    auto* fit = app.add_subcommand("fit", "Train a model on a dataset manifest");
    FitOptions fopt;
    std::string fit_train, fit_out;
    fit->add_option("--train", fit_train, "Training manifest (JSON)")->required();
    fit->add_option("--out", fit_out, "Checkpoint output path")->required();
    fit->add_option("--config", fopt.config_path, "JSON config file (flags override it)");
    fit->add_option("--p", fopt.orders, "Subspace order per mode (single value or list)");
    fit->add_option("--pivots", fopt.pivots, "Number of soft k-means pivots");
    fit->add_option("--temperature", fopt.temperature, "Soft assignment temperature");
    fit->add_option("--refresh", fopt.refresh, "Pivot/eigendecomposition refresh period (epochs)");
    fit->add_option("--combine", fopt.combine, "Kernel combine: sum, product, sum_product");
    fit->add_option("--sigma", fopt.sigma, "RBF bandwidth");
    fit->add_flag("--median-sigma", fopt.median_sigma, "Initialize bandwidth by median heuristic");
    fit->add_option("--mu", fopt.mu, "Initial sum/product mixture weight");
    fit->add_option("--beta", fopt.beta, "Uncertainty regularization weight");
    fit->add_flag("--no-msn", fopt.no_msn, "Disable the uncertainty module (plain kernel)");
    fit->add_option("--msn-input", fopt.msn_input,
                    "MSN featurization: singular_values or projection_flat");
    fit->add_option("--sigma-min", fopt.sigma_min, "MSN lower bound");
    fit->add_option("--sigma-max", fopt.sigma_max, "MSN upper bound");
    fit->add_option("--lr", fopt.lr, "Learning rate");
    fit->add_option("--momentum", fopt.momentum, "SGD momentum");
    fit->add_option("--weight-decay", fopt.weight_decay, "Weight decay on weight matrices");
    fit->add_option("--batch", fopt.batch, "Minibatch size");
    fit->add_option("--epochs", fopt.epochs, "Training epochs");
    fit->add_option("--lr-decay-epochs", fopt.lr_decay_epochs, "Epochs at which LR decays");
    fit->add_option("--lr-decay-factor", fopt.lr_decay_factor, "LR decay factor");
    fit->add_option("--clamp-eps", fopt.clamp_eps, "Relative eigenvalue clamp for P^{-1}");
    fit->add_flag("--freeze-msn", fopt.freeze_msn, "Do not update MSN parameters");
    fit->add_flag("--freeze-mu", fopt.freeze_mu, "Do not update the mixture weight");
    fit->add_flag("--learn-bandwidth", fopt.learn_bandwidth, "Also learn log(sigma)");
    fit->add_option("--seed", fopt.seed, "RNG seed");

    // ---- predict ----
    auto* predict_cmd = app.add_subcommand("predict", "Write per-sample predictions as CSV");
    std::string pr_model, pr_data, pr_out;
    predict_cmd->add_option("--model", pr_model, "Checkpoint path")->required();
    predict_cmd->add_option("--data", pr_data, "Dataset manifest")->required();
    predict_cmd->add_option("--out", pr_out, "Output CSV path")->required();

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "Print accuracy on a dataset manifest");
    std::string ev_model, ev_data;
    eval_cmd->add_option("--model", ev_model, "Checkpoint path")->required();
    eval_cmd->add_option("--data", ev_data, "Dataset manifest")->required();

    // ---- gram ----
    auto* gram_cmd = app.add_subcommand("gram", "Export a Gram matrix (or Nystrom features) as CSV");
    std::string gm_data, gm_out, gm_orders = "8", gm_combine = "sum_product";
    double gm_sigma = 1.0, gm_mu = 0.5;
    int gm_nystrom = 0;
    std::uint64_t gm_seed = 0;
    gram_cmd->add_option("--data", gm_data, "Dataset manifest")->required();
    gram_cmd->add_option("--out", gm_out, "Output CSV path")->required();
    gram_cmd->add_option("--p", gm_orders, "Subspace order per mode");
    gram_cmd->add_option("--combine", gm_combine, "Kernel combine");
    gram_cmd->add_option("--sigma", gm_sigma, "RBF bandwidth");
    gram_cmd->add_option("--mu", gm_mu, "Mixture weight");
    gram_cmd->add_option("--nystrom", gm_nystrom,
                         "Export centered Nystrom features for this many pivots instead");
    gram_cmd->add_option("--seed", gm_seed, "Pivot k-means seed");

    // ---- bench-pivots ----
    auto* bench = app.add_subcommand("bench-pivots", "Nystrom relative-error curve as CSV");
    std::string bp_data, bp_out, bp_counts = "2,4,8,16", bp_orders = "8", bp_combine = "sum_product";
    double bp_sigma = 1.0, bp_mu = 0.5;
    std::uint64_t bp_seed = 0;
    bench->add_option("--data", bp_data, "Dataset manifest")->required();
    bench->add_option("--out", bp_out, "Output CSV path")->required();
    bench->add_option("--pivot-counts", bp_counts, "Pivot counts to evaluate");
    bench->add_option("--p", bp_orders, "Subspace order per mode");
    bench->add_option("--combine", bp_combine, "Kernel combine");
    bench->add_option("--sigma", bp_sigma, "RBF bandwidth");
    bench->add_option("--mu", bp_mu, "Mixture weight");
    bench->add_option("--seed", bp_seed, "k-means seed");

    // ---- gradcheck ----
    auto* gc = app.add_subcommand("gradcheck",
                                  "Finite-difference check of the analytic training gradients");
    std::uint64_t gc_seed = 0;
    gc->add_option("--seed", gc_seed, "RNG seed");

    // ---- verify ----
    auto* verify_cmd = app.add_subcommand("verify", "Run the full acceptance suite");
    std::string verify_dir;
    verify_cmd->add_option("--work-dir", verify_dir, "Scratch directory (default: temp)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    uktl::set_max_threads(threads);

    try {
        if (gen->parsed()) {
            spec.dims = parse_int_list(gen_dims, "--dims");
            const uktl::GenResult res = uktl::gen_synthetic(spec, gen_out);
            std::cout << "wrote " << res.train.entries.size() << " train / "
                      << res.test.entries.size() << " test tensors under " << gen_out << "\n";
            return 0;
        }
        if (fit->parsed()) {
            if (!fopt.config_path.empty()) apply_config_file(fopt.config_path, fopt, fit);
            const uktl::TrainConfig cfg = to_train_config(fopt);
            const uktl::Dataset ds = uktl::load_dataset(fit_train);
            const uktl::TrainResult res =
                uktl::train(ds, cfg, [&](int epoch, const uktl::EpochStats& st) {
                    std::cout << "epoch " << epoch << "/" << cfg.epochs
                              << " loss=" << uktl::format_double(st.loss)
                              << " train_acc=" << uktl::format_double(st.train_accuracy)
                              << " lr=" << uktl::format_double(st.learning_rate) << "\n";
                });
            uktl::save_checkpoint(res.model, fit_out);
            std::cout << "checkpoint written to " << fit_out << "\n";
            return 0;
        }
        if (predict_cmd->parsed()) {
            const uktl::UktlModel model = uktl::load_checkpoint(pr_model);
            const uktl::Dataset ds = uktl::load_dataset(pr_data);
            std::ofstream out(pr_out, std::ios::binary);
            if (!out) throw std::runtime_error("cannot open for writing: " + pr_out);
            out << "index,label,confidence\n";
            for (int i = 0; i < ds.size(); ++i) {
                const uktl::Vector logits =
                    uktl::forward(model, ds.tensors[static_cast<size_t>(i)]);
                const uktl::Vector probs = softmax(logits);
                int best = 0;
                for (Eigen::Index k = 1; k < probs.size(); ++k) {
                    if (probs(k) > probs(best)) best = static_cast<int>(k);
                }
                out << i << "," << best << "," << uktl::format_double(probs(best)) << "\n";
            }
            return 0;
        }
        if (eval_cmd->parsed()) {
            const uktl::UktlModel model = uktl::load_checkpoint(ev_model);
            const uktl::Dataset ds = uktl::load_dataset(ev_data);
            std::cout << "accuracy=" << uktl::format_double(uktl::evaluate(model, ds)) << "\n";
            return 0;
        }
        if (gram_cmd->parsed()) {
            const uktl::Dataset ds = uktl::load_dataset(gm_data);
            std::vector<int> orders = parse_int_list(gm_orders, "--p");
            if (orders.size() == 1) orders.assign(ds.dims.size(), orders[0]);
            const uktl::KernelConfig kcfg{gm_sigma, gm_mu, uktl::parse_combine(gm_combine)};
            std::vector<uktl::BasisTuple> bases;
            bases.reserve(ds.tensors.size());
            for (const uktl::Tensor& t : ds.tensors) {
                bases.push_back(uktl::bases_of(uktl::tensor_subspaces(t, orders)));
            }
            if (gm_nystrom > 0) {
                const uktl::PivotSet pivots =
                    uktl::soft_kmeans(ds.tensors, gm_nystrom, 1.0, 100, 1e-9, gm_seed);
                std::vector<uktl::BasisTuple> pivot_bases;
                for (const uktl::Tensor& z : pivots.pivots) {
                    pivot_bases.push_back(uktl::bases_of(uktl::tensor_subspaces(z, orders)));
                }
                uktl::NystromMap map = uktl::fit_nystrom(std::move(pivot_bases), kcfg);
                uktl::write_csv(uktl::embed_fit(map, bases), gm_out);
            } else {
                uktl::write_csv(uktl::gram_matrix(bases, kcfg), gm_out);
            }
            return 0;
        }
        if (bench->parsed()) {
            const uktl::Dataset ds = uktl::load_dataset(bp_data);
            std::vector<int> orders = parse_int_list(bp_orders, "--p");
            if (orders.size() == 1) orders.assign(ds.dims.size(), orders[0]);
            const uktl::KernelConfig kcfg{bp_sigma, bp_mu, uktl::parse_combine(bp_combine)};
            const auto curve = uktl::nystrom_error_curve(
                ds.tensors, orders, kcfg, parse_int_list(bp_counts, "--pivot-counts"), bp_seed);
            std::ofstream out(bp_out, std::ios::binary);
            if (!out) throw std::runtime_error("cannot open for writing: " + bp_out);
            out << "pivots,relative_error\n";
            for (const auto& [c, err] : curve) {
                out << c << "," << uktl::format_double(err) << "\n";
            }
            return 0;
        }
        if (gc->parsed()) {
            uktl::SyntheticSpec gspec;
            gspec.num_classes = 3;
            gspec.per_class = 10;
            gspec.dims = {6, 8, 10};
            gspec.signal_rank = 3;
            gspec.noise_level = 0.5;
            gspec.seed = gc_seed;
            const uktl::Dataset train_ds = uktl::gen_synthetic_memory(gspec, true);
            const uktl::Dataset held_out = uktl::gen_synthetic_memory(gspec, false);

            uktl::TrainConfig cfg;
            cfg.orders = {3};
            cfg.num_pivots = 8;
            cfg.epochs = 0;
            cfg.seed = gc_seed;
            uktl::UktlModel model = uktl::train(train_ds, cfg).model;
            uktl::randomize_parameters(model, gc_seed + 1);

            std::vector<uktl::Tensor> batch(held_out.tensors.begin(),
                                            held_out.tensors.begin() + 4);
            std::vector<int> labels(held_out.labels.begin(), held_out.labels.begin() + 4);
            const uktl::GradCheckReport rep = uktl::grad_check(model, batch, labels, 1e-5);
            const double max_err = std::max({rep.classifier, rep.msn, rep.mu, rep.bandwidth});
            std::cout << "max_rel_err=" << uktl::format_double(max_err)
                      << " (classifier=" << uktl::format_double(rep.classifier)
                      << " msn=" << uktl::format_double(rep.msn)
                      << " mu=" << uktl::format_double(rep.mu)
                      << " bandwidth=" << uktl::format_double(rep.bandwidth) << ")\n";
            if (max_err <= 1e-4) {
                std::cout << "PASS (threshold 1e-4)\n";
                return 0;
            }
            std::cout << "FAIL (threshold 1e-4)\n";
            return 1;
        }
        if (verify_cmd->parsed()) {
            std::filesystem::path dir = verify_dir.empty()
                                            ? std::filesystem::temp_directory_path() / "uktl-verify"
                                            : std::filesystem::path(verify_dir);
            const auto reports = uktl::run_acceptance(dir);
            uktl::print_reports(std::cout, reports);
            return uktl::all_pass(reports) ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
