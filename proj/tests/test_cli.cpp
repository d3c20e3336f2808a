#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const char* cli = UKTL_CLI_PATH;

struct RunResult {
    int exit_code;
    std::string out;
};

RunResult run(const std::string& args) {
    const fs::path out_file = fs::temp_directory_path() / "uktl-cli-out.txt";
    const std::string cmd = std::string(cli) + " " + args + " > " + out_file.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream f(out_file);
    std::ostringstream ss;
    ss << f.rdbuf();
    return {WEXITSTATUS(status), ss.str()};
}

fs::path scratch() {
    const fs::path dir = fs::temp_directory_path() / "uktl-cli-test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("cli end-to-end: gen, fit, eval, predict, gram, bench, gradcheck") {
    const fs::path dir = scratch();
    const std::string data = (dir / "data").string();

    auto gen = run("gen --classes 2 --per-class 10 --dims 5,6,7 --rank 2 --noise 0.3 --seed 3 --out " + data);
    REQUIRE(gen.exit_code == 0);
    CHECK(fs::exists(dir / "data" / "train.json"));
    CHECK(fs::exists(dir / "data" / "test.json"));

    const std::string model = (dir / "model.json").string();
    auto fit = run("fit --train " + data + "/train.json --out " + model +
                   " --p 2 --pivots 4 --epochs 3 --batch 4 --seed 1");
    REQUIRE(fit.exit_code == 0);
    CHECK(fit.out.find("epoch 3/3") != std::string::npos);
    CHECK(fs::exists(model));

    auto eval = run("eval --model " + model + " --data " + data + "/test.json");
    CHECK(eval.exit_code == 0);
    CHECK(eval.out.rfind("accuracy=", 0) == 0);

    auto pred = run("predict --model " + model + " --data " + data + "/test.json --out " +
                    (dir / "pred.csv").string());
    CHECK(pred.exit_code == 0);
    {
        std::ifstream f(dir / "pred.csv");
        std::string header;
        std::getline(f, header);
        CHECK(header == "index,label,confidence");
        int rows = 0;
        std::string line;
        while (std::getline(f, line)) {
            if (!line.empty()) ++rows;
        }
        CHECK(rows == 4);  // 2 classes x 2 test samples
    }

    auto gram = run("gram --data " + data + "/test.json --out " + (dir / "gram.csv").string() +
                    " --p 2");
    CHECK(gram.exit_code == 0);
    {
        std::ifstream f(dir / "gram.csv");
        int rows = 0;
        std::string line;
        while (std::getline(f, line)) {
            if (!line.empty()) ++rows;
        }
        CHECK(rows == 4);
    }

    auto nys = run("gram --data " + data + "/train.json --out " + (dir / "feat.csv").string() +
                   " --p 2 --nystrom 3 --seed 2");
    CHECK(nys.exit_code == 0);

    auto bench = run("bench-pivots --data " + data + "/train.json --out " +
                     (dir / "curve.csv").string() + " --p 2 --pivot-counts 2,4 --seed 2");
    CHECK(bench.exit_code == 0);
    {
        std::ifstream f(dir / "curve.csv");
        std::string header;
        std::getline(f, header);
        CHECK(header == "pivots,relative_error");
    }

    auto gc = run("gradcheck --seed 0");
    CHECK(gc.exit_code == 0);
    CHECK(gc.out.find("max_rel_err=") != std::string::npos);
    CHECK(gc.out.find("PASS") != std::string::npos);

    // results do not depend on the worker thread cap
    auto gram1 = run("--threads 1 gram --data " + data + "/test.json --out " +
                     (dir / "gram_t1.csv").string() + " --p 2");
    CHECK(gram1.exit_code == 0);
    std::ostringstream a, b;
    a << std::ifstream((dir / "gram.csv").string()).rdbuf();
    b << std::ifstream((dir / "gram_t1.csv").string()).rdbuf();
    CHECK(a.str() == b.str());
}

TEST_CASE("cli verify runs the acceptance suite") {
    const fs::path dir = scratch();
    auto verify = run("verify --work-dir " + (dir / "verify_work").string());
    CHECK(verify.exit_code == 0);
    CHECK(verify.out.find("RESULT: 9/9") != std::string::npos);
    CHECK(verify.out.find("end-to-end-synthetic") != std::string::npos);
}

TEST_CASE("cli config file with flag override") {
    const fs::path dir = scratch();
    const std::string data = (dir / "data").string();
    REQUIRE(run("gen --classes 2 --per-class 8 --dims 5,6,7 --rank 2 --noise 0.3 --seed 5 --out " + data)
                .exit_code == 0);

    const fs::path cfg = dir / "cfg.json";
    {
        std::ofstream f(cfg);
        f << R"({"orders": [2], "pivots": 4, "epochs": 2, "batch": 4, "seed": 9})";
    }
    auto fit = run("fit --train " + data + "/train.json --out " + (dir / "m.json").string() +
                   " --config " + cfg.string() + " --epochs 1");
    REQUIRE(fit.exit_code == 0);
    CHECK(fit.out.find("epoch 1/1") != std::string::npos);  // flag wins

    const fs::path bad = dir / "bad.json";
    {
        std::ofstream f(bad);
        f << R"({"pivots": 4, "unknown_key": 1})";
    }
    auto rejected = run("fit --train " + data + "/train.json --out " + (dir / "m2.json").string() +
                        " --config " + bad.string());
    CHECK(rejected.exit_code == 2);
    CHECK(rejected.out.find("unknown key") != std::string::npos);
}

TEST_CASE("cli usage and error exit codes") {
    auto unknown_flag = run("gen --classes 2 --frobnicate --out /tmp/x");
    CHECK(unknown_flag.exit_code == 2);

    auto missing_sub = run("");
    CHECK(missing_sub.exit_code == 2);

    auto missing_file = run("eval --model /nonexistent.json --data /nonexistent2.json");
    CHECK(missing_file.exit_code == 2);
    CHECK(missing_file.out.find("error:") != std::string::npos);

    auto help = run("--help");
    CHECK(help.exit_code == 0);
    for (const char* sub : {"gen", "fit", "predict", "eval", "gram", "bench-pivots",
                            "gradcheck", "verify"}) {
        CHECK(help.out.find(sub) != std::string::npos);
    }

    auto fit_help = run("fit --help");
    CHECK(fit_help.exit_code == 0);
    // flags and defaults are documented
    for (const char* flag : {"--p", "--pivots", "--sigma", "--mu", "--beta", "--epochs",
                             "--batch", "--lr", "--momentum", "--weight-decay", "--refresh",
                             "--seed", "--combine", "--msn-input"}) {
        CHECK(fit_help.out.find(flag) != std::string::npos);
    }
    CHECK(fit_help.out.find("sum_product") != std::string::npos);  // default shown
}
