#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "uktl/kernel.hpp"
#include "uktl/oracle.hpp"
#include "uktl/uncertainty.hpp"

#include <cmath>

using namespace uktl;

namespace {

// p = 1 basis in R^2 at a chosen angle from e1
Matrix unit_at(double theta) {
    Matrix b(2, 1);
    b(0, 0) = std::cos(theta);
    b(1, 0) = std::sin(theta);
    return b;
}

std::vector<BasisTuple> seeded_bases(int count, const std::vector<int>& dims,
                                     const std::vector<int>& orders, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<BasisTuple> out;
    for (int i = 0; i < count; ++i) {
        out.push_back(bases_of(tensor_subspaces(random_tensor(dims, rng), orders)));
    }
    return out;
}

}  // namespace

TEST_CASE("factor kernel values") {
    Matrix a = Matrix::Zero(5, 2);
    a(0, 0) = a(1, 1) = 1.0;

    CHECK(factor_kernel(a, a, 1.0) == doctest::Approx(1.0).epsilon(1e-15));

    Matrix b = Matrix::Zero(5, 2);
    b(2, 0) = b(3, 1) = 1.0;
    CHECK(factor_kernel(a, b, 1.0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));

    // pi/4 pair, p = 1: dist^2 = 1
    CHECK(factor_kernel(unit_at(0.0), unit_at(M_PI / 4), 1.0) ==
          doctest::Approx(std::exp(-0.5)).epsilon(1e-12));

    CHECK_THROWS_AS(factor_kernel(a, b, 0.0), std::invalid_argument);
    Matrix c = Matrix::Zero(4, 2);
    CHECK_THROWS_AS(factor_kernel(a, c, 1.0), std::invalid_argument);
}

TEST_CASE("bandwidth monotonicity") {
    const Matrix a = unit_at(0.0);
    const Matrix b = unit_at(0.9);
    double prev = 0.0;
    for (double s : {0.5, 1.0, 2.0, 4.0}) {
        const double k = factor_kernel(a, b, s);
        CHECK(k > prev);
        prev = k;
    }
}

TEST_CASE("tensor kernel combines per-mode factors") {
    BasisTuple a{unit_at(0.1), unit_at(0.7), unit_at(1.2)};

    CHECK(tensor_kernel(a, a, {1.0, 0.5, KernelCombine::product}) ==
          doctest::Approx(1.0).epsilon(1e-14));
    CHECK(tensor_kernel(a, a, {1.0, 0.5, KernelCombine::sum}) ==
          doctest::Approx(3.0).epsilon(1e-14));
    CHECK(tensor_kernel(a, a, {1.0, 0.5, KernelCombine::sum_product}) ==
          doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("sum-product arithmetic: factors (1, 0.5, 0.2), mu 0.4 -> 0.74") {
    // pick angles so the factors land exactly on the target values:
    // dist^2 = 2 sin^2(theta), factor = exp(-dist^2 / (2 sigma^2))
    const double sigma = 0.6;
    auto angle_for = [&](double f) {
        return std::asin(std::sqrt(-sigma * sigma * std::log(f)));
    };
    BasisTuple x{unit_at(0.0), unit_at(0.0), unit_at(0.0)};
    BasisTuple y{unit_at(0.0), unit_at(angle_for(0.5)), unit_at(angle_for(0.2))};

    CHECK(factor_kernel(x[1], y[1], sigma) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(factor_kernel(x[2], y[2], sigma) == doctest::Approx(0.2).epsilon(1e-12));

    CHECK(tensor_kernel(x, y, {sigma, 0.4, KernelCombine::sum_product}) ==
          doctest::Approx(0.74).epsilon(1e-10));
}

TEST_CASE("default config: mu initialized to 0.5") {
    KernelConfig cfg;
    CHECK(cfg.mu == 0.5);
    CHECK(cfg.sigma == 1.0);
}

TEST_CASE("mu endpoints reduce to sum and product exactly") {
    const auto bases = seeded_bases(6, {5, 6, 7}, {2, 2, 2}, 11);
    const Matrix k_sum = gram_matrix(bases, {1.0, 0.5, KernelCombine::sum});
    const Matrix k_prod = gram_matrix(bases, {1.0, 0.5, KernelCombine::product});
    const Matrix k_mu1 = gram_matrix(bases, {1.0, 1.0, KernelCombine::sum_product});
    const Matrix k_mu0 = gram_matrix(bases, {1.0, 0.0, KernelCombine::sum_product});
    CHECK((k_mu1 - k_sum).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((k_mu0 - k_prod).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("gram matrix structure") {
    const auto bases = seeded_bases(8, {5, 6, 7}, {2, 2, 2}, 12);

    const Matrix k = gram_matrix(bases, {1.0, 0.5, KernelCombine::product});
    for (int i = 0; i < 8; ++i) CHECK(k(i, i) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK((k - k.transpose()).cwiseAbs().maxCoeff() == 0.0);  // mirrored, bit-exact

    const Matrix rect = gram_matrix(bases, bases, {1.0, 0.5, KernelCombine::product});
    CHECK((rect - k).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(gram_matrix({}, KernelConfig{}), std::invalid_argument);
}

TEST_CASE("gram matrices are PSD for all combines") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto bases = seeded_bases(16, {5, 6, 7}, {2, 2, 2}, 20 + seed);
        for (auto combine :
             {KernelCombine::sum, KernelCombine::product, KernelCombine::sum_product}) {
            const Matrix k = gram_matrix(bases, {1.0, 0.5, combine});
            Eigen::SelfAdjointEigenSolver<Matrix> es(k, Eigen::EigenvaluesOnly);
            CHECK(es.eigenvalues().minCoeff() >= -1e-8 * es.eigenvalues().maxCoeff());
        }
    }
}

TEST_CASE("sigma == 1 weighting is the identity") {
    Rng rng(30);
    const std::vector<int> orders{2, 2, 2};
    std::vector<SubspaceTuple> tuples;
    for (int i = 0; i < 5; ++i) {
        tuples.push_back(tensor_subspaces(random_tensor({5, 6, 7}, rng), orders));
    }
    std::vector<BasisTuple> plain, weighted;
    for (const auto& t : tuples) {
        plain.push_back(bases_of(t));
        BasisTuple wb;
        for (const auto& s : t) wb.push_back(weight_subspace(s, Vector::Ones(s.order())));
        weighted.push_back(std::move(wb));
    }
    const KernelConfig cfg{1.0, 0.5, KernelCombine::sum_product};
    CHECK((gram_matrix(plain, cfg) - gram_matrix(weighted, cfg)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("gram agrees with the brute-force oracle") {
    Rng rng(31);
    std::vector<Tensor> tensors;
    for (int i = 0; i < 6; ++i) tensors.push_back(random_tensor({5, 6, 7}, rng));
    const std::vector<int> orders{2, 2, 2};

    std::vector<BasisTuple> bases;
    for (const Tensor& t : tensors) bases.push_back(bases_of(tensor_subspaces(t, orders)));

    for (auto combine : {KernelCombine::sum, KernelCombine::product, KernelCombine::sum_product}) {
        const KernelConfig cfg{0.8, 0.3, combine};
        const Matrix fast = gram_matrix(bases, cfg);
        const Matrix brute = brute_force_gram(tensors, orders, cfg);
        CHECK((fast - brute).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("median heuristic bandwidth") {
    Rng rng(32);
    std::vector<SubspaceTuple> tuples;
    for (int i = 0; i < 10; ++i) {
        tuples.push_back(tensor_subspaces(random_tensor({5, 6, 7}, rng), {2, 2, 2}));
    }
    const double s1 = median_heuristic_sigma(tuples, 5);
    const double s2 = median_heuristic_sigma(tuples, 5);
    CHECK(s1 == s2);
    CHECK(s1 > 0.0);
    CHECK(median_heuristic_sigma({tuples[0]}, 5) == 1.0);  // degenerate
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS((KernelConfig{0.0, 0.5, KernelCombine::sum}.validate()),
                    std::invalid_argument);
    CHECK_THROWS_AS((KernelConfig{1.0, 1.5, KernelCombine::sum}.validate()),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_combine("both"), std::invalid_argument);
    CHECK(parse_combine("sum_product") == KernelCombine::sum_product);

    BasisTuple a{unit_at(0.0)};
    BasisTuple b{unit_at(0.0), unit_at(0.1)};
    CHECK_THROWS_AS(tensor_kernel(a, b, KernelConfig{}), std::invalid_argument);
}
