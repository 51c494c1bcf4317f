#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "jbsde/errors.hpp"
#include "jbsde/regression.hpp"
#include "jbsde/rng.hpp"

using namespace jbsde;

namespace {

std::vector<double> random_states(std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::vector<double> s(n * dim);
    Xoshiro256pp rng(seed, 0xabcdull, 0);
    for (auto& v : s) v = 2.0 * rng.uniform() - 1.0;
    return s;
}

}  // namespace

TEST_CASE("basis sizes follow the total-degree count") {
    CHECK(polynomial_basis_size(1, 0) == 1);
    CHECK(polynomial_basis_size(1, 3) == 4);
    CHECK(polynomial_basis_size(2, 2) == 6);   // 1, x, y, x^2, xy, y^2
    CHECK(polynomial_basis_size(3, 2) == 10);
    CHECK(polynomial_basis_size(0, 5) == 1);   // stateless: constants only
}

TEST_CASE("a polynomial target inside the span is reproduced exactly") {
    const std::size_t n = 400, dim = 2;
    const auto states = random_states(n, dim, 42);
    std::vector<double> target(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = states[i * dim], y = states[i * dim + 1];
        target[i] = 1.5 - 2.0 * x + 0.75 * y + 0.3 * x * y + x * x;
    }
    RegressionConfig cfg;
    cfg.basis_degree = 2;
    const auto fitted = regress_conditional_expectation(target, states, n, dim, cfg);
    for (std::size_t i = 0; i < n; ++i)
        CHECK(fitted[i] == doctest::Approx(target[i]).epsilon(1e-10));
}

TEST_CASE("degree zero returns the sample mean") {
    const std::size_t n = 256;
    const auto states = random_states(n, 1, 7);
    std::vector<double> target(n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        target[i] = std::sin(3.0 * states[i]);
        mean += target[i];
    }
    mean /= static_cast<double>(n);
    RegressionConfig cfg;
    cfg.basis_degree = 0;
    const auto fitted = regress_conditional_expectation(target, states, n, 1, cfg);
    for (std::size_t i = 0; i < n; ++i) CHECK(fitted[i] == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("conditional expectation beats the prior on a noisy signal") {
    // target = x^2 + noise; the degree-2 fit must recover x^2 much better than
    // the flat mean does.
    const std::size_t n = 20000;
    const auto states = random_states(n, 1, 9);
    std::vector<double> target(n);
    Xoshiro256pp rng(5, 0x5a17ull, 1);  // separate noise stream
    GaussianSampler gauss(rng);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        target[i] = states[i] * states[i] + 0.1 * gauss();
        mean += target[i];
    }
    mean /= static_cast<double>(n);
    RegressionConfig cfg;
    cfg.basis_degree = 2;
    const auto fitted = regress_conditional_expectation(target, states, n, 1, cfg);
    double err_fit = 0.0, err_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        err_fit += (fitted[i] - states[i] * states[i]) * (fitted[i] - states[i] * states[i]);
        err_mean += (mean - states[i] * states[i]) * (mean - states[i] * states[i]);
    }
    CHECK(err_fit < 0.01 * err_mean);
}

TEST_CASE("one factorization serves many targets") {
    const std::size_t n = 300, dim = 2;
    const auto states = random_states(n, dim, 11);
    RegressionConfig cfg;
    cfg.basis_degree = 1;
    RegressionOperator op(states, n, dim, cfg);
    CHECK(op.basis_size() == 3);
    std::vector<double> t1(n), t2(n), f1(n), f2(n);
    for (std::size_t i = 0; i < n; ++i) {
        t1[i] = 2.0 * states[i * dim] - 1.0;
        t2[i] = -0.5 * states[i * dim + 1] + 4.0;
    }
    op.fit(t1, f1);
    op.fit(t2, f2);
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(f1[i] == doctest::Approx(t1[i]).epsilon(1e-10));
        CHECK(f2[i] == doctest::Approx(t2[i]).epsilon(1e-10));
    }
}

TEST_CASE("a collinear design is rejected with a ridge hint") {
    const std::size_t n = 64;
    std::vector<double> states(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
        states[i * 2] = static_cast<double>(i) / 10.0;
        states[i * 2 + 1] = 3.0 * states[i * 2];  // exactly dependent column
    }
    std::vector<double> target(n, 1.0);
    RegressionConfig cfg;
    cfg.basis_degree = 1;
    CHECK_THROWS_WITH_AS(regress_conditional_expectation(target, states, n, 2, cfg),
                         doctest::Contains("ridge"), SingularRegressionError);

    cfg.ridge = 1e-8;
    const auto fitted = regress_conditional_expectation(target, states, n, 2, cfg);
    for (std::size_t i = 0; i < n; ++i) CHECK(fitted[i] == doctest::Approx(1.0).epsilon(1e-6));
}
