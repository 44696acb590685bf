#include <doctest.h>

#include <cmath>

#include "autolora/rng.hpp"
#include "autolora/schedule.hpp"

using namespace autolora;

TEST_CASE("linear schedule single step") {
    const auto s = make_linear_schedule(1, 0.5, 0.5);
    CHECK(s.T == 1);
    CHECK(s.beta(1) == 0.5);
    CHECK(s.alpha(1) == 0.5);
    CHECK(s.alpha_bar(1) == 0.5);
    CHECK(s.alpha_bar(0) == 1.0);
}

TEST_CASE("linear schedule two steps, hand product") {
    const auto s = make_linear_schedule(2, 0.1, 0.3);
    CHECK(s.alpha_bar(1) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.alpha_bar(2) == doctest::Approx(0.63).epsilon(1e-15));
}

TEST_CASE("long schedule matches independent cumulative-product oracle") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    // Oracle: product accumulated in extended precision, betas recomputed
    // from the interpolation rule directly.
    long double prod = 1.0L;
    for (int t = 1; t <= 1000; ++t) {
        const long double beta = 1e-4L + (t - 1) / 999.0L * (0.02L - 1e-4L);
        prod *= 1.0L - beta;
        CHECK(std::abs(s.alpha_bar(t) - static_cast<double>(prod)) <=
              1e-12 * static_cast<double>(prod));
        if (t > 1) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    }
    CHECK(s.alpha_bar(1000) < s.alpha_bar(1));
    CHECK(s.alpha_bar(1) < 1.0);
}

TEST_CASE("schedule rejects bad arguments") {
    CHECK_THROWS_AS(make_linear_schedule(0, 0.1, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.0, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.3, 0.2), std::invalid_argument);
}

TEST_CASE("forward_step formula") {
    const auto s = make_linear_schedule(1, 0.19, 0.19);
    SUBCASE("zero input stays zero") {
        const Eigen::VectorXd z = Eigen::VectorXd::Zero(3);
        CHECK(forward_step(z, 1, z, s).isZero(0.0));
    }
    SUBCASE("direct evaluation") {
        Eigen::Vector2d x(1.0, 0.0), n(0.0, 1.0);
        const Eigen::VectorXd out = forward_step(x, 1, n, s);
        CHECK(out[0] == doctest::Approx(0.9).epsilon(1e-15));
        CHECK(out[1] == doctest::Approx(std::sqrt(0.19)).epsilon(1e-15));
    }
    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(forward_step(Eigen::VectorXd::Zero(2), 1, Eigen::VectorXd::Zero(3), s),
                        std::invalid_argument);
    }
}

TEST_CASE("forward_marginal boundary cases") {
    const auto s = make_linear_schedule(50, 1e-3, 0.1);
    Rng rng(42);
    const Eigen::VectorXd x0 = rng.normal_vector(2);
    SUBCASE("t = 0 convention returns x0") {
        CHECK(forward_marginal(x0, 0, Eigen::VectorXd::Zero(2), s) == x0);
    }
    SUBCASE("zero signal") {
        const Eigen::VectorXd n = rng.normal_vector(2);
        const Eigen::VectorXd out = forward_marginal(Eigen::VectorXd::Zero(2), 17, n, s);
        CHECK((out - std::sqrt(1.0 - s.alpha_bar(17)) * n).norm() == 0.0);
    }
    SUBCASE("deterministic in its arguments") {
        const Eigen::VectorXd n = rng.normal_vector(2);
        CHECK(forward_marginal(x0, 10, n, s) == forward_marginal(x0, 10, n, s));
    }
}

TEST_CASE("forward_marginal matches its moments over 1e4 draws") {
    const auto s = make_linear_schedule(100, 1e-3, 0.05);
    const int t = 60;
    const int n = 10000;
    Eigen::Vector2d x0(1.5, -0.5);
    Rng rng(7);
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Vector2d m2 = Eigen::Vector2d::Zero();
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd x = forward_marginal(x0, t, rng.normal_vector(2), s);
        mean += x;
        m2 += x.cwiseProduct(x);
    }
    mean /= n;
    const Eigen::Vector2d var = m2 / n - mean.cwiseProduct(mean);
    const double sigma2 = 1.0 - s.alpha_bar(t);
    const double mean_se = std::sqrt(sigma2 / n);
    const double var_se = sigma2 * std::sqrt(2.0 / n);
    const Eigen::Vector2d expect_mean = std::sqrt(s.alpha_bar(t)) * x0;
    for (int d = 0; d < 2; ++d) {
        CHECK(std::abs(mean[d] - expect_mean[d]) < 3 * mean_se);
        CHECK(std::abs(var[d] - sigma2) < 3 * var_se);
    }
}

TEST_CASE("chained forward_step matches forward_marginal in distribution") {
    const auto s = make_linear_schedule(40, 1e-3, 0.08);
    const int t = 40;
    const int n = 10000;
    Eigen::Vector2d x0(2.0, 1.0);
    Rng rng(11);
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Vector2d m2 = Eigen::Vector2d::Zero();
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd x = x0;
        for (int step = 1; step <= t; ++step) x = forward_step(x, step, rng.normal_vector(2), s);
        mean += x;
        m2 += x.cwiseProduct(x);
    }
    mean /= n;
    const Eigen::Vector2d var = m2 / n - mean.cwiseProduct(mean);
    const double sigma2 = 1.0 - s.alpha_bar(t);
    const Eigen::Vector2d expect_mean = std::sqrt(s.alpha_bar(t)) * x0;
    for (int d = 0; d < 2; ++d) {
        CHECK(std::abs(mean[d] - expect_mean[d]) < 3 * std::sqrt(sigma2 / n));
        CHECK(std::abs(var[d] - sigma2) < 3 * sigma2 * std::sqrt(2.0 / n));
    }
}
