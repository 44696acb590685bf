#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "autolora/denoiser.hpp"
#include "autolora/rng.hpp"
#include "autolora/schedule.hpp"

using namespace autolora;

namespace {
DenoiserParams small_params(std::uint64_t seed = 3) {
    return init_params(seed, 2, {16, 16}, 4, 8, 4);
}
}  // namespace

TEST_CASE("init_params is deterministic per seed") {
    const auto a = small_params(5);
    const auto b = small_params(5);
    for (std::size_t l = 0; l < a.weights.size(); ++l) CHECK(a.weights[l] == b.weights[l]);
    CHECK(a.cond_embeddings == b.cond_embeddings);

    const auto c = small_params(6);
    CHECK(a.weights[0] != c.weights[0]);
}

TEST_CASE("init_params rejects bad dimensions") {
    CHECK_THROWS_AS(init_params(1, 0, {8}, 4, 8, 4), std::invalid_argument);
    CHECK_THROWS_AS(init_params(1, 2, {0}, 4, 8, 4), std::invalid_argument);
    CHECK_THROWS_AS(init_params(1, 2, {8}, 4, 8, 0), std::invalid_argument);
}

TEST_CASE("fan-in scaling keeps first-layer pre-activations near unit variance") {
    const auto p = init_params(9, 2, {64}, 4, 8, 4);
    Rng rng(100);
    double m2 = 0.0;
    int count = 0;
    for (int i = 0; i < 200; ++i) {
        const Eigen::VectorXd in = rng.normal_vector(p.input_dim());
        const Eigen::VectorXd z = p.weights[0] * in + p.biases[0];
        m2 += z.squaredNorm();
        count += static_cast<int>(z.size());
    }
    const double std_dev = std::sqrt(m2 / count);
    CHECK(std_dev > 0.5);
    CHECK(std_dev < 2.0);
}

TEST_CASE("embed_time endpoints and injectivity") {
    const auto s = make_linear_schedule(200, 1e-4, 0.02);
    SUBCASE("first coordinate at t = T is sin(1)") {
        const Eigen::VectorXd e = embed_time(200, s, 8);
        CHECK(e[0] == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
    }
    SUBCASE("distinct steps give distinct embeddings (exhaustive, T = 200)") {
        std::set<std::vector<double>> seen;
        for (int t = 1; t <= 200; ++t) {
            const Eigen::VectorXd e = embed_time(t, s, 2);
            seen.insert({e[0], e[1]});
        }
        CHECK(seen.size() == 200);
    }
    SUBCASE("depends only on t/T, not on beta values") {
        const auto s2 = make_linear_schedule(200, 0.01, 0.4);
        for (int t : {1, 50, 200}) CHECK(embed_time(t, s, 8) == embed_time(t, s2, 8));
    }
    SUBCASE("out-of-range step") {
        CHECK_THROWS_AS(embed_time(0, s, 8), std::out_of_range);
        CHECK_THROWS_AS(embed_time(201, s, 8), std::out_of_range);
    }
}

TEST_CASE("predict_eps is a pure function with data_dim output") {
    const auto s = make_linear_schedule(50, 1e-3, 0.1);
    const auto p = small_params();
    Rng rng(1);
    const Eigen::VectorXd x = rng.normal_vector(2);
    const Eigen::VectorXd a = predict_eps(p, x, 10, Condition(1), s);
    const Eigen::VectorXd b = predict_eps(p, x, 10, Condition(1), s);
    CHECK(a == b);
    CHECK(a.size() == 2);
    CHECK_THROWS_AS(predict_eps(p, rng.normal_vector(3), 10, Condition(1), s),
                    std::invalid_argument);
}

TEST_CASE("all-zero weights yield the final bias vector") {
    const auto s = make_linear_schedule(50, 1e-3, 0.1);
    auto p = small_params();
    for (auto& w : p.weights) w.setZero();
    for (auto& b : p.biases) b.setZero();
    p.biases.back() = Eigen::Vector2d(0.3, -0.7);
    Rng rng(2);
    const Eigen::VectorXd out = predict_eps(p, rng.normal_vector(2), 5, Condition(0), s);
    CHECK(out == Eigen::VectorXd(p.biases.back()));
}

TEST_CASE("null and label conditions differ only by the embedding row") {
    const auto s = make_linear_schedule(50, 1e-3, 0.1);
    const auto p = small_params();
    auto swapped = p;
    swapped.cond_embeddings.row(0).swap(swapped.cond_embeddings.row(p.n_labels));

    Rng rng(4);
    const Eigen::VectorXd x = rng.normal_vector(2);
    CHECK(predict_eps(p, x, 20, Condition::null(), s) ==
          predict_eps(swapped, x, 20, Condition(0), s));
    CHECK(predict_eps(p, x, 20, Condition(0), s) ==
          predict_eps(swapped, x, 20, Condition::null(), s));
}

TEST_CASE("output is locally Lipschitz in x") {
    const auto s = make_linear_schedule(50, 1e-3, 0.1);
    const auto p = small_params();
    double lip = 1.0;
    for (const auto& w : p.weights) lip *= w.operatorNorm();
    Rng rng(8);
    const Eigen::VectorXd x = rng.normal_vector(2);
    const Eigen::VectorXd base = predict_eps(p, x, 10, Condition(2), s);
    for (int i = 0; i < 20; ++i) {
        const Eigen::VectorXd delta = 1e-3 * rng.normal_vector(2);
        const Eigen::VectorXd out = predict_eps(p, x + delta, 10, Condition(2), s);
        CHECK((out - base).norm() <= lip * delta.norm() * (1.0 + 1e-9));
    }
}

TEST_CASE("batched forward agrees with per-sample forward") {
    const auto s = make_linear_schedule(50, 1e-3, 0.1);
    const auto p = small_params();
    Rng rng(12);
    const Eigen::MatrixXd X = rng.normal_matrix(2, 7);
    const Eigen::MatrixXd batch = predict_eps_batch(p, X, 30, Condition(1), s);
    for (int k = 0; k < 7; ++k) {
        const Eigen::VectorXd single = predict_eps(p, X.col(k), 30, Condition(1), s);
        CHECK((batch.col(k) - single).norm() < 1e-12);
    }
}
