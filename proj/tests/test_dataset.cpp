#include <doctest.h>

#include <cmath>
#include <set>

#include "autolora/dataset.hpp"

using namespace autolora;

TEST_CASE("toy dataset layout and label assignment") {
    const auto d = make_toy_dataset(1, 4, 4, 10, 0.25);
    CHECK(d.size() == 160);
    CHECK(d.n_labels == 4);
    CHECK(d.spec.components.size() == 16);
    CHECK(d.points.rows() == 2);

    for (std::size_t c = 0; c < d.spec.components.size(); ++c) {
        const auto& g = d.spec.components[c];
        CHECK(g.label == static_cast<int>(c) % 4);
        CHECK(g.mean.norm() == doctest::Approx(4.0).epsilon(1e-12));
        CHECK(g.weight == doctest::Approx(1.0 / 16.0).epsilon(1e-15));
    }
    // Component 0 sits at angle 0.
    CHECK(d.spec.components[0].mean[0] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(d.spec.components[0].mean[1] == doctest::Approx(0.0).epsilon(1e-12));

    for (Eigen::Index i = 0; i < d.size(); ++i) {
        CHECK(d.labels[i] == d.spec.components[d.component_ids[i]].label);
    }
}

TEST_CASE("toy dataset determinism and argument checks") {
    const auto a = make_toy_dataset(7, 3, 2, 5, 0.5);
    const auto b = make_toy_dataset(7, 3, 2, 5, 0.5);
    CHECK(a.points == b.points);
    CHECK(a.labels == b.labels);
    const auto c = make_toy_dataset(8, 3, 2, 5, 0.5);
    CHECK(a.points != c.points);

    CHECK_THROWS_AS(make_toy_dataset(1, 0, 2, 5, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(make_toy_dataset(1, 3, 0, 5, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(make_toy_dataset(1, 3, 2, 0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(make_toy_dataset(1, 3, 2, 5, -0.1), std::invalid_argument);
}

TEST_CASE("points stay within a few sigma of their component mean") {
    const auto d = make_toy_dataset(11, 4, 4, 200, 0.25);
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        const auto& g = d.spec.components[d.component_ids[i]];
        CHECK((d.points.col(i) - g.mean).norm() < 6.0 * g.sigma);
    }
}

TEST_CASE("zero spread collapses every point onto its mean") {
    const auto d = make_toy_dataset(3, 2, 2, 4, 0.0);
    for (Eigen::Index i = 0; i < d.size(); ++i)
        CHECK(d.points.col(i) == d.spec.components[d.component_ids[i]].mean);
}

TEST_CASE("lora subset draws only from the targets, without replacement") {
    const auto d = make_toy_dataset(21, 4, 4, 50, 0.25);
    const auto sub = make_lora_subset(d, {0, 1, 2, 3}, 32, 99);
    CHECK(sub.size() == 32);
    CHECK(sub.n_labels == 4);
    CHECK(sub.spec.components.size() == 4);

    double total = 0.0;
    for (const auto& g : sub.spec.components) total += g.weight;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    // Each subset point must be an exact column of a targeted parent component.
    std::set<std::pair<double, double>> seen;
    for (int j = 0; j < 32; ++j) {
        CHECK(sub.component_ids[j] >= 0);
        CHECK(sub.component_ids[j] < 4);
        const auto& g = sub.spec.components[sub.component_ids[j]];
        CHECK(sub.labels[j] == g.label);
        bool found = false;
        for (Eigen::Index i = 0; i < d.size() && !found; ++i)
            found = d.component_ids[i] < 4 && d.points.col(i) == sub.points.col(j);
        CHECK(found);
        seen.insert({sub.points(0, j), sub.points(1, j)});
    }
    CHECK(seen.size() == 32);  // no duplicates
}

TEST_CASE("lora subset determinism and failure modes") {
    const auto d = make_toy_dataset(21, 4, 4, 50, 0.25);
    const auto a = make_lora_subset(d, {0}, 16, 5);
    const auto b = make_lora_subset(d, {0}, 16, 5);
    CHECK(a.points == b.points);
    const auto c = make_lora_subset(d, {0}, 16, 6);
    CHECK(a.points != c.points);

    CHECK_THROWS_AS(make_lora_subset(d, {0}, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_lora_subset(d, {16}, 4, 1), std::out_of_range);
    CHECK_THROWS_AS(make_lora_subset(d, {0}, 51, 1), std::invalid_argument);
}

TEST_CASE("single-component subset renormalizes weight to one") {
    const auto d = make_toy_dataset(31, 4, 4, 20, 0.25);
    const auto sub = make_lora_subset(d, {5}, 8, 2);
    REQUIRE(sub.spec.components.size() == 1);
    CHECK(sub.spec.components[0].weight == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(sub.spec.components[0].label == 5 % 4);
    for (int j = 0; j < 8; ++j) CHECK(sub.labels[j] == 1);
}
