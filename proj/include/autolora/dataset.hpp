#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "autolora/rng.hpp"

namespace autolora {

// Isotropic Gaussian mixture component; sigma is the per-coordinate std.
struct GaussianComponent {
    Eigen::VectorXd mean;
    double sigma = 1.0;
    int label = 0;
    double weight = 1.0;
};

struct GeneratorSpec {
    int data_dim = 2;
    std::vector<GaussianComponent> components;
};

struct Dataset {
    Eigen::MatrixXd points;  // data_dim x N, one point per column
    std::vector<int> labels;
    std::vector<int> component_ids;  // index into spec.components per point
    GeneratorSpec spec;
    int n_labels = 0;  // K

    Eigen::Index size() const { return points.cols(); }
};

// K labels x modes_per_label isotropic components on a ring of radius 4.
// Component c sits at angle 2*pi*c/C and carries label c % K, so components
// 0..K-1 (one per label) occupy a narrow arc -- the default LoRA targets.
inline Dataset make_toy_dataset(std::uint64_t seed, int K, int modes_per_label, int n_per_mode,
                                double spread) {
    if (K < 1 || modes_per_label < 1 || n_per_mode < 1)
        throw std::invalid_argument("make_toy_dataset: counts must be >= 1");
    if (spread < 0.0) throw std::invalid_argument("make_toy_dataset: spread must be nonnegative");

    constexpr double kRadius = 4.0;
    constexpr double two_pi = 6.283185307179586476925286766559;
    const int C = K * modes_per_label;

    Dataset d;
    d.n_labels = K;
    d.spec.data_dim = 2;
    for (int c = 0; c < C; ++c) {
        GaussianComponent g;
        const double angle = two_pi * c / C;
        g.mean = Eigen::Vector2d(kRadius * std::cos(angle), kRadius * std::sin(angle));
        g.sigma = spread;
        g.label = c % K;
        g.weight = 1.0 / C;
        d.spec.components.push_back(std::move(g));
    }

    const Eigen::Index N = static_cast<Eigen::Index>(C) * n_per_mode;
    d.points.resize(2, N);
    d.labels.resize(N);
    d.component_ids.resize(N);
    Rng rng(seed);
    Eigen::Index i = 0;
    for (int c = 0; c < C; ++c) {
        const auto& g = d.spec.components[c];
        for (int j = 0; j < n_per_mode; ++j, ++i) {
            d.points.col(i) = g.mean + g.sigma * rng.normal_vector(2);
            d.labels[i] = g.label;
            d.component_ids[i] = c;
        }
    }
    return d;
}

// Small fine-tuning corpus drawn only from the requested components, sampled
// without replacement from the parent dataset.
inline Dataset make_lora_subset(const Dataset& data, const std::vector<int>& target_components,
                                int n_examples, std::uint64_t seed) {
    if (n_examples < 1) throw std::invalid_argument("make_lora_subset: n_examples must be >= 1");
    std::vector<bool> is_target(data.spec.components.size(), false);
    for (int c : target_components) {
        if (c < 0 || c >= static_cast<int>(data.spec.components.size()))
            throw std::out_of_range("make_lora_subset: requested component absent");
        is_target[c] = true;
    }

    std::vector<Eigen::Index> pool;
    for (Eigen::Index i = 0; i < data.size(); ++i)
        if (is_target[data.component_ids[i]]) pool.push_back(i);
    if (static_cast<int>(pool.size()) < n_examples)
        throw std::invalid_argument("make_lora_subset: not enough points in target components");

    Rng rng(seed);
    rng.shuffle(pool);
    pool.resize(n_examples);

    Dataset sub;
    sub.n_labels = data.n_labels;
    sub.spec.data_dim = data.spec.data_dim;
    double total_weight = 0.0;
    std::vector<int> remap(data.spec.components.size(), -1);
    for (std::size_t c = 0; c < data.spec.components.size(); ++c)
        if (is_target[c]) {
            remap[c] = static_cast<int>(sub.spec.components.size());
            sub.spec.components.push_back(data.spec.components[c]);
            total_weight += data.spec.components[c].weight;
        }
    for (auto& g : sub.spec.components) g.weight /= total_weight;

    sub.points.resize(data.points.rows(), n_examples);
    sub.labels.resize(n_examples);
    sub.component_ids.resize(n_examples);
    for (int j = 0; j < n_examples; ++j) {
        sub.points.col(j) = data.points.col(pool[j]);
        sub.labels[j] = data.labels[pool[j]];
        sub.component_ids[j] = remap[data.component_ids[pool[j]]];
    }
    return sub;
}

}  // namespace autolora
