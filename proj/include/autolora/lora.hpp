#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "autolora/denoiser.hpp"
#include "autolora/rng.hpp"

namespace autolora {

// Low-rank adapter over a subset of the denoiser's dense layers. The adapted
// weight of layer l is W_l + lora_scale * alpha * A_l * B_l; alpha is stored
// with the adapter and lora_scale is the runtime knob.
struct LoraAdapter {
    struct Target {
        int layer = 0;
        Eigen::MatrixXd A;  // d x r
        Eigen::MatrixXd B;  // r x k
    };

    std::vector<Target> targets;
    int rank = 0;
    double alpha = 1.0;

    const Target* find_target(int layer) const {
        for (const auto& t : targets)
            if (t.layer == layer) return &t;
        return nullptr;
    }
};

// Signed alpha is accepted: merging with -s undoes a merge with s.
inline Eigen::MatrixXd apply_lora(const Eigen::MatrixXd& W, const Eigen::MatrixXd& A,
                                  const Eigen::MatrixXd& B, double alpha) {
    if (A.cols() != B.rows() || A.rows() != W.rows() || B.cols() != W.cols())
        throw std::invalid_argument("apply_lora: shape mismatch");
    return W + alpha * (A * B);
}

// A is random with scale 1/sqrt(r), B starts at zero, so a fresh adapter is a
// no-op on the network.
inline LoraAdapter init_adapter(std::uint64_t seed, const DenoiserParams& base, int r,
                                const std::vector<int>& target_layers) {
    if (r < 1) throw std::invalid_argument("init_adapter: rank must be >= 1");
    LoraAdapter adapter;
    adapter.rank = r;
    adapter.alpha = 1.0;
    Rng rng(seed);
    for (int layer : target_layers) {
        if (layer < 0 || layer >= base.n_layers())
            throw std::out_of_range("init_adapter: target layer does not exist");
        const auto& W = base.weights[layer];
        const int d = static_cast<int>(W.rows());
        const int k = static_cast<int>(W.cols());
        if (r > std::min(d, k))
            throw std::invalid_argument("init_adapter: rank exceeds min(d, k) for a target layer");
        LoraAdapter::Target t;
        t.layer = layer;
        t.A.resize(d, r);
        const double scale = 1.0 / std::sqrt(static_cast<double>(r));
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < r; ++j) t.A(i, j) = scale * rng.normal();
        t.B = Eigen::MatrixXd::Zero(r, k);
        adapter.targets.push_back(std::move(t));
    }
    return adapter;
}

inline std::vector<int> all_layer_indices(const DenoiserParams& base) {
    std::vector<int> v(base.weights.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<int>(i);
    return v;
}

// Layers whose shape admits a rank-r adapter (min(d, k) >= r). The output
// head of a low-dimensional model is skipped automatically.
inline std::vector<int> lora_target_layers(const DenoiserParams& base, int r) {
    std::vector<int> v;
    for (int l = 0; l < base.n_layers(); ++l) {
        const auto& W = base.weights[l];
        if (std::min(W.rows(), W.cols()) >= r) v.push_back(l);
    }
    if (v.empty()) throw std::invalid_argument("lora_target_layers: no layer admits this rank");
    return v;
}

// Materialize the adapted parameter set. The base is left untouched.
inline DenoiserParams merge_adapter(const DenoiserParams& base, const LoraAdapter& adapter,
                                    double lora_scale) {
    DenoiserParams merged = base;
    const double eff = lora_scale * adapter.alpha;
    if (eff == 0.0) return merged;
    for (const auto& t : adapter.targets)
        merged.weights[t.layer] = apply_lora(base.weights[t.layer], t.A, t.B, eff);
    return merged;
}

inline Eigen::MatrixXd predict_eps_lora_batch(const DenoiserParams& base, const LoraAdapter& adapter,
                                              double lora_scale, const Eigen::MatrixXd& X, int t,
                                              const Condition& c, const NoiseSchedule& sched) {
    const double eff = lora_scale * adapter.alpha;
    if (eff == 0.0) return predict_eps_batch(base, X, t, c, sched);

    std::vector<Eigen::MatrixXd> adapted;
    adapted.reserve(adapter.targets.size());
    std::vector<const Eigen::MatrixXd*> w = weight_ptrs(base);
    for (const auto& tgt : adapter.targets) {
        adapted.push_back(apply_lora(base.weights[tgt.layer], tgt.A, tgt.B, eff));
        w[tgt.layer] = &adapted.back();
    }

    Eigen::MatrixXd in(base.input_dim(), X.cols());
    if (X.rows() != base.data_dim)
        throw std::invalid_argument("predict_eps_lora: data dimension mismatch");
    in.topRows(base.data_dim) = X;
    in.middleRows(base.data_dim, base.time_embed_dim).colwise() =
        embed_time(t, sched, base.time_embed_dim);
    in.bottomRows(base.cond_embed_dim).colwise() =
        Eigen::VectorXd(base.cond_embeddings.row(base.embedding_row(c)).transpose());
    return mlp_forward(w, base.biases, in);
}

inline Eigen::VectorXd predict_eps_lora(const DenoiserParams& base, const LoraAdapter& adapter,
                                        double lora_scale, const Eigen::VectorXd& x, int t,
                                        const Condition& c, const NoiseSchedule& sched) {
    return predict_eps_lora_batch(base, adapter, lora_scale, x, t, c, sched).col(0);
}

}  // namespace autolora
