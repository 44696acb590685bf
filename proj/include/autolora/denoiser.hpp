#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "autolora/rng.hpp"
#include "autolora/schedule.hpp"

namespace autolora {

// Conditioning input: either a discrete label in 0..K-1 or the null token
// used for unconditional prediction.
struct Condition {
    static constexpr int kNullLabel = -1;

    int label = kNullLabel;

    Condition() = default;
    explicit Condition(int y) : label(y) {
        if (y < 0) throw std::invalid_argument("Condition: label must be >= 0");
    }

    static Condition null() { return Condition{}; }
    bool is_null() const { return label == kNullLabel; }

    bool operator==(const Condition&) const = default;
};

// Weights of the small conditional eps-prediction MLP. The embedding table
// has one row per label plus a trailing row for the null condition; the null
// row is trained like any other.
struct DenoiserParams {
    int data_dim = 0;
    int time_embed_dim = 0;
    int cond_embed_dim = 0;
    int n_labels = 0;  // K

    std::vector<Eigen::MatrixXd> weights;  // each (out x in)
    std::vector<Eigen::VectorXd> biases;
    Eigen::MatrixXd cond_embeddings;  // (K+1) x cond_embed_dim, last row = null

    int input_dim() const { return data_dim + time_embed_dim + cond_embed_dim; }
    int n_layers() const { return static_cast<int>(weights.size()); }

    int embedding_row(const Condition& c) const {
        if (c.is_null()) return n_labels;
        if (c.label >= n_labels) throw std::out_of_range("Condition label out of range");
        return c.label;
    }
};

inline DenoiserParams init_params(std::uint64_t seed, int data_dim,
                                  const std::vector<int>& hidden_widths, int K,
                                  int time_embed_dim, int cond_embed_dim) {
    if (data_dim < 1 || K < 1 || time_embed_dim < 1 || cond_embed_dim < 1)
        throw std::invalid_argument("init_params: all dimensions must be >= 1");
    for (int h : hidden_widths)
        if (h < 1) throw std::invalid_argument("init_params: hidden widths must be >= 1");

    DenoiserParams p;
    p.data_dim = data_dim;
    p.time_embed_dim = time_embed_dim;
    p.cond_embed_dim = cond_embed_dim;
    p.n_labels = K;

    Rng rng(seed);
    std::vector<int> dims;
    dims.push_back(p.input_dim());
    for (int h : hidden_widths) dims.push_back(h);
    dims.push_back(data_dim);

    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int in = dims[l];
        const int out = dims[l + 1];
        const double scale = 1.0 / std::sqrt(static_cast<double>(in));
        Eigen::MatrixXd w(out, in);
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c) w(r, c) = scale * rng.normal();
        p.weights.push_back(std::move(w));
        p.biases.push_back(Eigen::VectorXd::Zero(out));
    }

    p.cond_embeddings.resize(K + 1, cond_embed_dim);
    for (int r = 0; r <= K; ++r)
        for (int c = 0; c < cond_embed_dim; ++c) p.cond_embeddings(r, c) = 0.1 * rng.normal();
    return p;
}

// Sinusoidal embedding of normalized time u = t/T: interleaved sin/cos at
// geometrically spaced frequencies starting at 1. Injective over {1..T} for
// dim >= 2 because u lies in (0, 1] where sin is strictly increasing.
inline Eigen::VectorXd embed_time(int t, const NoiseSchedule& sched, int time_embed_dim) {
    sched.check_step(t);
    if (time_embed_dim < 1) throw std::invalid_argument("embed_time: dim must be >= 1");
    const double u = static_cast<double>(t) / static_cast<double>(sched.T);
    Eigen::VectorXd e(time_embed_dim);
    const int half = (time_embed_dim + 1) / 2;
    constexpr double kMaxFreq = 100.0;
    for (int i = 0; i < half; ++i) {
        const double freq = (half == 1) ? 1.0 : std::pow(kMaxFreq, static_cast<double>(i) / (half - 1));
        e[2 * i] = std::sin(u * freq);
        if (2 * i + 1 < time_embed_dim) e[2 * i + 1] = std::cos(u * freq);
    }
    return e;
}

// Batched MLP forward pass over column vectors, tanh hidden layers and a
// linear output head. Weight matrices are passed by pointer so callers can
// substitute LoRA-adapted layers without copying the base parameters.
inline Eigen::MatrixXd mlp_forward(const std::vector<const Eigen::MatrixXd*>& weights,
                                   const std::vector<Eigen::VectorXd>& biases,
                                   const Eigen::MatrixXd& input) {
    Eigen::MatrixXd a = input;
    const std::size_t L = weights.size();
    for (std::size_t l = 0; l < L; ++l) {
        Eigen::MatrixXd z = (*weights[l]) * a;
        z.colwise() += biases[l];
        if (l + 1 < L)
            a = z.array().tanh().matrix();
        else
            a = std::move(z);
    }
    return a;
}

// Assemble the network input column [x ; embed_time(t) ; cond_embeddings[c]].
inline Eigen::VectorXd assemble_input(const DenoiserParams& p, const Eigen::VectorXd& x, int t,
                                      const Condition& c, const NoiseSchedule& sched) {
    if (x.size() != p.data_dim) throw std::invalid_argument("predict_eps: data dimension mismatch");
    Eigen::VectorXd in(p.input_dim());
    in.head(p.data_dim) = x;
    in.segment(p.data_dim, p.time_embed_dim) = embed_time(t, sched, p.time_embed_dim);
    in.tail(p.cond_embed_dim) = p.cond_embeddings.row(p.embedding_row(c)).transpose();
    return in;
}

inline std::vector<const Eigen::MatrixXd*> weight_ptrs(const DenoiserParams& p) {
    std::vector<const Eigen::MatrixXd*> w;
    w.reserve(p.weights.size());
    for (const auto& m : p.weights) w.push_back(&m);
    return w;
}

inline Eigen::VectorXd predict_eps(const DenoiserParams& p, const Eigen::VectorXd& x, int t,
                                   const Condition& c, const NoiseSchedule& sched) {
    const Eigen::VectorXd in = assemble_input(p, x, t, c, sched);
    return mlp_forward(weight_ptrs(p), p.biases, in).col(0);
}

// Batched variant: X holds one sample per column, all sharing (t, c).
inline Eigen::MatrixXd predict_eps_batch(const DenoiserParams& p, const Eigen::MatrixXd& X, int t,
                                         const Condition& c, const NoiseSchedule& sched) {
    if (X.rows() != p.data_dim) throw std::invalid_argument("predict_eps_batch: data dimension mismatch");
    Eigen::MatrixXd in(p.input_dim(), X.cols());
    in.topRows(p.data_dim) = X;
    in.middleRows(p.data_dim, p.time_embed_dim).colwise() = embed_time(t, sched, p.time_embed_dim);
    in.bottomRows(p.cond_embed_dim).colwise() =
        Eigen::VectorXd(p.cond_embeddings.row(p.embedding_row(c)).transpose());
    return mlp_forward(weight_ptrs(p), p.biases, in);
}

}  // namespace autolora
