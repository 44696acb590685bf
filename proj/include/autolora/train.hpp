#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "autolora/dataset.hpp"
#include "autolora/denoiser.hpp"
#include "autolora/lora.hpp"
#include "autolora/rng.hpp"
#include "autolora/schedule.hpp"

namespace autolora {

enum class TrainMode { Base, LoraFinetune };

struct TrainConfig {
    int steps = 5000;
    int batch_size = 128;
    double learning_rate = 1e-3;
    double p_uncond = 0.1;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::Base;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const {
        if (steps < 0) throw std::invalid_argument("TrainConfig: steps must be >= 0");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (learning_rate <= 0) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
        if (p_uncond < 0.0 || p_uncond > 1.0)
            throw std::invalid_argument("TrainConfig: p_uncond must be in [0, 1]");
    }
};

struct TrainResult {
    std::vector<double> losses;  // one entry per optimizer step
};

class DivergenceError : public std::runtime_error {
  public:
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

// Per-example randomness for one loss evaluation, drawn up front so the loss
// itself is a deterministic function of (parameters, batch, draws).
struct BatchDraws {
    std::vector<int> t;
    Eigen::MatrixXd eps;  // data_dim x B
    std::vector<std::uint8_t> drop;
};

inline BatchDraws draw_batch(Rng& rng, int batch, int data_dim, int T, double p_uncond) {
    BatchDraws d;
    d.t.resize(batch);
    d.eps.resize(data_dim, batch);
    d.drop.resize(batch);
    for (int i = 0; i < batch; ++i) {
        d.t[i] = static_cast<int>(rng.uniform_int(1, T));
        d.eps.col(i) = rng.normal_vector(data_dim);
        d.drop[i] = rng.uniform() < p_uncond ? 1 : 0;
    }
    return d;
}

// parameter packing ----------------------------------------------------------

inline Eigen::VectorXd pack_params(const DenoiserParams& p) {
    Eigen::Index n = 0;
    for (const auto& w : p.weights) n += w.size();
    for (const auto& b : p.biases) n += b.size();
    n += p.cond_embeddings.size();
    Eigen::VectorXd v(n);
    Eigen::Index off = 0;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        const auto& w = p.weights[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) v[off++] = w(r, c);
        const auto& b = p.biases[l];
        for (Eigen::Index i = 0; i < b.size(); ++i) v[off++] = b[i];
    }
    const auto& e = p.cond_embeddings;
    for (Eigen::Index r = 0; r < e.rows(); ++r)
        for (Eigen::Index c = 0; c < e.cols(); ++c) v[off++] = e(r, c);
    return v;
}

inline void unpack_params(const Eigen::VectorXd& v, DenoiserParams& p) {
    Eigen::Index off = 0;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        auto& w = p.weights[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = v[off++];
        auto& b = p.biases[l];
        for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = v[off++];
    }
    auto& e = p.cond_embeddings;
    for (Eigen::Index r = 0; r < e.rows(); ++r)
        for (Eigen::Index c = 0; c < e.cols(); ++c) e(r, c) = v[off++];
    if (off != v.size()) throw std::invalid_argument("unpack_params: size mismatch");
}

inline Eigen::VectorXd pack_adapter(const LoraAdapter& a) {
    Eigen::Index n = 0;
    for (const auto& t : a.targets) n += t.A.size() + t.B.size();
    Eigen::VectorXd v(n);
    Eigen::Index off = 0;
    for (const auto& t : a.targets) {
        for (Eigen::Index r = 0; r < t.A.rows(); ++r)
            for (Eigen::Index c = 0; c < t.A.cols(); ++c) v[off++] = t.A(r, c);
        for (Eigen::Index r = 0; r < t.B.rows(); ++r)
            for (Eigen::Index c = 0; c < t.B.cols(); ++c) v[off++] = t.B(r, c);
    }
    return v;
}

inline void unpack_adapter(const Eigen::VectorXd& v, LoraAdapter& a) {
    Eigen::Index off = 0;
    for (auto& t : a.targets) {
        for (Eigen::Index r = 0; r < t.A.rows(); ++r)
            for (Eigen::Index c = 0; c < t.A.cols(); ++c) t.A(r, c) = v[off++];
        for (Eigen::Index r = 0; r < t.B.rows(); ++r)
            for (Eigen::Index c = 0; c < t.B.cols(); ++c) t.B(r, c) = v[off++];
    }
    if (off != v.size()) throw std::invalid_argument("unpack_adapter: size mismatch");
}

// loss and gradients ---------------------------------------------------------

namespace detail {

struct LossContext {
    double loss = 0.0;
    // Layer gradients with respect to the effective weights actually used in
    // the forward pass (base weights in Base mode, adapted ones in LoRA mode).
    std::vector<Eigen::MatrixXd> d_weights;
    std::vector<Eigen::VectorXd> d_biases;
    Eigen::MatrixXd d_embeddings;
};

// Shared forward/backward over one batch. `weights` are the effective layer
// matrices; gradients come back with respect to exactly those matrices.
inline LossContext ddpm_loss_core(const DenoiserParams& shapes,
                                  const std::vector<const Eigen::MatrixXd*>& weights,
                                  const Eigen::MatrixXd& x0, const std::vector<int>& labels,
                                  const NoiseSchedule& sched, const BatchDraws& draws,
                                  bool want_grads) {
    const int B = static_cast<int>(x0.cols());
    if (B == 0) throw std::invalid_argument("ddpm_loss: empty batch");
    if (static_cast<int>(labels.size()) != B || static_cast<int>(draws.t.size()) != B)
        throw std::invalid_argument("ddpm_loss: batch size mismatch");

    // Assemble inputs: x_t from the forward marginal, sinusoidal time
    // embedding, and the (possibly dropped) condition embedding row.
    Eigen::MatrixXd in(shapes.input_dim(), B);
    std::vector<int> emb_rows(B);
    for (int i = 0; i < B; ++i) {
        const double ab = sched.alpha_bar(draws.t[i]);
        in.col(i).head(shapes.data_dim) =
            std::sqrt(ab) * x0.col(i) + std::sqrt(1.0 - ab) * draws.eps.col(i);
        in.col(i).segment(shapes.data_dim, shapes.time_embed_dim) =
            embed_time(draws.t[i], sched, shapes.time_embed_dim);
        const Condition c = draws.drop[i] ? Condition::null() : Condition(labels[i]);
        emb_rows[i] = shapes.embedding_row(c);
        in.col(i).tail(shapes.cond_embed_dim) =
            shapes.cond_embeddings.row(emb_rows[i]).transpose();
    }

    const std::size_t L = weights.size();
    std::vector<Eigen::MatrixXd> acts;  // acts[0] = input, acts[l+1] = layer l output
    acts.reserve(L + 1);
    acts.push_back(std::move(in));
    for (std::size_t l = 0; l < L; ++l) {
        Eigen::MatrixXd z = (*weights[l]) * acts[l];
        z.colwise() += shapes.biases[l];
        if (l + 1 < L)
            acts.push_back(z.array().tanh().matrix());
        else
            acts.push_back(std::move(z));
    }

    const Eigen::MatrixXd resid = acts[L] - draws.eps;
    LossContext ctx;
    ctx.loss = resid.squaredNorm() / B;
    if (!want_grads) return ctx;

    ctx.d_weights.resize(L);
    ctx.d_biases.resize(L);
    Eigen::MatrixXd dz = (2.0 / B) * resid;
    for (std::size_t l = L; l-- > 0;) {
        ctx.d_weights[l] = dz * acts[l].transpose();
        ctx.d_biases[l] = dz.rowwise().sum();
        Eigen::MatrixXd da = weights[l]->transpose() * dz;
        if (l > 0) {
            dz = (da.array() * (1.0 - acts[l].array().square())).matrix();
        } else {
            ctx.d_embeddings = Eigen::MatrixXd::Zero(shapes.cond_embeddings.rows(),
                                                     shapes.cond_embeddings.cols());
            for (int i = 0; i < B; ++i)
                ctx.d_embeddings.row(emb_rows[i]) +=
                    da.col(i).tail(shapes.cond_embed_dim).transpose();
        }
    }
    return ctx;
}

}  // namespace detail

struct LossGrad {
    double loss = 0.0;
    Eigen::VectorXd grad;  // packed to match pack_params / pack_adapter
};

inline LossGrad ddpm_loss_base(const DenoiserParams& p, const Eigen::MatrixXd& x0,
                               const std::vector<int>& labels, const NoiseSchedule& sched,
                               const BatchDraws& draws, bool want_grads = true) {
    auto ctx = detail::ddpm_loss_core(p, weight_ptrs(p), x0, labels, sched, draws, want_grads);
    LossGrad out;
    out.loss = ctx.loss;
    if (!want_grads) return out;

    DenoiserParams g = p;  // shape carrier for packing
    g.weights = std::move(ctx.d_weights);
    g.biases = std::move(ctx.d_biases);
    g.cond_embeddings = std::move(ctx.d_embeddings);
    out.grad = pack_params(g);
    return out;
}

inline LossGrad ddpm_loss_lora(const DenoiserParams& base, const LoraAdapter& adapter,
                               double lora_scale, const Eigen::MatrixXd& x0,
                               const std::vector<int>& labels, const NoiseSchedule& sched,
                               const BatchDraws& draws, bool want_grads = true) {
    const double eff = lora_scale * adapter.alpha;
    std::vector<Eigen::MatrixXd> adapted;
    adapted.reserve(adapter.targets.size());
    std::vector<const Eigen::MatrixXd*> w = weight_ptrs(base);
    for (const auto& t : adapter.targets) {
        adapted.push_back(apply_lora(base.weights[t.layer], t.A, t.B, eff));
        w[t.layer] = &adapted.back();
    }

    auto ctx = detail::ddpm_loss_core(base, w, x0, labels, sched, draws, want_grads);
    LossGrad out;
    out.loss = ctx.loss;
    if (!want_grads) return out;

    // Chain rule through W_eff = W + eff * A * B; base weights stay frozen.
    LoraAdapter g = adapter;
    for (std::size_t i = 0; i < adapter.targets.size(); ++i) {
        const auto& t = adapter.targets[i];
        const Eigen::MatrixXd& dW = ctx.d_weights[t.layer];
        g.targets[i].A = eff * (dW * t.B.transpose());
        g.targets[i].B = eff * (t.A.transpose() * dW);
    }
    out.grad = pack_adapter(g);
    return out;
}

// optimizer and training loop ------------------------------------------------

class Adam {
  public:
    Adam(double lr, double beta1, double beta2, double eps)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
        if (m_.size() == 0) {
            m_ = Eigen::VectorXd::Zero(theta.size());
            v_ = Eigen::VectorXd::Zero(theta.size());
        }
        ++t_;
        m_ = b1_ * m_ + (1.0 - b1_) * grad;
        v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseProduct(grad);
        const double bc1 = 1.0 - std::pow(b1_, t_);
        const double bc2 = 1.0 - std::pow(b2_, t_);
        theta -= (lr_ / bc1) * m_.cwiseQuotient(((v_ / bc2).cwiseSqrt().array() + eps_).matrix());
    }

  private:
    double lr_, b1_, b2_, eps_;
    Eigen::VectorXd m_, v_;
    int t_ = 0;
};

namespace detail {

// Deterministic minibatch scheduler: epoch-shuffled indices, consumed in
// order, reshuffled when fewer than a full batch remains.
class BatchScheduler {
  public:
    BatchScheduler(Eigen::Index n, int batch, Rng& rng) : batch_(std::min<Eigen::Index>(batch, n)), rng_(rng) {
        order_.resize(n);
        std::iota(order_.begin(), order_.end(), Eigen::Index{0});
        pos_ = n;  // force initial shuffle
    }

    std::vector<Eigen::Index> next() {
        if (pos_ + batch_ > static_cast<Eigen::Index>(order_.size())) {
            rng_.shuffle(order_);
            pos_ = 0;
        }
        std::vector<Eigen::Index> idx(order_.begin() + pos_, order_.begin() + pos_ + batch_);
        pos_ += batch_;
        return idx;
    }

    Eigen::Index batch() const { return batch_; }

  private:
    Eigen::Index batch_;
    Rng& rng_;
    std::vector<Eigen::Index> order_;
    Eigen::Index pos_ = 0;
};

template <class LossFn, class GetTheta, class SetTheta>
TrainResult train_loop(const Dataset& data, const TrainConfig& cfg, const NoiseSchedule& sched,
                       int data_dim, LossFn&& loss_fn, GetTheta&& get_theta, SetTheta&& set_theta) {
    cfg.validate();
    TrainResult result;
    if (cfg.steps == 0) return result;

    Rng rng(cfg.seed);
    BatchScheduler sched_batches(data.size(), cfg.batch_size, rng);
    Adam opt(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    Eigen::VectorXd theta = get_theta();

    double initial_loss = 0.0;
    int bad_streak = 0;
    for (int step = 0; step < cfg.steps; ++step) {
        const auto idx = sched_batches.next();
        const int B = static_cast<int>(idx.size());
        Eigen::MatrixXd x0(data_dim, B);
        std::vector<int> labels(B);
        for (int i = 0; i < B; ++i) {
            x0.col(i) = data.points.col(idx[i]);
            labels[i] = data.labels[idx[i]];
        }
        const BatchDraws draws = draw_batch(rng, B, data_dim, sched.T, cfg.p_uncond);
        const LossGrad lg = loss_fn(x0, labels, draws);
        result.losses.push_back(lg.loss);

        if (step == 0) initial_loss = lg.loss;
        if (lg.loss > 10.0 * initial_loss) {
            if (++bad_streak >= 100)
                throw DivergenceError("training diverged: loss " + std::to_string(lg.loss) +
                                      " exceeded 10x initial loss " + std::to_string(initial_loss) +
                                      " for 100 consecutive steps (step " + std::to_string(step) + ")");
        } else {
            bad_streak = 0;
        }

        opt.step(theta, lg.grad);
        set_theta(theta);
    }
    return result;
}

}  // namespace detail

// Trains all denoiser parameters in place.
inline TrainResult train_base(DenoiserParams& params, const Dataset& data, const TrainConfig& cfg,
                              const NoiseSchedule& sched) {
    return detail::train_loop(
        data, cfg, sched, params.data_dim,
        [&](const Eigen::MatrixXd& x0, const std::vector<int>& labels, const BatchDraws& d) {
            return ddpm_loss_base(params, x0, labels, sched, d);
        },
        [&] { return pack_params(params); },
        [&](const Eigen::VectorXd& v) { unpack_params(v, params); });
}

// Fine-tunes only the adapter factors; the base parameters are never touched.
inline TrainResult train_lora(const DenoiserParams& base, LoraAdapter& adapter, double lora_scale,
                              const Dataset& data, const TrainConfig& cfg,
                              const NoiseSchedule& sched) {
    return detail::train_loop(
        data, cfg, sched, base.data_dim,
        [&](const Eigen::MatrixXd& x0, const std::vector<int>& labels, const BatchDraws& d) {
            return ddpm_loss_lora(base, adapter, lora_scale, x0, labels, sched, d);
        },
        [&] { return pack_adapter(adapter); },
        [&](const Eigen::VectorXd& v) { unpack_adapter(v, adapter); });
}

}  // namespace autolora
