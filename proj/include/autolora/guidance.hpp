#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "autolora/denoiser.hpp"
#include "autolora/lora.hpp"
#include "autolora/rng.hpp"
#include "autolora/schedule.hpp"

namespace autolora {

enum class GuidanceMode { Vanilla, Cfg, AutoGuidance, AutoLoraPlain, AutoLoraCfg };

inline std::string to_string(GuidanceMode m) {
    switch (m) {
        case GuidanceMode::Vanilla: return "VANILLA";
        case GuidanceMode::Cfg: return "CFG";
        case GuidanceMode::AutoGuidance: return "AUTOGUIDANCE";
        case GuidanceMode::AutoLoraPlain: return "AUTOLORA_PLAIN";
        case GuidanceMode::AutoLoraCfg: return "AUTOLORA_CFG";
    }
    throw std::logic_error("unknown guidance mode");
}

inline GuidanceMode guidance_mode_from_string(const std::string& s) {
    if (s == "VANILLA") return GuidanceMode::Vanilla;
    if (s == "CFG") return GuidanceMode::Cfg;
    if (s == "AUTOGUIDANCE") return GuidanceMode::AutoGuidance;
    if (s == "AUTOLORA_PLAIN") return GuidanceMode::AutoLoraPlain;
    if (s == "AUTOLORA_CFG") return GuidanceMode::AutoLoraCfg;
    throw std::invalid_argument("unknown guidance mode: " + s);
}

struct GuidanceConfig {
    GuidanceMode mode = GuidanceMode::Cfg;
    double w = 5.0;      // CFG scale
    double w1 = 5.0;     // base-model CFG scale (dual-CFG combiner)
    double w2 = 5.0;     // LoRA-model CFG scale (dual-CFG combiner)
    double gamma = 1.5;  // base-to-LoRA extrapolation scale
    double lora_scale = 1.0;
    int steps = 200;

    void validate() const {
        if (w < 0 || w1 < 0 || w2 < 0 || gamma < 0 || lora_scale < 0)
            throw std::invalid_argument("GuidanceConfig: scales must be nonnegative");
        if (steps < 1) throw std::invalid_argument("GuidanceConfig: steps must be >= 1");
    }
};

// epsilon-combiners ---------------------------------------------------------
//
// Predictors are callables (x, t, Condition) -> prediction, where the x and
// prediction types may be single columns or batches. The w = 0 and w = 1
// (resp. gamma = 0 / gamma = 1) cases return the relevant branch unchanged,
// so the algebraic reductions hold bit-exactly; the predictors are still
// evaluated the contracted number of times.

template <class Eps, class X>
auto cfg_eps(Eps&& model, const X& x, int t, const Condition& y, double w) {
    if (y.is_null()) throw std::invalid_argument("cfg_eps: condition must be a label");
    auto e_uncond = model(x, t, Condition::null());
    auto e_cond = model(x, t, y);
    if (w == 0.0) return e_uncond;
    if (w == 1.0) return e_cond;
    return decltype(e_cond)(e_uncond + w * (e_cond - e_uncond));
}

template <class GoodEps, class BadEps, class X>
auto autoguidance_eps(GoodEps&& good, BadEps&& bad, const X& x, int t, const Condition& y, double w) {
    auto e_bad = bad(x, t, y);
    auto e_good = good(x, t, y);
    if (w == 0.0) return e_bad;
    if (w == 1.0) return e_good;
    return decltype(e_good)(e_bad + w * (e_good - e_bad));
}

template <class BaseEps, class LoraEps, class X>
auto autolora_eps_plain(BaseEps&& base, LoraEps&& lora, const X& x, int t, const Condition& y,
                        double gamma) {
    auto e_base = base(x, t, y);
    auto e_lora = lora(x, t, y);
    if (gamma == 0.0) return e_base;
    if (gamma == 1.0) return e_lora;
    return decltype(e_lora)(e_base + gamma * (e_lora - e_base));
}

// Dual-CFG combiner: CFG each branch separately, then extrapolate from the
// base branch toward the LoRA branch. Exactly four predictor evaluations.
template <class BaseEps, class LoraEps, class X>
auto autolora_eps(BaseEps&& base, LoraEps&& lora, const X& x, int t, const Condition& y, double w1,
                  double w2, double gamma) {
    if (y.is_null()) throw std::invalid_argument("autolora_eps: condition must be a label");
    auto e1 = cfg_eps(base, x, t, y, w1);
    auto e2 = cfg_eps(lora, x, t, y, w2);
    if (gamma == 0.0) return e1;
    if (gamma == 1.0) return e2;
    return decltype(e2)(e1 + gamma * (e2 - e1));
}

// deterministic reverse sampler ---------------------------------------------

// Inverse of the forward marginal under the given eps estimate.
template <class X>
X x0_estimate(const X& x_t, const X& eps_hat, int t, const NoiseSchedule& sched) {
    const double ab = sched.alpha_bar(t);
    return X((x_t - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab));
}

// One deterministic update x_t -> x_{t-1}; at t = 1 the result is x0_estimate
// itself since alpha_bar(0) = 1.
template <class X>
X reverse_step(const X& x_t, const X& eps_hat, int t, const NoiseSchedule& sched) {
    const X x_hat = x0_estimate(x_t, eps_hat, t, sched);
    if (t == 1) return x_hat;
    const double ab_prev = sched.alpha_bar(t - 1);
    return X(std::sqrt(ab_prev) * x_hat + std::sqrt(1.0 - ab_prev) * eps_hat);
}

struct SamplerOutput {
    Eigen::VectorXd x0;
    std::vector<Eigen::VectorXd> trajectory;  // steps + 1 entries, x_T first
    std::uint64_t seed = 0;
    GuidanceConfig config;
    Condition condition;
};

namespace detail {

// Per-step combined eps for a generic column-or-batch type.
template <class X, class BaseEps, class LoraEps>
X combined_eps(const GuidanceConfig& cfg, bool has_adapter, BaseEps&& base_eps, LoraEps&& lora_eps,
               const X& x, int t, const Condition& y) {
    // Vanilla and plain CFG operate on the active model: the LoRA variant
    // when an adapter is attached, otherwise the base model.
    auto active = [&](const X& xx, int tt, const Condition& cc) {
        return has_adapter ? lora_eps(xx, tt, cc) : base_eps(xx, tt, cc);
    };
    switch (cfg.mode) {
        case GuidanceMode::Vanilla:
            return active(x, t, y);
        case GuidanceMode::Cfg:
            return cfg_eps(active, x, t, y, cfg.w);
        case GuidanceMode::AutoGuidance:
            return autoguidance_eps(active, base_eps, x, t, y, cfg.w);
        case GuidanceMode::AutoLoraPlain:
            if (!has_adapter) throw std::invalid_argument("AUTOLORA_PLAIN requires an adapter");
            return autolora_eps_plain(base_eps, lora_eps, x, t, y, cfg.gamma);
        case GuidanceMode::AutoLoraCfg:
            if (!has_adapter) throw std::invalid_argument("AUTOLORA_CFG requires an adapter");
            return autolora_eps(base_eps, lora_eps, x, t, y, cfg.w1, cfg.w2, cfg.gamma);
    }
    throw std::logic_error("unknown guidance mode");
}

}  // namespace detail

// Full reverse-diffusion run from a seeded x_T draw. Pure in its arguments:
// the same inputs and seed give a bit-identical output.
inline SamplerOutput sample(const DenoiserParams& base, const LoraAdapter* adapter,
                            const NoiseSchedule& sched, const GuidanceConfig& cfg, const Condition& y,
                            std::uint64_t seed, bool record_trajectory = false) {
    cfg.validate();
    if (y.is_null()) throw std::invalid_argument("sample: condition must be a label");
    const bool has_adapter = adapter != nullptr;

    // Merge once; per-step evaluations then share the adapted weights.
    DenoiserParams lora_params;
    if (has_adapter) lora_params = merge_adapter(base, *adapter, cfg.lora_scale);

    auto base_eps = [&](const Eigen::VectorXd& x, int t, const Condition& c) {
        return predict_eps(base, x, t, c, sched);
    };
    auto lora_eps = [&](const Eigen::VectorXd& x, int t, const Condition& c) {
        return predict_eps(lora_params, x, t, c, sched);
    };

    SamplerOutput out;
    out.seed = seed;
    out.config = cfg;
    out.condition = y;

    Rng rng(seed);
    Eigen::VectorXd x = rng.normal_vector(base.data_dim);
    if (record_trajectory) out.trajectory.push_back(x);
    for (int t = sched.T; t >= 1; --t) {
        const Eigen::VectorXd eps_hat =
            detail::combined_eps(cfg, has_adapter, base_eps, lora_eps, x, t, y);
        x = reverse_step(x, eps_hat, t, sched);
        if (record_trajectory) out.trajectory.push_back(x);
    }
    out.x0 = std::move(x);
    return out;
}

// Batched sampler: column k is the full reverse run started from the x_T
// draw of Rng(seed_base + k), identical to sample()'s draw for that seed.
inline Eigen::MatrixXd sample_batch(const DenoiserParams& base, const LoraAdapter* adapter,
                                    const NoiseSchedule& sched, const GuidanceConfig& cfg,
                                    const Condition& y, std::uint64_t seed_base, int n_samples) {
    cfg.validate();
    if (y.is_null()) throw std::invalid_argument("sample_batch: condition must be a label");
    if (n_samples < 1) throw std::invalid_argument("sample_batch: n_samples must be >= 1");
    const bool has_adapter = adapter != nullptr;

    DenoiserParams lora_params;
    if (has_adapter) lora_params = merge_adapter(base, *adapter, cfg.lora_scale);

    auto base_eps = [&](const Eigen::MatrixXd& X, int t, const Condition& c) {
        return predict_eps_batch(base, X, t, c, sched);
    };
    auto lora_eps = [&](const Eigen::MatrixXd& X, int t, const Condition& c) {
        return predict_eps_batch(lora_params, X, t, c, sched);
    };

    Eigen::MatrixXd X(base.data_dim, n_samples);
    for (int k = 0; k < n_samples; ++k) {
        Rng rng(seed_base + static_cast<std::uint64_t>(k));
        X.col(k) = rng.normal_vector(base.data_dim);
    }
    for (int t = sched.T; t >= 1; --t) {
        const Eigen::MatrixXd eps_hat =
            detail::combined_eps(cfg, has_adapter, base_eps, lora_eps, X, t, y);
        X = reverse_step(X, eps_hat, t, sched);
    }
    return X;
}

}  // namespace autolora
