#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "autolora/dataset.hpp"
#include "autolora/denoiser.hpp"
#include "autolora/guidance.hpp"

namespace autolora {

// Plays the role of the paper-level feature extractor f: Identity uses raw
// sample coordinates, Standardized whitens by a fitted mean/std, Remote
// defers to an external embedding endpoint.
struct FeatureExtractor {
    enum class Kind { Identity, Standardized, Remote };

    Kind kind = Kind::Identity;
    Eigen::VectorXd mean;  // Standardized only
    Eigen::VectorXd std;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> remote;  // Remote only

    static FeatureExtractor identity() { return FeatureExtractor{}; }

    static FeatureExtractor standardized(const Eigen::MatrixXd& data) {
        FeatureExtractor f;
        f.kind = Kind::Standardized;
        f.mean = data.rowwise().mean();
        const Eigen::MatrixXd centered = data.colwise() - f.mean;
        f.std = (centered.array().square().rowwise().mean()).sqrt();
        for (Eigen::Index i = 0; i < f.std.size(); ++i)
            if (f.std[i] <= 0.0) f.std[i] = 1.0;
        return f;
    }

    static FeatureExtractor remote_endpoint(std::function<Eigen::VectorXd(const Eigen::VectorXd&)> fn) {
        FeatureExtractor f;
        f.kind = Kind::Remote;
        f.remote = std::move(fn);
        return f;
    }

    Eigen::VectorXd operator()(const Eigen::VectorXd& x) const {
        switch (kind) {
            case Kind::Identity: return x;
            case Kind::Standardized: return ((x - mean).array() / std.array()).matrix();
            case Kind::Remote:
                if (!remote) throw std::runtime_error("remote feature extractor not configured");
                return remote(x);
        }
        throw std::logic_error("unknown extractor kind");
    }
};

// One minus the mean pairwise cosine similarity over all N(N-1)/2 pairs,
// summed in (i, j) lexicographic order.
inline double diversity(const Eigen::MatrixXd& X, const FeatureExtractor& extractor) {
    const Eigen::Index N = X.cols();
    if (N < 2) throw std::invalid_argument("diversity: need at least 2 samples");
    std::vector<Eigen::VectorXd> feats(N);
    std::vector<double> norms(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        feats[i] = extractor(X.col(i));
        norms[i] = feats[i].norm();
        if (norms[i] == 0.0)
            throw std::invalid_argument("diversity: zero-norm feature vector at index " +
                                        std::to_string(i));
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = i + 1; j < N; ++j)
            acc += feats[i].dot(feats[j]) / (norms[i] * norms[j]);
    return 1.0 - 2.0 / (static_cast<double>(N) * static_cast<double>(N - 1)) * acc;
}

inline double div_product(double diversity_value, double score) { return diversity_value * score; }

// Mahalanobis banding thresholds for the graded presence rubric; overridable
// through the experiment config.
struct PresenceBands {
    double d5 = 1.0;
    double d4 = 1.5;
    double d3 = 2.0;
    double d2 = 2.5;
    double d1 = 3.5;
};

// Toy analog of the character-presence score: band the minimum Mahalanobis
// distance to any target component, average over samples. Range [0, 5].
inline double target_presence_score(const Eigen::MatrixXd& X,
                                    const std::vector<GaussianComponent>& targets,
                                    const PresenceBands& bands = {}) {
    if (targets.empty()) throw std::invalid_argument("target_presence_score: no target components");
    for (const auto& g : targets)
        if (g.sigma <= 0.0)
            throw std::invalid_argument("target_presence_score: singular component covariance");
    double total = 0.0;
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
        double dmin = std::numeric_limits<double>::infinity();
        for (const auto& g : targets)
            dmin = std::min(dmin, (X.col(i) - g.mean).norm() / g.sigma);
        int score = 0;
        if (dmin <= bands.d5) score = 5;
        else if (dmin <= bands.d4) score = 4;
        else if (dmin <= bands.d3) score = 3;
        else if (dmin <= bands.d2) score = 2;
        else if (dmin <= bands.d1) score = 1;
        total += score;
    }
    return total / static_cast<double>(X.cols());
}

inline double mixture_log_density(const Eigen::VectorXd& x, const GeneratorSpec& spec) {
    if (spec.components.empty()) throw std::invalid_argument("mixture_log_density: empty mixture");
    constexpr double two_pi = 6.283185307179586476925286766559;
    double acc = 0.0;
    for (const auto& g : spec.components) {
        if (g.sigma <= 0.0) throw std::invalid_argument("mixture_log_density: singular component");
        const double d2 = (x - g.mean).squaredNorm() / (g.sigma * g.sigma);
        const double log_norm = -0.5 * x.size() * std::log(two_pi * g.sigma * g.sigma);
        acc += g.weight * std::exp(log_norm - 0.5 * d2);
    }
    return std::log(acc);
}

// Toy analog of the style-adherence score: mean mixture log-density under the
// LoRA-subset spec, affinely mapped so the density at a component mean scores
// 5 and the density 3.5 sigma out along a principal axis scores 0, clamped.
inline double style_likelihood_score(const Eigen::MatrixXd& X, const GeneratorSpec& lora_spec) {
    if (lora_spec.components.empty())
        throw std::invalid_argument("style_likelihood_score: invalid mixture");
    const auto& anchor = lora_spec.components.front();
    Eigen::VectorXd axis = Eigen::VectorXd::Zero(anchor.mean.size());
    axis[0] = 1.0;
    const double log_hi = mixture_log_density(anchor.mean, lora_spec);
    const double log_lo = mixture_log_density(anchor.mean + 3.5 * anchor.sigma * axis, lora_spec);
    if (log_hi <= log_lo)
        throw std::invalid_argument("style_likelihood_score: degenerate calibration anchors");

    double total = 0.0;
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
        const double lp = mixture_log_density(X.col(i), lora_spec);
        total += std::clamp(5.0 * (lp - log_lo) / (log_hi - log_lo), 0.0, 5.0);
    }
    return total / static_cast<double>(X.cols());
}

// Row of the diversity/score table derived from one same-condition batch.
struct ScoreReport {
    double diversity = 0.0;
    double cps = 0.0;
    double pc = 0.0;
    double sa = 0.0;
    double div_cps = 0.0;
    double div_pc = 0.0;
    double div_sa = 0.0;
    int n_samples = 0;
    Condition condition;
    GuidanceConfig config;
};

inline std::vector<GaussianComponent> components_for_label(const GeneratorSpec& spec, int label) {
    std::vector<GaussianComponent> out;
    for (const auto& g : spec.components)
        if (g.label == label) out.push_back(g);
    return out;
}

// Assembles one table row. CPS is presence against the LoRA-target
// components of the batch condition, PC presence against the full data
// mixture's components for that condition, SA the style likelihood under the
// LoRA spec. Products use the unrounded values.
inline ScoreReport build_report(const Eigen::MatrixXd& X, const FeatureExtractor& extractor,
                                const GeneratorSpec& data_spec, const GeneratorSpec& lora_spec,
                                const Condition& condition, const GuidanceConfig& config,
                                const PresenceBands& bands = {}) {
    ScoreReport r;
    r.n_samples = static_cast<int>(X.cols());
    r.condition = condition;
    r.config = config;
    r.diversity = diversity(X, extractor);

    auto pick = [&](const GeneratorSpec& spec) {
        if (condition.is_null()) return spec.components;
        auto sel = components_for_label(spec, condition.label);
        return sel.empty() ? spec.components : sel;
    };
    r.cps = target_presence_score(X, pick(lora_spec), bands);
    r.pc = target_presence_score(X, pick(data_spec), bands);
    r.sa = style_likelihood_score(X, lora_spec);
    r.div_cps = div_product(r.diversity, r.cps);
    r.div_pc = div_product(r.diversity, r.pc);
    r.div_sa = div_product(r.diversity, r.sa);
    return r;
}

}  // namespace autolora
