#pragma once

#include <stdexcept>

#include <Eigen/Dense>

namespace autolora {

// Discrete-time noise schedule. Steps are indexed t in {1..T}; the stored
// vectors use zero-based storage, so betas[t-1] is beta_t. alpha_bar(0) is 1
// by convention.
struct NoiseSchedule {
    int T = 0;
    Eigen::VectorXd betas;
    Eigen::VectorXd alphas;
    Eigen::VectorXd alpha_bars;

    double beta(int t) const {
        check_step(t);
        return betas[t - 1];
    }
    double alpha(int t) const {
        check_step(t);
        return alphas[t - 1];
    }
    double alpha_bar(int t) const {
        if (t == 0) return 1.0;
        check_step(t);
        return alpha_bars[t - 1];
    }

    void check_step(int t) const {
        if (t < 1 || t > T) throw std::out_of_range("step index out of range [1, T]");
    }
};

inline NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw std::invalid_argument("make_linear_schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw std::invalid_argument("make_linear_schedule: need 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.T = T;
    s.betas.resize(T);
    s.alphas.resize(T);
    s.alpha_bars.resize(T);
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double frac = (T == 1) ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
        const double beta = beta_start + frac * (beta_end - beta_start);
        s.betas[t - 1] = beta;
        s.alphas[t - 1] = 1.0 - beta;
        prod *= s.alphas[t - 1];
        s.alpha_bars[t - 1] = prod;
    }
    return s;
}

// One forward step of q(x_t | x_{t-1}).
inline Eigen::VectorXd forward_step(const Eigen::VectorXd& x_prev, int t,
                                    const Eigen::VectorXd& noise, const NoiseSchedule& sched) {
    sched.check_step(t);
    if (x_prev.size() != noise.size())
        throw std::invalid_argument("forward_step: dimension mismatch between x_prev and noise");
    const double beta = sched.beta(t);
    return std::sqrt(1.0 - beta) * x_prev + std::sqrt(beta) * noise;
}

// Closed-form marginal q(x_t | x_0). Also the training-pair generator: the
// target for (x0, t, eps) is eps itself.
inline Eigen::VectorXd forward_marginal(const Eigen::VectorXd& x0, int t,
                                        const Eigen::VectorXd& noise, const NoiseSchedule& sched) {
    if (x0.size() != noise.size())
        throw std::invalid_argument("forward_marginal: dimension mismatch between x0 and noise");
    const double ab = sched.alpha_bar(t);
    return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise;
}

}  // namespace autolora
