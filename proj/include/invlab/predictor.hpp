// Copyright (C) 2026 invlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>

#include "invlab/grid.hpp"
#include "invlab/mixture.hpp"
#include "invlab/schedule.hpp"

namespace invlab {

/// Analytic noise predictor configuration. With gamma = 0 the predictor is the
/// exact conditional expectation E[eps | x_t] for the mixture. gamma > 0 adds
/// a fixed smooth sinusoid so the prediction is no longer locally constant
/// along a trajectory; the perturbation is deterministic, so inversion and
/// reconstruction stay well-defined. Constant mode ignores the mixture and
/// always returns the stored grid.
struct PredictorConfig {
    GaussianMixture mixture;
    double gamma = 0.0;
    Latent omega;  // per-dimension frequencies for the sinusoidal perturbation
    bool constant_mode = false;
    Latent constant;

    void validate() const {
        if (constant_mode) {
            require_finite(constant, "PredictorConfig constant");
            // A mixture may still ride along for branch/instance sampling.
            if (!mixture.components.empty()) mixture.validate();
            return;
        }
        mixture.validate();
        if (!(gamma >= 0.0)) throw std::invalid_argument("PredictorConfig: gamma must be >= 0");
        if (gamma > 0.0) {
            require_finite(omega, "PredictorConfig omega");
            if (!(omega.shape == mixture.shape()))
                throw std::invalid_argument("PredictorConfig: omega shape must match the mixture grid");
        }
    }
};

inline PredictorConfig make_exact_predictor(GaussianMixture mix) {
    PredictorConfig cfg;
    cfg.mixture = std::move(mix);
    return cfg;
}

inline PredictorConfig make_perturbed_predictor(GaussianMixture mix, double gamma, Latent omega) {
    PredictorConfig cfg;
    cfg.mixture = std::move(mix);
    cfg.gamma = gamma;
    cfg.omega = std::move(omega);
    cfg.validate();
    return cfg;
}

inline PredictorConfig make_constant_predictor(Latent constant,
                                               GaussianMixture sampling_mixture = {}) {
    PredictorConfig cfg;
    cfg.constant_mode = true;
    cfg.constant = std::move(constant);
    cfg.mixture = std::move(sampling_mixture);
    return cfg;
}

/// Noise estimate at schedule index t (the recurrences always query at the
/// noisier end of a step, so valid indices are 1..T):
///   eps_hat(x, t) = -sqrt(1 - abar_t) * score(marginal(mixture, abar_t), x)
/// plus gamma*sin(omega.*x) element-wise when gamma > 0. Pure function of its
/// arguments; identical inputs give bit-identical outputs.
inline Latent predict_noise(const PredictorConfig& cfg, const NoiseSchedule& sched, const Latent& x,
                            int t) {
    if (t < 1 || t > sched.num_steps)
        throw std::out_of_range("predict_noise: schedule index " + std::to_string(t) +
                                " not in [1, " + std::to_string(sched.num_steps) + "]");
    require_finite(x, "predict_noise: x");

    if (cfg.constant_mode) {
        require_same_shape(x, cfg.constant, "predict_noise: constant");
        return cfg.constant;
    }

    const double abar = sched.alpha_bar[t];
    const GaussianMixture marg = marginal_mixture(cfg.mixture, abar);
    Latent eps = score(marg, x);
    const double coeff = -std::sqrt(1.0 - abar);
    for (double& v : eps.data) v *= coeff;

    if (cfg.gamma > 0.0) {
        require_same_shape(x, cfg.omega, "predict_noise: omega");
        for (std::size_t j = 0; j < eps.data.size(); ++j)
            eps.data[j] += cfg.gamma * std::sin(cfg.omega.data[j] * x.data[j]);
    }
    return eps;
}

}  // namespace invlab
