// Copyright (C) 2026 invlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "invlab/grid.hpp"
#include "invlab/rng.hpp"
#include "invlab/transform.hpp"

namespace invlab {

struct MixtureComponent {
    double weight = 1.0;
    Latent mean;
    double sigma = 1.0;  // isotropic standard deviation
};

/// Isotropic Gaussian mixture over latent grids. Weights sum to 1; all means
/// share the grid shape.
struct GaussianMixture {
    std::vector<MixtureComponent> components;

    GridShape shape() const {
        if (components.empty()) throw std::invalid_argument("GaussianMixture: no components");
        return components.front().mean.shape;
    }

    void validate() const {
        if (components.empty()) throw std::invalid_argument("GaussianMixture: no components");
        const GridShape s = components.front().mean.shape;
        double total = 0.0;
        for (const auto& comp : components) {
            if (!(comp.weight > 0.0)) throw std::invalid_argument("GaussianMixture: weights must be > 0");
            if (!(comp.sigma > 0.0)) throw std::invalid_argument("GaussianMixture: sigmas must be > 0");
            if (!(comp.mean.shape == s))
                throw std::invalid_argument("GaussianMixture: component means have mixed shapes");
            require_finite(comp.mean, "GaussianMixture mean");
            total += comp.weight;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw std::invalid_argument("GaussianMixture: weights sum to " + std::to_string(total) +
                                        ", expected 1 within 1e-12");
    }
};

/// Distribution of sqrt(abar)*x0 + sqrt(1-abar)*eps when x0 follows the
/// mixture: component means scale by sqrt(abar), scales become
/// sqrt(abar*sigma^2 + 1 - abar), weights unchanged.
inline GaussianMixture marginal_mixture(const GaussianMixture& mix, double alpha_bar_t) {
    if (!(alpha_bar_t > 0.0) || !(alpha_bar_t <= 1.0))
        throw std::invalid_argument("marginal_mixture: alpha_bar_t must be in (0, 1]");
    const double root_a = std::sqrt(alpha_bar_t);
    GaussianMixture out = mix;
    for (auto& comp : out.components) {
        for (double& v : comp.mean.data) v *= root_a;
        comp.sigma = std::sqrt(alpha_bar_t * comp.sigma * comp.sigma + 1.0 - alpha_bar_t);
    }
    return out;
}

/// Gradient of the mixture log-density at x:
///   sum_k r_k(x) * (mu_k - x) / sigma_k^2
/// with posterior responsibilities r_k computed in log-space. Responsibilities
/// that underflow exp() are exactly 0, which is the intended floor.
inline Latent score(const GaussianMixture& mix, const Latent& x) {
    mix.validate();
    require_finite(x, "score: x");
    require_same_shape(x, mix.components.front().mean, "score");

    const std::size_t k = mix.components.size();
    const double d = static_cast<double>(x.size());
    constexpr double log_two_pi = 1.8378770664093454835606594728112;

    std::vector<double> logits(k);
    for (std::size_t i = 0; i < k; ++i) {
        const auto& comp = mix.components[i];
        const double var = comp.sigma * comp.sigma;
        double ssq = 0.0;
        for (std::size_t j = 0; j < x.data.size(); ++j) {
            const double diff = x.data[j] - comp.mean.data[j];
            ssq += diff * diff;
        }
        logits[i] = std::log(comp.weight) - 0.5 * d * (log_two_pi + std::log(var)) - 0.5 * ssq / var;
    }

    double max_logit = logits[0];
    for (double v : logits) max_logit = std::max(max_logit, v);
    std::vector<double> resp(k);
    double norm = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        resp[i] = std::exp(logits[i] - max_logit);
        norm += resp[i];
    }

    Latent out(x.shape);
    for (std::size_t i = 0; i < k; ++i) {
        const double r = resp[i] / norm;
        if (r == 0.0) continue;
        const auto& comp = mix.components[i];
        const double inv_var = 1.0 / (comp.sigma * comp.sigma);
        for (std::size_t j = 0; j < x.data.size(); ++j)
            out.data[j] += r * (comp.mean.data[j] - x.data[j]) * inv_var;
    }
    return out;
}

/// Closes the component set under the group generated by the given
/// value-preserving transforms, splitting each component's weight uniformly
/// over its orbit. The resulting density is invariant under every generated
/// element. Components that collide (mean and sigma within 1e-12) merge.
inline GaussianMixture symmetrize(const GaussianMixture& mix,
                                  const std::vector<TransformSpec>& group) {
    mix.validate();
    constexpr double kTol = 1e-12;
    constexpr std::size_t kMaxOrbit = 4096;

    for (const auto& g : group) {
        if (!g.value_preserving())
            throw std::invalid_argument("symmetrize: group members must be value-preserving, got " +
                                        g.str());
        require_compatible(g, mix.shape());
    }

    const auto close_enough = [&](const Latent& a, const Latent& b) {
        return linf_diff(a, b) <= kTol;
    };

    GaussianMixture out;
    for (const auto& comp : mix.components) {
        std::vector<Latent> orbit = {comp.mean};
        for (std::size_t head = 0; head < orbit.size(); ++head) {
            for (const auto& g : group) {
                Latent candidate = apply(g, orbit[head]);
                bool known = false;
                for (const auto& member : orbit)
                    if (close_enough(member, candidate)) {
                        known = true;
                        break;
                    }
                if (!known) {
                    if (orbit.size() >= kMaxOrbit)
                        throw std::invalid_argument("symmetrize: orbit exceeds " +
                                                    std::to_string(kMaxOrbit) + " members");
                    orbit.push_back(std::move(candidate));
                }
            }
        }
        const double w = comp.weight / static_cast<double>(orbit.size());
        for (auto& member : orbit) {
            bool merged = false;
            for (auto& existing : out.components) {
                if (std::abs(existing.sigma - comp.sigma) <= kTol &&
                    close_enough(existing.mean, member)) {
                    existing.weight += w;
                    merged = true;
                    break;
                }
            }
            if (!merged) out.components.push_back({w, std::move(member), comp.sigma});
        }
    }
    out.validate();
    return out;
}

/// Draws one latent from the mixture: component by weight, then an isotropic
/// Gaussian around its mean.
inline Latent sample(const GaussianMixture& mix, CounterRng& rng) {
    mix.validate();
    const double u = rng.next_unit();
    double acc = 0.0;
    std::size_t chosen = mix.components.size() - 1;
    for (std::size_t i = 0; i < mix.components.size(); ++i) {
        acc += mix.components[i].weight;
        if (u < acc) {
            chosen = i;
            break;
        }
    }
    const auto& comp = mix.components[chosen];
    Latent out(comp.mean.shape);
    for (std::size_t j = 0; j < out.data.size(); ++j)
        out.data[j] = comp.mean.data[j] + comp.sigma * rng.next_gaussian();
    return out;
}

}  // namespace invlab
