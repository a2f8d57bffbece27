// Copyright (C) 2026 invlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "invlab/engine.hpp"
#include "invlab/grid.hpp"
#include "invlab/mixture.hpp"
#include "invlab/predictor.hpp"
#include "invlab/rng.hpp"
#include "invlab/schedule.hpp"
#include "invlab/transform.hpp"

namespace invlab {

struct OracleReport {
    std::string name;
    double max_discrepancy = 0.0;
    double threshold = 0.0;
    int samples = 0;
    std::uint64_t seed = 0;
    bool pass() const { return max_discrepancy <= threshold; }
};

namespace oracle_detail {

/// Mixture log-density evaluated directly from the component pdfs. This is
/// the finite-difference oracle's own code path; it must not route through
/// score().
inline double log_density(const GaussianMixture& mix, const Latent& x) {
    constexpr double log_two_pi = 1.8378770664093454835606594728112;
    const double d = static_cast<double>(x.size());
    double max_logit = -1e308;
    std::vector<double> logits(mix.components.size());
    for (std::size_t i = 0; i < mix.components.size(); ++i) {
        const auto& comp = mix.components[i];
        const double var = comp.sigma * comp.sigma;
        double ssq = 0.0;
        for (std::size_t j = 0; j < x.data.size(); ++j) {
            const double diff = x.data[j] - comp.mean.data[j];
            ssq += diff * diff;
        }
        logits[i] = std::log(comp.weight) - 0.5 * d * (log_two_pi + std::log(var)) - 0.5 * ssq / var;
        max_logit = std::max(max_logit, logits[i]);
    }
    double acc = 0.0;
    for (double l : logits) acc += std::exp(l - max_logit);
    return max_logit + std::log(acc);
}

}  // namespace oracle_detail

/// Central-difference check of score() against the explicit log-density.
/// Points are drawn from the forward-process marginal at a random schedule
/// index. Discrepancy per point is
///   max_j |score_j - fd_j| / (1 + max_j |score_j|).
inline OracleReport fd_score_oracle(const GaussianMixture& mix, const NoiseSchedule& sched,
                                    int samples, double h, std::uint64_t seed) {
    if (samples < 1) throw std::invalid_argument("fd_score_oracle: samples must be >= 1");
    if (!(h >= 1e-6) || !(h <= 1e-3))
        throw std::invalid_argument("fd_score_oracle: h must be in [1e-6, 1e-3]");
    mix.validate();

    OracleReport report;
    report.name = "score-finite-difference";
    report.threshold = 1e-5;
    report.samples = samples;
    report.seed = seed;

    for (int i = 0; i < samples; ++i) {
        CounterRng rng(substream(seed, static_cast<std::uint64_t>(i)));
        const int t = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(sched.num_steps)));
        const GaussianMixture marg = marginal_mixture(mix, sched.alpha_bar[t]);
        Latent x = sample(marg, rng);

        const Latent s = score(marg, x);
        double max_abs_err = 0.0;
        for (std::size_t j = 0; j < x.data.size(); ++j) {
            Latent xp = x, xm = x;
            xp.data[j] += h;
            xm.data[j] -= h;
            const double fd = (oracle_detail::log_density(marg, xp) -
                               oracle_detail::log_density(marg, xm)) /
                              (2.0 * h);
            max_abs_err = std::max(max_abs_err, std::abs(s.data[j] - fd));
        }
        const double rel = max_abs_err / (1.0 + linf_norm(s));
        report.max_discrepancy = std::max(report.max_discrepancy, rel);
    }
    return report;
}

/// Closed-form round trip for the single-standard-normal predictor, where
/// eps_hat(x, t) = sqrt(1 - abar_t) * x makes every step scalar-linear. The
/// inversion and reconstruction factors are accumulated as plain scalar
/// products, independently of the grid engine.
inline Latent gaussian_roundtrip_oracle(const NoiseSchedule& sched, const Latent& x0) {
    sched.validate();
    double factor = 1.0;
    for (int t = 0; t < sched.num_steps; ++t) {
        const double a0 = sched.alpha_bar[t];
        const double a1 = sched.alpha_bar[t + 1];
        const double eta_t = std::sqrt((1.0 - a1) / a1) - std::sqrt((1.0 - a0) / a0);
        const double grow = std::sqrt(a1) * (1.0 / std::sqrt(a0) + eta_t * std::sqrt(1.0 - a1));
        factor *= grow;
    }
    for (int t = sched.num_steps - 1; t >= 0; --t) {
        const double a0 = sched.alpha_bar[t];
        const double a1 = sched.alpha_bar[t + 1];
        const double eta_t = std::sqrt((1.0 - a1) / a1) - std::sqrt((1.0 - a0) / a0);
        const double shrink = std::sqrt(a0) * (1.0 / std::sqrt(a1) - eta_t * std::sqrt(1.0 - a1));
        factor *= shrink;
    }
    Latent out = x0;
    for (double& v : out.data) v *= factor;
    return out;
}

/// Exhaustive expectation of the one-hot branch selection: every outcome is
/// materialized as a literal one-hot vector and contracted against the branch
/// noises, then the outcomes are averaged. N <= 4 keeps this enumerable.
inline Latent mc_expectation_oracle(const std::vector<Latent>& branch_noises) {
    if (branch_noises.empty() || branch_noises.size() > 4)
        throw std::invalid_argument("mc_expectation_oracle: need 1..4 branch noises");
    const std::size_t n = branch_noises.size();
    Latent acc(branch_noises[0].shape);
    for (std::size_t outcome = 0; outcome < n; ++outcome) {
        std::vector<double> one_hot(n, 0.0);
        one_hot[outcome] = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (one_hot[i] == 0.0) continue;
            for (std::size_t j = 0; j < acc.data.size(); ++j)
                acc.data[j] += one_hot[i] * branch_noises[i].data[j];
        }
    }
    for (double& v : acc.data) v /= static_cast<double>(n);
    return acc;
}

// ---------------------------------------------------------------------------
// The `verify` suite
// ---------------------------------------------------------------------------

namespace oracle_detail {

inline Latent pattern_blob(GridShape shape, double cr, double cc, double width, double amp) {
    Latent out(shape);
    for (int r = 0; r < shape.h; ++r)
        for (int c = 0; c < shape.w; ++c) {
            const double dr = r - cr, dc = c - cc;
            const double v = amp * std::exp(-(dr * dr + dc * dc) / (2.0 * width * width));
            for (int ch = 0; ch < shape.c; ++ch) out.at(r, c, ch) = v;
        }
    return out;
}

inline GaussianMixture verify_mixture_blobs(GridShape shape) {
    GaussianMixture base;
    base.components.push_back(
        {1.0, pattern_blob(shape, shape.h / 4.0, shape.w / 4.0, shape.h / 8.0, 1.0), 0.35});
    return symmetrize(base, {make_rotate(1)});
}

inline GaussianMixture verify_mixture_constants(GridShape shape) {
    GaussianMixture mix;
    mix.components.push_back({0.25, constant_grid(shape, -1.0), 0.5});
    mix.components.push_back({0.5, constant_grid(shape, 0.0), 1.0});
    mix.components.push_back({0.25, constant_grid(shape, 1.5), 0.7});
    return mix;
}

inline GaussianMixture verify_mixture_stripes(GridShape shape) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    Latent stripe(shape);
    for (int r = 0; r < shape.h; ++r)
        for (int c = 0; c < shape.w; ++c)
            for (int ch = 0; ch < shape.c; ++ch)
                stripe.at(r, c, ch) = std::sin(two_pi * c / shape.w);
    GaussianMixture mix;
    mix.components.push_back({0.6, stripe, 0.4});
    Latent neg = stripe;
    for (double& v : neg.data) v = -v;
    mix.components.push_back({0.4, neg, 0.8});
    return mix;
}

}  // namespace oracle_detail

/// Runs every oracle at its pinned threshold and returns one report per
/// check. A failing report means the implementation and its independent
/// recomputation disagree.
inline std::vector<OracleReport> run_all_oracles(std::uint64_t seed = 20260810) {
    std::vector<OracleReport> reports;
    const GridShape shape{8, 8, 1};
    const NoiseSchedule sched = build_linear_schedule(1000, 1e-4, 0.02, 50);

    {
        // Standard normal: score(x) = -x, so the finite difference of the
        // quadratic log-density is exact up to rounding.
        GaussianMixture std_normal;
        std_normal.components.push_back({1.0, Latent(GridShape{4, 4, 1}), 1.0});
        OracleReport r = fd_score_oracle(std_normal, sched, 50, 1e-4, substream(seed, 1));
        r.name = "score-fd/standard-normal";
        r.threshold = 1e-8;
        reports.push_back(r);
    }
    {
        const GaussianMixture mixtures[] = {oracle_detail::verify_mixture_blobs(shape),
                                            oracle_detail::verify_mixture_constants(shape),
                                            oracle_detail::verify_mixture_stripes(shape)};
        OracleReport combined;
        combined.name = "score-fd/mixtures";
        combined.threshold = 1e-5;
        combined.seed = substream(seed, 2);
        for (std::size_t i = 0; i < 3; ++i) {
            OracleReport r = fd_score_oracle(mixtures[i], sched, 40, 1e-4,
                                             substream(combined.seed, i));
            combined.samples += r.samples;
            combined.max_discrepancy = std::max(combined.max_discrepancy, r.max_discrepancy);
        }
        reports.push_back(combined);
    }
    {
        // Engine round trip vs the scalar-linear closed form.
        GaussianMixture std_normal;
        std_normal.components.push_back({1.0, Latent(shape), 1.0});
        const PredictorConfig pred = make_exact_predictor(std_normal);
        OracleReport r;
        r.name = "gaussian-roundtrip";
        r.threshold = 1e-10;
        r.samples = 20;
        r.seed = substream(seed, 3);
        for (int i = 0; i < r.samples; ++i) {
            CounterRng rng(substream(r.seed, static_cast<std::uint64_t>(i)));
            Latent x0(shape);
            fill_gaussian(x0, rng);
            StrategyConfig strat = naive_strategy();
            const Trajectory inv = run_inversion(strat, pred, sched, x0);
            const Trajectory rec =
                run_reconstruction(strat, pred, sched, inv.latents.back(), make_replay(inv));
            const Latent expected = gaussian_roundtrip_oracle(sched, x0);
            r.max_discrepancy = std::max(r.max_discrepancy, linf_diff(rec.latents.front(), expected));
        }
        reports.push_back(r);
    }
    {
        // One-hot expectation enumeration vs the uniform branch average, and
        // the empirical m=10^4 estimate against the same target.
        const GaussianMixture mix = oracle_detail::verify_mixture_blobs(shape);
        const PredictorConfig pred = make_exact_predictor(mix);
        const int query_index = sched.num_steps / 2;
        CounterRng rng(substream(seed, 4));
        // Branches mirror a mid-flight multi-branch set: a shared latent with
        // per-branch offsets, the correlation pattern shared ensemble noise
        // produces in practice.
        const Latent base = sample(marginal_mixture(mix, sched.alpha_bar[query_index]), rng);
        std::vector<Latent> branches;
        std::vector<Latent> noises;
        for (int b = 0; b < 4; ++b) {
            Latent x = base;
            for (double& v : x.data) v += 0.3 * rng.next_gaussian();
            branches.push_back(std::move(x));
            noises.push_back(predict_noise(pred, sched, branches.back(), query_index));
        }
        const Latent mbdi_avg = ensemble_noise_mbdi(branches, query_index, pred, sched);

        OracleReport enumeration;
        enumeration.name = "mc-expectation/enumeration";
        enumeration.threshold = 1e-12;
        enumeration.samples = 4;
        enumeration.seed = substream(seed, 4);
        enumeration.max_discrepancy = linf_diff(mc_expectation_oracle(noises), mbdi_avg);
        reports.push_back(enumeration);

        OracleReport empirical;
        empirical.name = "mc-expectation/empirical-m1e4";
        empirical.threshold = 0.02;
        empirical.samples = 10000;
        empirical.seed = substream(seed, 5);
        CounterRng mc_rng(empirical.seed);
        const Latent mc_avg =
            ensemble_noise_mc(branches, query_index, pred, sched, empirical.samples, mc_rng);
        empirical.max_discrepancy = l2_diff(mc_avg, mbdi_avg) / l2_norm(mbdi_avg);
        reports.push_back(empirical);
    }
    {
        // Monte-Carlo regression of eps on x_t for a standard-normal data
        // distribution: the regression slope must match sqrt(1 - abar), the
        // predictor's closed form.
        OracleReport r;
        r.name = "noise-regression/single-gaussian";
        r.threshold = 0.02;
        r.samples = 200000;
        r.seed = substream(seed, 6);
        CounterRng rng(r.seed);
        const double abar_values[] = {0.9, 0.5, 0.1};
        for (double abar : abar_values) {
            double sxy = 0.0, sxx = 0.0;
            for (int i = 0; i < r.samples; ++i) {
                const double x0 = rng.next_gaussian();
                const double eps = rng.next_gaussian();
                const double xt = std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * eps;
                sxy += xt * eps;
                sxx += xt * xt;
            }
            const double slope = sxy / sxx;
            const double expected = std::sqrt(1.0 - abar);
            r.max_discrepancy =
                std::max(r.max_discrepancy, std::abs(slope - expected) / expected);
        }
        reports.push_back(r);
    }
    return reports;
}

}  // namespace invlab
