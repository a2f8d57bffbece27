// Copyright (C) 2026 invlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace invlab {

/// Cumulative signal-retention coefficients of a deterministic sampling
/// schedule. alpha_bar has T+1 entries indexed t = 0..T, strictly decreasing,
/// all in (0, 1]; index 0 is the least-noised end.
struct NoiseSchedule {
    int num_steps = 0;  // T
    std::vector<double> alpha_bar;
    std::string provenance;

    void validate() const {
        if (num_steps < 1) throw std::invalid_argument("NoiseSchedule: num_steps must be >= 1");
        if (static_cast<int>(alpha_bar.size()) != num_steps + 1)
            throw std::invalid_argument("NoiseSchedule: alpha_bar must have num_steps+1 entries");
        if (!(alpha_bar.front() <= 1.0))
            throw std::invalid_argument("NoiseSchedule: alpha_bar[0] must be <= 1");
        for (int t = 0; t <= num_steps; ++t) {
            if (!(alpha_bar[t] > 0.0) || !std::isfinite(alpha_bar[t]))
                throw std::invalid_argument("NoiseSchedule: alpha_bar must be positive and finite");
            if (t > 0 && !(alpha_bar[t] < alpha_bar[t - 1]))
                throw std::invalid_argument(
                    "NoiseSchedule: alpha_bar must be strictly decreasing (violated at t=" +
                    std::to_string(t) + ")");
        }
    }
};

/// Per-step increment of the sampling recurrence:
///   eta_t = sqrt((1-abar_{t+1})/abar_{t+1}) - sqrt((1-abar_t)/abar_t).
/// Strictly positive whenever alpha_bar is strictly decreasing.
inline double eta(const NoiseSchedule& s, int t) {
    if (t < 0 || t >= s.num_steps)
        throw std::out_of_range("eta: step index " + std::to_string(t) + " not in [0, " +
                                std::to_string(s.num_steps) + ")");
    const double a0 = s.alpha_bar[t];
    const double a1 = s.alpha_bar[t + 1];
    return std::sqrt((1.0 - a1) / a1) - std::sqrt((1.0 - a0) / a0);
}

/// Linear-beta training schedule subsampled to infer_steps inference steps.
///
/// betas are linspace(beta_start, beta_end, train_steps). The inference
/// coefficients take the cumulative product inclusively at the evenly strided
/// training indices t*stride (leading-timestep convention), so alpha_bar[0] is
/// 1-beta_0, not 1. When t*stride runs one past the training range (exact
/// division), the final beta is repeated for the overflowing factor, keeping
/// the sequence strictly decreasing without a special case.
inline NoiseSchedule build_linear_schedule(int train_steps, double beta_start, double beta_end,
                                           int infer_steps) {
    if (train_steps < 1) throw std::invalid_argument("build_linear_schedule: train_steps must be >= 1");
    if (infer_steps < 1) throw std::invalid_argument("build_linear_schedule: infer_steps must be >= 1");
    if (infer_steps > train_steps)
        throw std::invalid_argument("build_linear_schedule: infer_steps exceeds train_steps");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw std::invalid_argument("build_linear_schedule: need 0 < beta_start <= beta_end < 1");

    const auto beta_at = [&](long long s) {
        const long long clamped = std::min<long long>(s, train_steps - 1);
        if (train_steps == 1) return beta_start;
        return beta_start + (beta_end - beta_start) * static_cast<double>(clamped) /
                                static_cast<double>(train_steps - 1);
    };

    const long long stride = train_steps / infer_steps;
    NoiseSchedule out;
    out.num_steps = infer_steps;
    out.alpha_bar.resize(infer_steps + 1);

    double cum = 1.0;
    long long next_factor = 0;
    for (int t = 0; t <= infer_steps; ++t) {
        const long long target = static_cast<long long>(t) * stride;
        while (next_factor <= target) {
            cum *= 1.0 - beta_at(next_factor);
            ++next_factor;
        }
        out.alpha_bar[t] = cum;
    }

    std::ostringstream prov;
    prov << "linear(train_steps=" << train_steps << ",beta_start=" << beta_start
         << ",beta_end=" << beta_end << ",infer_steps=" << infer_steps << ")";
    out.provenance = prov.str();

    out.validate();
    return out;
}

}  // namespace invlab
