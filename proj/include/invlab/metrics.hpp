// Copyright (C) 2026 invlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "invlab/engine.hpp"
#include "invlab/grid.hpp"
#include "invlab/schedule.hpp"

namespace invlab {

struct StepMismatch {
    double mean_abs = 0.0;
    double l2 = 0.0;
};

/// Per-step predictor discrepancy between the reconstruction-side and the
/// inversion-side noise. mean_abs is the primary statistic; the L2 norm is
/// recorded alongside because the step-error identity and the ensemble bound
/// hold for it verbatim.
inline StepMismatch mismatch(const Latent& noise_inv, const Latent& noise_rec) {
    return {mean_abs_diff(noise_inv, noise_rec), l2_diff(noise_inv, noise_rec)};
}

/// Single-step reconstruction error implied by a given noise mismatch:
/// sqrt(abar_t) * eta_t * mismatch.
inline double step_bound(const NoiseSchedule& sched, int t, double mismatch_l2) {
    if (t < 0 || t >= sched.num_steps)
        throw std::out_of_range("step_bound: step " + std::to_string(t) + " out of range");
    return std::sqrt(sched.alpha_bar[t]) * eta(sched, t) * mismatch_l2;
}

struct TriangleResult {
    bool holds = false;
    double slack = 0.0;  // mean branch mismatch minus ensemble mismatch
};

/// Ensemble-vs-branches bound: the mismatch of the uniform ensemble noise can
/// never exceed the mean of the per-branch mismatches. The tolerance scales
/// with max(1, mean) so the check is meaningful near zero.
inline TriangleResult triangle_check(const std::vector<double>& branch_mismatches_l2,
                                     double ensemble_mismatch_l2) {
    if (branch_mismatches_l2.empty())
        throw std::invalid_argument("triangle_check: need at least one branch");
    double mean = 0.0;
    for (double v : branch_mismatches_l2) mean += v;
    mean /= static_cast<double>(branch_mismatches_l2.size());
    const double scale = std::max(1.0, mean);
    return {ensemble_mismatch_l2 <= mean + 1e-12 * scale, mean - ensemble_mismatch_l2};
}

struct Fidelity {
    double mse = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    bool peak_floored = false;  // reference dynamic range hit the 1e-6 floor
};

inline constexpr double kPsnrCap = 200.0;
inline constexpr int kSsimWindow = 8;

namespace detail {

/// SSIM with a uniform window slid at stride 1, computed per channel and
/// averaged. Window statistics use the plain 1/N moments; stabilizers are
/// C1=(0.01*peak)^2, C2=(0.03*peak)^2 from the reference dynamic range.
inline double ssim_uniform(const Latent& ref, const Latent& cand, double peak) {
    const int h = ref.shape.h, w = ref.shape.w, c = ref.shape.c;
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const double n = static_cast<double>(kSsimWindow) * kSsimWindow;

    double total = 0.0;
    long windows = 0;
    for (int ch = 0; ch < c; ++ch) {
        for (int r0 = 0; r0 + kSsimWindow <= h; ++r0) {
            for (int c0 = 0; c0 + kSsimWindow <= w; ++c0) {
                double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
                for (int r = r0; r < r0 + kSsimWindow; ++r) {
                    for (int col = c0; col < c0 + kSsimWindow; ++col) {
                        const double x = ref.at(r, col, ch);
                        const double y = cand.at(r, col, ch);
                        sx += x;
                        sy += y;
                        sxx += x * x;
                        syy += y * y;
                        sxy += x * y;
                    }
                }
                const double mx = sx / n;
                const double my = sy / n;
                const double vx = sxx / n - mx * mx;
                const double vy = syy / n - my * my;
                const double cov = sxy / n - mx * my;
                const double val = ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                                   ((mx * mx + my * my + c1) * (vx + vy + c2));
                total += val;
                ++windows;
            }
        }
    }
    return total / static_cast<double>(windows);
}

}  // namespace detail

/// MSE, PSNR and SSIM of candidate against reference. PSNR uses the
/// reference's dynamic range as peak (latents are not 8-bit images), floored
/// at 1e-6 for degenerate references, and is capped at 200 dB when MSE is 0.
inline Fidelity fidelity(const Latent& reference, const Latent& candidate) {
    require_same_shape(reference, candidate, "fidelity");
    require_finite(reference, "fidelity: reference");
    require_finite(candidate, "fidelity: candidate");
    if (reference.shape.h < kSsimWindow || reference.shape.w < kSsimWindow)
        throw std::invalid_argument("fidelity: SSIM needs H, W >= " + std::to_string(kSsimWindow));

    Fidelity out;
    double sq = 0.0;
    for (std::size_t j = 0; j < reference.data.size(); ++j) {
        const double d = candidate.data[j] - reference.data[j];
        sq += d * d;
    }
    out.mse = sq / static_cast<double>(reference.data.size());

    const auto [min_it, max_it] = std::minmax_element(reference.data.begin(), reference.data.end());
    double peak = *max_it - *min_it;
    if (peak < 1e-6) {
        peak = 1e-6;
        out.peak_floored = true;
    }
    out.psnr = out.mse == 0.0 ? kPsnrCap : 10.0 * std::log10(peak * peak / out.mse);
    out.ssim = detail::ssim_uniform(reference, candidate, peak);
    return out;
}

/// Gap between the reconstruction latent and the inversion latent at the same
/// index, for t = 0..T. The entry at t = T is zero by construction (shared
/// terminal latent).
inline std::vector<StepMismatch> deviation_curve(const Trajectory& traj_inv,
                                                 const Trajectory& traj_rec) {
    if (traj_inv.latents.size() != traj_rec.latents.size())
        throw std::invalid_argument("deviation_curve: trajectory lengths differ");
    std::vector<StepMismatch> curve(traj_inv.latents.size());
    for (std::size_t t = 0; t < curve.size(); ++t)
        curve[t] = mismatch(traj_inv.latents[t], traj_rec.latents[t]);
    return curve;
}

/// Everything measured about one inversion/reconstruction pair.
struct MetricsReport {
    std::vector<StepMismatch> step_mismatch;  // T entries, effective noises
    std::vector<StepMismatch> deviation;      // T+1 entries
    std::vector<double> bound;                // T entries, sqrt(abar)*eta*mismatch_l2
    std::vector<TriangleResult> triangle;     // per step, when branch panels exist
    long triangle_steps = 0;
    long triangle_violations = 0;
    double min_triangle_slack = 0.0;
    Fidelity final_fidelity;
    double inversion_seconds = 0.0;      // excluded from emitted files
    double reconstruction_seconds = 0.0;  // excluded from emitted files
};

inline MetricsReport compute_report(const Trajectory& inv, const Trajectory& rec,
                                    const NoiseSchedule& sched, const Latent& x0,
                                    const Latent& x0_hat) {
    if (static_cast<int>(inv.effective_noise.size()) != sched.num_steps ||
        static_cast<int>(rec.effective_noise.size()) != sched.num_steps)
        throw std::invalid_argument("compute_report: trajectory step counts do not match the schedule");

    MetricsReport report;
    report.step_mismatch.resize(sched.num_steps);
    report.bound.resize(sched.num_steps);
    for (int t = 0; t < sched.num_steps; ++t) {
        report.step_mismatch[t] = mismatch(inv.effective_noise[t], rec.effective_noise[t]);
        report.bound[t] = step_bound(sched, t, report.step_mismatch[t].l2);
    }
    report.deviation = deviation_curve(inv, rec);

    const bool panels = !inv.branch_noise.empty() && !rec.branch_noise.empty();
    if (panels) {
        bool first = true;
        for (int t = 0; t < sched.num_steps; ++t) {
            const auto& pinv = inv.branch_noise[t];
            const auto& prec = rec.branch_noise[t];
            std::vector<double> branch_l2(pinv.size());
            for (std::size_t b = 0; b < pinv.size(); ++b) branch_l2[b] = l2_diff(pinv[b], prec[b]);
            const double ens_l2 = l2_diff(inv.ensemble_noise[t], rec.ensemble_noise[t]);
            const TriangleResult tri = triangle_check(branch_l2, ens_l2);
            report.triangle.push_back(tri);
            ++report.triangle_steps;
            if (!tri.holds) ++report.triangle_violations;
            if (first || tri.slack < report.min_triangle_slack) report.min_triangle_slack = tri.slack;
            first = false;
        }
    }

    report.final_fidelity = fidelity(x0, x0_hat);
    return report;
}

}  // namespace invlab
