// Copyright (C) 2026 invlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "invlab/config.hpp"
#include "invlab/engine.hpp"
#include "invlab/metrics.hpp"

namespace invlab {

inline constexpr const char* kVersion = "0.1.0";

struct InstanceRow {
    int instance = 0;
    std::string strategy;
    double final_mse = 0.0;
    double final_psnr = 0.0;
    double final_ssim = 0.0;
    double mean_mismatch_mean_abs = 0.0;  // averaged over steps
    double mean_mismatch_l2 = 0.0;
    double final_deviation_l2 = 0.0;  // deviation at t = 0
    long triangle_steps = 0;
    long triangle_violations = 0;
    double min_triangle_slack = 0.0;
};

struct StrategyAggregate {
    std::string strategy;
    int instances = 0;
    double mean_mse = 0.0, std_mse = 0.0;
    double mean_psnr = 0.0, std_psnr = 0.0;
    double mean_ssim = 0.0, std_ssim = 0.0;
    double mean_mismatch_l2 = 0.0;
    double mean_final_deviation_l2 = 0.0;
    long triangle_steps = 0;
    long triangle_violations = 0;
    double min_triangle_slack = 0.0;
    std::vector<double> mismatch_l2_curve;   // per-step mean over instances, T entries
    std::vector<double> deviation_l2_curve;  // per-step mean over instances, T+1 entries
};

struct RunRecord {
    std::string config_hash;
    ordered_json config_echo;
    std::string version = kVersion;
    std::string precision = "float64";
    std::vector<InstanceRow> rows;
    std::vector<StrategyAggregate> aggregates;
    bool failed = false;
    std::string failure;
    // Host-dependent; reported on the console, never serialized.
    double inversion_seconds = 0.0;
    double reconstruction_seconds = 0.0;
    double total_seconds = 0.0;
};

/// Thrown when a run dies partway; carries the rows completed so far so the
/// caller can flush them with the failure marker set.
struct ExperimentError : std::runtime_error {
    ExperimentError(const std::string& message, RunRecord partial_record)
        : std::runtime_error(message), partial(std::move(partial_record)) {}
    RunRecord partial;
};

using TrajectoryObserver = std::function<void(int instance, const std::string& strategy,
                                              const Trajectory& inversion,
                                              const Trajectory& reconstruction)>;

namespace harness_detail {

inline constexpr std::uint64_t kTagInstanceX0 = stream_tag("instance-x0");
inline constexpr std::uint64_t kTagRunSeed = stream_tag("run-seed");

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Sample standard deviation (n-1 denominator); 0 for a single row.
inline double stddev_of(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace harness_detail

/// Runs every strategy on every seeded instance and aggregates the metric
/// rows. Identical (config, master_seed) yields a bit-identical record. The
/// per-run seed scheme keeps auxiliary-branch draws paired across strategies:
/// rows differ only where their strategies actually consume randomness.
inline RunRecord run_experiment(const ExperimentConfig& cfg, const TrajectoryObserver& observer = {}) {
    validate_config(cfg);

    RunRecord record;
    record.config_echo = config_to_json(cfg);
    record.config_hash = config_hash(cfg);

    const auto clock_start = std::chrono::steady_clock::now();
    const NoiseSchedule sched = build_schedule(cfg.schedule);
    const GaussianMixture mixture = build_mixture(cfg.mixture, cfg.grid);
    const PredictorConfig pred = build_predictor(cfg.predictor, mixture, cfg.grid);

    std::vector<StrategyConfig> strategies;
    for (const auto& spec : cfg.strategies) strategies.push_back(build_strategy(spec, cfg.grid));

    const int T = sched.num_steps;
    struct Accum {
        std::vector<double> mse, psnr, ssim, mismatch_l2, final_dev;
        long tri_steps = 0, tri_violations = 0;
        double min_slack = 0.0;
        bool has_slack = false;
        std::vector<double> mismatch_curve, deviation_curve;
    };
    std::vector<Accum> accum(strategies.size());
    for (auto& a : accum) {
        a.mismatch_curve.assign(T, 0.0);
        a.deviation_curve.assign(T + 1, 0.0);
    }

    try {
        for (int i = 0; i < cfg.instances; ++i) {
            CounterRng x0_rng(substream(cfg.master_seed,
                                        {harness_detail::kTagInstanceX0,
                                         static_cast<std::uint64_t>(i)}));
            const Latent x0 = sample(mixture, x0_rng);

            for (std::size_t si = 0; si < strategies.size(); ++si) {
                StrategyConfig strat = strategies[si];
                const std::uint64_t base = strat.seed != 0 ? strat.seed : cfg.master_seed;
                strat.seed = substream(base, {harness_detail::kTagRunSeed,
                                              static_cast<std::uint64_t>(i)});

                const auto t0 = std::chrono::steady_clock::now();
                const Trajectory inv = run_inversion(strat, pred, sched, x0);
                const auto t1 = std::chrono::steady_clock::now();
                const Trajectory rec =
                    run_reconstruction(strat, pred, sched, inv.latents.back(), make_replay(inv));
                const auto t2 = std::chrono::steady_clock::now();

                MetricsReport report = compute_report(inv, rec, sched, x0, rec.latents.front());
                report.inversion_seconds = std::chrono::duration<double>(t1 - t0).count();
                report.reconstruction_seconds = std::chrono::duration<double>(t2 - t1).count();
                record.inversion_seconds += report.inversion_seconds;
                record.reconstruction_seconds += report.reconstruction_seconds;

                if (observer) observer(i, strat.name, inv, rec);

                InstanceRow row;
                row.instance = i;
                row.strategy = strat.name;
                row.final_mse = report.final_fidelity.mse;
                row.final_psnr = report.final_fidelity.psnr;
                row.final_ssim = report.final_fidelity.ssim;
                double sum_ma = 0.0, sum_l2 = 0.0;
                for (const auto& m : report.step_mismatch) {
                    sum_ma += m.mean_abs;
                    sum_l2 += m.l2;
                }
                row.mean_mismatch_mean_abs = sum_ma / static_cast<double>(T);
                row.mean_mismatch_l2 = sum_l2 / static_cast<double>(T);
                row.final_deviation_l2 = report.deviation.front().l2;
                row.triangle_steps = report.triangle_steps;
                row.triangle_violations = report.triangle_violations;
                row.min_triangle_slack = report.triangle_steps > 0 ? report.min_triangle_slack : 0.0;
                record.rows.push_back(row);

                Accum& a = accum[si];
                a.mse.push_back(row.final_mse);
                a.psnr.push_back(row.final_psnr);
                a.ssim.push_back(row.final_ssim);
                a.mismatch_l2.push_back(row.mean_mismatch_l2);
                a.final_dev.push_back(row.final_deviation_l2);
                a.tri_steps += row.triangle_steps;
                a.tri_violations += row.triangle_violations;
                if (row.triangle_steps > 0 &&
                    (!a.has_slack || row.min_triangle_slack < a.min_slack)) {
                    a.min_slack = row.min_triangle_slack;
                    a.has_slack = true;
                }
                for (int t = 0; t < T; ++t) a.mismatch_curve[t] += report.step_mismatch[t].l2;
                for (int t = 0; t <= T; ++t) a.deviation_curve[t] += report.deviation[t].l2;
            }
        }
    } catch (const std::exception& e) {
        record.failed = true;
        record.failure = e.what();
        throw ExperimentError(e.what(), std::move(record));
    }

    for (std::size_t si = 0; si < strategies.size(); ++si) {
        const Accum& a = accum[si];
        StrategyAggregate agg;
        agg.strategy = strategies[si].name;
        agg.instances = cfg.instances;
        agg.mean_mse = harness_detail::mean_of(a.mse);
        agg.std_mse = harness_detail::stddev_of(a.mse, agg.mean_mse);
        agg.mean_psnr = harness_detail::mean_of(a.psnr);
        agg.std_psnr = harness_detail::stddev_of(a.psnr, agg.mean_psnr);
        agg.mean_ssim = harness_detail::mean_of(a.ssim);
        agg.std_ssim = harness_detail::stddev_of(a.ssim, agg.mean_ssim);
        agg.mean_mismatch_l2 = harness_detail::mean_of(a.mismatch_l2);
        agg.mean_final_deviation_l2 = harness_detail::mean_of(a.final_dev);
        agg.triangle_steps = a.tri_steps;
        agg.triangle_violations = a.tri_violations;
        agg.min_triangle_slack = a.has_slack ? a.min_slack : 0.0;
        agg.mismatch_l2_curve = a.mismatch_curve;
        agg.deviation_l2_curve = a.deviation_curve;
        const double inv_m = 1.0 / static_cast<double>(cfg.instances);
        for (double& v : agg.mismatch_l2_curve) v *= inv_m;
        for (double& v : agg.deviation_l2_curve) v *= inv_m;
        record.aggregates.push_back(std::move(agg));
    }

    record.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
    return record;
}

/// Ablation presets. Each replaces the base config's strategy list with a
/// fixed comparison set and runs it; a naive baseline row rides along where
/// the comparison needs one.
inline std::vector<StrategySpec> ablation_strategies(const std::string& preset) {
    const auto mbdi_i = [] {
        StrategySpec s;
        s.variant = "mbdi";
        s.branches = 4;
        s.branch_source = "independent-samples";
        return s;
    };
    const auto mc_i = [](int m) {
        StrategySpec s;
        s.variant = "mc";
        s.branches = 4;
        s.branch_source = "independent-samples";
        s.samples_per_step = m;
        return s;
    };
    const auto freeinv = [](const std::string& pool) {
        StrategySpec s;
        s.variant = "freeinv";
        s.pool.name = pool;
        return s;
    };

    if (preset == "mc-count") return {mbdi_i(), mc_i(1), mc_i(2), mc_i(4)};
    if (preset == "branch-type") {
        StrategySpec naive;
        StrategySpec mbdi_r = mbdi_i();
        mbdi_r.branch_source = "rotations-of-input";
        return {naive, mbdi_i(), mbdi_r, freeinv("rotations")};
    }
    if (preset == "transform-type") {
        StrategySpec naive;
        return {naive,          freeinv("flips"),       freeinv("patch-shuffle"),
                freeinv("value-jitter"), freeinv("rotations"), freeinv("combination")};
    }
    throw std::invalid_argument("unknown ablation preset '" + preset +
                                "' (expected mc-count, branch-type or transform-type)");
}

inline RunRecord ablate(const std::string& preset, ExperimentConfig base,
                        const TrajectoryObserver& observer = {}) {
    base.strategies = ablation_strategies(preset);
    return run_experiment(base, observer);
}

}  // namespace invlab
