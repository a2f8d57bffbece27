// Copyright (C) 2026 invlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "invlab/grid.hpp"
#include "invlab/mixture.hpp"
#include "invlab/predictor.hpp"
#include "invlab/rng.hpp"
#include "invlab/schedule.hpp"
#include "invlab/transform.hpp"

namespace invlab {

enum class StrategyVariant { Naive, Mbdi, Mc, FreeInv };
enum class BranchSource { IndependentSamples, RotationsOfInput };
enum class Direction { Inversion, Reconstruction };

inline const char* variant_name(StrategyVariant v) {
    switch (v) {
        case StrategyVariant::Naive: return "naive";
        case StrategyVariant::Mbdi: return "mbdi";
        case StrategyVariant::Mc: return "mc";
        case StrategyVariant::FreeInv: return "freeinv";
    }
    return "?";
}

/// How each step's effective noise is formed.
///   naive   : predict at the current latent.
///   mbdi    : N branches advanced together with the uniform average of their
///             branch predictions.
///   mc      : N branches advanced with the average of m one-hot draws over
///             the branch predictions (m = 1 selects a single branch).
///   freeinv : a single latent; each step predicts at a transformed copy,
///             the transform drawn per step from a pool and replayed at the
///             matching reconstruction step.
struct StrategyConfig {
    StrategyVariant variant = StrategyVariant::Naive;
    std::string name;  // row label; filled with a default when empty
    int branches = 1;  // N
    BranchSource branch_source = BranchSource::IndependentSamples;
    int samples_per_step = 1;     // m (mc only)
    bool replay_selection = false;  // mc: reuse the inversion draws during reconstruction
    TransformPool pool;           // freeinv only
    bool inverse_noise_transform = false;  // freeinv: un-transform the predicted noise
    std::uint64_t seed = 0;

    bool uses_branches() const {
        return variant == StrategyVariant::Mbdi || variant == StrategyVariant::Mc;
    }

    void validate(GridShape shape) const {
        if (uses_branches()) {
            if (branches < 1) throw std::invalid_argument("StrategyConfig: branches must be >= 1");
            if (branch_source == BranchSource::RotationsOfInput) {
                if (branches != 4)
                    throw std::invalid_argument(
                        "StrategyConfig: rotations-of-input requires exactly 4 branches");
                if (shape.h != shape.w)
                    throw std::invalid_argument(
                        "StrategyConfig: rotations-of-input requires a square grid, got " +
                        shape.str());
            }
        }
        if (variant == StrategyVariant::Mc && samples_per_step < 1)
            throw std::invalid_argument("StrategyConfig: samples_per_step must be >= 1");
        if (variant == StrategyVariant::FreeInv) {
            if (pool.generators.empty())
                throw std::invalid_argument("StrategyConfig: freeinv pool must be non-empty");
            if (pool_needs_square(pool) && shape.h != shape.w)
                throw std::invalid_argument("StrategyConfig: rotation pool requires a square grid, got " +
                                            shape.str());
        }
    }
};

inline StrategyConfig naive_strategy() { return {}; }

inline StrategyConfig mbdi_strategy(int branches, BranchSource source) {
    StrategyConfig s;
    s.variant = StrategyVariant::Mbdi;
    s.branches = branches;
    s.branch_source = source;
    return s;
}

inline StrategyConfig mc_strategy(int branches, BranchSource source, int samples_per_step) {
    StrategyConfig s;
    s.variant = StrategyVariant::Mc;
    s.branches = branches;
    s.branch_source = source;
    s.samples_per_step = samples_per_step;
    return s;
}

inline StrategyConfig freeinv_strategy(TransformPool pool, bool inverse_noise_transform = false) {
    StrategyConfig s;
    s.variant = StrategyVariant::FreeInv;
    s.pool = std::move(pool);
    s.inverse_noise_transform = inverse_noise_transform;
    return s;
}

/// One recorded pass, inversion or reconstruction. latents[t] is indexed by
/// schedule position regardless of direction; effective_noise[t] is the noise
/// the step from t to t+1 (or back) actually applied. branch_* fields are
/// filled for branch strategies; the metric panels (branch_noise,
/// ensemble_noise) also exist for freeinv over fixed pools, where the pool
/// entries play the role of implicit branches.
struct Trajectory {
    Direction direction = Direction::Inversion;
    std::vector<Latent> latents;                      // T+1
    std::vector<Latent> effective_noise;              // T
    std::vector<std::vector<Latent>> branch_latents;  // N x (T+1)
    std::vector<std::vector<Latent>> branch_noise;    // T x N
    std::vector<Latent> ensemble_noise;               // T, uniform average of the panel
    std::optional<TransformSchedule> schedule;        // freeinv
    std::vector<std::vector<int>> mc_selection;       // T x m
    std::uint64_t run_seed = 0;
};

/// Everything a reconstruction needs from its matching inversion: the
/// terminal latent of every branch, the recorded transform schedule, the
/// recorded one-hot draws, and the run seed.
struct ReplayInfo {
    std::vector<Latent> branch_terminals;  // index 0 is the target branch
    std::optional<TransformSchedule> schedule;
    std::vector<std::vector<int>> mc_selection;
    std::uint64_t run_seed = 0;
};

inline ReplayInfo make_replay(const Trajectory& inversion) {
    if (inversion.direction != Direction::Inversion)
        throw std::invalid_argument("make_replay: trajectory is not an inversion");
    ReplayInfo info;
    if (!inversion.branch_latents.empty()) {
        for (const auto& branch : inversion.branch_latents) info.branch_terminals.push_back(branch.back());
    } else {
        info.branch_terminals.push_back(inversion.latents.back());
    }
    info.schedule = inversion.schedule;
    info.mc_selection = inversion.mc_selection;
    info.run_seed = inversion.run_seed;
    return info;
}

// ---------------------------------------------------------------------------
// Single-step updates
// ---------------------------------------------------------------------------

/// x_{t+1} = sqrt(abar_{t+1}) * (x_t / sqrt(abar_t) + eta_t * noise)
inline Latent invert_step(const Latent& x_t, int t, const Latent& noise,
                          const NoiseSchedule& sched) {
    if (t < 0 || t >= sched.num_steps)
        throw std::out_of_range("invert_step: step " + std::to_string(t) + " out of range");
    require_finite(x_t, "invert_step: x_t");
    require_finite(noise, "invert_step: noise");
    require_same_shape(x_t, noise, "invert_step");

    const double root_a0 = std::sqrt(sched.alpha_bar[t]);
    const double root_a1 = std::sqrt(sched.alpha_bar[t + 1]);
    const double eta_t = eta(sched, t);
    Latent out(x_t.shape);
    for (std::size_t j = 0; j < out.data.size(); ++j)
        out.data[j] = root_a1 * (x_t.data[j] / root_a0 + eta_t * noise.data[j]);
    return out;
}

/// x_t = sqrt(abar_t) * (x_{t+1} / sqrt(abar_{t+1}) - eta_t * noise)
inline Latent reconstruct_step(const Latent& x_next, int t, const Latent& noise,
                               const NoiseSchedule& sched) {
    if (t < 0 || t >= sched.num_steps)
        throw std::out_of_range("reconstruct_step: step " + std::to_string(t) + " out of range");
    require_finite(x_next, "reconstruct_step: x_next");
    require_finite(noise, "reconstruct_step: noise");
    require_same_shape(x_next, noise, "reconstruct_step");

    const double root_a0 = std::sqrt(sched.alpha_bar[t]);
    const double root_a1 = std::sqrt(sched.alpha_bar[t + 1]);
    const double eta_t = eta(sched, t);
    Latent out(x_next.shape);
    for (std::size_t j = 0; j < out.data.size(); ++j)
        out.data[j] = root_a0 * (x_next.data[j] / root_a1 - eta_t * noise.data[j]);
    return out;
}

// ---------------------------------------------------------------------------
// Per-step noise assembly
// ---------------------------------------------------------------------------

/// Uniform average of the branch predictions at schedule index query_index.
inline Latent ensemble_noise_mbdi(const std::vector<Latent>& branches, int query_index,
                                  const PredictorConfig& pred, const NoiseSchedule& sched) {
    if (branches.empty()) throw std::invalid_argument("ensemble_noise_mbdi: no branches");
    if (branches.size() == 1) return predict_noise(pred, sched, branches[0], query_index);
    Latent acc = predict_noise(pred, sched, branches[0], query_index);
    for (std::size_t i = 1; i < branches.size(); ++i) {
        const Latent p = predict_noise(pred, sched, branches[i], query_index);
        for (std::size_t j = 0; j < acc.data.size(); ++j) acc.data[j] += p.data[j];
    }
    const double inv_n = 1.0 / static_cast<double>(branches.size());
    for (double& v : acc.data) v *= inv_n;
    return acc;
}

inline std::vector<int> draw_mc_selection(int n_branches, int m, CounterRng& rng) {
    std::vector<int> sel(m);
    for (int i = 0; i < m; ++i)
        sel[i] = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n_branches)));
    return sel;
}

/// Average of the branch predictions picked by an explicit one-hot selection
/// list. A single branch (or a single draw) passes the prediction through
/// untouched so the N=1 and m=1 cases stay bit-identical to the plain paths.
inline Latent ensemble_noise_mc(const std::vector<Latent>& branches, int query_index,
                                const PredictorConfig& pred, const NoiseSchedule& sched,
                                const std::vector<int>& selection) {
    if (branches.empty()) throw std::invalid_argument("ensemble_noise_mc: no branches");
    if (selection.empty()) throw std::invalid_argument("ensemble_noise_mc: empty selection");
    for (int s : selection)
        if (s < 0 || s >= static_cast<int>(branches.size()))
            throw std::invalid_argument("ensemble_noise_mc: selection index out of range");

    if (branches.size() == 1) return predict_noise(pred, sched, branches[0], query_index);
    if (selection.size() == 1) return predict_noise(pred, sched, branches[selection[0]], query_index);

    std::vector<std::optional<Latent>> cache(branches.size());
    const auto pred_for = [&](int i) -> const Latent& {
        if (!cache[i]) cache[i] = predict_noise(pred, sched, branches[i], query_index);
        return *cache[i];
    };
    Latent acc(branches[0].shape);
    for (int s : selection) {
        const Latent& p = pred_for(s);
        for (std::size_t j = 0; j < acc.data.size(); ++j) acc.data[j] += p.data[j];
    }
    const double inv_m = 1.0 / static_cast<double>(selection.size());
    for (double& v : acc.data) v *= inv_m;
    return acc;
}

/// Draws m fresh one-hot selections uniformly over the branches and averages
/// the selected predictions; m = 1 is the single-draw case.
inline Latent ensemble_noise_mc(const std::vector<Latent>& branches, int query_index,
                                const PredictorConfig& pred, const NoiseSchedule& sched, int m,
                                CounterRng& rng) {
    if (m < 1) throw std::invalid_argument("ensemble_noise_mc: m must be >= 1");
    const auto sel = draw_mc_selection(static_cast<int>(branches.size()), m, rng);
    return ensemble_noise_mc(branches, query_index, pred, sched, sel);
}

/// Predicts at the transformed latent; optionally maps the prediction back
/// through the inverse transform.
inline Latent freeinv_noise(const Latent& x, int query_index, const TransformSpec& spec,
                            const PredictorConfig& pred, const NoiseSchedule& sched,
                            bool inverse_noise_transform) {
    const Latent n = predict_noise(pred, sched, apply(spec, x), query_index);
    if (inverse_noise_transform) return apply(invert(spec), n);
    return n;
}

// ---------------------------------------------------------------------------
// Full trajectory runs
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::uint64_t kTagAux = stream_tag("aux-branch");
inline constexpr std::uint64_t kTagSchedule = stream_tag("transform-schedule");
inline constexpr std::uint64_t kTagMcInv = stream_tag("mc-inversion");
inline constexpr std::uint64_t kTagMcRec = stream_tag("mc-reconstruction");

inline std::vector<Latent> initial_branches(const StrategyConfig& strat,
                                            const PredictorConfig& pred, const Latent& x0) {
    std::vector<Latent> branches;
    branches.push_back(x0);
    if (strat.branch_source == BranchSource::IndependentSamples) {
        if (strat.branches > 1 && pred.mixture.components.empty())
            throw std::invalid_argument(
                "independent-samples branches need a mixture to draw from");
        for (int b = 1; b < strat.branches; ++b) {
            CounterRng rng(substream(strat.seed, {kTagAux, static_cast<std::uint64_t>(b)}));
            branches.push_back(sample(pred.mixture, rng));
        }
    } else {
        for (int k = 1; k <= 3; ++k) branches.push_back(apply(make_rotate(k), x0));
    }
    return branches;
}

inline std::vector<Latent> panel_predictions(const std::vector<Latent>& branches, int query_index,
                                             const PredictorConfig& pred,
                                             const NoiseSchedule& sched) {
    std::vector<Latent> panel;
    panel.reserve(branches.size());
    for (const auto& b : branches) panel.push_back(predict_noise(pred, sched, b, query_index));
    return panel;
}

inline Latent panel_average(const std::vector<Latent>& panel) {
    Latent acc = panel[0];
    for (std::size_t i = 1; i < panel.size(); ++i)
        for (std::size_t j = 0; j < acc.data.size(); ++j) acc.data[j] += panel[i].data[j];
    const double inv_n = 1.0 / static_cast<double>(panel.size());
    for (double& v : acc.data) v *= inv_n;
    return acc;
}

/// Implicit-branch panel for freeinv over a fixed pool: raw predictions at
/// every pool copy of x (no inverse transform applied).
inline std::vector<Latent> freeinv_panel(const std::vector<TransformGenerator>& generators,
                                         const Latent& x, int query_index,
                                         const PredictorConfig& pred, const NoiseSchedule& sched) {
    std::vector<Latent> panel;
    panel.reserve(generators.size());
    for (const auto& g : generators)
        panel.push_back(predict_noise(pred, sched, apply(g.fixed, x), query_index));
    return panel;
}

}  // namespace detail

/// Runs the full inversion pass t = 0..T-1 and records everything the
/// matching reconstruction and the metrics need. Every recorded number is a
/// pure function of (strategy, predictor, schedule, x0, strategy.seed).
inline Trajectory run_inversion(const StrategyConfig& strat, const PredictorConfig& pred,
                                const NoiseSchedule& sched, const Latent& x0) {
    strat.validate(x0.shape);
    pred.validate();
    sched.validate();
    require_finite(x0, "run_inversion: x0");

    const int T = sched.num_steps;
    Trajectory traj;
    traj.direction = Direction::Inversion;
    traj.run_seed = strat.seed;

    const bool panels = strat.uses_branches() ||
                        (strat.variant == StrategyVariant::FreeInv && pool_is_fixed(strat.pool) &&
                         strat.pool.generators.size() > 1);

    switch (strat.variant) {
        case StrategyVariant::Naive: {
            traj.latents.push_back(x0);
            for (int t = 0; t < T; ++t) {
                const Latent n = predict_noise(pred, sched, traj.latents[t], t + 1);
                traj.effective_noise.push_back(n);
                traj.latents.push_back(invert_step(traj.latents[t], t, n, sched));
            }
            break;
        }
        case StrategyVariant::Mbdi:
        case StrategyVariant::Mc: {
            std::vector<Latent> branches = detail::initial_branches(strat, pred, x0);
            traj.branch_latents.assign(branches.size(), {});
            for (std::size_t b = 0; b < branches.size(); ++b) traj.branch_latents[b].push_back(branches[b]);
            traj.latents.push_back(x0);
            for (int t = 0; t < T; ++t) {
                const auto panel = detail::panel_predictions(branches, t + 1, pred, sched);
                Latent effective;
                if (strat.variant == StrategyVariant::Mbdi) {
                    effective = detail::panel_average(panel);
                } else {
                    CounterRng rng(substream(strat.seed,
                                             {detail::kTagMcInv, static_cast<std::uint64_t>(t)}));
                    auto sel = draw_mc_selection(static_cast<int>(branches.size()),
                                                 strat.samples_per_step, rng);
                    if (sel.size() == 1) {
                        effective = panel[sel[0]];
                    } else {
                        Latent acc(panel[0].shape);
                        for (int s : sel)
                            for (std::size_t j = 0; j < acc.data.size(); ++j)
                                acc.data[j] += panel[s].data[j];
                        const double inv_m = 1.0 / static_cast<double>(sel.size());
                        for (double& v : acc.data) v *= inv_m;
                        effective = acc;
                    }
                    traj.mc_selection.push_back(std::move(sel));
                }
                for (auto& b : branches) b = invert_step(b, t, effective, sched);
                for (std::size_t b = 0; b < branches.size(); ++b)
                    traj.branch_latents[b].push_back(branches[b]);
                traj.latents.push_back(branches[0]);
                traj.ensemble_noise.push_back(detail::panel_average(panel));
                traj.branch_noise.push_back(panel);
                traj.effective_noise.push_back(std::move(effective));
            }
            break;
        }
        case StrategyVariant::FreeInv: {
            traj.schedule = sample_schedule(strat.pool, T, substream(strat.seed, detail::kTagSchedule),
                                            x0.shape);
            traj.latents.push_back(x0);
            for (int t = 0; t < T; ++t) {
                const TransformSpec& spec = traj.schedule->specs[t];
                const Latent n = freeinv_noise(traj.latents[t], t + 1, spec, pred, sched,
                                               strat.inverse_noise_transform);
                if (panels) {
                    auto panel = detail::freeinv_panel(strat.pool.generators, traj.latents[t],
                                                       t + 1, pred, sched);
                    traj.ensemble_noise.push_back(detail::panel_average(panel));
                    traj.branch_noise.push_back(std::move(panel));
                }
                traj.effective_noise.push_back(n);
                traj.latents.push_back(invert_step(traj.latents[t], t, n, sched));
            }
            break;
        }
    }

    for (const auto& l : traj.latents) require_finite(l, "run_inversion: latent");
    return traj;
}

/// Runs the reconstruction pass t = T-1..0 from the terminal latent, driven
/// by the replay record of a matching inversion. FreeInv consumes the
/// recorded transform schedule (validated against its provenance first); MC
/// redraws its one-hot selections from an independent substream unless
/// replay_selection is set.
inline Trajectory run_reconstruction(const StrategyConfig& strat, const PredictorConfig& pred,
                                     const NoiseSchedule& sched, const Latent& x_terminal,
                                     const ReplayInfo& replay) {
    strat.validate(x_terminal.shape);
    pred.validate();
    sched.validate();
    require_finite(x_terminal, "run_reconstruction: x_terminal");

    const int T = sched.num_steps;
    Trajectory traj;
    traj.direction = Direction::Reconstruction;
    traj.run_seed = replay.run_seed;
    traj.latents.assign(T + 1, Latent{});
    traj.effective_noise.assign(T, Latent{});
    traj.latents[T] = x_terminal;

    const bool panels = strat.uses_branches() ||
                        (strat.variant == StrategyVariant::FreeInv && pool_is_fixed(strat.pool) &&
                         strat.pool.generators.size() > 1);
    if (panels) {
        traj.branch_noise.assign(T, {});
        traj.ensemble_noise.assign(T, Latent{});
    }

    switch (strat.variant) {
        case StrategyVariant::Naive: {
            for (int t = T - 1; t >= 0; --t) {
                const Latent n = predict_noise(pred, sched, traj.latents[t + 1], t + 1);
                traj.latents[t] = reconstruct_step(traj.latents[t + 1], t, n, sched);
                traj.effective_noise[t] = n;
            }
            break;
        }
        case StrategyVariant::Mbdi:
        case StrategyVariant::Mc: {
            if (static_cast<int>(replay.branch_terminals.size()) != strat.branches)
                throw std::runtime_error("run_reconstruction: replay has " +
                                         std::to_string(replay.branch_terminals.size()) +
                                         " branch terminals, strategy expects " +
                                         std::to_string(strat.branches));
            if (!(replay.branch_terminals[0] == x_terminal))
                throw std::runtime_error(
                    "run_reconstruction: x_terminal does not match the replayed target branch");
            if (strat.variant == StrategyVariant::Mc && strat.replay_selection &&
                static_cast<int>(replay.mc_selection.size()) != T)
                throw std::runtime_error("run_reconstruction: replay has no usable mc selections");

            std::vector<Latent> branches = replay.branch_terminals;
            traj.branch_latents.assign(branches.size(), std::vector<Latent>(T + 1, Latent{}));
            for (std::size_t b = 0; b < branches.size(); ++b) traj.branch_latents[b][T] = branches[b];
            if (strat.variant == StrategyVariant::Mc) traj.mc_selection.assign(T, {});

            for (int t = T - 1; t >= 0; --t) {
                const auto panel = detail::panel_predictions(branches, t + 1, pred, sched);
                Latent effective;
                if (strat.variant == StrategyVariant::Mbdi) {
                    effective = detail::panel_average(panel);
                } else {
                    std::vector<int> sel;
                    if (strat.replay_selection) {
                        sel = replay.mc_selection[t];
                        for (int s : sel)
                            if (s < 0 || s >= static_cast<int>(branches.size()))
                                throw std::runtime_error(
                                    "run_reconstruction: replayed mc selection out of range");
                    } else {
                        CounterRng rng(substream(replay.run_seed,
                                                 {detail::kTagMcRec, static_cast<std::uint64_t>(t)}));
                        sel = draw_mc_selection(static_cast<int>(branches.size()),
                                                strat.samples_per_step, rng);
                    }
                    if (sel.size() == 1) {
                        effective = panel[sel[0]];
                    } else {
                        Latent acc(panel[0].shape);
                        for (int s : sel)
                            for (std::size_t j = 0; j < acc.data.size(); ++j)
                                acc.data[j] += panel[s].data[j];
                        const double inv_m = 1.0 / static_cast<double>(sel.size());
                        for (double& v : acc.data) v *= inv_m;
                        effective = acc;
                    }
                    traj.mc_selection[t] = sel;
                }
                for (auto& b : branches) b = reconstruct_step(b, t, effective, sched);
                for (std::size_t b = 0; b < branches.size(); ++b) traj.branch_latents[b][t] = branches[b];
                traj.latents[t] = branches[0];
                traj.ensemble_noise[t] = detail::panel_average(panel);
                traj.branch_noise[t] = panel;
                traj.effective_noise[t] = std::move(effective);
            }
            break;
        }
        case StrategyVariant::FreeInv: {
            if (!replay.schedule)
                throw std::runtime_error("run_reconstruction: freeinv replay lacks a transform schedule");
            if (static_cast<int>(replay.schedule->specs.size()) != T)
                throw std::runtime_error("run_reconstruction: transform schedule length " +
                                         std::to_string(replay.schedule->specs.size()) +
                                         " does not match T=" + std::to_string(T));
            validate_schedule(*replay.schedule, x_terminal.shape);
            traj.schedule = replay.schedule;

            for (int t = T - 1; t >= 0; --t) {
                const TransformSpec& spec = traj.schedule->specs[t];
                const Latent n = freeinv_noise(traj.latents[t + 1], t + 1, spec, pred, sched,
                                               strat.inverse_noise_transform);
                if (panels) {
                    auto panel = detail::freeinv_panel(strat.pool.generators, traj.latents[t + 1],
                                                       t + 1, pred, sched);
                    traj.ensemble_noise[t] = detail::panel_average(panel);
                    traj.branch_noise[t] = std::move(panel);
                }
                traj.latents[t] = reconstruct_step(traj.latents[t + 1], t, n, sched);
                traj.effective_noise[t] = n;
            }
            break;
        }
    }

    for (const auto& l : traj.latents) require_finite(l, "run_reconstruction: latent");
    return traj;
}

}  // namespace invlab
