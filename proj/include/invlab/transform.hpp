// Copyright (C) 2026 invlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "invlab/grid.hpp"
#include "invlab/rng.hpp"

namespace invlab {

enum class TransformKind { Identity, Rotate, FlipH, FlipV, PatchShuffle, ValueJitter };

/// Invertible latent transformation. Identity, rotations, flips and patch
/// shuffles permute grid entries exactly (orthogonal, value-preserving);
/// value-jitter is affine on values (x -> scale*x + shift).
struct TransformSpec {
    TransformKind kind = TransformKind::Identity;
    int quarter_turns = 0;        // Rotate: 1..3 clockwise quarter-turns
    int patch_size = 0;           // PatchShuffle
    std::vector<int> patch_perm;  // PatchShuffle: output patch i copies input patch perm[i]
    double scale = 1.0;           // ValueJitter
    double shift = 0.0;           // ValueJitter

    bool value_preserving() const { return kind != TransformKind::ValueJitter; }
    bool operator==(const TransformSpec&) const = default;

    std::string str() const {
        switch (kind) {
            case TransformKind::Identity: return "identity";
            case TransformKind::Rotate: return "rotate(" + std::to_string(quarter_turns) + ")";
            case TransformKind::FlipH: return "flip-h";
            case TransformKind::FlipV: return "flip-v";
            case TransformKind::PatchShuffle: {
                std::string s = "patch-shuffle(p=" + std::to_string(patch_size) + ",perm=[";
                for (std::size_t i = 0; i < patch_perm.size(); ++i)
                    s += (i ? "," : "") + std::to_string(patch_perm[i]);
                return s + "])";
            }
            case TransformKind::ValueJitter:
                return "value-jitter(scale=" + std::to_string(scale) +
                       ",shift=" + std::to_string(shift) + ")";
        }
        return "?";
    }
};

inline TransformSpec make_identity() { return {}; }

inline TransformSpec make_rotate(int quarter_turns) {
    if (quarter_turns < 1 || quarter_turns > 3)
        throw std::invalid_argument("make_rotate: quarter_turns must be in 1..3");
    TransformSpec s;
    s.kind = TransformKind::Rotate;
    s.quarter_turns = quarter_turns;
    return s;
}

inline TransformSpec make_flip_h() {
    TransformSpec s;
    s.kind = TransformKind::FlipH;
    return s;
}

inline TransformSpec make_flip_v() {
    TransformSpec s;
    s.kind = TransformKind::FlipV;
    return s;
}

inline TransformSpec make_patch_shuffle(int patch_size, std::vector<int> perm) {
    if (patch_size < 1) throw std::invalid_argument("make_patch_shuffle: patch_size must be >= 1");
    std::vector<char> seen(perm.size(), 0);
    for (int p : perm) {
        if (p < 0 || p >= static_cast<int>(perm.size()) || seen[p])
            throw std::invalid_argument("make_patch_shuffle: perm is not a bijection");
        seen[p] = 1;
    }
    TransformSpec s;
    s.kind = TransformKind::PatchShuffle;
    s.patch_size = patch_size;
    s.patch_perm = std::move(perm);
    return s;
}

inline TransformSpec make_value_jitter(double scale, double shift) {
    if (!(scale > 0.0)) throw std::invalid_argument("make_value_jitter: scale must be > 0");
    TransformSpec s;
    s.kind = TransformKind::ValueJitter;
    s.scale = scale;
    s.shift = shift;
    return s;
}

inline void require_compatible(const TransformSpec& s, GridShape shape) {
    switch (s.kind) {
        case TransformKind::Rotate:
            if (shape.h != shape.w)
                throw std::invalid_argument("rotate requires a square grid, got " + shape.str());
            break;
        case TransformKind::PatchShuffle: {
            if (shape.h % s.patch_size != 0 || shape.w % s.patch_size != 0)
                throw std::invalid_argument("patch_size " + std::to_string(s.patch_size) +
                                            " does not divide grid " + shape.str());
            const int n = (shape.h / s.patch_size) * (shape.w / s.patch_size);
            if (static_cast<int>(s.patch_perm.size()) != n)
                throw std::invalid_argument("patch permutation has " +
                                            std::to_string(s.patch_perm.size()) +
                                            " entries, grid has " + std::to_string(n) + " patches");
            break;
        }
        default: break;
    }
}

/// Applies the transform. Rotation is clockwise on the (H, W) axes with
/// channels untouched: one quarter-turn maps (r, c) -> value from (H-1-c, r).
inline Latent apply(const TransformSpec& s, const Latent& x) {
    require_compatible(s, x.shape);
    const int h = x.shape.h, w = x.shape.w, c = x.shape.c;
    switch (s.kind) {
        case TransformKind::Identity: return x;
        case TransformKind::Rotate: {
            Latent out(x.shape);
            for (int r = 0; r < h; ++r)
                for (int col = 0; col < w; ++col) {
                    int sr = r, sc = col;
                    for (int k = 0; k < s.quarter_turns; ++k) {
                        const int nr = h - 1 - sc;
                        const int nc = sr;
                        sr = nr;
                        sc = nc;
                    }
                    for (int ch = 0; ch < c; ++ch) out.at(r, col, ch) = x.at(sr, sc, ch);
                }
            return out;
        }
        case TransformKind::FlipH: {
            Latent out(x.shape);
            for (int r = 0; r < h; ++r)
                for (int col = 0; col < w; ++col)
                    for (int ch = 0; ch < c; ++ch) out.at(r, col, ch) = x.at(r, w - 1 - col, ch);
            return out;
        }
        case TransformKind::FlipV: {
            Latent out(x.shape);
            for (int r = 0; r < h; ++r)
                for (int col = 0; col < w; ++col)
                    for (int ch = 0; ch < c; ++ch) out.at(r, col, ch) = x.at(h - 1 - r, col, ch);
            return out;
        }
        case TransformKind::PatchShuffle: {
            Latent out(x.shape);
            const int p = s.patch_size;
            const int pw = w / p;
            const int np = (h / p) * pw;
            for (int dest = 0; dest < np; ++dest) {
                const int src = s.patch_perm[dest];
                const int dr = (dest / pw) * p, dc = (dest % pw) * p;
                const int sr = (src / pw) * p, sc = (src % pw) * p;
                for (int r = 0; r < p; ++r)
                    for (int col = 0; col < p; ++col)
                        for (int ch = 0; ch < c; ++ch)
                            out.at(dr + r, dc + col, ch) = x.at(sr + r, sc + col, ch);
            }
            return out;
        }
        case TransformKind::ValueJitter: {
            Latent out(x.shape);
            for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = s.scale * x.data[i] + s.shift;
            return out;
        }
    }
    throw std::logic_error("apply: unhandled transform kind");
}

inline TransformSpec invert(const TransformSpec& s) {
    switch (s.kind) {
        case TransformKind::Identity:
        case TransformKind::FlipH:
        case TransformKind::FlipV: return s;
        case TransformKind::Rotate: return make_rotate(4 - s.quarter_turns);
        case TransformKind::PatchShuffle: {
            std::vector<int> inv(s.patch_perm.size());
            for (int i = 0; i < static_cast<int>(s.patch_perm.size()); ++i) inv[s.patch_perm[i]] = i;
            return make_patch_shuffle(s.patch_size, std::move(inv));
        }
        case TransformKind::ValueJitter: return make_value_jitter(1.0 / s.scale, -s.shift / s.scale);
    }
    throw std::logic_error("invert: unhandled transform kind");
}

// ---------------------------------------------------------------------------
// Pools and per-step schedules
// ---------------------------------------------------------------------------

enum class GeneratorKind { Fixed, RotationUniform, FlipUniform, PatchShuffleRandom, ValueJitterRandom };

/// One pool entry. Fixed entries always yield the same spec; the others draw
/// their parameters from the step stream each time they are selected.
struct TransformGenerator {
    GeneratorKind kind = GeneratorKind::Fixed;
    TransformSpec fixed;
    int patch_size = 4;
    double scale_min = 0.9, scale_max = 1.1;
    double shift_min = -0.1, shift_max = 0.1;

    TransformSpec realize(CounterRng& rng, GridShape shape) const {
        switch (kind) {
            case GeneratorKind::Fixed: return fixed;
            case GeneratorKind::RotationUniform: {
                const int k = static_cast<int>(rng.next_below(4));
                return k == 0 ? make_identity() : make_rotate(k);
            }
            case GeneratorKind::FlipUniform:
                return rng.next_below(2) == 0 ? make_flip_h() : make_flip_v();
            case GeneratorKind::PatchShuffleRandom: {
                const int n = (shape.h / patch_size) * (shape.w / patch_size);
                if (shape.h % patch_size != 0 || shape.w % patch_size != 0)
                    throw std::invalid_argument("patch generator: patch_size does not divide grid");
                std::vector<int> perm(n);
                std::iota(perm.begin(), perm.end(), 0);
                for (int i = n - 1; i > 0; --i) {
                    const int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
                    std::swap(perm[i], perm[j]);
                }
                return make_patch_shuffle(patch_size, std::move(perm));
            }
            case GeneratorKind::ValueJitterRandom: {
                const double s = scale_min + (scale_max - scale_min) * rng.next_unit();
                const double b = shift_min + (shift_max - shift_min) * rng.next_unit();
                return make_value_jitter(s, b);
            }
        }
        throw std::logic_error("realize: unhandled generator kind");
    }
};

struct TransformPool {
    std::string descriptor;
    std::vector<TransformGenerator> generators;
};

inline TransformGenerator fixed_generator(TransformSpec spec) {
    TransformGenerator g;
    g.kind = GeneratorKind::Fixed;
    g.fixed = std::move(spec);
    return g;
}

/// Named pools used throughout the experiment presets.
///   rotations     : {identity, rotate(1), rotate(2), rotate(3)}
///   flips         : {identity, flip-h, flip-v}
///   patch-shuffle : fresh permutation each step
///   value-jitter  : fresh (scale, shift) each step
///   combination   : one generator of each random family, type drawn uniformly
///   identity      : {identity}
inline TransformPool make_pool(const std::string& name, int patch_size = 4,
                               double scale_min = 0.9, double scale_max = 1.1,
                               double shift_min = -0.1, double shift_max = 0.1) {
    TransformPool pool;
    pool.descriptor = name;
    if (name == "rotations") {
        pool.generators = {fixed_generator(make_identity()), fixed_generator(make_rotate(1)),
                           fixed_generator(make_rotate(2)), fixed_generator(make_rotate(3))};
    } else if (name == "flips") {
        pool.generators = {fixed_generator(make_identity()), fixed_generator(make_flip_h()),
                           fixed_generator(make_flip_v())};
    } else if (name == "patch-shuffle") {
        TransformGenerator g;
        g.kind = GeneratorKind::PatchShuffleRandom;
        g.patch_size = patch_size;
        pool.generators = {g};
    } else if (name == "value-jitter") {
        TransformGenerator g;
        g.kind = GeneratorKind::ValueJitterRandom;
        g.scale_min = scale_min;
        g.scale_max = scale_max;
        g.shift_min = shift_min;
        g.shift_max = shift_max;
        pool.generators = {g};
    } else if (name == "combination") {
        TransformGenerator rot;
        rot.kind = GeneratorKind::RotationUniform;
        TransformGenerator flip;
        flip.kind = GeneratorKind::FlipUniform;
        TransformGenerator patch;
        patch.kind = GeneratorKind::PatchShuffleRandom;
        patch.patch_size = patch_size;
        TransformGenerator jitter;
        jitter.kind = GeneratorKind::ValueJitterRandom;
        jitter.scale_min = scale_min;
        jitter.scale_max = scale_max;
        jitter.shift_min = shift_min;
        jitter.shift_max = shift_max;
        pool.generators = {rot, flip, patch, jitter};
    } else if (name == "identity") {
        pool.generators = {fixed_generator(make_identity())};
    } else {
        throw std::invalid_argument("make_pool: unknown pool name '" + name + "'");
    }
    return pool;
}

inline bool pool_is_fixed(const TransformPool& pool) {
    return std::all_of(pool.generators.begin(), pool.generators.end(),
                       [](const TransformGenerator& g) { return g.kind == GeneratorKind::Fixed; });
}

inline bool pool_needs_square(const TransformPool& pool) {
    for (const auto& g : pool.generators) {
        if (g.kind == GeneratorKind::RotationUniform) return true;
        if (g.kind == GeneratorKind::Fixed && g.fixed.kind == TransformKind::Rotate) return true;
    }
    return false;
}

/// Per-step record of the transform drawn at each time-step. Reproducible
/// from (pool, seed) alone; the same object drives both the inversion and the
/// matching reconstruction.
struct TransformSchedule {
    TransformPool pool;
    std::uint64_t seed = 0;
    std::vector<TransformSpec> specs;
};

/// Draws one spec per step, uniformly over the pool. Each time-step t uses
/// the substream with index t, so any single step can be regenerated without
/// replaying the ones before it.
inline TransformSchedule sample_schedule(const TransformPool& pool, int num_steps,
                                         std::uint64_t seed, GridShape shape) {
    if (pool.generators.empty()) throw std::invalid_argument("sample_schedule: empty pool");
    if (num_steps < 1) throw std::invalid_argument("sample_schedule: num_steps must be >= 1");
    TransformSchedule sched;
    sched.pool = pool;
    sched.seed = seed;
    sched.specs.reserve(num_steps);
    for (int t = 0; t < num_steps; ++t) {
        CounterRng rng(substream(seed, static_cast<std::uint64_t>(t)));
        const auto idx = rng.next_below(pool.generators.size());
        sched.specs.push_back(pool.generators[idx].realize(rng, shape));
    }
    return sched;
}

/// Checks a schedule against its recorded (pool, seed) provenance by
/// regenerating and comparing element-wise. Detects tampered entries.
inline void validate_schedule(const TransformSchedule& sched, GridShape shape) {
    const TransformSchedule fresh =
        sample_schedule(sched.pool, static_cast<int>(sched.specs.size()), sched.seed, shape);
    for (std::size_t t = 0; t < sched.specs.size(); ++t) {
        if (!(sched.specs[t] == fresh.specs[t]))
            throw std::runtime_error("transform schedule does not match its (pool, seed) record at step " +
                                     std::to_string(t) + ": have " + sched.specs[t].str() +
                                     ", regenerated " + fresh.specs[t].str());
    }
}

}  // namespace invlab
