// Copyright (C) 2026 invlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "invlab/engine.hpp"
#include "invlab/grid.hpp"
#include "invlab/mixture.hpp"
#include "invlab/predictor.hpp"
#include "invlab/schedule.hpp"
#include "invlab/transform.hpp"

namespace invlab {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Typed configuration mirror of the JSON file
// ---------------------------------------------------------------------------

struct ScheduleSpec {
    std::string builder = "linear";
    int train_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int infer_steps = 50;
    bool operator==(const ScheduleSpec&) const = default;
};

struct MeanSpec {
    std::string pattern = "zero";  // or "explicit" with values
    double amplitude = 1.0;
    double value = 0.0;  // uniform
    std::vector<double> values;
    bool operator==(const MeanSpec&) const = default;
};

struct ComponentSpec {
    double weight = 1.0;
    MeanSpec mean;
    double sigma = 1.0;
    bool operator==(const ComponentSpec&) const = default;
};

struct MixtureSpec {
    std::vector<ComponentSpec> components;
    std::string symmetrize = "none";  // none | rotations | dihedral
    bool operator==(const MixtureSpec&) const = default;
};

struct OmegaSpec {
    std::string pattern = "uniform";  // uniform | ramp
    double value = 1.0;
    double min = 1.0, max = 1.0;
    bool operator==(const OmegaSpec&) const = default;
};

struct ConstantSpec {
    bool enabled = false;
    double value = 0.0;
    std::vector<double> values;  // optional explicit grid
    bool operator==(const ConstantSpec&) const = default;
};

struct PredictorSpec {
    double gamma = 0.05;
    OmegaSpec omega;
    ConstantSpec constant;
    bool operator==(const PredictorSpec&) const = default;
};

struct PoolSpec {
    std::string name = "rotations";
    int patch_size = 4;
    double scale_min = 0.9, scale_max = 1.1;
    double shift_min = -0.1, shift_max = 0.1;
    bool operator==(const PoolSpec&) const = default;
};

struct StrategySpec {
    std::string variant = "naive";
    std::string name;  // defaulted from the variant when empty
    int branches = 4;
    std::string branch_source = "independent-samples";
    int samples_per_step = 1;
    bool replay_selection = false;
    PoolSpec pool;
    bool inverse_noise_transform = false;
    std::uint64_t seed = 0;
    bool operator==(const StrategySpec&) const = default;
};

struct ExperimentConfig {
    ScheduleSpec schedule;
    GridShape grid{16, 16, 1};
    MixtureSpec mixture;
    PredictorSpec predictor;
    std::vector<StrategySpec> strategies;
    int instances = 50;
    std::uint64_t master_seed = 424242;
    std::string output_dir = "out";
    bool dump_latents = false;
    bool operator==(const ExperimentConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Strict JSON reading
// ---------------------------------------------------------------------------

namespace cfg_detail {

/// Wraps one JSON object and tracks which keys were consumed; unknown fields
/// are reported as errors, never ignored.
class StrictReader {
public:
    StrictReader(const ordered_json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object())
            throw std::invalid_argument("config: expected an object at " + path_);
    }

    bool has(const char* key) const { return j_.contains(key); }

    const ordered_json& raw(const char* key) {
        mark(key);
        return j_.at(key);
    }

    template <typename T>
    T require(const char* key) {
        if (!j_.contains(key))
            throw std::invalid_argument("config: missing required field '" + std::string(key) +
                                        "' at " + path_);
        return fetch<T>(key);
    }

    template <typename T>
    T get(const char* key, T fallback) {
        if (!j_.contains(key)) return fallback;
        return fetch<T>(key);
    }

    std::string child_path(const char* key) const { return path_ + "." + key; }

    void done() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key()))
                throw std::invalid_argument("config: unknown field '" + it.key() + "' at " + path_);
        }
    }

private:
    void mark(const char* key) { seen_.insert(key); }

    template <typename T>
    T fetch(const char* key) {
        mark(key);
        try {
            return j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument("config: field '" + std::string(key) + "' at " + path_ +
                                        " has the wrong type (" + e.what() + ")");
        }
    }

    const ordered_json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : text) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

}  // namespace cfg_detail

/// Parses a JSON document, converting byte offsets in parse errors to line
/// numbers.
inline ordered_json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1;
        const std::size_t stop = std::min<std::size_t>(e.byte, text.size());
        for (std::size_t i = 0; i < stop; ++i)
            if (text[i] == '\n') ++line;
        throw std::invalid_argument(origin + ": parse error at line " + std::to_string(line) +
                                    ": " + e.what());
    }
}

inline ordered_json parse_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_json_text(buf.str(), path);
}

// ---------------------------------------------------------------------------
// Named mean patterns
// ---------------------------------------------------------------------------

/// Grid generators usable as mixture means. Formulas are documented in the
/// README; all are deterministic functions of the grid shape.
inline Latent build_mean(const MeanSpec& spec, GridShape shape) {
    Latent out(shape);
    const int h = shape.h, w = shape.w, c = shape.c;
    constexpr double two_pi = 6.283185307179586476925286766559;
    if (spec.pattern == "explicit") {
        if (static_cast<int>(spec.values.size()) != shape.size())
            throw std::invalid_argument("mean values: expected " + std::to_string(shape.size()) +
                                        " entries, got " + std::to_string(spec.values.size()));
        out.data = spec.values;
        return out;
    }
    if (spec.pattern == "zero") return out;
    if (spec.pattern == "uniform") return constant_grid(shape, spec.value);
    if (spec.pattern == "corner-blob" || spec.pattern == "center-dot") {
        const double cr = spec.pattern == "corner-blob" ? h / 4.0 : (h - 1) / 2.0;
        const double cc = spec.pattern == "corner-blob" ? w / 4.0 : (w - 1) / 2.0;
        const double width = spec.pattern == "corner-blob" ? h / 8.0 : h / 10.0;
        for (int r = 0; r < h; ++r)
            for (int col = 0; col < w; ++col) {
                const double dr = r - cr, dc = col - cc;
                const double v =
                    spec.amplitude * std::exp(-(dr * dr + dc * dc) / (2.0 * width * width));
                for (int ch = 0; ch < c; ++ch) out.at(r, col, ch) = v;
            }
        return out;
    }
    if (spec.pattern == "stripe") {
        for (int r = 0; r < h; ++r)
            for (int col = 0; col < w; ++col)
                for (int ch = 0; ch < c; ++ch)
                    out.at(r, col, ch) = spec.amplitude * std::sin(two_pi * col / w);
        return out;
    }
    if (spec.pattern == "checker") {
        for (int r = 0; r < h; ++r)
            for (int col = 0; col < w; ++col)
                for (int ch = 0; ch < c; ++ch)
                    out.at(r, col, ch) = ((r + col) % 2 == 0) ? spec.amplitude : -spec.amplitude;
        return out;
    }
    throw std::invalid_argument("unknown mean pattern '" + spec.pattern + "'");
}

// ---------------------------------------------------------------------------
// Builders: typed spec -> runtime objects
// ---------------------------------------------------------------------------

inline NoiseSchedule build_schedule(const ScheduleSpec& spec) {
    if (spec.builder != "linear")
        throw std::invalid_argument("schedule builder '" + spec.builder + "' is not supported");
    return build_linear_schedule(spec.train_steps, spec.beta_start, spec.beta_end, spec.infer_steps);
}

/// Mixture weights in a config are relative; they are normalized here so the
/// stored declaration stays human-friendly.
inline GaussianMixture build_mixture(const MixtureSpec& spec, GridShape shape) {
    if (spec.components.empty())
        throw std::invalid_argument("mixture: at least one component is required");
    GaussianMixture mix;
    double total = 0.0;
    for (const auto& comp : spec.components) {
        if (!(comp.weight > 0.0)) throw std::invalid_argument("mixture: weights must be > 0");
        total += comp.weight;
    }
    for (const auto& comp : spec.components)
        mix.components.push_back({comp.weight / total, build_mean(comp.mean, shape), comp.sigma});
    mix.validate();

    if (spec.symmetrize == "none") return mix;
    if (spec.symmetrize == "rotations") return symmetrize(mix, {make_rotate(1)});
    if (spec.symmetrize == "dihedral") return symmetrize(mix, {make_rotate(1), make_flip_h()});
    throw std::invalid_argument("mixture: unknown symmetrize group '" + spec.symmetrize + "'");
}

inline Latent build_omega(const OmegaSpec& spec, GridShape shape) {
    if (spec.pattern == "uniform") return constant_grid(shape, spec.value);
    if (spec.pattern == "ramp") {
        Latent out(shape);
        const int d = shape.size();
        for (int j = 0; j < d; ++j)
            out.data[j] = d == 1 ? spec.min
                                 : spec.min + (spec.max - spec.min) * static_cast<double>(j) /
                                       static_cast<double>(d - 1);
        return out;
    }
    throw std::invalid_argument("predictor: unknown omega pattern '" + spec.pattern + "'");
}

inline PredictorConfig build_predictor(const PredictorSpec& spec, const GaussianMixture& mixture,
                                       GridShape shape) {
    PredictorConfig cfg;
    cfg.mixture = mixture;
    if (spec.constant.enabled) {
        cfg.constant_mode = true;
        if (!spec.constant.values.empty()) {
            MeanSpec m;
            m.pattern = "explicit";
            m.values = spec.constant.values;
            cfg.constant = build_mean(m, shape);
        } else {
            cfg.constant = constant_grid(shape, spec.constant.value);
        }
    } else {
        cfg.gamma = spec.gamma;
        cfg.omega = build_omega(spec.omega, shape);
    }
    cfg.validate();
    return cfg;
}

inline TransformPool build_pool(const PoolSpec& spec) {
    return make_pool(spec.name, spec.patch_size, spec.scale_min, spec.scale_max, spec.shift_min,
                     spec.shift_max);
}

inline std::string default_strategy_name(const StrategySpec& spec) {
    if (spec.variant == "naive") return "naive";
    if (spec.variant == "mbdi" || spec.variant == "mc") {
        const std::string src = spec.branch_source == "rotations-of-input" ? "r" : "i";
        std::string name = (spec.variant == "mbdi" ? "mb-" : "mc-") + src +
                           std::to_string(spec.branches);
        if (spec.variant == "mc") name += "-m" + std::to_string(spec.samples_per_step);
        return name;
    }
    if (spec.variant == "freeinv") {
        std::string name = "freeinv-" + spec.pool.name;
        if (spec.inverse_noise_transform) name += "-invnoise";
        return name;
    }
    throw std::invalid_argument("unknown strategy variant '" + spec.variant + "'");
}

inline StrategyConfig build_strategy(const StrategySpec& spec, GridShape shape) {
    StrategyConfig out;
    if (spec.variant == "naive") {
        out = naive_strategy();
    } else if (spec.variant == "mbdi" || spec.variant == "mc") {
        BranchSource src;
        if (spec.branch_source == "independent-samples")
            src = BranchSource::IndependentSamples;
        else if (spec.branch_source == "rotations-of-input")
            src = BranchSource::RotationsOfInput;
        else
            throw std::invalid_argument("strategy: unknown branch_source '" + spec.branch_source +
                                        "'");
        out = spec.variant == "mbdi" ? mbdi_strategy(spec.branches, src)
                                     : mc_strategy(spec.branches, src, spec.samples_per_step);
        out.replay_selection = spec.replay_selection;
    } else if (spec.variant == "freeinv") {
        out = freeinv_strategy(build_pool(spec.pool), spec.inverse_noise_transform);
    } else {
        throw std::invalid_argument("unknown strategy variant '" + spec.variant + "'");
    }
    out.name = spec.name.empty() ? default_strategy_name(spec) : spec.name;
    out.seed = spec.seed;
    out.validate(shape);
    return out;
}

// ---------------------------------------------------------------------------
// Config load / echo / validate
// ---------------------------------------------------------------------------

namespace cfg_detail {

inline MeanSpec read_mean(const ordered_json& j, const std::string& path) {
    StrictReader r(j, path);
    MeanSpec spec;
    if (r.has("values")) {
        spec.pattern = "explicit";
        spec.values = r.require<std::vector<double>>("values");
    } else {
        spec.pattern = r.require<std::string>("pattern");
        spec.amplitude = r.get<double>("amplitude", 1.0);
        spec.value = r.get<double>("value", 0.0);
    }
    r.done();
    return spec;
}

inline PoolSpec read_pool(const ordered_json& j, const std::string& path) {
    PoolSpec spec;
    if (j.is_string()) {
        spec.name = j.get<std::string>();
        return spec;
    }
    StrictReader r(j, path);
    spec.name = r.require<std::string>("name");
    spec.patch_size = r.get<int>("patch_size", spec.patch_size);
    spec.scale_min = r.get<double>("scale_min", spec.scale_min);
    spec.scale_max = r.get<double>("scale_max", spec.scale_max);
    spec.shift_min = r.get<double>("shift_min", spec.shift_min);
    spec.shift_max = r.get<double>("shift_max", spec.shift_max);
    r.done();
    return spec;
}

inline StrategySpec read_strategy(const ordered_json& j, const std::string& path) {
    StrictReader r(j, path);
    StrategySpec spec;
    spec.variant = r.require<std::string>("variant");
    spec.name = r.get<std::string>("name", "");
    spec.seed = r.get<std::uint64_t>("seed", 0);
    if (spec.variant == "mbdi" || spec.variant == "mc") {
        spec.branches = r.get<int>("branches", 4);
        spec.branch_source = r.get<std::string>("branch_source", "independent-samples");
    }
    if (spec.variant == "mc") {
        spec.samples_per_step = r.get<int>("samples_per_step", 1);
        spec.replay_selection = r.get<bool>("replay_selection", false);
    }
    if (spec.variant == "freeinv") {
        if (r.has("pool")) spec.pool = read_pool(r.raw("pool"), r.child_path("pool"));
        spec.inverse_noise_transform = r.get<bool>("inverse_noise_transform", false);
    }
    r.done();
    return spec;
}

}  // namespace cfg_detail

/// Semantic validation beyond field types. Builds every runtime object once
/// so shape constraints (square grids for rotations, divisible patch sizes)
/// are reported against the offending field.
inline void validate_config(const ExperimentConfig& cfg) {
    if (cfg.instances < 1) throw std::invalid_argument("config: instances must be >= 1");
    if (cfg.grid.h < 1 || cfg.grid.w < 1 || cfg.grid.c < 1)
        throw std::invalid_argument("config: grid dimensions must be positive");
    if (cfg.grid.h < 8 || cfg.grid.w < 8)
        throw std::invalid_argument("config: fidelity metrics need grid H, W >= 8");
    if (cfg.strategies.empty())
        throw std::invalid_argument("config: at least one strategy is required");

    const NoiseSchedule sched = build_schedule(cfg.schedule);
    (void)sched;
    const GaussianMixture mixture = build_mixture(cfg.mixture, cfg.grid);
    (void)build_predictor(cfg.predictor, mixture, cfg.grid);

    std::set<std::string> names;
    for (const auto& s : cfg.strategies) {
        const StrategyConfig built = build_strategy(s, cfg.grid);
        if (!names.insert(built.name).second)
            throw std::invalid_argument("config: duplicate strategy name '" + built.name + "'");
    }
}

inline ExperimentConfig config_from_json(const ordered_json& j) {
    using cfg_detail::StrictReader;
    StrictReader root(j, "$");
    ExperimentConfig cfg;

    if (root.has("schedule")) {
        StrictReader r(root.raw("schedule"), "$.schedule");
        cfg.schedule.builder = r.get<std::string>("builder", cfg.schedule.builder);
        cfg.schedule.train_steps = r.get<int>("train_steps", cfg.schedule.train_steps);
        cfg.schedule.beta_start = r.get<double>("beta_start", cfg.schedule.beta_start);
        cfg.schedule.beta_end = r.get<double>("beta_end", cfg.schedule.beta_end);
        cfg.schedule.infer_steps = r.get<int>("infer_steps", cfg.schedule.infer_steps);
        r.done();
    }
    if (root.has("grid")) {
        StrictReader r(root.raw("grid"), "$.grid");
        cfg.grid.h = r.get<int>("height", cfg.grid.h);
        cfg.grid.w = r.get<int>("width", cfg.grid.w);
        cfg.grid.c = r.get<int>("channels", cfg.grid.c);
        r.done();
    }
    if (root.has("mixture")) {
        StrictReader r(root.raw("mixture"), "$.mixture");
        const auto& comps = r.raw("components");
        if (!comps.is_array() || comps.empty())
            throw std::invalid_argument("config: $.mixture.components must be a non-empty array");
        for (std::size_t i = 0; i < comps.size(); ++i) {
            const std::string path = "$.mixture.components[" + std::to_string(i) + "]";
            StrictReader cr(comps[i], path);
            ComponentSpec comp;
            comp.weight = cr.get<double>("weight", 1.0);
            comp.sigma = cr.get<double>("sigma", 1.0);
            comp.mean = cfg_detail::read_mean(cr.raw("mean"), path + ".mean");
            cr.done();
            cfg.mixture.components.push_back(std::move(comp));
        }
        cfg.mixture.symmetrize = r.get<std::string>("symmetrize", cfg.mixture.symmetrize);
        r.done();
    } else {
        // Default experiment mixture: one corner blob closed under rotations.
        ComponentSpec comp;
        comp.mean.pattern = "corner-blob";
        comp.sigma = 0.35;
        cfg.mixture.components.push_back(comp);
        cfg.mixture.symmetrize = "rotations";
    }
    if (root.has("predictor")) {
        StrictReader r(root.raw("predictor"), "$.predictor");
        cfg.predictor.gamma = r.get<double>("gamma", cfg.predictor.gamma);
        if (r.has("omega")) {
            const auto& om = r.raw("omega");
            if (om.is_number()) {
                cfg.predictor.omega.pattern = "uniform";
                cfg.predictor.omega.value = om.get<double>();
            } else {
                StrictReader orr(om, "$.predictor.omega");
                cfg.predictor.omega.pattern = orr.require<std::string>("pattern");
                cfg.predictor.omega.value = orr.get<double>("value", 1.0);
                cfg.predictor.omega.min = orr.get<double>("min", 1.0);
                cfg.predictor.omega.max = orr.get<double>("max", 1.0);
                orr.done();
            }
        }
        if (r.has("constant") && !r.raw("constant").is_null()) {
            StrictReader crr(r.raw("constant"), "$.predictor.constant");
            cfg.predictor.constant.enabled = true;
            cfg.predictor.constant.value = crr.get<double>("value", 0.0);
            cfg.predictor.constant.values =
                crr.get<std::vector<double>>("values", std::vector<double>{});
            crr.done();
        }
        r.done();
    }
    if (root.has("strategies")) {
        const auto& arr = root.raw("strategies");
        if (!arr.is_array() || arr.empty())
            throw std::invalid_argument("config: $.strategies must be a non-empty array");
        for (std::size_t i = 0; i < arr.size(); ++i)
            cfg.strategies.push_back(cfg_detail::read_strategy(
                arr[i], "$.strategies[" + std::to_string(i) + "]"));
    } else {
        StrategySpec naive;
        StrategySpec freeinv;
        freeinv.variant = "freeinv";
        cfg.strategies = {naive, freeinv};
    }
    cfg.instances = root.get<int>("instances", cfg.instances);
    cfg.master_seed = root.get<std::uint64_t>("master_seed", cfg.master_seed);
    cfg.output_dir = root.get<std::string>("output_dir", cfg.output_dir);
    cfg.dump_latents = root.get<bool>("dump_latents", cfg.dump_latents);
    root.done();

    validate_config(cfg);
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    return config_from_json(parse_json_file(path));
}

/// Canonical echo with every default made explicit. Loading the echo yields
/// the same config, and the echo string is what the config hash covers.
inline ordered_json config_to_json(const ExperimentConfig& cfg) {
    ordered_json j;
    j["schedule"] = {{"builder", cfg.schedule.builder},
                     {"train_steps", cfg.schedule.train_steps},
                     {"beta_start", cfg.schedule.beta_start},
                     {"beta_end", cfg.schedule.beta_end},
                     {"infer_steps", cfg.schedule.infer_steps}};
    j["grid"] = {{"height", cfg.grid.h}, {"width", cfg.grid.w}, {"channels", cfg.grid.c}};
    ordered_json comps = ordered_json::array();
    for (const auto& comp : cfg.mixture.components) {
        ordered_json mean;
        if (comp.mean.pattern == "explicit") {
            mean["values"] = comp.mean.values;
        } else {
            mean["pattern"] = comp.mean.pattern;
            mean["amplitude"] = comp.mean.amplitude;
            mean["value"] = comp.mean.value;
        }
        comps.push_back({{"weight", comp.weight}, {"mean", mean}, {"sigma", comp.sigma}});
    }
    j["mixture"] = {{"components", comps}, {"symmetrize", cfg.mixture.symmetrize}};
    ordered_json pred;
    pred["gamma"] = cfg.predictor.gamma;
    pred["omega"] = {{"pattern", cfg.predictor.omega.pattern},
                     {"value", cfg.predictor.omega.value},
                     {"min", cfg.predictor.omega.min},
                     {"max", cfg.predictor.omega.max}};
    if (cfg.predictor.constant.enabled) {
        pred["constant"] = {{"value", cfg.predictor.constant.value},
                            {"values", cfg.predictor.constant.values}};
    } else {
        pred["constant"] = nullptr;
    }
    j["predictor"] = pred;
    ordered_json strategies = ordered_json::array();
    for (const auto& s : cfg.strategies) {
        ordered_json sj;
        sj["variant"] = s.variant;
        sj["name"] = s.name.empty() ? default_strategy_name(s) : s.name;
        sj["seed"] = s.seed;
        if (s.variant == "mbdi" || s.variant == "mc") {
            sj["branches"] = s.branches;
            sj["branch_source"] = s.branch_source;
        }
        if (s.variant == "mc") {
            sj["samples_per_step"] = s.samples_per_step;
            sj["replay_selection"] = s.replay_selection;
        }
        if (s.variant == "freeinv") {
            sj["pool"] = {{"name", s.pool.name},
                          {"patch_size", s.pool.patch_size},
                          {"scale_min", s.pool.scale_min},
                          {"scale_max", s.pool.scale_max},
                          {"shift_min", s.pool.shift_min},
                          {"shift_max", s.pool.shift_max}};
            sj["inverse_noise_transform"] = s.inverse_noise_transform;
        }
        strategies.push_back(sj);
    }
    j["strategies"] = strategies;
    j["instances"] = cfg.instances;
    j["master_seed"] = cfg.master_seed;
    j["output_dir"] = cfg.output_dir;
    j["dump_latents"] = cfg.dump_latents;
    return j;
}

inline std::string config_hash(const ExperimentConfig& cfg) {
    return cfg_detail::hex64(cfg_detail::fnv1a64(config_to_json(cfg).dump()));
}

}  // namespace invlab
