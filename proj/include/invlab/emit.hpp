// Copyright (C) 2026 invlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "invlab/config.hpp"
#include "invlab/engine.hpp"
#include "invlab/harness.hpp"

namespace invlab {

namespace emit_detail {

/// %.17g round-trips doubles exactly, which is what keeps CSV output
/// byte-identical across reruns and reparseable without loss.
inline std::string fmt_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fmt_short(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

inline std::uint64_t fnv1a64_doubles(const std::vector<double>& values) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (double v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xFF;
            h *= 0x100000001B3ULL;
        }
    }
    return h;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write output file: " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace emit_detail

inline const char* kCsvHeader =
    "instance,strategy,final_mse,final_psnr,final_ssim,mean_mismatch_mean_abs,"
    "mean_mismatch_l2,final_deviation_l2,triangle_steps,triangle_violations,min_triangle_slack";

/// One row per instance x strategy, then one mean and one stddev row per
/// strategy. Columns are documented in the README.
inline std::string render_csv(const RunRecord& record) {
    using emit_detail::fmt_full;
    std::string out = kCsvHeader;
    out += "\n";
    for (const auto& r : record.rows) {
        out += std::to_string(r.instance) + "," + r.strategy + "," + fmt_full(r.final_mse) + "," +
               fmt_full(r.final_psnr) + "," + fmt_full(r.final_ssim) + "," +
               fmt_full(r.mean_mismatch_mean_abs) + "," + fmt_full(r.mean_mismatch_l2) + "," +
               fmt_full(r.final_deviation_l2) + "," + std::to_string(r.triangle_steps) + "," +
               std::to_string(r.triangle_violations) + "," + fmt_full(r.min_triangle_slack) + "\n";
    }
    for (const auto& a : record.aggregates) {
        out += "mean," + a.strategy + "," + fmt_full(a.mean_mse) + "," + fmt_full(a.mean_psnr) +
               "," + fmt_full(a.mean_ssim) + ",," + fmt_full(a.mean_mismatch_l2) + "," +
               fmt_full(a.mean_final_deviation_l2) + "," + std::to_string(a.triangle_steps) + "," +
               std::to_string(a.triangle_violations) + "," + fmt_full(a.min_triangle_slack) + "\n";
        out += "stddev," + a.strategy + "," + fmt_full(a.std_mse) + "," + fmt_full(a.std_psnr) +
               "," + fmt_full(a.std_ssim) + ",,,,,,\n";
    }
    return out;
}

inline ordered_json aggregate_to_json(const StrategyAggregate& a) {
    ordered_json j;
    j["strategy"] = a.strategy;
    j["instances"] = a.instances;
    j["mean_mse"] = a.mean_mse;
    j["std_mse"] = a.std_mse;
    j["mean_psnr"] = a.mean_psnr;
    j["std_psnr"] = a.std_psnr;
    j["mean_ssim"] = a.mean_ssim;
    j["std_ssim"] = a.std_ssim;
    j["mean_mismatch_l2"] = a.mean_mismatch_l2;
    j["mean_final_deviation_l2"] = a.mean_final_deviation_l2;
    j["triangle_steps"] = a.triangle_steps;
    j["triangle_violations"] = a.triangle_violations;
    j["min_triangle_slack"] = a.min_triangle_slack;
    return j;
}

/// Summary: config hash + per-strategy aggregates (no per-instance rows).
inline std::string render_summary_json(const RunRecord& record) {
    ordered_json j;
    j["config_hash"] = record.config_hash;
    j["environment"] = {{"version", record.version}, {"precision", record.precision}};
    j["failed"] = record.failed;
    if (record.failed) j["failure"] = record.failure;
    ordered_json aggs = ordered_json::array();
    for (const auto& a : record.aggregates) aggs.push_back(aggregate_to_json(a));
    j["aggregates"] = aggs;
    return j.dump(2) + "\n";
}

/// Full record: everything needed to re-emit any format later.
inline std::string render_record_json(const RunRecord& record) {
    ordered_json j;
    j["config_hash"] = record.config_hash;
    j["environment"] = {{"version", record.version}, {"precision", record.precision}};
    j["failed"] = record.failed;
    if (record.failed) j["failure"] = record.failure;
    j["config"] = record.config_echo;
    ordered_json rows = ordered_json::array();
    for (const auto& r : record.rows) {
        ordered_json rj;
        rj["instance"] = r.instance;
        rj["strategy"] = r.strategy;
        rj["final_mse"] = r.final_mse;
        rj["final_psnr"] = r.final_psnr;
        rj["final_ssim"] = r.final_ssim;
        rj["mean_mismatch_mean_abs"] = r.mean_mismatch_mean_abs;
        rj["mean_mismatch_l2"] = r.mean_mismatch_l2;
        rj["final_deviation_l2"] = r.final_deviation_l2;
        rj["triangle_steps"] = r.triangle_steps;
        rj["triangle_violations"] = r.triangle_violations;
        rj["min_triangle_slack"] = r.min_triangle_slack;
        rows.push_back(rj);
    }
    j["rows"] = rows;
    ordered_json aggs = ordered_json::array();
    for (const auto& a : record.aggregates) {
        ordered_json aj = aggregate_to_json(a);
        aj["mismatch_l2_curve"] = a.mismatch_l2_curve;
        aj["deviation_l2_curve"] = a.deviation_l2_curve;
        aggs.push_back(aj);
    }
    j["aggregates"] = aggs;
    return j.dump(2) + "\n";
}

inline RunRecord parse_record_json(const ordered_json& j) {
    RunRecord record;
    record.config_hash = j.at("config_hash").get<std::string>();
    record.version = j.at("environment").at("version").get<std::string>();
    record.precision = j.at("environment").at("precision").get<std::string>();
    record.failed = j.value("failed", false);
    record.failure = j.value("failure", std::string{});
    record.config_echo = j.at("config");
    for (const auto& rj : j.at("rows")) {
        InstanceRow r;
        r.instance = rj.at("instance").get<int>();
        r.strategy = rj.at("strategy").get<std::string>();
        r.final_mse = rj.at("final_mse").get<double>();
        r.final_psnr = rj.at("final_psnr").get<double>();
        r.final_ssim = rj.at("final_ssim").get<double>();
        r.mean_mismatch_mean_abs = rj.at("mean_mismatch_mean_abs").get<double>();
        r.mean_mismatch_l2 = rj.at("mean_mismatch_l2").get<double>();
        r.final_deviation_l2 = rj.at("final_deviation_l2").get<double>();
        r.triangle_steps = rj.at("triangle_steps").get<long>();
        r.triangle_violations = rj.at("triangle_violations").get<long>();
        r.min_triangle_slack = rj.at("min_triangle_slack").get<double>();
        record.rows.push_back(r);
    }
    for (const auto& aj : j.at("aggregates")) {
        StrategyAggregate a;
        a.strategy = aj.at("strategy").get<std::string>();
        a.instances = aj.at("instances").get<int>();
        a.mean_mse = aj.at("mean_mse").get<double>();
        a.std_mse = aj.at("std_mse").get<double>();
        a.mean_psnr = aj.at("mean_psnr").get<double>();
        a.std_psnr = aj.at("std_psnr").get<double>();
        a.mean_ssim = aj.at("mean_ssim").get<double>();
        a.std_ssim = aj.at("std_ssim").get<double>();
        a.mean_mismatch_l2 = aj.at("mean_mismatch_l2").get<double>();
        a.mean_final_deviation_l2 = aj.at("mean_final_deviation_l2").get<double>();
        a.triangle_steps = aj.at("triangle_steps").get<long>();
        a.triangle_violations = aj.at("triangle_violations").get<long>();
        a.min_triangle_slack = aj.at("min_triangle_slack").get<double>();
        a.mismatch_l2_curve = aj.at("mismatch_l2_curve").get<std::vector<double>>();
        a.deviation_l2_curve = aj.at("deviation_l2_curve").get<std::vector<double>>();
        record.aggregates.push_back(std::move(a));
    }
    return record;
}

// ---------------------------------------------------------------------------
// SVG line plots
// ---------------------------------------------------------------------------

namespace emit_detail {

inline const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                 "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
inline constexpr double kPlotFloor = 1e-16;

/// Per-step curves on a log-scale y axis; values at or below the plot floor
/// are clamped to it, so exact-zero curves draw flat along the bottom.
inline std::string render_curve_svg(const RunRecord& record, bool deviation,
                                    const std::string& title) {
    const double width = 760, height = 420;
    const double ml = 70, mr = 180, mt = 40, mb = 50;
    const double pw = width - ml - mr, ph = height - mt - mb;

    std::size_t len = 0;
    double vmin = 1e308, vmax = kPlotFloor;
    for (const auto& a : record.aggregates) {
        const auto& curve = deviation ? a.deviation_l2_curve : a.mismatch_l2_curve;
        len = std::max(len, curve.size());
        for (double v : curve) {
            const double c = std::max(v, kPlotFloor);
            vmin = std::min(vmin, c);
            vmax = std::max(vmax, c);
        }
    }
    if (len < 2 || vmin > vmax) {
        vmin = kPlotFloor;
        vmax = 1.0;
        len = std::max<std::size_t>(len, 2);
    }
    double lo = std::floor(std::log10(vmin));
    double hi = std::ceil(std::log10(vmax));
    if (hi - lo < 1.0) hi = lo + 1.0;

    const auto x_of = [&](std::size_t t) {
        return ml + pw * static_cast<double>(t) / static_cast<double>(len - 1);
    };
    const auto y_of = [&](double v) {
        const double lv = std::log10(std::max(v, kPlotFloor));
        return mt + ph * (1.0 - (lv - lo) / (hi - lo));
    };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_short(width) +
           "\" height=\"" + fmt_short(height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + fmt_short(ml) + "\" y=\"24\" font-family=\"monospace\" font-size=\"14\">" +
           title + "</text>\n";

    const int decades = static_cast<int>(hi - lo);
    const int tick_step = decades > 12 ? (decades + 11) / 12 : 1;
    for (int e = 0; e <= decades; e += tick_step) {
        const double v = std::pow(10.0, lo + e);
        const double y = y_of(v);
        svg += "<line x1=\"" + fmt_short(ml) + "\" y1=\"" + fmt_short(y) + "\" x2=\"" +
               fmt_short(ml + pw) + "\" y2=\"" + fmt_short(y) +
               "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"8\" y=\"" + fmt_short(y + 4) +
               "\" font-family=\"monospace\" font-size=\"11\">1e" +
               std::to_string(static_cast<int>(lo) + e) + "</text>\n";
    }
    svg += "<line x1=\"" + fmt_short(ml) + "\" y1=\"" + fmt_short(mt) + "\" x2=\"" + fmt_short(ml) +
           "\" y2=\"" + fmt_short(mt + ph) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "<line x1=\"" + fmt_short(ml) + "\" y1=\"" + fmt_short(mt + ph) + "\" x2=\"" +
           fmt_short(ml + pw) + "\" y2=\"" + fmt_short(mt + ph) +
           "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + fmt_short(ml + pw / 2 - 30) + "\" y=\"" + fmt_short(height - 14) +
           "\" font-family=\"monospace\" font-size=\"12\">step index t</text>\n";

    std::size_t k = 0;
    for (const auto& a : record.aggregates) {
        const auto& curve = deviation ? a.deviation_l2_curve : a.mismatch_l2_curve;
        const char* color = kPalette[k % 8];
        if (curve.size() >= 2) {
            std::string pts;
            for (std::size_t t = 0; t < curve.size(); ++t) {
                pts += fmt_short(x_of(t)) + "," + fmt_short(y_of(curve[t]));
                if (t + 1 < curve.size()) pts += " ";
            }
            svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
                   "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
        }
        const double ly = mt + 16.0 * static_cast<double>(k);
        svg += "<line x1=\"" + fmt_short(ml + pw + 10) + "\" y1=\"" + fmt_short(ly) + "\" x2=\"" +
               fmt_short(ml + pw + 30) + "\" y2=\"" + fmt_short(ly) + "\" stroke=\"" + color +
               "\" stroke-width=\"2\"/>\n";
        svg += "<text x=\"" + fmt_short(ml + pw + 36) + "\" y=\"" + fmt_short(ly + 4) +
               "\" font-family=\"monospace\" font-size=\"11\">" + a.strategy + "</text>\n";
        ++k;
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace emit_detail

/// Writes the selected formats into out_dir; returns the files written.
/// An empty format set writes nothing and succeeds.
inline std::vector<std::string> emit(const RunRecord& record, const std::set<std::string>& formats,
                                     const std::string& out_dir) {
    for (const auto& f : formats)
        if (f != "csv" && f != "json" && f != "svg")
            throw std::invalid_argument("emit: unknown format '" + f + "'");
    if (formats.empty()) return {};

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory: " + out_dir);

    std::vector<std::string> written;
    const std::filesystem::path dir(out_dir);
    if (formats.count("csv")) {
        emit_detail::write_text(dir / "record.csv", render_csv(record));
        written.push_back((dir / "record.csv").string());
    }
    if (formats.count("json")) {
        emit_detail::write_text(dir / "summary.json", render_summary_json(record));
        written.push_back((dir / "summary.json").string());
    }
    if (formats.count("svg")) {
        emit_detail::write_text(dir / "mismatch.svg",
                                emit_detail::render_curve_svg(record, false,
                                                              "per-step noise mismatch (L2)"));
        emit_detail::write_text(dir / "deviation.svg",
                                emit_detail::render_curve_svg(record, true,
                                                              "per-step trajectory deviation (L2)"));
        written.push_back((dir / "mismatch.svg").string());
        written.push_back((dir / "deviation.svg").string());
    }
    return written;
}

// ---------------------------------------------------------------------------
// Trajectory run-records
// ---------------------------------------------------------------------------

/// Audit record of one pass: header plus per-step checksums and the transform
/// actually used. Latent values are included only when requested.
inline ordered_json trajectory_record(const Trajectory& traj, const std::string& config_hash,
                                      bool include_latents) {
    ordered_json j;
    j["config_hash"] = config_hash;
    j["direction"] = traj.direction == Direction::Inversion ? "inversion" : "reconstruction";
    j["run_seed"] = traj.run_seed;
    j["steps"] = traj.effective_noise.size();
    if (traj.schedule) {
        j["transform_pool"] = traj.schedule->pool.descriptor;
        j["transform_seed"] = traj.schedule->seed;
    }
    ordered_json steps = ordered_json::array();
    for (std::size_t t = 0; t < traj.effective_noise.size(); ++t) {
        ordered_json sj;
        sj["step"] = t;
        sj["latent_fnv64"] = cfg_detail::hex64(emit_detail::fnv1a64_doubles(traj.latents[t].data));
        sj["noise_fnv64"] =
            cfg_detail::hex64(emit_detail::fnv1a64_doubles(traj.effective_noise[t].data));
        if (traj.schedule) sj["transform"] = traj.schedule->specs[t].str();
        if (include_latents) sj["latent"] = traj.latents[t].data;
        steps.push_back(sj);
    }
    ordered_json terminal;
    terminal["latent_fnv64"] =
        cfg_detail::hex64(emit_detail::fnv1a64_doubles(traj.latents.back().data));
    if (include_latents) terminal["latent"] = traj.latents.back().data;
    j["terminal"] = terminal;
    j["step_records"] = steps;
    return j;
}

}  // namespace invlab
