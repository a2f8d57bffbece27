// Copyright (C) 2026 invlab authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "invlab/invlab.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitInvariant = 3;

std::set<std::string> parse_formats(const std::string& csv_list) {
    std::set<std::string> formats;
    std::stringstream ss(csv_list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) formats.insert(item);
    }
    return formats;
}

void print_aggregate_table(const invlab::RunRecord& record) {
    std::printf("%-24s %12s %12s %10s %10s %12s\n", "strategy", "mean_mse", "std_mse", "mean_psnr",
                "mean_ssim", "tri_viol");
    for (const auto& a : record.aggregates) {
        std::printf("%-24s %12.4e %12.4e %10.3f %10.4f %7ld/%ld\n", a.strategy.c_str(), a.mean_mse,
                    a.std_mse, a.mean_psnr, a.mean_ssim, a.triangle_violations, a.triangle_steps);
    }
    std::printf("phase seconds: inversion %.3f, reconstruction %.3f, total %.3f\n",
                record.inversion_seconds, record.reconstruction_seconds, record.total_seconds);
}

void write_outputs(const invlab::RunRecord& record, const std::string& out_dir,
                   const std::set<std::string>& formats) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory: " + out_dir);
    invlab::emit_detail::write_text(std::filesystem::path(out_dir) / "record.json",
                                    invlab::render_record_json(record));
    const auto files = invlab::emit(record, formats, out_dir);
    std::printf("wrote %s/record.json", out_dir.c_str());
    for (const auto& f : files) std::printf(", %s", f.c_str());
    std::printf("\n");
}

invlab::TrajectoryObserver make_trajectory_writer(const invlab::ExperimentConfig& cfg,
                                                  const std::string& out_dir,
                                                  const std::string& hash) {
    if (!cfg.dump_latents) return {};
    const std::filesystem::path dir = std::filesystem::path(out_dir) / "trajectories";
    std::filesystem::create_directories(dir);
    return [dir, hash](int instance, const std::string& strategy, const invlab::Trajectory& inv,
                       const invlab::Trajectory& rec) {
        const std::string base = strategy + "_i" + std::to_string(instance);
        invlab::emit_detail::write_text(
            dir / (base + "_inversion.json"),
            invlab::trajectory_record(inv, hash, true).dump(2) + "\n");
        invlab::emit_detail::write_text(
            dir / (base + "_reconstruction.json"),
            invlab::trajectory_record(rec, hash, true).dump(2) + "\n");
    };
}

int cmd_verify(std::uint64_t seed) {
    const auto reports = invlab::run_all_oracles(seed);
    bool all_pass = true;
    std::printf("%-34s %9s %14s %14s %7s\n", "check", "samples", "max_disc", "threshold", "status");
    for (const auto& r : reports) {
        std::printf("%-34s %9d %14.6e %14.6e %7s\n", r.name.c_str(), r.samples, r.max_discrepancy,
                    r.threshold, r.pass() ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass();
    }
    if (!all_pass) {
        std::fprintf(stderr, "verify: at least one oracle check failed\n");
        return kExitInvariant;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"invlab: deterministic latent round-trip laboratory"};
    app.require_subcommand(1);

    auto* verify = app.add_subcommand("verify", "run all oracle checks and print a pass/fail table");
    std::uint64_t verify_seed = 20260810;
    verify->add_option("--seed", verify_seed, "oracle seed");

    auto* roundtrip =
        app.add_subcommand("roundtrip", "run inversion/reconstruction for every configured strategy");
    std::string rt_config;
    std::vector<std::string> rt_strategies;
    std::string rt_out;
    std::string rt_formats = "csv,json,svg";
    roundtrip->add_option("--config", rt_config, "experiment config file")->required();
    roundtrip->add_option("--strategy", rt_strategies, "restrict to these strategy names");
    roundtrip->add_option("--out", rt_out, "output directory (default: config output_dir)");
    roundtrip->add_option("--formats", rt_formats, "comma-separated subset of csv,json,svg");

    auto* ablate = app.add_subcommand("ablate", "run an ablation preset");
    std::string ab_preset, ab_config, ab_out;
    std::string ab_formats = "csv,json,svg";
    std::string ab_golden;
    ablate->add_option("--preset", ab_preset, "mc-count | branch-type | transform-type")->required();
    ablate->add_option("--config", ab_config, "experiment config file")->required();
    ablate->add_option("--out", ab_out, "output directory (default: config output_dir)");
    ablate->add_option("--formats", ab_formats, "comma-separated subset of csv,json,svg");
    ablate->add_option("--golden-out", ab_golden, "also write a compact golden file of mean MSEs");

    auto* emit_cmd = app.add_subcommand("emit", "re-emit outputs from a stored record.json");
    std::string em_record, em_out;
    std::string em_formats = "csv,json,svg";
    emit_cmd->add_option("--record", em_record, "record.json produced by roundtrip/ablate")->required();
    emit_cmd->add_option("--out", em_out, "output directory")->required();
    emit_cmd->add_option("--formats", em_formats, "comma-separated subset of csv,json,svg");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (verify->parsed()) return cmd_verify(verify_seed);

        if (roundtrip->parsed()) {
            invlab::ExperimentConfig cfg = invlab::load_config(rt_config);
            if (!rt_strategies.empty()) {
                std::vector<invlab::StrategySpec> kept;
                for (const auto& s : cfg.strategies) {
                    const std::string name =
                        s.name.empty() ? invlab::default_strategy_name(s) : s.name;
                    for (const auto& want : rt_strategies)
                        if (name == want) kept.push_back(s);
                }
                if (kept.empty())
                    throw std::invalid_argument("no configured strategy matches the --strategy filter");
                cfg.strategies = kept;
            }
            const std::string out_dir = rt_out.empty() ? cfg.output_dir : rt_out;
            const auto observer =
                make_trajectory_writer(cfg, out_dir, invlab::config_hash(cfg));
            invlab::RunRecord record;
            try {
                record = invlab::run_experiment(cfg, observer);
            } catch (invlab::ExperimentError& e) {
                write_outputs(e.partial, out_dir, parse_formats(rt_formats));
                throw;
            }
            print_aggregate_table(record);
            write_outputs(record, out_dir, parse_formats(rt_formats));
            return kExitOk;
        }

        if (ablate->parsed()) {
            invlab::ExperimentConfig cfg = invlab::load_config(ab_config);
            cfg.strategies.clear();
            for (const auto& s : invlab::ablation_strategies(ab_preset)) cfg.strategies.push_back(s);
            invlab::validate_config(cfg);
            const std::string out_dir = ab_out.empty() ? cfg.output_dir : ab_out;
            const auto observer =
                make_trajectory_writer(cfg, out_dir, invlab::config_hash(cfg));
            invlab::RunRecord record;
            try {
                record = invlab::run_experiment(cfg, observer);
            } catch (invlab::ExperimentError& e) {
                write_outputs(e.partial, out_dir, parse_formats(ab_formats));
                throw;
            }
            std::printf("ablation preset: %s\n", ab_preset.c_str());
            print_aggregate_table(record);
            write_outputs(record, out_dir, parse_formats(ab_formats));
            if (!ab_golden.empty()) {
                invlab::ordered_json g;
                g["preset"] = ab_preset;
                g["config_hash"] = record.config_hash;
                invlab::ordered_json rows;
                for (const auto& a : record.aggregates) rows[a.strategy] = a.mean_mse;
                g["mean_mse"] = rows;
                invlab::emit_detail::write_text(ab_golden, g.dump(2) + "\n");
                std::printf("wrote golden file %s\n", ab_golden.c_str());
            }
            return kExitOk;
        }

        if (emit_cmd->parsed()) {
            const auto j = invlab::parse_json_file(em_record);
            const invlab::RunRecord record = invlab::parse_record_json(j);
            const auto files = invlab::emit(record, parse_formats(em_formats), em_out);
            for (const auto& f : files) std::printf("wrote %s\n", f.c_str());
            return kExitOk;
        }
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInvariant;
    }
    return kExitOk;
}
