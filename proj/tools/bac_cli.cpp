// Copyright 2026 The BAC Authors
// SPDX-License-Identifier: Apache-2.0

// bac: profile -> schedule -> bubble -> run -> verify, plus CSV export.
// Exit codes: 0 success, 1 verification failure, 2 usage or input error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bac/bua.hpp"
#include "bac/cache_engine.hpp"
#include "bac/denoiser.hpp"
#include "bac/error_lab.hpp"
#include "bac/io.hpp"
#include "bac/profiler.hpp"
#include "bac/scheduler.hpp"
#include "bac/verify.hpp"

namespace {

using namespace bac;

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

DenoiserConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

// Schedule files carry no horizon, so a K mismatch shows up as a step >= K.
SchedulePlan load_schedule(const std::string& path, int K) {
    const std::string text = read_file(path);
    const SchedulePlan loose = parse_schedule(text, std::numeric_limits<int>::max());
    for (const auto& c : loose.schedules) {
        if (c.steps.back() >= K) {
            throw ConsistencyError(path + ": step " + std::to_string(c.steps.back()) + " does not exist for K=" + std::to_string(K));
        }
    }
    return parse_schedule(text, K);
}

struct ProfileArgs {
    std::string config, out;
    int episodes = 4;
    std::uint64_t seed = 0;
    bool anchored = false;
};

int cmd_profile(const ProfileArgs& a) {
    if (a.episodes < 1) throw RangeError("--episodes must be at least 1");
    const ToyDenoiser m = build_denoiser(load_config(a.config));
    const SimilarityProfile p = quantize_profile(profile_task(m, a.episodes, a.seed, a.anchored));
    write_file(a.out, write_profile(p));
    return 0;
}

struct ScheduleArgs {
    std::string profile, out;
    int budget = 10;
    bool anchored = false;
};

int cmd_schedule(const ScheduleArgs& a) {
    const SimilarityProfile p = parse_profile(read_file(a.profile));
    write_file(a.out, write_schedule(acs_plan(p, a.budget, a.anchored)));
    return 0;
}

struct BubbleArgs {
    std::string profile, sched, out, diff;
    int topk = 5;
};

int cmd_bubble(const BubbleArgs& a) {
    const SimilarityProfile p = parse_profile(read_file(a.profile));
    const SchedulePlan before = load_schedule(a.sched, p.K);
    if (before.layers != p.layers()) throw ConsistencyError("profile and schedule disagree on the number of layers");
    if (a.topk < 0 || a.topk > p.layers() * 3) throw RangeError("--topk outside [0, 3L]");
    const auto U = select_upstream_blocks(p, a.topk);
    const SchedulePlan after = bubble_union(before, U);
    write_file(a.out, write_schedule(after));
    if (!a.diff.empty()) write_file(a.diff, write_added_steps(added_steps(before, after)));
    return 0;
}

struct RunArgs {
    std::string config, sched, report, baseline, surface;
    std::uint64_t seed = 0;
};

int parse_uniform_baseline(const std::string& spec) {
    const std::string tag = "uniform:";
    if (spec.rfind(tag, 0) != 0) throw ParseError("--baseline must look like uniform:S");
    return static_cast<int>(detail::parse_integer(spec.substr(tag.size()), 1));
}

int cmd_run(const RunArgs& a) {
    const DenoiserConfig config = load_config(a.config);
    const ToyDenoiser m = build_denoiser(config);
    const SchedulePlan plan = load_schedule(a.sched, config.K);
    if (plan.layers != config.layers) throw ConsistencyError("schedule covers a different number of layers than the config");
    const Episode e = make_episode(config, a.seed);
    const DenoiseResult ref = denoise_full(m, e.init_noise, e.obs);
    const CachedRun run = run_cached(m, plan, e.init_noise, e.obs, &ref);
    KeyValues kv{{"seed", std::to_string(a.seed)}, {"K", std::to_string(config.K)}, {"layers", std::to_string(config.layers)}};
    for (auto& entry : report_entries(run.report, config, plan)) kv.push_back(std::move(entry));
    if (!a.baseline.empty()) {
        const int S = parse_uniform_baseline(a.baseline);
        const SchedulePlan uni = uniform_plan(config.K, S, config.layers);
        const CachedRun base = run_cached(m, uni, e.init_noise, e.obs, &ref);
        kv.emplace_back("baseline", a.baseline);
        for (auto& entry : report_entries(base.report, config, uni, "baseline.")) kv.push_back(std::move(entry));
    }
    write_file(a.report, write_key_values(kv));
    if (!a.surface.empty()) write_file(a.surface, write_surface_csv(caching_error_surface(run.report)));
    return 0;
}

int cmd_verify() {
    const auto results = verify::run_all();
    std::printf("%-42s %-6s %8s  %s\n", "check", "result", "seconds", "detail");
    for (const auto& r : results) {
        std::printf("%-42s %-6s %8.2f  %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.seconds, r.detail.c_str());
    }
    if (verify::all_passed(results)) return 0;
    for (const auto& r : results)
        if (!r.passed) std::fprintf(stderr, "verification failed: %s\n", r.name.c_str());
    return kExitFailure;
}

struct ExportArgs {
    std::string config, sched, out_dir;
    std::uint64_t seed = 0;
    std::string block = "layers.0.FFN";
};

int cmd_export(const ExportArgs& a) {
    namespace fs = std::filesystem;
    const DenoiserConfig config = load_config(a.config);
    const ToyDenoiser m = build_denoiser(config);
    const BlockId block = parse_block_name(a.block);
    if (block.layer >= config.layers) throw RangeError("block " + a.block + " outside the model");
    std::error_code ec;
    fs::create_directories(a.out_dir, ec);
    if (ec) throw IoError("cannot create " + a.out_dir + ": " + ec.message());
    const fs::path dir(a.out_dir);

    const Episode e = make_episode(config, a.seed);
    const DenoiseResult ref = denoise_full(m, e.init_noise, e.obs);
    write_file((dir / "similarity_matrix.csv").string(), write_matrix_csv(similarity_matrix(ref.trace, block)));

    const SchedulePlan plan = a.sched.empty() ? uniform_plan(config.K, std::min(10, config.K), config.layers)
                                              : load_schedule(a.sched, config.K);
    const CachedRun run = run_cached(m, plan, e.init_noise, e.obs, &ref);
    const ErrorSurface surface = caching_error_surface(run.report);
    write_file((dir / "error_surface.csv").string(), write_surface_csv(surface));
    write_file((dir / "update_mask.csv").string(), write_mask_csv(surface));

    // First-order remainder along one direction, halving eps each point.
    const FfnParams ffn = ffn_params(m.layers.at(static_cast<std::size_t>(block.layer)).ffn);
    SplitMix64 rng(derive_seed(a.seed, 1));
    std::vector<double> x(static_cast<std::size_t>(config.d_model));
    for (auto& v : x) v = rng.normal();
    const auto dir_vec = verify::unit_direction(rng, x.size());
    std::vector<double> eps;
    for (double v = 1e-1; v > 1e-4; v /= 2.0) eps.push_back(v);
    const RemainderCurve curve = verify_first_order(ffn, x, dir_vec, eps);
    write_file((dir / "remainder_curve.csv").string(), write_curve_csv("eps", "remainder", curve.eps, curve.remainder));

    if (config.layers >= 2 && config.K >= 3) {
        const std::uint64_t seeds[] = {a.seed};
        const SurgeStats st = error_surge_experiment(m, SurgeConfig{}, seeds);
        write_file((dir / "beta_response.csv").string(), write_curve_csv("beta", "downstream_error", st.betas, st.beta_response));
        write_file((dir / "surge_scatter.csv").string(),
                   write_curve_csv("upstream_error", "downstream_error", st.upstream_error, st.downstream_error));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Block-wise adaptive caching toolkit"};
    app.require_subcommand(1);

    ProfileArgs pa;
    auto* profile = app.add_subcommand("profile", "Profile per-block feature similarities");
    profile->add_option("--config", pa.config, "Denoiser config (key=value)")->required();
    profile->add_option("--episodes", pa.episodes, "Number of profiling episodes");
    profile->add_option("--seed", pa.seed, "Episode seed")->required();
    profile->add_option("--out", pa.out, "Output .bacprof")->required();
    profile->add_flag("--anchored", pa.anchored, "Also store anchored similarity rows");

    ScheduleArgs sa;
    auto* schedule = app.add_subcommand("schedule", "Solve per-block update schedules");
    schedule->add_option("--profile", sa.profile, "Input .bacprof")->required();
    schedule->add_option("--budget", sa.budget, "Update steps per block, step 0 included")->required();
    schedule->add_flag("--anchored", sa.anchored, "Score segments against the cached feature");
    schedule->add_option("--out", sa.out, "Output .bacsched")->required();

    BubbleArgs ba;
    auto* bubble = app.add_subcommand("bubble", "Propagate downstream FFN updates to upstream blocks");
    bubble->add_option("--profile", ba.profile, "Input .bacprof")->required();
    bubble->add_option("--sched", ba.sched, "Input .bacsched")->required();
    bubble->add_option("--topk", ba.topk, "Number of upstream blocks");
    bubble->add_option("--out", ba.out, "Output .bacsched")->required();
    bubble->add_option("--diff", ba.diff, "Write added steps per block");

    RunArgs ra;
    auto* run = app.add_subcommand("run", "Run one cached episode against full precision");
    run->add_option("--config", ra.config, "Denoiser config")->required();
    run->add_option("--sched", ra.sched, "Input .bacsched")->required();
    run->add_option("--seed", ra.seed, "Episode seed")->required();
    run->add_option("--report", ra.report, "Output report (key=value)")->required();
    run->add_option("--baseline", ra.baseline, "Also run a baseline, e.g. uniform:10");
    run->add_option("--surface", ra.surface, "Write the caching error surface as CSV");

    app.add_subcommand("verify", "Run the invariant suite");

    ExportArgs ea;
    auto* exp = app.add_subcommand("export", "Dump analysis CSVs");
    exp->add_option("--config", ea.config, "Denoiser config")->required();
    exp->add_option("--seed", ea.seed, "Episode seed")->required();
    exp->add_option("--out-dir", ea.out_dir, "Output directory")->required();
    exp->add_option("--sched", ea.sched, "Schedule for the error surface (default uniform S=10)");
    exp->add_option("--block", ea.block, "Block for the similarity matrix and FFN curve");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*profile) return cmd_profile(pa);
        if (*schedule) return cmd_schedule(sa);
        if (*bubble) return cmd_bubble(ba);
        if (*run) return cmd_run(ra);
        if (*exp) return cmd_export(ea);
        return cmd_verify();
    } catch (const bac::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
}
