// Copyright 2026 The BAC Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "bac/bua.hpp"
#include "bac/cache_engine.hpp"
#include "bac/error_lab.hpp"
#include "bac/io.hpp"
#include "bac/reference_schedules.hpp"
#include "bac/scheduler.hpp"
#include "bac/verify.hpp"

namespace {

using namespace bac;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Sweep {
    int K;
    int budget;
    std::vector<double> s;
};

std::vector<Sweep> dp_sweep() {
    SplitMix64 rng(20240601);
    std::vector<Sweep> out;
    for (int c = 0; c < 200; ++c) {
        const int K = 5 + c % 20;
        const int budget = 1 + (c / 20) % std::min(9, K);
        out.push_back({K, budget, verify::random_similarities(rng, K)});
    }
    return out;
}

Outcome dp_optimality() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (const auto& c : dp_sweep()) {
        const double dp = objective(solve_schedule(c.s, c.K, c.budget).schedule, c.s);
        const double bf = objective(brute_force_schedule(c.s, c.K, c.budget), c.s);
        worst = std::max(worst, std::abs(dp - bf));
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-9 && secs < 10.0, "200 cases, max |dp - brute| " + fmt("%.3g", worst) + ", " + fmt("%.2f s", secs)};
}

Outcome decomposition() {
    double worst = 0.0;
    for (const auto& c : dp_sweep()) {
        const double dp = objective(solve_schedule(c.s, c.K, c.budget).schedule, c.s);
        worst = std::max(worst, std::abs(dp - decomposition_objective(c.s, c.K, c.budget)));
    }
    return {worst <= 1e-9, "200 cases, max |dp - (sum s - M smallest)| " + fmt("%.3g", worst)};
}

Outcome hand_instance() {
    const std::vector<double> s{0.9, 0.1, 0.8, 0.2};
    const Schedule c = solve_schedule(s, 5, 3).schedule;
    const double v = objective(c, s);
    const Schedule bf = brute_force_schedule(s, 5, 3);
    const bool ok = c.steps == std::vector<int>{0, 2, 4} && bf.steps == c.steps && v == s[0] + s[2];
    return {ok, "schedule {" + format_steps(c.steps) + "}, objective " + format_real(v, 17)};
}

Outcome bit_exact() {
    const ToyDenoiser m = build_denoiser(DenoiserConfig{});
    const SchedulePlan plan = full_plan(m.config.K, m.config.layers);
    int equal = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Episode e = make_episode(m.config, seed);
        const DenoiseResult ref = denoise_full(m, e.init_noise, e.obs);
        if (run_cached(m, plan, e.init_noise, e.obs, &ref).final_action == ref.final_action) ++equal;
    }
    return {equal == 10, std::to_string(equal) + "/10 seeds bit-identical"};
}

Outcome first_order_remainder() {
    std::vector<double> ratios;
    for (int c = 0; c < 50; ++c) {
        const FfnParams p = random_ffn(64, 256, 7000 + static_cast<std::uint64_t>(c));
        SplitMix64 rng(8000 + static_cast<std::uint64_t>(c));
        std::vector<double> x(64);
        for (double& v : x) v = rng.normal();
        const auto dir = verify::unit_direction(rng, 64);
        ratios.push_back(verify_first_order(p, x, dir, std::vector<double>{1e-2, 5e-3}).ratios.at(0));
    }
    std::sort(ratios.begin(), ratios.end());
    const double median = 0.5 * (ratios[24] + ratios[25]);

    const FfnParams p2 = random_ffn(2, 8, 9000);
    SplitMix64 rng(9001);
    double worst = 0.0;
    for (int c = 0; c < 20; ++c) {
        const std::vector<double> delta{rng.normal(), rng.normal()};
        worst = std::max(worst, l2(linear_response(p2, std::vector<double>{1.0, -1.0}, delta)));
    }
    const bool ok = median >= 3.5 && median <= 4.5 && worst <= 1e-12;
    return {ok, "median r(eps)/r(eps/2) " + fmt("%.4f", median) + ", d=2 max |f| " + fmt("%.3g", worst)};
}

Outcome jacobian() {
    SplitMix64 rng(31337);
    int cases = 0;
    double worst = 0.0;
    while (cases < 100) {
        const std::size_t d = 3 + rng.next() % 62;
        std::vector<double> x(d), g(d);
        for (double& v : x) v = rng.normal();
        for (double& v : g) v = rng.uniform(0.5, 1.5);
        if (ln_stats(x).sigma < 0.1) continue;
        const Matrix J = ln_operators(x, g).jacobian();
        const Matrix F = verify::ln_jacobian_fd(x, g, 1e-5);
        worst = std::max(worst, frobenius(J - F) / std::max(frobenius(F), 1e-300));
        ++cases;
    }
    return {worst <= 1e-5, "100 cases, max relative error " + fmt("%.3g", worst)};
}

Outcome bua_fixture() {
    const SchedulePlan acs = parse_schedule(reference::kCanPhAcs, reference::kCanPhK);
    const auto printed = parse_added_steps(reference::kCanPhAdded);
    std::vector<BlockId> U;
    for (const auto& [id, steps] : printed) U.push_back(id);
    const SchedulePlan after = bubble_union(acs, U);
    int present = 0, total = 0;
    for (const auto& [id, steps] : printed)
        for (int t : steps) {
            ++total;
            present += after.at(id).contains(t) ? 1 : 0;
        }
    bool spot = true;
    for (int t : {28, 47, 62, 69, 74, 77}) spot = spot && after.at({6, BlockKind::SA}).contains(t);
    return {present == total && spot,
            std::to_string(present) + "/" + std::to_string(total) + " printed added steps reproduced over " +
                std::to_string(U.size()) + " add-bearing blocks, layers.6.SA spot " + (spot ? "ok" : "missing")};
}

Outcome bua_properties() {
    SplitMix64 rng(4242);
    int ok = 0;
    for (int c = 0; c < 100; ++c) {
        const int L = 1 + static_cast<int>(rng.next() % 8);
        const int K = 2 + static_cast<int>(rng.next() % 60);
        const SchedulePlan plan = verify::random_plan(rng, L, K);
        std::vector<double> ell(static_cast<std::size_t>(L) * 3);
        for (double& v : ell) v = rng.uniform01();
        const auto U = select_upstream_blocks(ell, static_cast<int>(rng.next() % (3 * L + 1)));
        const SchedulePlan after = bubble_union(plan, U);
        bool good = true;
        try {
            validate(after);
        } catch (const Error&) {
            good = false;
        }
        good = good && bubble_union(after, U) == after;
        const std::set<BlockId> inU(U.begin(), U.end());
        for (BlockId id : all_blocks(L)) {
            const auto& a = after.at(id).steps;
            const auto& b = plan.at(id).steps;
            good = good && (inU.count(id) ? std::includes(a.begin(), a.end(), b.begin(), b.end()) : a == b);
        }
        ok += good ? 1 : 0;
    }
    return {ok == 100, std::to_string(ok) + "/100 random plans satisfy superset, idempotence, preservation, validity"};
}

Outcome flops() {
    const ToyDenoiser m = build_denoiser(DenoiserConfig{});
    SplitMix64 rng(99);
    int equal = 0;
    for (int i = 0; i < 5; ++i) {
        const SchedulePlan plan = verify::random_plan(rng, m.config.layers, m.config.K);
        const Episode e = make_episode(m.config, 100 + static_cast<std::uint64_t>(i));
        const RunReport rep = run_cached(m, plan, e.init_noise, e.obs).report;
        const FlopsEstimate est = flops_estimate(m.config, plan);
        if (rep.flops_cached == est.flops_cached && rep.flops_full == est.flops_full) ++equal;
    }
    const FlopsEstimate uni = flops_estimate(m.config, uniform_plan(100, 10, m.config.layers));
    const bool ok = equal == 5 && uni.block_speedup == 10.0 && uni.speedup >= 3.0;
    return {ok, std::to_string(equal) + "/5 runs analytic == counted, uniform S=10 block reduction " +
                    fmt("%.1fx", uni.block_speedup) + ", whole-run speedup " + fmt("%.2fx", uni.speedup)};
}

Outcome error_surge() {
    const ToyDenoiser m = build_denoiser(DenoiserConfig{});
    const std::vector<std::uint64_t> seeds{11, 12, 13, 14, 15};
    const SurgeStats st = error_surge_experiment(m, SurgeConfig{}, seeds);
    // betas are {0, .25, .5, 1, 2, 4}; monotonicity is required on .25..2
    bool monotone = true;
    for (std::size_t i = 2; i <= 4; ++i) monotone = monotone && st.beta_response[i] >= st.beta_response[i - 1];
    const std::size_t steps = st.upstream_error.size() / seeds.size();
    const bool ok = st.pearson_r > 0.5 && monotone && steps >= 30;
    return {ok, "pooled r " + fmt("%.4f", st.pearson_r) + " over " + std::to_string(steps) + " steps x 5 seeds, beta response " +
                    (monotone ? "monotone" : "not monotone")};
}

Outcome acs_vs_uniform() {
    const ToyDenoiser m = build_denoiser(DenoiserConfig{});
    const SimilarityProfile profile = profile_task(m, 3, 1000);
    const SchedulePlan acs = acs_plan(profile, 10);
    const SchedulePlan uni = uniform_plan(m.config.K, 10, m.config.layers);
    const SchedulePlan bua = bubble_union(acs, select_upstream_blocks(profile, 5));
    int acs_wins = 0, bua_wins = 0, bua_beats_uniform = 0;
    const int n = 20;
    for (int i = 0; i < n; ++i) {
        const Episode e = make_episode(m.config, 5000 + static_cast<std::uint64_t>(i));
        const DenoiseResult ref = denoise_full(m, e.init_noise, e.obs);
        const RunReport ra = run_cached(m, acs, e.init_noise, e.obs, &ref).report;
        const RunReport ru = run_cached(m, uni, e.init_noise, e.obs, &ref).report;
        const RunReport rb = run_cached(m, bua, e.init_noise, e.obs, &ref).report;
        acs_wins += ra.final_action_l2 <= ru.final_action_l2 ? 1 : 0;
        bua_wins += max_ffn_update_error(rb) < max_ffn_update_error(ra) ? 1 : 0;
        bua_beats_uniform += rb.final_action_l2 <= ru.final_action_l2 ? 1 : 0;
    }
    const bool ok = 2 * acs_wins > n && 2 * bua_wins > n;
    return {ok, "ACS <= uniform on " + std::to_string(acs_wins) + "/20 seeds, BUA lowers max FFN update error on " +
                    std::to_string(bua_wins) + "/20, ACS+BUA <= uniform on " + std::to_string(bua_beats_uniform) + "/20"};
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"DP optimality vs brute force", dp_optimality},
        {"decomposition identity", decomposition},
        {"hand instance", hand_instance},
        {"bit-exact full-step plan", bit_exact},
        {"first-order remainder", first_order_remainder},
        {"LayerNorm Jacobian", jacobian},
        {"BUA reference schedules", bua_fixture},
        {"BUA set properties", bua_properties},
        {"FLOPs accounting", flops},
        {"error surge correlation", error_surge},
        {"ACS beats uniform", acs_vs_uniform},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::printf("criterion %2zu %-30s %s  %s\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
