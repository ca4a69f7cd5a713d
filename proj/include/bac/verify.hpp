// Copyright 2026 The BAC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "bac/bua.hpp"
#include "bac/cache_engine.hpp"
#include "bac/denoiser.hpp"
#include "bac/error_lab.hpp"
#include "bac/io.hpp"
#include "bac/reference_schedules.hpp"
#include "bac/rng.hpp"
#include "bac/scheduler.hpp"

// Self-check suite behind `bac verify`.
namespace bac::verify {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

using Solver = std::function<Schedule(std::span<const double>, int, int)>;

struct Options {
    Solver solver = [](std::span<const double> s, int K, int budget) { return solve_schedule(s, K, budget).schedule; };
    std::uint64_t seed = 20240601;
    int dp_cases = 200;
    int bua_cases = 100;
    int bit_exact_seeds = 10;
    DenoiserConfig model{};
};

inline std::vector<double> random_similarities(SplitMix64& rng, int K) {
    std::vector<double> s(static_cast<std::size_t>(K - 1));
    for (double& v : s) v = rng.uniform(-1.0, 1.0);
    return s;
}

// Central finite-difference Jacobian of the eps-free LayerNorm.
inline Matrix ln_jacobian_fd(std::span<const double> x, std::span<const double> gamma, double h) {
    const std::size_t d = x.size();
    Matrix J(d, d);
    std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
    for (std::size_t j = 0; j < d; ++j) {
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        const auto yp = layer_norm(xp, gamma);
        const auto ym = layer_norm(xm, gamma);
        for (std::size_t i = 0; i < d; ++i) J(i, j) = (yp[i] - ym[i]) / (2.0 * h);
        xp[j] = x[j];
        xm[j] = x[j];
    }
    return J;
}

inline std::vector<double> unit_direction(SplitMix64& rng, std::size_t d) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.normal();
    const double n = l2(v);
    for (double& x : v) x /= n;
    return v;
}

inline SchedulePlan random_plan(SplitMix64& rng, int layers, int K) {
    SchedulePlan p{layers, K, {}};
    for (int o = 0; o < layers * 3; ++o) {
        std::vector<int> steps{0};
        const double density = rng.uniform(0.0, 0.5);
        for (int t = 1; t < K; ++t)
            if (rng.uniform01() < density) steps.push_back(t);
        p.schedules.push_back(make_schedule(std::move(steps), K));
    }
    return p;
}

namespace detail {

template <class F>
CheckResult run_check(const std::string& name, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    CheckResult r{name, false, "", 0.0};
    try {
        r.detail = body();
        r.passed = r.detail.empty() || r.detail.rfind("ok", 0) == 0;
    } catch (const std::exception& e) {
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

} // namespace detail

inline std::vector<CheckResult> run_all(const Options& opt = {}) {
    std::vector<CheckResult> out;

    out.push_back(detail::run_check("dp_matches_brute_force", [&]() -> std::string {
        SplitMix64 rng(opt.seed);
        for (int c = 0; c < opt.dp_cases; ++c) {
            const int K = 5 + c % 20;
            const int budget = 1 + (c / 20) % std::min(9, K);
            const auto s = random_similarities(rng, K);
            const double dp = objective(opt.solver(s, K, budget), s);
            const double bf = objective(brute_force_schedule(s, K, budget), s);
            if (std::abs(dp - bf) > 1e-9) {
                return "case " + std::to_string(c) + " (K=" + std::to_string(K) + ", S=" + std::to_string(budget) +
                       "): dp " + format_real(dp, 12) + " vs brute force " + format_real(bf, 12);
            }
        }
        return "ok";
    }));

    out.push_back(detail::run_check("dp_matches_decomposition", [&]() -> std::string {
        SplitMix64 rng(opt.seed);
        for (int c = 0; c < opt.dp_cases; ++c) {
            const int K = 5 + c % 20;
            const int budget = 1 + (c / 20) % std::min(9, K);
            const auto s = random_similarities(rng, K);
            const Schedule sched = opt.solver(s, K, budget);
            if (static_cast<int>(sched.size()) != budget) return "case " + std::to_string(c) + ": wrong schedule size";
            const double dp = objective(sched, s);
            const double dec = decomposition_objective(s, K, budget);
            if (std::abs(dp - dec) > 1e-9) return "case " + std::to_string(c) + ": dp " + format_real(dp, 12) + " vs " + format_real(dec, 12);
        }
        return "ok";
    }));

    out.push_back(detail::run_check("dp_hand_instance", [&]() -> std::string {
        const std::vector<double> s{0.9, 0.1, 0.8, 0.2};
        const Schedule c = opt.solver(s, 5, 3);
        if (c.steps != std::vector<int>{0, 2, 4}) return "schedule " + format_steps(c.steps);
        const double v = objective(c, s);
        if (v != 0.9 + 0.8) return "objective " + format_real(v, 17);
        return "ok";
    }));

    out.push_back(detail::run_check("ln_jacobian_matches_finite_differences", [&]() -> std::string {
        SplitMix64 rng(opt.seed + 1);
        const std::size_t dims[] = {3, 8, 64};
        for (int c = 0; c < 100; ++c) {
            const std::size_t d = dims[c % 3];
            std::vector<double> x(d), g(d);
            for (auto& v : x) v = rng.normal();
            for (auto& v : g) v = rng.uniform(0.5, 1.5);
            if (ln_stats(x).sigma < 0.1) continue;
            const Matrix J = ln_operators(x, g).jacobian();
            const Matrix F = ln_jacobian_fd(x, g, 1e-5);
            const double rel = frobenius(J - F) / std::max(frobenius(F), 1e-300);
            if (rel > 1e-5) return "case " + std::to_string(c) + ": relative error " + format_real(rel, 6);
        }
        return "ok";
    }));

    out.push_back(detail::run_check("ffn_remainder_is_quadratic", [&]() -> std::string {
        std::vector<double> ratios;
        for (int c = 0; c < 50; ++c) {
            const FfnParams p = random_ffn(64, 256, opt.seed + 100 + static_cast<std::uint64_t>(c));
            SplitMix64 rng(opt.seed + 500 + static_cast<std::uint64_t>(c));
            std::vector<double> x(64);
            for (auto& v : x) v = rng.normal();
            const auto dir = unit_direction(rng, 64);
            const std::vector<double> eps{1e-2, 5e-3};
            ratios.push_back(verify_first_order(p, x, dir, eps).ratios.at(0));
        }
        std::sort(ratios.begin(), ratios.end());
        const double median = 0.5 * (ratios[24] + ratios[25]);
        if (median < 3.5 || median > 4.5) return "median ratio " + format_real(median, 6);
        return "ok (median ratio " + format_real(median, 6) + ")";
    }));

    out.push_back(detail::run_check("ffn_null_response_d2", [&]() -> std::string {
        SplitMix64 rng(opt.seed + 2);
        for (int c = 0; c < 20; ++c) {
            const FfnParams p = random_ffn(2, 8, opt.seed + 900 + static_cast<std::uint64_t>(c));
            std::vector<double> x{rng.normal(), rng.normal()};
            if (std::abs(x[0] - x[1]) < 1e-3) x[1] += 1.0;
            const std::vector<double> delta{rng.normal(), rng.normal()};
            const double n = l2(linear_response(p, x, delta));
            if (n > 1e-12) return "case " + std::to_string(c) + ": |f| = " + format_real(n, 6);
        }
        return "ok";
    }));

    out.push_back(detail::run_check("linear_response_is_linear", [&]() -> std::string {
        SplitMix64 rng(opt.seed + 3);
        for (int c = 0; c < 20; ++c) {
            const FfnParams p = random_ffn(16, 64, opt.seed + 1300 + static_cast<std::uint64_t>(c));
            std::vector<double> x(16), delta(16);
            for (auto& v : x) v = rng.normal();
            for (auto& v : delta) v = rng.normal();
            const double alpha = rng.uniform(-3.0, 3.0);
            auto scaled = delta;
            for (auto& v : scaled) v *= alpha;
            const auto f1 = linear_response(p, x, delta);
            const auto f2 = linear_response(p, x, scaled);
            for (std::size_t i = 0; i < f1.size(); ++i) {
                if (std::abs(f2[i] - alpha * f1[i]) > 1e-12 * std::max(1.0, std::abs(alpha * f1[i]))) {
                    return "case " + std::to_string(c) + " not linear";
                }
            }
        }
        return "ok";
    }));

    out.push_back(detail::run_check("bua_set_properties", [&]() -> std::string {
        SplitMix64 rng(opt.seed + 4);
        for (int c = 0; c < opt.bua_cases; ++c) {
            const int layers = 1 + static_cast<int>(rng.next() % 8);
            const int K = 2 + static_cast<int>(rng.next() % 60);
            const SchedulePlan plan = random_plan(rng, layers, K);
            std::vector<double> ell(static_cast<std::size_t>(layers) * 3);
            for (auto& v : ell) v = rng.uniform01();
            const auto U = select_upstream_blocks(ell, static_cast<int>(rng.next() % (layers * 3 + 1)));
            const SchedulePlan after = bubble_union(plan, U);
            validate(after);
            if (bubble_union(after, U) != after) return "case " + std::to_string(c) + ": not idempotent";
            const std::set<BlockId> inU(U.begin(), U.end());
            for (int o = 0; o < layers * 3; ++o) {
                const BlockId id = BlockId::from_ordinal(o);
                const auto& a = after.at(id).steps;
                const auto& b = plan.at(id).steps;
                if (!inU.count(id)) {
                    if (a != b) return "case " + std::to_string(c) + ": " + id.name() + " outside U changed";
                    continue;
                }
                if (!std::includes(a.begin(), a.end(), b.begin(), b.end())) return "case " + std::to_string(c) + ": lost steps";
                for (const BlockId v : downstream_ffns(id, layers)) {
                    const auto& dv = after.at(v).steps;
                    if (!std::includes(a.begin(), a.end(), dv.begin(), dv.end())) {
                        return "case " + std::to_string(c) + ": " + id.name() + " misses steps of " + v.name();
                    }
                }
            }
            const auto fb = flops_estimate(DenoiserConfig{layers, 8, 2, 2, 2, 2, K, 1}, plan);
            const auto fa = flops_estimate(DenoiserConfig{layers, 8, 2, 2, 2, 2, K, 1}, after);
            if (fa.flops_cached < fb.flops_cached) return "case " + std::to_string(c) + ": cost decreased";
        }
        return "ok";
    }));

    out.push_back(detail::run_check("bua_reference_schedules", [&]() -> std::string {
        const SchedulePlan acs = parse_schedule(reference::kCanPhAcs, reference::kCanPhK);
        const auto printed = parse_added_steps(reference::kCanPhAdded);
        std::vector<BlockId> U;
        for (const auto& [id, steps] : printed) U.push_back(id);
        const SchedulePlan after = bubble_union(acs, U);
        for (const auto& [id, steps] : printed) {
            for (int t : steps) {
                if (!after.at(id).contains(t)) return id.name() + " lacks step " + std::to_string(t);
            }
        }
        return "ok";
    }));

    out.push_back(detail::run_check("full_plan_is_bit_exact", [&]() -> std::string {
        const ToyDenoiser m = build_denoiser(opt.model);
        const SchedulePlan plan = full_plan(m.config.K, m.config.layers);
        for (int i = 0; i < opt.bit_exact_seeds; ++i) {
            const Episode e = make_episode(m.config, derive_seed(opt.seed, static_cast<std::uint64_t>(i)));
            const DenoiseResult ref = denoise_full(m, e.init_noise, e.obs);
            const CachedRun run = run_cached(m, plan, e.init_noise, e.obs, &ref);
            if (!(run.final_action == ref.final_action)) return "seed index " + std::to_string(i) + " differs";
            if (run.report.flops_cached != run.report.flops_full) return "full plan spent different MACs";
        }
        return "ok";
    }));

    out.push_back(detail::run_check("flops_analytic_matches_instrumented", [&]() -> std::string {
        const ToyDenoiser m = build_denoiser(opt.model);
        SplitMix64 rng(opt.seed + 5);
        for (int i = 0; i < 3; ++i) {
            const SchedulePlan plan = random_plan(rng, m.config.layers, m.config.K);
            const Episode e = make_episode(m.config, derive_seed(opt.seed + 7, static_cast<std::uint64_t>(i)));
            const CachedRun run = run_cached(m, plan, e.init_noise, e.obs);
            const FlopsEstimate est = flops_estimate(m.config, plan);
            if (est.flops_full != run.report.flops_full || est.flops_cached != run.report.flops_cached) {
                return "analytic " + std::to_string(est.flops_cached) + " vs counted " + std::to_string(run.report.flops_cached);
            }
        }
        return "ok";
    }));

    return out;
}

inline bool all_passed(const std::vector<CheckResult>& results) {
    return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

} // namespace bac::verify
