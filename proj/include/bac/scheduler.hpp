// Copyright 2026 The BAC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "bac/error.hpp"
#include "bac/profiler.hpp"

namespace bac {

// Update steps of one block, in execution order. Always contains step 0:
// the cache is cold before the first step.
struct Schedule {
    std::vector<int> steps;
    int K = 0;

    std::size_t size() const { return steps.size(); }
    bool contains(int t) const { return std::binary_search(steps.begin(), steps.end(), t); }

    friend bool operator==(const Schedule&, const Schedule&) = default;
};

inline void validate(const Schedule& c) {
    if (c.K < 1) throw ScheduleError("schedule horizon must be positive");
    if (c.steps.empty() || c.steps.front() != 0) throw ScheduleError("schedule must contain step 0");
    for (std::size_t i = 0; i < c.steps.size(); ++i) {
        if (c.steps[i] < 0 || c.steps[i] >= c.K) {
            throw ScheduleError("update step " + std::to_string(c.steps[i]) + " outside [0, " + std::to_string(c.K) + ")");
        }
        if (i > 0 && c.steps[i] <= c.steps[i - 1]) throw ScheduleError("update steps must be strictly ascending");
    }
}

inline Schedule make_schedule(std::vector<int> steps, int K) {
    Schedule c{std::move(steps), K};
    validate(c);
    return c;
}

// Score of a segment that updates at step `start` and reuses through step
// `end` (inclusive, end >= start).
using SegmentScore = std::function<double(int start, int end)>;

namespace detail {

inline double phi(std::span<const double> prefix, int i, int j) {
    return j <= i ? 0.0 : prefix[static_cast<std::size_t>(j)] - prefix[static_cast<std::size_t>(i)];
}

inline void check_similarities(std::span<const double> s, int K) {
    if (K < 1) throw RangeError("K must be positive");
    if (static_cast<int>(s.size()) != K - 1) {
        throw ConsistencyError("expected " + std::to_string(K - 1) + " similarities, got " + std::to_string(s.size()));
    }
}

inline void check_budget(int budget, int K) {
    if (budget < 1 || budget > K) {
        throw BudgetError("budget " + std::to_string(budget) + " outside [1, " + std::to_string(K) + "]");
    }
}

} // namespace detail

// Sum over segments of phi(c_m, c_{m+1} - 1) with c_{M+1} = K.
inline double objective(const Schedule& c, std::span<const double> s) {
    validate(c);
    detail::check_similarities(s, c.K);
    const auto prefix = prefix_sums(s);
    double total = 0.0;
    for (std::size_t m = 0; m < c.steps.size(); ++m) {
        const int next = m + 1 < c.steps.size() ? c.steps[m + 1] : c.K;
        total += detail::phi(prefix, c.steps[m], next - 1);
    }
    return total;
}

inline constexpr double kInfeasible = -std::numeric_limits<double>::infinity();

struct DpTables {
    std::vector<std::vector<double>> dp;  // (M+1) × K; kInfeasible marks unreachable states
    std::vector<std::vector<int>> ptr;    // (M+1) × K; -1 where undefined
    int endpoint = 0;                     // j*, the last update step
    double optimum = 0.0;
};

struct SolveResult {
    Schedule schedule;
    DpTables tables;
};

namespace detail {

// dp[m][j]: best score of the segments preceding the m-th interior update,
// which happens at step j. dp[0][0] = 0 is the mandatory update at step 0.
//   dp[m][j]  = max_{i<j} dp[m-1][i] + score(i, j-1)
//   ptr[m][j] = smallest maximizing i
//   j*        = smallest argmax_j dp[M][j] + score(j, K-1)
// `backtrack_offset` exists only so the verification harness can inject a
// deliberate fault; production callers leave it at 0.
inline SolveResult solve_segments(int K, int budget, const SegmentScore& score, int backtrack_offset = 0) {
    check_budget(budget, K);
    const int M = budget - 1;
    const auto Kz = static_cast<std::size_t>(K);
    DpTables tb;
    tb.dp.assign(static_cast<std::size_t>(M) + 1, std::vector<double>(Kz, kInfeasible));
    tb.ptr.assign(static_cast<std::size_t>(M) + 1, std::vector<int>(Kz, -1));
    tb.dp[0][0] = 0.0;
    for (int m = 1; m <= M; ++m) {
        auto& row = tb.dp[static_cast<std::size_t>(m)];
        const auto& prev = tb.dp[static_cast<std::size_t>(m) - 1];
        for (int j = m; j < K; ++j) {
            double best = kInfeasible;
            int arg = -1;
            for (int i = 0; i < j; ++i) {
                if (prev[static_cast<std::size_t>(i)] == kInfeasible) continue;
                const double v = prev[static_cast<std::size_t>(i)] + score(i, j - 1);
                if (arg < 0 || v > best) {
                    best = v;
                    arg = i;
                }
            }
            row[static_cast<std::size_t>(j)] = best;
            tb.ptr[static_cast<std::size_t>(m)][static_cast<std::size_t>(j)] = arg;
        }
    }
    double best = kInfeasible;
    int jstar = -1;
    for (int j = 0; j < K; ++j) {
        const double d = tb.dp[static_cast<std::size_t>(M)][static_cast<std::size_t>(j)];
        if (d == kInfeasible) continue;
        const double v = d + score(j, K - 1);
        if (jstar < 0 || v > best) {
            best = v;
            jstar = j;
        }
    }
    tb.endpoint = jstar;
    tb.optimum = best;
    std::vector<int> steps(static_cast<std::size_t>(M) + 1);
    int c = jstar;
    for (int m = M; m >= 1; --m) {
        steps[static_cast<std::size_t>(m)] = c;
        c = tb.ptr[static_cast<std::size_t>(m)][static_cast<std::size_t>(c)] + backtrack_offset;
        c = std::clamp(c, 0, K - 1);
    }
    steps[0] = c;
    return {Schedule{std::move(steps), K}, std::move(tb)};
}

} // namespace detail

// Optimal schedule with `budget` total updates (step 0 included).
inline SolveResult solve_schedule(std::span<const double> s, int K, int budget) {
    detail::check_similarities(s, K);
    detail::check_budget(budget, K);
    const auto prefix = prefix_sums(s);
    auto result = detail::solve_segments(K, budget, [&](int i, int e) { return detail::phi(prefix, i, e); });
    validate(result.schedule);
    return result;
}

// Variant scoring each segment by similarity to the feature actually cached
// at its update step: sum_{k=start+1}^{end} cos(b_start, b_k).
inline SolveResult solve_schedule_anchored(const BlockProfile& bp, int K, int budget) {
    if (bp.anchor.size() != static_cast<std::size_t>(K)) {
        throw ConsistencyError("profile carries no anchored similarities for K=" + std::to_string(K));
    }
    detail::check_budget(budget, K);
    std::vector<std::vector<double>> row_prefix(static_cast<std::size_t>(K));
    for (int i = 0; i < K; ++i) {
        auto& rp = row_prefix[static_cast<std::size_t>(i)];
        rp.assign(static_cast<std::size_t>(K), 0.0);
        for (int k = i + 1; k < K; ++k) rp[k] = rp[k - 1] + bp.anchor[i][k];
    }
    auto result = detail::solve_segments(K, budget, [&](int i, int e) { return row_prefix[i][e]; });
    validate(result.schedule);
    return result;
}

inline std::uint64_t binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t r = 1;
    for (int i = 1; i <= k; ++i) {
        r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
        if (r > (1ULL << 60)) return r;
    }
    return r;
}

inline constexpr std::uint64_t kBruteForceLimit = 1'000'000;

// Exhaustive search over interior update sets; lexicographically smallest
// maximizer wins ties.
inline Schedule brute_force_schedule(std::span<const double> s, int K, int budget) {
    detail::check_similarities(s, K);
    detail::check_budget(budget, K);
    const int M = budget - 1;
    if (binomial(K - 1, M) > kBruteForceLimit) {
        throw SizeError("brute force over C(" + std::to_string(K - 1) + ", " + std::to_string(M) + ") candidates refused");
    }
    const auto prefix = prefix_sums(s);
    std::vector<int> pick(static_cast<std::size_t>(M));
    std::iota(pick.begin(), pick.end(), 1);
    std::vector<int> best_pick = pick;
    double best_value = kInfeasible;
    while (true) {
        // Same summation order as objective().
        double v = 0.0;
        int start = 0;
        for (int c : pick) {
            v += detail::phi(prefix, start, c - 1);
            start = c;
        }
        v += detail::phi(prefix, start, K - 1);
        if (best_value == kInfeasible || v > best_value) {
            best_value = v;
            best_pick = pick;
        }
        // Next combination in lexicographic order over {1..K-1}.
        int i = M - 1;
        while (i >= 0 && pick[static_cast<std::size_t>(i)] == K - 1 - (M - 1 - i)) --i;
        if (i < 0) break;
        ++pick[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < M; ++j) pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j) - 1] + 1;
    }
    Schedule best{{0}, K};
    best.steps.insert(best.steps.end(), best_pick.begin(), best_pick.end());
    return best;
}

// Choosing interior step c drops exactly s_c from the covered sum, so the
// optimum is sum(s) minus the budget-1 smallest similarities.
inline double decomposition_objective(std::span<const double> s, int K, int budget) {
    detail::check_similarities(s, K);
    detail::check_budget(budget, K);
    std::vector<double> sorted(s.begin(), s.end());
    std::sort(sorted.begin(), sorted.end());
    double total = 0.0;
    for (double v : s) total += v;
    double removed = 0.0;
    for (int m = 0; m < budget - 1; ++m) removed += sorted[static_cast<std::size_t>(m)];
    return total - removed;
}

} // namespace bac
