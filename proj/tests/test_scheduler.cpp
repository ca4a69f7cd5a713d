// Copyright 2026 The BAC Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <numeric>

#include "bac/rng.hpp"
#include "bac/scheduler.hpp"

namespace {

using namespace bac;

const std::vector<double> kHand{0.9, 0.1, 0.8, 0.2};

std::vector<double> random_s(SplitMix64& rng, int K) {
    std::vector<double> s(static_cast<std::size_t>(K - 1));
    for (double& v : s) v = rng.uniform(-1.0, 1.0);
    return s;
}

TEST(Schedule, Validation) {
    EXPECT_NO_THROW(make_schedule({0, 3, 7}, 8));
    EXPECT_THROW(make_schedule({1, 3}, 8), ScheduleError);
    EXPECT_THROW(make_schedule({}, 8), ScheduleError);
    EXPECT_THROW(make_schedule({0, 3, 3}, 8), ScheduleError);
    EXPECT_THROW(make_schedule({0, 8}, 8), ScheduleError);
    EXPECT_TRUE(make_schedule({0, 3}, 8).contains(3));
    EXPECT_FALSE(make_schedule({0, 3}, 8).contains(2));
}

TEST(Objective, Examples) {
    const std::vector<double> ones(9, 1.0);
    EXPECT_EQ(objective(make_schedule({0, 2, 5, 8}, 10), ones), 6.0);
    EXPECT_EQ(objective(make_schedule({0, 1, 4, 9}, 10), ones), 6.0);
    std::vector<int> all(10);
    std::iota(all.begin(), all.end(), 0);
    EXPECT_EQ(objective(make_schedule(all, 10), ones), 0.0);
    EXPECT_EQ(objective(make_schedule({0, 2, 4}, 5), kHand), 0.9 + 0.8);
    EXPECT_THROW(objective(make_schedule({0, 2}, 5), ones), ConsistencyError);
}

TEST(Solve, HandInstance) {
    const SolveResult r = solve_schedule(kHand, 5, 3);
    EXPECT_EQ(r.schedule.steps, (std::vector<int>{0, 2, 4}));
    EXPECT_EQ(objective(r.schedule, kHand), 0.9 + 0.8);
    EXPECT_EQ(r.tables.endpoint, 4);
    EXPECT_NEAR(r.tables.optimum, 1.7, 1e-15);
}

TEST(Solve, BudgetExtremes) {
    SplitMix64 rng(1);
    const auto s = random_s(rng, 12);
    const Schedule full = solve_schedule(s, 12, 12).schedule;
    EXPECT_EQ(full.size(), 12u);
    EXPECT_EQ(objective(full, s), 0.0);
    const Schedule one = solve_schedule(s, 12, 1).schedule;
    EXPECT_EQ(one.steps, std::vector<int>{0});
    EXPECT_EQ(objective(one, s), std::accumulate(s.begin(), s.end(), 0.0));
}

TEST(Solve, ShortHorizons) {
    EXPECT_EQ(solve_schedule(std::vector<double>{}, 1, 1).schedule.steps, std::vector<int>{0});
    EXPECT_EQ(solve_schedule(std::vector<double>{0.5}, 2, 2).schedule.steps, (std::vector<int>{0, 1}));
}

TEST(Solve, Errors) {
    EXPECT_THROW(solve_schedule(kHand, 5, 0), BudgetError);
    EXPECT_THROW(solve_schedule(kHand, 5, 6), BudgetError);
    EXPECT_THROW(solve_schedule(kHand, 6, 2), ConsistencyError);
    EXPECT_THROW(solve_schedule(kHand, 0, 1), RangeError);
}

// Ties: with all-equal similarities every schedule of size S scores the
// same; the smallest-index tie-break picks the earliest steps.
TEST(Solve, TiesBreakTowardsEarlySteps) {
    const std::vector<double> flat(9, 0.5);
    EXPECT_EQ(solve_schedule(flat, 10, 4).schedule.steps, (std::vector<int>{0, 1, 2, 3}));
    EXPECT_EQ(brute_force_schedule(flat, 10, 4).steps, (std::vector<int>{0, 1, 2, 3}));
}

TEST(Solve, MatchesBothOraclesOnSweep) {
    SplitMix64 rng(2024);
    for (int c = 0; c < 200; ++c) {
        const int K = 5 + c % 20;
        const int budget = 1 + (c / 20) % std::min(9, K);
        const auto s = random_s(rng, K);
        const Schedule dp = solve_schedule(s, K, budget).schedule;
        ASSERT_EQ(static_cast<int>(dp.size()), budget);
        const double v = objective(dp, s);
        EXPECT_NEAR(v, objective(brute_force_schedule(s, K, budget), s), 1e-9) << "case " << c;
        EXPECT_NEAR(v, decomposition_objective(s, K, budget), 1e-9) << "case " << c;
    }
}

TEST(Solve, DpTablesAreConsistent) {
    SplitMix64 rng(3);
    const auto s = random_s(rng, 15);
    const SolveResult r = solve_schedule(s, 15, 5);
    EXPECT_EQ(r.tables.dp.size(), 5u);
    EXPECT_EQ(r.tables.dp[0][0], 0.0);
    for (int j = 1; j < 15; ++j) EXPECT_EQ(r.tables.dp[0][j], kInfeasible);
    EXPECT_EQ(r.tables.endpoint, r.schedule.steps.back());
    EXPECT_NEAR(r.tables.optimum, objective(r.schedule, s), 1e-12);
    for (std::size_t m = 1; m < r.schedule.size(); ++m) {
        EXPECT_EQ(r.tables.ptr[m][r.schedule.steps[m]], r.schedule.steps[m - 1]);
    }
}

TEST(BruteForce, Examples) {
    EXPECT_EQ(brute_force_schedule(kHand, 5, 3).steps, (std::vector<int>{0, 2, 4}));
    EXPECT_EQ(brute_force_schedule(kHand, 5, 1).steps, std::vector<int>{0});
    const std::vector<double> big(59, 0.1);
    EXPECT_THROW(brute_force_schedule(big, 60, 8), SizeError);
    EXPECT_EQ(binomial(5, 2), 10u);
    EXPECT_EQ(binomial(4, 5), 0u);
}

TEST(Decomposition, Examples) {
    EXPECT_NEAR(decomposition_objective(kHand, 5, 3), 1.7, 1e-15);
    EXPECT_NEAR(decomposition_objective(kHand, 5, 1), 2.0, 1e-15);
    const std::vector<double> c(11, 0.25);
    EXPECT_NEAR(decomposition_objective(c, 12, 4), (12 - 1 - 3) * 0.25, 1e-15);
}

// Anchored variant against exhaustive search over its own objective.
TEST(Anchored, MatchesExhaustiveSearch) {
    SplitMix64 rng(5);
    for (int c = 0; c < 40; ++c) {
        const int K = 4 + c % 8;
        const int budget = 1 + c % std::min(4, K);
        BlockProfile bp;
        bp.anchor.assign(K, std::vector<double>(K));
        for (auto& row : bp.anchor)
            for (double& v : row) v = rng.uniform(-1, 1);
        auto score = [&](const std::vector<int>& steps) {
            double total = 0.0;
            for (std::size_t m = 0; m < steps.size(); ++m) {
                const int end = m + 1 < steps.size() ? steps[m + 1] : K;
                for (int k = steps[m] + 1; k < end; ++k) total += bp.anchor[steps[m]][k];
            }
            return total;
        };
        double best = kInfeasible;
        for (unsigned mask = 0; mask < (1u << (K - 1)); ++mask) {
            if (__builtin_popcount(mask) != budget - 1) continue;
            std::vector<int> steps{0};
            for (int t = 1; t < K; ++t)
                if (mask & (1u << (t - 1))) steps.push_back(t);
            best = std::max(best, score(steps));
        }
        const Schedule got = solve_schedule_anchored(bp, K, budget).schedule;
        EXPECT_NEAR(score(got.steps), best, 1e-9) << "case " << c;
    }
}

TEST(Anchored, RequiresAnchorRows) {
    const BlockProfile bp = make_block_profile(kHand, 0.0);
    EXPECT_THROW(solve_schedule_anchored(bp, 5, 2), ConsistencyError);
}

// Backtracking through a shifted pointer must be caught by the oracles.
TEST(Mutation, OffByOneBacktrackIsDetected) {
    SplitMix64 rng(6);
    int caught = 0;
    for (int c = 0; c < 50; ++c) {
        const int K = 8 + c % 10;
        const int budget = 3 + c % 4;
        const auto s = random_s(rng, K);
        const auto prefix = prefix_sums(s);
        const auto bad = detail::solve_segments(K, budget, [&](int i, int e) { return detail::phi(prefix, i, e); }, -1);
        try {
            if (std::abs(objective(bad.schedule, s) - decomposition_objective(s, K, budget)) > 1e-9) ++caught;
        } catch (const ScheduleError&) {
            ++caught;
        }
    }
    EXPECT_GT(caught, 0);
}

} // namespace
