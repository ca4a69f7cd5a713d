// Copyright 2026 The BAC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bac/denoiser.hpp"
#include "bac/error.hpp"
#include "bac/profiler.hpp"
#include "bac/scheduler.hpp"

namespace bac {

// One schedule per block, indexed by canonical ordinal.
struct SchedulePlan {
    int layers = 0;
    int K = 0;
    std::vector<Schedule> schedules;

    const Schedule& at(BlockId id) const { return schedules.at(static_cast<std::size_t>(id.ordinal())); }
    Schedule& at(BlockId id) { return schedules.at(static_cast<std::size_t>(id.ordinal())); }

    friend bool operator==(const SchedulePlan&, const SchedulePlan&) = default;
};

inline void validate(const SchedulePlan& plan) {
    if (plan.layers < 1) throw PlanError("plan must cover at least one layer");
    if (plan.schedules.size() != static_cast<std::size_t>(plan.layers) * 3) {
        throw PlanError("plan covers " + std::to_string(plan.schedules.size()) + " blocks, expected " +
                        std::to_string(plan.layers * 3));
    }
    for (std::size_t o = 0; o < plan.schedules.size(); ++o) {
        const auto& c = plan.schedules[o];
        if (c.K != plan.K) throw PlanError("schedule horizon mismatch in " + BlockId::from_ordinal(static_cast<int>(o)).name());
        try {
            validate(c);
        } catch (const ScheduleError& e) {
            throw PlanError(BlockId::from_ordinal(static_cast<int>(o)).name() + ": " + e.what());
        }
    }
}

// Same schedule for every block.
inline SchedulePlan broadcast_plan(const Schedule& c, int layers) {
    SchedulePlan p{layers, c.K, std::vector<Schedule>(static_cast<std::size_t>(layers) * 3, c)};
    validate(p);
    return p;
}

// Per-block ACS schedules from a profile.
inline SchedulePlan acs_plan(const SimilarityProfile& profile, int budget, bool anchored = false) {
    SchedulePlan p{profile.layers(), profile.K, {}};
    for (const auto& bp : profile.blocks) {
        p.schedules.push_back(anchored ? solve_schedule_anchored(bp, profile.K, budget).schedule
                                       : solve_schedule(bp.s, profile.K, budget).schedule);
    }
    validate(p);
    return p;
}

// Top-k blocks by ell; ties go to the smaller ordinal.
inline std::vector<BlockId> select_upstream_blocks(std::span<const double> ell, int k) {
    std::vector<int> order(ell.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return ell[a] > ell[b]; });
    const auto n = static_cast<std::size_t>(std::clamp<int>(k, 0, static_cast<int>(ell.size())));
    std::vector<BlockId> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(BlockId::from_ordinal(order[i]));
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<BlockId> select_upstream_blocks(const SimilarityProfile& profile, int k) {
    std::vector<double> ell;
    for (const auto& bp : profile.blocks) ell.push_back(bp.ell);
    return select_upstream_blocks(ell, k);
}

// All FFN blocks strictly after u in the forward chain.
inline std::vector<BlockId> downstream_ffns(BlockId u, int layers) {
    std::vector<BlockId> out;
    for (int l = u.layer; l < layers; ++l) {
        const BlockId v{l, BlockKind::FFN};
        if (v.ordinal() > u.ordinal()) out.push_back(v);
    }
    return out;
}

// C(u) <- C(u) ∪ ⋃_{v ∈ D(u)} C(v) for every u in U, deepest u first so an
// upstream block inherits steps already bubbled into its downstream FFNs.
inline SchedulePlan bubble_union(const SchedulePlan& plan, std::span<const BlockId> upstream) {
    validate(plan);
    SchedulePlan out = plan;
    std::vector<BlockId> order(upstream.begin(), upstream.end());
    std::sort(order.begin(), order.end(), std::greater<>());
    order.erase(std::unique(order.begin(), order.end()), order.end());
    for (const BlockId u : order) {
        if (u.layer < 0 || u.layer >= plan.layers) throw PlanError("upstream block " + u.name() + " not in plan");
        std::set<int> merged(out.at(u).steps.begin(), out.at(u).steps.end());
        for (const BlockId v : downstream_ffns(u, plan.layers)) merged.insert(out.at(v).steps.begin(), out.at(v).steps.end());
        out.at(u).steps.assign(merged.begin(), merged.end());
    }
    return out;
}

// Steps present in `after` but not in `before`, per block; blocks with no
// additions are omitted.
inline std::map<BlockId, std::vector<int>> added_steps(const SchedulePlan& before, const SchedulePlan& after) {
    if (before.schedules.size() != after.schedules.size()) throw PlanError("plans cover different blocks");
    std::map<BlockId, std::vector<int>> out;
    for (std::size_t o = 0; o < before.schedules.size(); ++o) {
        std::vector<int> diff;
        const auto& a = after.schedules[o].steps;
        const auto& b = before.schedules[o].steps;
        std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(diff));
        if (!diff.empty()) out[BlockId::from_ordinal(static_cast<int>(o))] = std::move(diff);
    }
    return out;
}

} // namespace bac
