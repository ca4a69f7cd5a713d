// Copyright 2026 The BAC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bac/bua.hpp"
#include "bac/denoiser.hpp"
#include "bac/error.hpp"
#include "bac/profiler.hpp"
#include "bac/scheduler.hpp"
#include "bac/tensor.hpp"

namespace bac {

// Evenly spaced updates: round(i·K/S) for i = 0..S-1, halves rounding up.
inline SchedulePlan uniform_plan(int K, int budget, int layers) {
    if (budget < 1 || budget > K) {
        throw BudgetError("budget " + std::to_string(budget) + " outside [1, " + std::to_string(K) + "]");
    }
    std::vector<int> steps;
    for (int i = 0; i < budget; ++i) {
        const long long num = 2LL * i * K + budget;
        const int t = static_cast<int>(num / (2LL * budget));
        if (steps.empty() || steps.back() != t) steps.push_back(t);
    }
    return broadcast_plan(make_schedule(std::move(steps), K), layers);
}

inline SchedulePlan full_plan(int K, int layers) {
    std::vector<int> steps(static_cast<std::size_t>(K));
    std::iota(steps.begin(), steps.end(), 0);
    return broadcast_plan(make_schedule(std::move(steps), K), layers);
}

// Analytic multiply-accumulate counts. Only matrix products are charged.
//   SA : 4·T·d²            (Q, K, V, O projections)
//      + 2·T²·d            (scores over all T² pairs, value mixing)
//   CA : 2·T·d² + 2·Tc·d²  (Q, O on action tokens; K, V on cond tokens)
//      + 2·T·Tc·d          (scores, value mixing)
//   FFN: 8·T·d²            (d -> 4d -> d)
//   per-step overhead: Tc·a·d (observation encoder) + 2·T·a·d (input and output projections)
// with T = action_tokens, Tc = cond_tokens, a = action_dim, d = d_model.
struct CostModel {
    std::uint64_t sa = 0, ca = 0, ffn = 0, overhead = 0;

    std::uint64_t block(BlockKind k) const {
        switch (k) {
        case BlockKind::SA: return sa;
        case BlockKind::CA: return ca;
        case BlockKind::FFN: return ffn;
        }
        return 0;
    }
};

inline CostModel cost_model(const DenoiserConfig& c) {
    const std::uint64_t T = static_cast<std::uint64_t>(c.action_tokens);
    const std::uint64_t Tc = static_cast<std::uint64_t>(c.cond_tokens);
    const std::uint64_t d = static_cast<std::uint64_t>(c.d_model);
    const std::uint64_t a = static_cast<std::uint64_t>(c.action_dim);
    CostModel m;
    m.sa = 4 * T * d * d + 2 * T * T * d;
    m.ca = 2 * T * d * d + 2 * Tc * d * d + 2 * T * Tc * d;
    m.ffn = 8 * T * d * d;
    m.overhead = Tc * a * d + 2 * T * a * d;
    return m;
}

struct FlopsEstimate {
    std::uint64_t flops_full = 0;    // whole run, every block computed every step
    std::uint64_t flops_cached = 0;  // whole run under the plan
    std::uint64_t block_full = 0;    // decoder blocks only
    std::uint64_t block_cached = 0;
    std::uint64_t reuse_adds = 0;    // element additions spent on cache reuse (not MACs)
    double speedup = 1.0;            // flops_full / flops_cached
    double block_speedup = 1.0;      // block_full / block_cached
};

inline FlopsEstimate flops_estimate(const DenoiserConfig& config, const SchedulePlan& plan) {
    validate(plan);
    if (plan.layers != config.layers || plan.K != config.K) throw PlanError("plan does not match denoiser config");
    const CostModel cm = cost_model(config);
    const auto K = static_cast<std::uint64_t>(config.K);
    const std::uint64_t td = static_cast<std::uint64_t>(config.action_tokens) * config.d_model;
    FlopsEstimate e;
    for (int o = 0; o < config.layers * 3; ++o) {
        const BlockId id = BlockId::from_ordinal(o);
        const auto updates = static_cast<std::uint64_t>(plan.at(id).size());
        e.block_full += K * cm.block(id.kind);
        e.block_cached += updates * cm.block(id.kind);
        e.reuse_adds += (K - updates) * td;
    }
    e.flops_full = e.block_full + K * cm.overhead;
    e.flops_cached = e.block_cached + K * cm.overhead;
    e.speedup = static_cast<double>(e.flops_full) / static_cast<double>(e.flops_cached);
    e.block_speedup = static_cast<double>(e.block_full) / static_cast<double>(e.block_cached);
    return e;
}

// Last residual computed by each block and the step it came from.
class CacheState {
public:
    explicit CacheState(int blocks) : features_(static_cast<std::size_t>(blocks)), steps_(static_cast<std::size_t>(blocks), -1) {}

    bool has(BlockId id) const { return steps_.at(static_cast<std::size_t>(id.ordinal())) >= 0; }
    int step(BlockId id) const { return steps_.at(static_cast<std::size_t>(id.ordinal())); }
    const Matrix& feature(BlockId id) const { return features_.at(static_cast<std::size_t>(id.ordinal())); }

    void store(BlockId id, int t, Matrix feature) {
        features_.at(static_cast<std::size_t>(id.ordinal())) = std::move(feature);
        steps_.at(static_cast<std::size_t>(id.ordinal())) = t;
    }

private:
    std::vector<Matrix> features_;
    std::vector<int> steps_;
};

struct RunReport {
    int layers = 0;
    int K = 0;
    Matrix errors;          // blocks × K, ||b_hat - b||_2 against full precision
    Matrix cosine_distance; // blocks × K, 1 - cos(b_hat, b)
    std::vector<std::uint8_t> update_mask; // blocks × K
    std::vector<int> provenance;           // blocks × K, step the used feature was computed at
    double final_action_l2 = 0.0;          // RMS deviation of the final action
    std::uint64_t flops_full = 0;          // instrumented MACs, reference run
    std::uint64_t flops_cached = 0;        // instrumented MACs, cached run
    std::uint64_t reuse_adds = 0;
    double speedup = 1.0;
    double block_speedup = 1.0;            // analytic, decoder blocks only

    double error(BlockId id, int t) const { return errors(static_cast<std::size_t>(id.ordinal()), static_cast<std::size_t>(t)); }
    bool updated(BlockId id, int t) const { return update_mask.at(static_cast<std::size_t>(id.ordinal()) * K + t) != 0; }
    int source(BlockId id, int t) const { return provenance.at(static_cast<std::size_t>(id.ordinal()) * K + t); }

    double mean_error(BlockId id) const {
        double s = 0.0;
        for (int t = 0; t < K; ++t) s += error(id, t);
        return s / K;
    }
};

struct CachedRun {
    Matrix final_action;
    RunReport report;
};

inline double rms_deviation(const Matrix& a, const Matrix& b) {
    const Matrix d = a - b;
    return frobenius(d) / std::sqrt(static_cast<double>(d.size()));
}

inline double cosine_distance(const Matrix& a, const Matrix& b) {
    const double na = frobenius(a), nb = frobenius(b);
    if (na == 0.0 || nb == 0.0) return a == b ? 0.0 : 1.0;
    return 1.0 - cosine(a, b);
}

// Update-then-reuse execution. At step t a block in C recomputes on the
// current (possibly already perturbed) hidden state and refreshes its cache;
// otherwise the cached residual is added unchanged. `reference` may carry a
// precomputed full-precision run of the same episode; when absent one is
// computed here.
inline CachedRun run_cached(const ToyDenoiser& m, const SchedulePlan& plan, const Matrix& init_noise, const Matrix& obs,
                            const DenoiseResult* reference = nullptr) {
    validate(plan);
    if (plan.layers != m.config.layers || plan.K != m.config.K) throw PlanError("plan does not match denoiser config");
    for (const auto& c : plan.schedules) {
        if (!c.contains(0)) throw ColdCacheError("schedule without step 0 would reuse an empty cache");
    }
    std::optional<DenoiseResult> owned;
    if (!reference) {
        owned = denoise_full(m, init_noise, obs);
        reference = &*owned;
    }
    if (reference->trace.steps() != m.config.K || reference->trace.blocks() != m.config.layers * 3) {
        throw ConsistencyError("reference run does not match denoiser config");
    }

    const int K = m.config.K;
    const int blocks = m.config.layers * 3;
    RunReport rep;
    rep.layers = m.config.layers;
    rep.K = K;
    rep.errors = Matrix(static_cast<std::size_t>(blocks), static_cast<std::size_t>(K));
    rep.cosine_distance = Matrix(static_cast<std::size_t>(blocks), static_cast<std::size_t>(K));
    rep.update_mask.assign(static_cast<std::size_t>(blocks) * K, 0);
    rep.provenance.assign(static_cast<std::size_t>(blocks) * K, -1);

    CacheState cache(blocks);
    OpCounter counter;
    const std::uint64_t td = static_cast<std::uint64_t>(m.config.action_tokens) * m.config.d_model;
    Matrix a = init_noise;
    for (int t = 0; t < K; ++t) {
        a = run_step(
            m, a, obs, t,
            [&](BlockId id, int step, const Matrix&, auto&& compute) {
                const std::size_t cell = static_cast<std::size_t>(id.ordinal()) * K + step;
                if (plan.at(id).contains(step)) {
                    cache.store(id, step, compute());
                    rep.update_mask[cell] = 1;
                } else {
                    if (!cache.has(id)) throw ColdCacheError("reuse of empty cache in " + id.name());
                    rep.reuse_adds += td;
                }
                rep.provenance[cell] = cache.step(id);
                const Matrix& used = cache.feature(id);
                const Matrix& truth = reference->trace.at(id, step);
                rep.errors(id.ordinal(), step) = frobenius(used - truth);
                rep.cosine_distance(id.ordinal(), step) = cosine_distance(used, truth);
                return used;
            },
            &counter);
    }
    rep.final_action_l2 = rms_deviation(a, reference->final_action);
    rep.flops_full = reference->macs;
    rep.flops_cached = counter.macs;
    rep.speedup = static_cast<double>(rep.flops_full) / static_cast<double>(rep.flops_cached);
    rep.block_speedup = flops_estimate(m.config, plan).block_speedup;
    return {a, std::move(rep)};
}

// Per-block per-step caching error with the update-step mask.
struct ErrorSurface {
    int layers = 0;
    int K = 0;
    Matrix errors;
    std::vector<std::uint8_t> update_mask;
};

inline ErrorSurface caching_error_surface(const RunReport& report) {
    return {report.layers, report.K, report.errors, report.update_mask};
}

} // namespace bac
