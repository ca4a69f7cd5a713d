// Copyright 2026 The BAC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bac/cache_engine.hpp"
#include "bac/denoiser.hpp"
#include "bac/error.hpp"
#include "bac/tensor.hpp"

namespace bac {

inline constexpr double kSigmaMin = 1e-6;

// Mean and population standard deviation over the feature dimension.
struct LnStats {
    double mu = 0.0;
    double sigma = 0.0;
    std::size_t d = 0;
};

inline LnStats ln_stats(std::span<const double> x) {
    if (x.empty()) throw DimensionError("layer norm of an empty vector");
    LnStats st;
    st.d = x.size();
    for (double v : x) st.mu += v;
    st.mu /= static_cast<double>(st.d);
    double var = 0.0;
    for (double v : x) var += (v - st.mu) * (v - st.mu);
    st.sigma = std::sqrt(var / static_cast<double>(st.d));
    if (!(st.sigma >= kSigmaMin)) {
        throw DegenerateFeatureError("layer norm input has sigma " + std::to_string(st.sigma) + " below floor");
    }
    return st;
}

// eps-free LayerNorm: gamma ⊙ (x - mu) / sigma.
inline std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gamma) {
    if (gamma.size() != x.size()) throw DimensionError("gain width mismatch");
    const LnStats st = ln_stats(x);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = gamma[i] * (x[i] - st.mu) / st.sigma;
    return out;
}

struct LnOperators {
    Matrix A; // diag(gamma) (I - 11ᵀ/d) / sigma
    Matrix B; // diag(gamma) (x - mu1)(x - mu1)ᵀ / (d sigma³)

    // A - B, the LayerNorm Jacobian at x.
    Matrix jacobian() const { return A - B; }
};

inline LnOperators ln_operators(std::span<const double> x, std::span<const double> gamma) {
    if (gamma.size() != x.size()) throw DimensionError("gain width mismatch");
    const LnStats st = ln_stats(x);
    const std::size_t d = st.d;
    const double dd = static_cast<double>(d);
    LnOperators ops{Matrix(d, d), Matrix(d, d)};
    const double s3 = st.sigma * st.sigma * st.sigma;
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double centering = (i == j ? 1.0 : 0.0) - 1.0 / dd;
            ops.A(i, j) = gamma[i] * centering / st.sigma;
            ops.B(i, j) = gamma[i] * (x[i] - st.mu) * (x[j] - st.mu) / (dd * s3);
        }
    }
    return ops;
}

enum class Activation { Gelu, Identity };

inline double activate(Activation a, double x) { return a == Activation::Gelu ? gelu(x) : x; }
inline double activate_derivative(Activation a, double x) { return a == Activation::Gelu ? gelu_derivative(x) : 1.0; }

// FFN(x) = W_out φ(W_in LN(x) + b1) + b2 on a single token. Matrices use the
// row-vector orientation of the denoiser: w_in is d×d_ff, w_out is d_ff×d.
struct FfnParams {
    Matrix w_in;
    Matrix w_out;
    std::vector<double> b1;
    std::vector<double> b2;
    std::vector<double> gamma;
    Activation activation = Activation::Gelu;

    std::size_t d() const { return w_in.rows(); }
    std::size_t d_ff() const { return w_in.cols(); }
};

inline void validate(const FfnParams& p) {
    if (p.d() == 0 || p.d_ff() == 0) throw DimensionError("FFN dimensions must be positive");
    if (p.w_out.rows() != p.d_ff() || p.w_out.cols() != p.d() || p.b1.size() != p.d_ff() || p.b2.size() != p.d() ||
        p.gamma.size() != p.d()) {
        throw DimensionError("inconsistent FFN parameter shapes");
    }
}

inline FfnParams ffn_params(const FfnWeights& w) {
    return {w.w_in, w.w_out, w.b1, w.b2, w.ln_gain, Activation::Gelu};
}

// Random FFN with Xavier-uniform weights, unit gain.
inline FfnParams random_ffn(std::size_t d, std::size_t d_ff, std::uint64_t seed, Activation act = Activation::Gelu) {
    SplitMix64 rng(seed);
    FfnParams p;
    p.w_in = detail::xavier(rng, d, d_ff);
    p.b1 = detail::xavier_bias(rng, d_ff, d, d_ff);
    p.w_out = detail::xavier(rng, d_ff, d);
    p.b2 = detail::xavier_bias(rng, d, d_ff, d);
    p.gamma.assign(d, 1.0);
    p.activation = act;
    return p;
}

namespace detail {

inline std::vector<double> row_times(std::span<const double> v, const Matrix& w) {
    std::vector<double> out(w.cols(), 0.0);
    for (std::size_t k = 0; k < w.rows(); ++k) {
        const auto wr = w.row(k);
        for (std::size_t j = 0; j < w.cols(); ++j) out[j] += v[k] * wr[j];
    }
    return out;
}

inline std::vector<double> pre_activation(const FfnParams& p, std::span<const double> x) {
    auto u = row_times(layer_norm(x, p.gamma), p.w_in);
    for (std::size_t j = 0; j < u.size(); ++j) u[j] += p.b1[j];
    return u;
}

} // namespace detail

inline std::vector<double> ffn_forward(const FfnParams& p, std::span<const double> x) {
    validate(p);
    if (x.size() != p.d()) throw DimensionError("FFN input width mismatch");
    auto u = detail::pre_activation(p, x);
    for (double& v : u) v = activate(p.activation, v);
    auto out = detail::row_times(u, p.w_out);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += p.b2[j];
    return out;
}

// f(δ) = W_out diag(φ'(U)) W_in (A - B) δ, the first-order change of FFN(x)
// under an input perturbation δ.
inline std::vector<double> linear_response(const FfnParams& p, std::span<const double> x, std::span<const double> delta) {
    validate(p);
    if (x.size() != p.d() || delta.size() != p.d()) throw DimensionError("linear response width mismatch");
    const Matrix J = ln_operators(x, p.gamma).jacobian();
    std::vector<double> jd(p.d(), 0.0);
    for (std::size_t i = 0; i < p.d(); ++i)
        for (std::size_t j = 0; j < p.d(); ++j) jd[i] += J(i, j) * delta[j];
    auto du = detail::row_times(jd, p.w_in);
    const auto u = detail::pre_activation(p, x);
    for (std::size_t k = 0; k < du.size(); ++k) du[k] *= activate_derivative(p.activation, u[k]);
    return detail::row_times(du, p.w_out);
}

inline double l2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

struct RemainderCurve {
    std::vector<double> eps;
    std::vector<double> remainder; // ||FFN(x + εδ) - FFN(x) - f(εδ)||
    std::vector<double> ratios;    // remainder[i] / remainder at eps[i]/2, when eps[i+1] == eps[i]/2
};

// Evaluates the first-order remainder along a unit direction δ. A remainder
// that is O(ε²) shrinks fourfold per halving of ε.
inline RemainderCurve verify_first_order(const FfnParams& p, std::span<const double> x, std::span<const double> delta,
                                         std::span<const double> scales) {
    validate(p);
    if (std::abs(l2(delta) - 1.0) > 1e-9) throw RangeError("perturbation direction must have unit norm");
    const auto base = ffn_forward(p, x);
    const auto lin = linear_response(p, x, delta);
    RemainderCurve c;
    std::vector<double> shifted(x.size());
    for (double eps : scales) {
        if (!(eps > 0.0)) throw RangeError("scales must be positive");
        for (std::size_t i = 0; i < x.size(); ++i) shifted[i] = x[i] + eps * delta[i];
        const auto out = ffn_forward(p, shifted);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double r = out[i] - base[i] - eps * lin[i];
            s += r * r;
        }
        c.eps.push_back(eps);
        c.remainder.push_back(std::sqrt(s));
    }
    for (std::size_t i = 0; i + 1 < c.eps.size(); ++i) {
        if (std::abs(c.eps[i + 1] * 2.0 - c.eps[i]) <= 1e-15 * c.eps[i]) {
            c.ratios.push_back(c.remainder[i] / c.remainder[i + 1]);
        }
    }
    return c;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw CorrelationError("correlation needs two equal series of length >= 2");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw CorrelationError("zero-variance series, correlation undefined");
    return sxy / std::sqrt(sxx * syy);
}

struct SurgeConfig {
    // Defaults to the FFNs of the last two layers.
    std::optional<BlockId> upstream;
    std::optional<BlockId> downstream;
    int probe_step = -1; // fixed step of the beta probe; -1 picks K/2
    std::vector<double> betas{0.0, 0.25, 0.5, 1.0, 2.0, 4.0};
};

struct SurgeStats {
    // Pooled over seeds and steps 1..K-1.
    std::vector<double> upstream_error;
    std::vector<double> downstream_error;
    double pearson_r = 0.0;
    std::vector<double> per_seed_r;
    // Beta probe: downstream error averaged over seeds, one entry per beta.
    std::vector<double> betas;
    std::vector<double> beta_response;
    int probe_step = 0;
};

// Upstream block frozen to its step-0 cache, every other block computing at
// every step; the downstream block's error is therefore purely update-induced.
inline SchedulePlan frozen_upstream_plan(const DenoiserConfig& c, BlockId upstream) {
    SchedulePlan p = full_plan(c.K, c.layers);
    p.at(upstream) = make_schedule({0}, c.K);
    return p;
}

// Downstream block error at `step` when the upstream block's residual is
// replaced by ref + beta·(cached_step0 - ref), all on the full-precision
// state entering that step.
inline double beta_probe(const ToyDenoiser& m, const Episode& e, const DenoiseResult& ref, BlockId upstream,
                         BlockId downstream, int step, double beta) {
    const Matrix& input = step == 0 ? e.init_noise : ref.trace.action(step - 1);
    const Matrix& frozen = ref.trace.at(upstream, 0);
    Matrix down;
    run_step(m, input, e.obs, step, [&](BlockId id, int, const Matrix&, auto&& compute) {
        Matrix r = compute();
        if (id == upstream) {
            const Matrix dev = frozen - r;
            auto rf = r.flat();
            const auto df = dev.flat();
            for (std::size_t i = 0; i < rf.size(); ++i) rf[i] += beta * df[i];
        }
        if (id == downstream) down = r;
        return r;
    });
    return frobenius(down - ref.trace.at(downstream, step));
}

inline SurgeStats error_surge_experiment(const ToyDenoiser& m, const SurgeConfig& cfg, std::span<const std::uint64_t> seeds) {
    const auto& c = m.config;
    const BlockId upstream = cfg.upstream.value_or(BlockId{std::max(c.layers - 2, 0), BlockKind::FFN});
    const BlockId downstream = cfg.downstream.value_or(BlockId{c.layers - 1, BlockKind::FFN});
    if (upstream.ordinal() >= downstream.ordinal() || downstream.ordinal() >= c.layers * 3) {
        throw PlanError("upstream block must precede the downstream block inside the model");
    }
    if (seeds.empty()) throw RangeError("no seeds supplied");
    SurgeStats st;
    st.probe_step = cfg.probe_step < 0 ? c.K / 2 : cfg.probe_step;
    if (st.probe_step >= c.K) throw RangeError("probe step outside horizon");
    st.betas = cfg.betas;
    st.beta_response.assign(cfg.betas.size(), 0.0);
    const SchedulePlan plan = frozen_upstream_plan(c, upstream);
    for (auto seed : seeds) {
        const Episode e = make_episode(c, seed);
        const DenoiseResult ref = denoise_full(m, e.init_noise, e.obs);
        const RunReport rep = run_cached(m, plan, e.init_noise, e.obs, &ref).report;
        std::vector<double> up, down;
        for (int t = 1; t < c.K; ++t) {
            up.push_back(rep.error(upstream, t));
            down.push_back(rep.error(downstream, t));
        }
        st.per_seed_r.push_back(pearson(up, down));
        st.upstream_error.insert(st.upstream_error.end(), up.begin(), up.end());
        st.downstream_error.insert(st.downstream_error.end(), down.begin(), down.end());
        for (std::size_t b = 0; b < cfg.betas.size(); ++b) {
            st.beta_response[b] += beta_probe(m, e, ref, upstream, downstream, st.probe_step, cfg.betas[b]) /
                                   static_cast<double>(seeds.size());
        }
    }
    st.pearson_r = pearson(st.upstream_error, st.downstream_error);
    return st;
}

// An FFN update step whose error exceeds the reuse error of the step before.
struct Surge {
    BlockId block;
    int step = 0;
    double reuse_error = 0.0;
    double update_error = 0.0;
};

inline std::vector<Surge> find_surges(const RunReport& rep) {
    std::vector<Surge> out;
    for (int l = 0; l < rep.layers; ++l) {
        const BlockId id{l, BlockKind::FFN};
        for (int t = 1; t < rep.K; ++t) {
            if (rep.updated(id, t) && !rep.updated(id, t - 1) && rep.error(id, t) > rep.error(id, t - 1)) {
                out.push_back({id, t, rep.error(id, t - 1), rep.error(id, t)});
            }
        }
    }
    return out;
}

// Largest error over FFN update steps after step 0.
inline double max_ffn_update_error(const RunReport& rep) {
    double mx = 0.0;
    for (int l = 0; l < rep.layers; ++l) {
        const BlockId id{l, BlockKind::FFN};
        for (int t = 1; t < rep.K; ++t)
            if (rep.updated(id, t)) mx = std::max(mx, rep.error(id, t));
    }
    return mx;
}

} // namespace bac
