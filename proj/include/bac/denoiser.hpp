// Copyright 2026 The BAC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bac/error.hpp"
#include "bac/rng.hpp"
#include "bac/tensor.hpp"

namespace bac {

struct DenoiserConfig {
    int layers = 8;
    int d_model = 64;
    int heads = 4;
    int action_tokens = 8;
    int cond_tokens = 4;
    int action_dim = 7;
    int K = 100;
    std::uint64_t seed = 7;

    friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

inline void validate(const DenoiserConfig& c) {
    auto positive = [](int v, const char* name) {
        if (v <= 0) throw ConfigError(std::string(name) + " must be positive, got " + std::to_string(v));
    };
    positive(c.layers, "layers");
    positive(c.d_model, "d_model");
    positive(c.heads, "heads");
    positive(c.action_tokens, "action_tokens");
    positive(c.cond_tokens, "cond_tokens");
    positive(c.action_dim, "action_dim");
    if (c.K < 2) throw ConfigError("K must be at least 2, got " + std::to_string(c.K));
    if (c.d_model % c.heads != 0) {
        throw ConfigError("heads (" + std::to_string(c.heads) + ") must divide d_model (" +
                          std::to_string(c.d_model) + ")");
    }
}

// Parses `key=value` lines. Blank lines and lines starting with '#' are skipped.
inline DenoiserConfig parse_config(std::string_view text) {
    DenoiserConfig c;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError("config line " + std::to_string(lineno) + ": expected key=value: " + line);
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        auto as_int = [&]() {
            try {
                std::size_t pos = 0;
                const long long v = std::stoll(value, &pos);
                if (pos != value.size() || v < std::numeric_limits<int>::min() ||
                    v > std::numeric_limits<int>::max())
                    throw std::invalid_argument(value);
                return static_cast<int>(v);
            } catch (const std::logic_error&) {
                throw ParseError("config line " + std::to_string(lineno) + ": bad integer for " + key +
                                 ": " + value);
            }
        };
        if (key == "layers") c.layers = as_int();
        else if (key == "d_model") c.d_model = as_int();
        else if (key == "heads") c.heads = as_int();
        else if (key == "action_tokens") c.action_tokens = as_int();
        else if (key == "cond_tokens") c.cond_tokens = as_int();
        else if (key == "action_dim") c.action_dim = as_int();
        else if (key == "K") c.K = as_int();
        else if (key == "seed") {
            try {
                std::size_t pos = 0;
                if (value.empty() || value[0] == '-') throw std::invalid_argument(value);
                c.seed = std::stoull(value, &pos);
                if (pos != value.size()) throw std::invalid_argument(value);
            } catch (const std::logic_error&) {
                throw ParseError("config line " + std::to_string(lineno) + ": bad seed: " + value);
            }
        } else {
            throw ParseError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    validate(c);
    return c;
}

inline std::string format_config(const DenoiserConfig& c) {
    std::ostringstream out;
    out << "layers=" << c.layers << "\nd_model=" << c.d_model << "\nheads=" << c.heads
        << "\naction_tokens=" << c.action_tokens << "\ncond_tokens=" << c.cond_tokens
        << "\naction_dim=" << c.action_dim << "\nK=" << c.K << "\nseed=" << c.seed << "\n";
    return out.str();
}

enum class BlockKind : int { SA = 0, CA = 1, FFN = 2 };

inline constexpr std::array<BlockKind, 3> kBlockKinds{BlockKind::SA, BlockKind::CA, BlockKind::FFN};

inline const char* kind_name(BlockKind k) {
    switch (k) {
    case BlockKind::SA: return "SA";
    case BlockKind::CA: return "CA";
    case BlockKind::FFN: return "FFN";
    }
    return "?";
}

// One residual sub-unit of a decoder layer. Blocks are totally ordered by
// their position in the sequential forward chain.
struct BlockId {
    int layer = 0;
    BlockKind kind = BlockKind::SA;

    int ordinal() const { return layer * 3 + static_cast<int>(kind); }

    static BlockId from_ordinal(int ordinal) {
        return {ordinal / 3, static_cast<BlockKind>(ordinal % 3)};
    }

    std::string name() const { return "layers." + std::to_string(layer) + "." + kind_name(kind); }

    friend bool operator==(const BlockId& a, const BlockId& b) = default;
    friend auto operator<=>(const BlockId& a, const BlockId& b) { return a.ordinal() <=> b.ordinal(); }
};

// Parses `layers.<l>.<SA|CA|FFN>`.
inline BlockId parse_block_name(std::string_view name) {
    constexpr std::string_view prefix = "layers.";
    if (name.substr(0, prefix.size()) != prefix) throw ParseError("bad block name: " + std::string(name));
    const auto rest = name.substr(prefix.size());
    const auto dot = rest.find('.');
    if (dot == std::string_view::npos || dot == 0) throw ParseError("bad block name: " + std::string(name));
    int layer = 0;
    for (char ch : rest.substr(0, dot)) {
        if (ch < '0' || ch > '9') throw ParseError("bad block layer: " + std::string(name));
        layer = layer * 10 + (ch - '0');
        if (layer > 1'000'000) throw ParseError("bad block layer: " + std::string(name));
    }
    const auto kind = rest.substr(dot + 1);
    if (kind == "SA") return {layer, BlockKind::SA};
    if (kind == "CA") return {layer, BlockKind::CA};
    if (kind == "FFN") return {layer, BlockKind::FFN};
    throw ParseError("bad block kind: " + std::string(name));
}

inline std::vector<BlockId> all_blocks(int layers) {
    std::vector<BlockId> out;
    out.reserve(static_cast<std::size_t>(layers) * 3);
    for (int o = 0; o < layers * 3; ++o) out.push_back(BlockId::from_ordinal(o));
    return out;
}

struct AttentionWeights {
    Matrix wq, wk, wv, wo;
    std::vector<double> ln_gain;
};

struct FfnWeights {
    Matrix w_in;  // d -> 4d
    std::vector<double> b1;
    Matrix w_out; // 4d -> d
    std::vector<double> b2;
    std::vector<double> ln_gain;
};

struct LayerWeights {
    AttentionWeights sa;
    AttentionWeights ca;
    FfnWeights ffn;
};

inline constexpr double kLayerNormEps = 1e-5;

// Toy DiT-style action denoiser. Weights are public so experiments can
// alter them; everything in this header treats a built denoiser as const.
//
// Weight fill order from SplitMix64(seed), each entry uniform(-a, a) with
// a = sqrt(6 / (fan_in + fan_out)), matrices filled row-major:
//   input projection (action_dim x d), observation encoder (action_dim x d),
//   then per layer: SA {Wq, Wk, Wv, Wo}, CA {Wq, Wk, Wv, Wo},
//   FFN {W_in, b1, W_out, b2} (biases share their matrix's bound),
//   finally the output projection (d x action_dim).
// LayerNorm gains start at 1, LayerNorm biases are zero.
struct ToyDenoiser {
    DenoiserConfig config;
    Matrix input_proj;
    Matrix obs_encoder;
    std::vector<LayerWeights> layers;
    std::vector<double> final_ln_gain;
    Matrix output_proj;
    Matrix timestep_embedding; // K x d, row t is the embedding of execution step t
};

namespace detail {

inline Matrix xavier(SplitMix64& rng, std::size_t fan_in, std::size_t fan_out) {
    Matrix m(fan_in, fan_out);
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : m.flat()) v = rng.symmetric(a);
    return m;
}

inline std::vector<double> xavier_bias(SplitMix64& rng, std::size_t n, std::size_t fan_in, std::size_t fan_out) {
    std::vector<double> b(n);
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : b) v = rng.symmetric(a);
    return b;
}

} // namespace detail

// Sinusoidal embedding keyed by the diffusion index k = K - t, so execution
// step 0 carries the noisiest timestep.
inline Matrix sinusoidal_timesteps(int K, int d) {
    Matrix emb(static_cast<std::size_t>(K), static_cast<std::size_t>(d));
    for (int t = 0; t < K; ++t) {
        const double k = static_cast<double>(K - t);
        for (int i = 0; 2 * i < d; ++i) {
            const double freq = std::pow(10000.0, -2.0 * i / static_cast<double>(d));
            emb(t, 2 * i) = std::sin(k * freq);
            if (2 * i + 1 < d) emb(t, 2 * i + 1) = std::cos(k * freq);
        }
    }
    return emb;
}

inline ToyDenoiser build_denoiser(const DenoiserConfig& config) {
    validate(config);
    const auto d = static_cast<std::size_t>(config.d_model);
    const auto a = static_cast<std::size_t>(config.action_dim);
    SplitMix64 rng(config.seed);
    ToyDenoiser m;
    m.config = config;
    m.input_proj = detail::xavier(rng, a, d);
    m.obs_encoder = detail::xavier(rng, a, d);
    m.layers.resize(static_cast<std::size_t>(config.layers));
    for (auto& layer : m.layers) {
        for (AttentionWeights* att : {&layer.sa, &layer.ca}) {
            att->wq = detail::xavier(rng, d, d);
            att->wk = detail::xavier(rng, d, d);
            att->wv = detail::xavier(rng, d, d);
            att->wo = detail::xavier(rng, d, d);
            att->ln_gain.assign(d, 1.0);
        }
        layer.ffn.w_in = detail::xavier(rng, d, 4 * d);
        layer.ffn.b1 = detail::xavier_bias(rng, 4 * d, d, 4 * d);
        layer.ffn.w_out = detail::xavier(rng, 4 * d, d);
        layer.ffn.b2 = detail::xavier_bias(rng, d, 4 * d, d);
        layer.ffn.ln_gain.assign(d, 1.0);
    }
    m.final_ln_gain.assign(d, 1.0);
    m.output_proj = detail::xavier(rng, d, a);
    m.timestep_embedding = sinusoidal_timesteps(config.K, config.d_model);
    return m;
}

// FNV-1a over the raw bytes of every parameter, in fill order.
inline std::uint64_t weight_checksum(const ToyDenoiser& m) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto mix = [&](std::span<const double> xs) {
        for (double x : xs) {
            std::uint64_t bits;
            std::memcpy(&bits, &x, sizeof bits);
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xFF;
                h *= 0x100000001B3ULL;
            }
        }
    };
    mix(m.input_proj.flat());
    mix(m.obs_encoder.flat());
    for (const auto& l : m.layers) {
        for (const AttentionWeights* att : {&l.sa, &l.ca}) {
            mix(att->wq.flat());
            mix(att->wk.flat());
            mix(att->wv.flat());
            mix(att->wo.flat());
            mix(att->ln_gain);
        }
        mix(l.ffn.w_in.flat());
        mix(l.ffn.b1);
        mix(l.ffn.w_out.flat());
        mix(l.ffn.b2);
        mix(l.ffn.ln_gain);
    }
    mix(m.final_ln_gain);
    mix(m.output_proj.flat());
    return h;
}

namespace detail {

// Multi-head scaled dot-product attention of already projected q (n×d)
// against k, v (m×d). With `causal`, query i sees keys 0..i. All n·m scores
// are computed (masked ones are discarded), so the MAC count is shape-only.
inline Matrix attend(const Matrix& q, const Matrix& k, const Matrix& v, int heads, bool causal,
                     OpCounter* counter) {
    const std::size_t n = q.rows(), mlen = k.rows(), d = q.cols();
    const std::size_t dh = d / static_cast<std::size_t>(heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix out(n, d);
    std::vector<double> scores(mlen);
    for (std::size_t h = 0; h < static_cast<std::size_t>(heads); ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < mlen; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += q(i, off + c) * k(j, off + c);
                s *= scale;
                if (causal && j > i) s = -std::numeric_limits<double>::infinity();
                scores[j] = s;
                mx = std::max(mx, s);
            }
            double z = 0.0;
            for (std::size_t j = 0; j < mlen; ++j) {
                scores[j] = std::exp(scores[j] - mx);
                z += scores[j];
            }
            for (std::size_t j = 0; j < mlen; ++j) {
                const double p = scores[j] / z;
                for (std::size_t c = 0; c < dh; ++c) out(i, off + c) += p * v(j, off + c);
            }
        }
    }
    if (counter) counter->macs += 2 * static_cast<std::uint64_t>(n) * mlen * d;
    return out;
}

} // namespace detail

// Residual output of a self-attention block: Wo · Attn(LN(h)). Causal over action tokens.
inline Matrix self_attention_block(const AttentionWeights& w, const Matrix& h, int heads,
                                   OpCounter* counter = nullptr) {
    const Matrix x = layer_norm_rows(h, w.ln_gain, kLayerNormEps);
    const Matrix q = matmul(x, w.wq, counter);
    const Matrix k = matmul(x, w.wk, counter);
    const Matrix v = matmul(x, w.wv, counter);
    return matmul(detail::attend(q, k, v, heads, true, counter), w.wo, counter);
}

// Residual output of a cross-attention block; queries from LN(h), keys and values from cond.
inline Matrix cross_attention_block(const AttentionWeights& w, const Matrix& h, const Matrix& cond, int heads,
                                    OpCounter* counter = nullptr) {
    const Matrix x = layer_norm_rows(h, w.ln_gain, kLayerNormEps);
    const Matrix q = matmul(x, w.wq, counter);
    const Matrix k = matmul(cond, w.wk, counter);
    const Matrix v = matmul(cond, w.wv, counter);
    return matmul(detail::attend(q, k, v, heads, false, counter), w.wo, counter);
}

// W_out · GELU(W_in · LN(h) + b1) + b2, applied per token row.
inline Matrix feed_forward_block(const FfnWeights& w, const Matrix& h, OpCounter* counter = nullptr) {
    const Matrix x = layer_norm_rows(h, w.ln_gain, kLayerNormEps);
    Matrix u = matmul(x, w.w_in, counter);
    add_row_bias(u, w.b1);
    for (double& v : u.flat()) v = gelu(v);
    Matrix out = matmul(u, w.w_out, counter);
    add_row_bias(out, w.b2);
    return out;
}

inline Matrix compute_block(const ToyDenoiser& m, BlockId id, const Matrix& h, const Matrix& cond,
                            OpCounter* counter = nullptr) {
    const auto& layer = m.layers.at(static_cast<std::size_t>(id.layer));
    switch (id.kind) {
    case BlockKind::SA: return self_attention_block(layer.sa, h, m.config.heads, counter);
    case BlockKind::CA: return cross_attention_block(layer.ca, h, cond, m.config.heads, counter);
    case BlockKind::FFN: return feed_forward_block(layer.ffn, h, counter);
    }
    throw RangeError("unknown block kind");
}

inline void check_step_inputs(const ToyDenoiser& m, const Matrix& noisy, const Matrix& obs, int t) {
    const auto& c = m.config;
    if (noisy.rows() != static_cast<std::size_t>(c.action_tokens) ||
        noisy.cols() != static_cast<std::size_t>(c.action_dim)) {
        throw DimensionError("noisy action must be " + std::to_string(c.action_tokens) + "x" +
                             std::to_string(c.action_dim));
    }
    if (obs.rows() != static_cast<std::size_t>(c.cond_tokens) ||
        obs.cols() != static_cast<std::size_t>(c.action_dim)) {
        throw DimensionError("observation must be " + std::to_string(c.cond_tokens) + "x" +
                             std::to_string(c.action_dim));
    }
    if (t < 0 || t >= c.K) {
        throw RangeError("step " + std::to_string(t) + " outside [0, " + std::to_string(c.K) + ")");
    }
}

// One denoising step with a pluggable block policy. For every block in
// sequential order the policy is called as
//     Matrix policy(BlockId id, int t, const Matrix& h, ComputeFn compute)
// and must return the residual to add to h; `compute()` evaluates the block
// on the current hidden state. Full precision, caching and perturbation
// experiments all run through this one function, so a policy that always
// calls compute() reproduces full precision exactly.
template <class Policy>
Matrix run_step(const ToyDenoiser& m, const Matrix& noisy, const Matrix& obs, int t, Policy&& policy,
                OpCounter* counter = nullptr) {
    check_step_inputs(m, noisy, obs, t);
    const Matrix cond = matmul(obs, m.obs_encoder, counter);
    Matrix h = matmul(noisy, m.input_proj, counter);
    add_row_bias(h, m.timestep_embedding.row(static_cast<std::size_t>(t)));
    for (int l = 0; l < m.config.layers; ++l) {
        for (BlockKind kind : kBlockKinds) {
            const BlockId id{l, kind};
            const Matrix r = policy(id, t, static_cast<const Matrix&>(h),
                                    [&]() { return compute_block(m, id, h, cond, counter); });
            h += r;
        }
    }
    const Matrix x = layer_norm_rows(h, m.final_ln_gain, kLayerNormEps);
    return matmul(x, m.output_proj, counter);
}

struct StepResult {
    Matrix next_action;
    std::map<BlockId, Matrix> residuals;
};

inline StepResult forward_step(const ToyDenoiser& m, const Matrix& noisy_action, const Matrix& obs, int t,
                               OpCounter* counter = nullptr) {
    StepResult out;
    out.next_action = run_step(
        m, noisy_action, obs, t,
        [&](BlockId id, int, const Matrix&, auto&& compute) {
            Matrix r = compute();
            out.residuals[id] = r;
            return r;
        },
        counter);
    return out;
}

// Residual outputs of every block at every step of one full-precision episode.
class FeatureTrace {
public:
    FeatureTrace() = default;
    FeatureTrace(int blocks, int K) : blocks_(blocks), K_(K), cells_(static_cast<std::size_t>(blocks) * K) {
        actions_.resize(static_cast<std::size_t>(K));
    }

    int blocks() const { return blocks_; }
    int steps() const { return K_; }

    Matrix& at(int block, int t) { return cells_[index(block, t)]; }
    const Matrix& at(int block, int t) const { return cells_[index(block, t)]; }
    const Matrix& at(BlockId id, int t) const { return at(id.ordinal(), t); }

    // Denoiser output after step t.
    Matrix& action(int t) { return actions_.at(static_cast<std::size_t>(t)); }
    const Matrix& action(int t) const { return actions_.at(static_cast<std::size_t>(t)); }

    bool complete() const {
        if (cells_.empty()) return false;
        for (const auto& c : cells_) {
            if (c.empty() || !c.same_shape(cells_.front())) return false;
        }
        return true;
    }

private:
    std::size_t index(int block, int t) const {
        if (block < 0 || block >= blocks_ || t < 0 || t >= K_) {
            throw RangeError("trace cell (" + std::to_string(block) + ", " + std::to_string(t) + ") out of range");
        }
        return static_cast<std::size_t>(block) * K_ + t;
    }

    int blocks_ = 0;
    int K_ = 0;
    std::vector<Matrix> cells_;
    std::vector<Matrix> actions_;
};

struct DenoiseResult {
    Matrix final_action;
    FeatureTrace trace;
    std::uint64_t macs = 0; // multiply-accumulates spent on the run
};

// Runs steps t = 0..K-1 in execution order, feeding each output back in.
inline DenoiseResult denoise_full(const ToyDenoiser& m, const Matrix& init_noise, const Matrix& obs,
                                  OpCounter* counter = nullptr) {
    const int K = m.config.K;
    DenoiseResult res{Matrix{}, FeatureTrace(m.config.layers * 3, K)};
    OpCounter own;
    Matrix a = init_noise;
    for (int t = 0; t < K; ++t) {
        a = run_step(
            m, a, obs, t,
            [&](BlockId id, int step, const Matrix&, auto&& compute) {
                Matrix r = compute();
                res.trace.at(id.ordinal(), step) = r;
                return r;
            },
            &own);
        res.trace.action(t) = a;
    }
    res.final_action = a;
    res.macs = own.macs;
    if (counter) counter->macs += own.macs;
    return res;
}

// Seeded synthetic episode: Gaussian initial action and observation tokens.
struct Episode {
    Matrix init_noise;
    Matrix obs;
};

inline Episode make_episode(const DenoiserConfig& c, std::uint64_t seed) {
    SplitMix64 rng(seed);
    Episode e{Matrix(static_cast<std::size_t>(c.action_tokens), static_cast<std::size_t>(c.action_dim)),
              Matrix(static_cast<std::size_t>(c.cond_tokens), static_cast<std::size_t>(c.action_dim))};
    for (double& v : e.init_noise.flat()) v = rng.normal();
    for (double& v : e.obs.flat()) v = rng.normal();
    return e;
}

} // namespace bac
