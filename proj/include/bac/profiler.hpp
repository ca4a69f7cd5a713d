// Copyright 2026 The BAC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bac/denoiser.hpp"
#include "bac/error.hpp"
#include "bac/tensor.hpp"

namespace bac {

// Cosine of two feature matrices, flattened row-major.
inline double cosine(const Matrix& a, const Matrix& b) {
    a.require_same_shape(b, "cosine");
    double dot = 0.0, na = 0.0, nb = 0.0;
    const auto fa = a.flat();
    const auto fb = b.flat();
    for (std::size_t i = 0; i < fa.size(); ++i) {
        dot += fa[i] * fb[i];
        na += fa[i] * fa[i];
        nb += fb[i] * fb[i];
    }
    if (na == 0.0 || nb == 0.0) throw DegenerateFeatureError("cosine of a zero-norm feature");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Similarity statistics of one block.
struct BlockProfile {
    std::vector<double> s;       // s[t-1] = cos(b_t, b_{t-1}), t = 1..K-1
    std::vector<double> prefix;  // prefix[0] = 0, prefix[t] = s_1 + ... + s_t
    double ell = 0.0;            // mean pairwise per-element L1 distance
    // Optional anchored similarities: anchor[i][k] = cos(b_i, b_k). Empty unless requested.
    std::vector<std::vector<double>> anchor;

    friend bool operator==(const BlockProfile&, const BlockProfile&) = default;
};

inline std::vector<double> prefix_sums(std::span<const double> s) {
    std::vector<double> p(s.size() + 1, 0.0);
    for (std::size_t t = 0; t < s.size(); ++t) p[t + 1] = p[t] + s[t];
    return p;
}

inline BlockProfile make_block_profile(std::vector<double> s, double ell) {
    BlockProfile bp;
    bp.prefix = prefix_sums(s);
    bp.s = std::move(s);
    bp.ell = ell;
    return bp;
}

struct SimilarityProfile {
    int K = 0;
    int episode_count = 0;
    std::vector<BlockProfile> blocks; // canonical block order

    int layers() const { return static_cast<int>(blocks.size()) / 3; }
    const BlockProfile& at(BlockId id) const { return blocks.at(static_cast<std::size_t>(id.ordinal())); }

    friend bool operator==(const SimilarityProfile&, const SimilarityProfile&) = default;
};

inline std::vector<double> consecutive_similarities(const FeatureTrace& trace, BlockId block) {
    std::vector<double> s;
    s.reserve(static_cast<std::size_t>(trace.steps() - 1));
    for (int t = 1; t < trace.steps(); ++t) {
        try {
            s.push_back(cosine(trace.at(block, t), trace.at(block, t - 1)));
        } catch (const DegenerateFeatureError&) {
            throw DegenerateFeatureError("degenerate feature in " + block.name() + " at step " +
                                         std::to_string(t));
        }
    }
    return s;
}

namespace detail {

// Running mean; exact when all samples are equal.
inline void accumulate_mean(std::vector<double>& mean, std::span<const double> x, int n_seen) {
    if (n_seen == 0) {
        mean.assign(x.begin(), x.end());
        return;
    }
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += (x[i] - mean[i]) / (n_seen + 1);
}

} // namespace detail

// Element-wise mean of consecutive similarities across episodes.
inline std::vector<double> consecutive_similarities(std::span<const FeatureTrace> traces, BlockId block) {
    if (traces.empty()) throw RangeError("no traces supplied");
    std::vector<double> mean;
    for (std::size_t e = 0; e < traces.size(); ++e) {
        const auto s = consecutive_similarities(traces[e], block);
        detail::accumulate_mean(mean, s, static_cast<int>(e));
    }
    return mean;
}

// phi(i, j) = s_{i+1} + ... + s_j, zero for j <= i.
inline double interval_similarity(const BlockProfile& bp, int i, int j) {
    const int K = static_cast<int>(bp.prefix.size());
    if (i < 0 || j < 0 || i >= K || j >= K) {
        throw RangeError("interval (" + std::to_string(i) + ", " + std::to_string(j) + ") outside [0, " +
                         std::to_string(K - 1) + "]");
    }
    if (j <= i) return 0.0;
    return bp.prefix[static_cast<std::size_t>(j)] - bp.prefix[static_cast<std::size_t>(i)];
}

inline double interval_similarity(const SimilarityProfile& p, BlockId block, int i, int j) {
    return interval_similarity(p.at(block), i, j);
}

// K×K matrix of pairwise cosines, row-major.
inline Matrix similarity_matrix(const FeatureTrace& trace, BlockId block) {
    const int K = trace.steps();
    Matrix m(static_cast<std::size_t>(K), static_cast<std::size_t>(K));
    for (int i = 0; i < K; ++i) {
        m(i, i) = 1.0;
        if (l1_norm(trace.at(block, i)) == 0.0) {
            throw DegenerateFeatureError("degenerate feature in " + block.name() + " at step " + std::to_string(i));
        }
        for (int j = 0; j < i; ++j) {
            const double c = cosine(trace.at(block, i), trace.at(block, j));
            m(i, j) = c;
            m(j, i) = c;
        }
    }
    return m;
}

// (1/K^2) sum_t sum_u ||X_t - X_u||_1, divided by the element count T·d.
inline double caching_error_magnitude(const FeatureTrace& trace, BlockId block) {
    const int K = trace.steps();
    const auto elems = static_cast<double>(trace.at(block, 0).size());
    double total = 0.0;
    for (int t = 0; t < K; ++t) {
        const auto x = trace.at(block, t).flat();
        for (int u = t + 1; u < K; ++u) {
            const Matrix& yu = trace.at(block, u);
            if (yu.size() != x.size()) throw DimensionError("non-uniform trace shapes in " + block.name());
            const auto y = yu.flat();
            double d = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) d += std::abs(x[i] - y[i]);
            total += 2.0 * d; // (t,u) and (u,t)
        }
    }
    return total / (static_cast<double>(K) * K) / elems;
}

// Builds per-block statistics averaged over the given traces.
inline SimilarityProfile profile_traces(std::span<const FeatureTrace> traces, bool anchored = false) {
    if (traces.empty()) throw RangeError("no traces supplied");
    SimilarityProfile p;
    p.K = traces.front().steps();
    p.episode_count = static_cast<int>(traces.size());
    const int blocks = traces.front().blocks();
    for (const auto& t : traces) {
        if (t.steps() != p.K || t.blocks() != blocks) throw ConsistencyError("traces disagree on shape");
    }
    for (int o = 0; o < blocks; ++o) {
        const BlockId id = BlockId::from_ordinal(o);
        std::vector<double> ell_mean;
        for (std::size_t e = 0; e < traces.size(); ++e) {
            const double ell = caching_error_magnitude(traces[e], id);
            detail::accumulate_mean(ell_mean, std::span<const double>(&ell, 1), static_cast<int>(e));
        }
        BlockProfile bp = make_block_profile(consecutive_similarities(traces, id), ell_mean.front());
        if (anchored) {
            std::vector<double> flat;
            for (std::size_t e = 0; e < traces.size(); ++e) {
                const Matrix m = similarity_matrix(traces[e], id);
                detail::accumulate_mean(flat, m.flat(), static_cast<int>(e));
            }
            bp.anchor.assign(static_cast<std::size_t>(p.K), std::vector<double>(static_cast<std::size_t>(p.K)));
            for (int i = 0; i < p.K; ++i)
                for (int k = 0; k < p.K; ++k) bp.anchor[i][k] = flat[static_cast<std::size_t>(i) * p.K + k];
        }
        p.blocks.push_back(std::move(bp));
    }
    return p;
}

// Profiles the denoiser on one episode per seed.
inline SimilarityProfile profile_episodes(const ToyDenoiser& m, std::span<const std::uint64_t> seeds,
                                          bool anchored = false) {
    if (seeds.empty()) throw RangeError("episodes must be at least 1");
    std::vector<FeatureTrace> traces;
    traces.reserve(seeds.size());
    for (auto seed : seeds) {
        const Episode e = make_episode(m.config, seed);
        traces.push_back(denoise_full(m, e.init_noise, e.obs).trace);
    }
    return profile_traces(traces, anchored);
}

// Episode e of a profiling run uses derive_seed(seed, e).
inline std::vector<std::uint64_t> episode_seeds(std::uint64_t seed, int episodes) {
    std::vector<std::uint64_t> seeds;
    for (int e = 0; e < episodes; ++e) seeds.push_back(derive_seed(seed, static_cast<std::uint64_t>(e)));
    return seeds;
}

inline SimilarityProfile profile_task(const ToyDenoiser& m, int episodes, std::uint64_t seed, bool anchored = false) {
    if (episodes < 1) throw RangeError("episodes must be at least 1");
    const auto seeds = episode_seeds(seed, episodes);
    return profile_episodes(m, seeds, anchored);
}

} // namespace bac
