// Copyright 2026 The BAC Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "bac/profiler.hpp"

namespace {

using namespace bac;

const BlockId kBlock{0, BlockKind::SA};

Matrix mat(std::size_t r, std::size_t c, std::initializer_list<double> v) {
    Matrix m(r, c);
    std::copy(v.begin(), v.end(), m.flat().begin());
    return m;
}

Matrix random_matrix(SplitMix64& rng, std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (double& v : m.flat()) v = rng.normal();
    return m;
}

FeatureTrace single_block_trace(const std::vector<Matrix>& xs) {
    FeatureTrace tr(1, static_cast<int>(xs.size()));
    for (std::size_t t = 0; t < xs.size(); ++t) tr.at(0, static_cast<int>(t)) = xs[t];
    return tr;
}

FeatureTrace random_trace(std::uint64_t seed, int blocks, int K) {
    SplitMix64 rng(seed);
    FeatureTrace tr(blocks, K);
    for (int b = 0; b < blocks; ++b)
        for (int t = 0; t < K; ++t) tr.at(b, t) = random_matrix(rng, 2, 3);
    return tr;
}

// Plain dot-product cosine, written independently of the library.
double oracle_cosine(const Matrix& a, const Matrix& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a.flat()[i] * b.flat()[i];
        na += a.flat()[i] * a.flat()[i];
        nb += b.flat()[i] * b.flat()[i];
    }
    return dot / std::sqrt(na * nb);
}

TEST(Cosine, IdentityAntipodalAndHandValue) {
    SplitMix64 rng(1);
    const Matrix v = random_matrix(rng, 2, 3);
    Matrix neg = v;
    for (double& x : neg.flat()) x = -x;
    EXPECT_NEAR(cosine(v, v), 1.0, 1e-15);
    EXPECT_NEAR(cosine(v, neg), -1.0, 1e-15);
    EXPECT_NEAR(cosine(mat(2, 2, {1, 0, 0, 0}), mat(2, 2, {1, 1, 0, 0})), 0.70710678118654752, 1e-15);
}

TEST(Cosine, Errors) {
    EXPECT_THROW(cosine(Matrix(2, 2), mat(2, 2, {1, 0, 0, 0})), DegenerateFeatureError);
    EXPECT_THROW(cosine(Matrix(2, 2, 1.0), Matrix(2, 3, 1.0)), DimensionError);
}

TEST(Consecutive, ConstantAndAntipodal) {
    const Matrix v = mat(1, 2, {0.3, -2.0});
    const auto s = consecutive_similarities(single_block_trace({v, v, v, v}), kBlock);
    ASSERT_EQ(s.size(), 3u);
    for (double x : s) EXPECT_NEAR(x, 1.0, 1e-15);
    const auto anti = consecutive_similarities(single_block_trace({v, mat(1, 2, {-0.3, 2.0})}), kBlock);
    ASSERT_EQ(anti.size(), 1u);
    EXPECT_NEAR(anti[0], -1.0, 1e-15);
}

TEST(Consecutive, MatchesPairwiseOracle) {
    const FeatureTrace tr = random_trace(3, 1, 20);
    const auto s = consecutive_similarities(tr, kBlock);
    for (int t = 1; t < 20; ++t) EXPECT_NEAR(s[t - 1], oracle_cosine(tr.at(0, t), tr.at(0, t - 1)), 1e-12);
}

TEST(Interval, Examples) {
    const BlockProfile bp = make_block_profile({0.9, 0.1, 0.8, 0.2}, 0.0);
    EXPECT_EQ(interval_similarity(bp, 2, 2), 0.0);
    EXPECT_EQ(interval_similarity(bp, 3, 1), 0.0);
    EXPECT_NEAR(interval_similarity(bp, 0, 4), 2.0, 1e-15);
    EXPECT_NEAR(interval_similarity(bp, 1, 3), 0.9, 1e-15);
    EXPECT_THROW(interval_similarity(bp, 0, 5), RangeError);
    EXPECT_THROW(interval_similarity(bp, -1, 2), RangeError);
}

TEST(Interval, PrefixDifferencesRecoverSimilarities) {
    SplitMix64 rng(4);
    std::vector<double> s(50);
    for (double& v : s) v = rng.uniform(-1, 1);
    const BlockProfile bp = make_block_profile(s, 0.0);
    EXPECT_EQ(bp.prefix.front(), 0.0);
    for (std::size_t t = 1; t <= s.size(); ++t) EXPECT_NEAR(bp.prefix[t] - bp.prefix[t - 1], s[t - 1], 1e-12);
}

TEST(SimilarityMatrix, ConstantSymmetricAndConsistent) {
    const Matrix v = mat(1, 3, {1, 2, 3});
    const Matrix ones = similarity_matrix(single_block_trace({v, v, v}), kBlock);
    for (double x : ones.flat()) EXPECT_NEAR(x, 1.0, 1e-15);

    const FeatureTrace tr = random_trace(5, 1, 12);
    const Matrix M = similarity_matrix(tr, kBlock);
    const auto s = consecutive_similarities(tr, kBlock);
    for (std::size_t i = 0; i < 12; ++i) {
        for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(M(i, j), M(j, i));
        if (i > 0) {
            EXPECT_NEAR(M(i, i - 1), s[i - 1], 1e-12);
        }
    }
}

TEST(ErrorMagnitude, ConstantAndTwoStep) {
    const Matrix v = mat(2, 2, {1, 2, 3, 4});
    const Matrix w = mat(2, 2, {0, 2, 5, 3});
    EXPECT_EQ(caching_error_magnitude(single_block_trace({v, v, v}), kBlock), 0.0);
    // ||v - w||_1 = 4, over 2·(T·d) = 8
    EXPECT_NEAR(caching_error_magnitude(single_block_trace({v, w}), kBlock), 4.0 / 8.0, 1e-15);
}

TEST(ErrorMagnitude, MatchesDoubleLoopOracle) {
    const FeatureTrace tr = random_trace(6, 1, 5);
    double total = 0.0;
    for (int t = 0; t < 5; ++t)
        for (int u = 0; u < 5; ++u)
            for (std::size_t i = 0; i < 6; ++i) total += std::abs(tr.at(0, t).flat()[i] - tr.at(0, u).flat()[i]);
    EXPECT_NEAR(caching_error_magnitude(tr, kBlock), total / 25.0 / 6.0, 1e-10);
}

TEST(ProfileTraces, SingleAndRepeatedEpisodes) {
    const FeatureTrace tr = random_trace(7, 3, 9);
    const std::vector<FeatureTrace> one{tr}, three{tr, tr, tr};
    const SimilarityProfile p1 = profile_traces(one), p3 = profile_traces(three);
    EXPECT_EQ(p1.K, 9);
    EXPECT_EQ(p1.layers(), 1);
    EXPECT_EQ(p3.episode_count, 3);
    for (int o = 0; o < 3; ++o) {
        EXPECT_EQ(p1.blocks[o].s, consecutive_similarities(tr, BlockId::from_ordinal(o)));
        EXPECT_EQ(p1.blocks[o].ell, caching_error_magnitude(tr, BlockId::from_ordinal(o)));
        EXPECT_EQ(p3.blocks[o].s, p1.blocks[o].s);
        EXPECT_EQ(p3.blocks[o].ell, p1.blocks[o].ell);
    }
}

TEST(ProfileTraces, AverageLiesWithinEpisodeRange) {
    const std::vector<FeatureTrace> trs{random_trace(8, 3, 9), random_trace(9, 3, 9), random_trace(10, 3, 9)};
    const SimilarityProfile p = profile_traces(trs);
    for (int o = 0; o < 3; ++o) {
        const BlockId id = BlockId::from_ordinal(o);
        for (int t = 0; t < 8; ++t) {
            double lo = 2, hi = -2;
            for (const auto& tr : trs) {
                const double v = consecutive_similarities(tr, id)[t];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            EXPECT_GE(p.blocks[o].s[t], lo - 1e-15);
            EXPECT_LE(p.blocks[o].s[t], hi + 1e-15);
        }
    }
}

TEST(ProfileTraces, AnchoredRowsAreSimilarityMatrix) {
    const FeatureTrace tr = random_trace(11, 3, 6);
    const std::vector<FeatureTrace> one{tr};
    const SimilarityProfile p = profile_traces(one, true);
    const Matrix M = similarity_matrix(tr, BlockId::from_ordinal(1));
    for (int i = 0; i < 6; ++i)
        for (int k = 0; k < 6; ++k) EXPECT_EQ(p.blocks[1].anchor[i][k], M(i, k));
}

TEST(ProfileTraces, Errors) {
    EXPECT_THROW(profile_traces(std::span<const FeatureTrace>{}), RangeError);
    const std::vector<FeatureTrace> mixed{random_trace(1, 3, 5), random_trace(2, 3, 6)};
    EXPECT_THROW(profile_traces(mixed), ConsistencyError);
}

TEST(ProfileTask, DenoiserEpisodes) {
    const ToyDenoiser m = build_denoiser(DenoiserConfig{2, 16, 2, 4, 3, 3, 10, 3});
    EXPECT_THROW(profile_task(m, 0, 1), RangeError);
    const SimilarityProfile a = profile_task(m, 2, 42), b = profile_task(m, 2, 42);
    EXPECT_EQ(a.blocks, b.blocks);
    EXPECT_EQ(a.blocks.size(), 6u);
    for (const auto& bp : a.blocks) {
        EXPECT_EQ(bp.s.size(), 9u);
        EXPECT_GT(bp.ell, 0.0);
        for (double v : bp.s) {
            EXPECT_GE(v, -1.0 - 1e-12);
            EXPECT_LE(v, 1.0 + 1e-12);
        }
    }
}

} // namespace
