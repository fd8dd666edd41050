// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "kvsim/error.hpp"
#include "kvsim/oracle.hpp"
#include "kvsim/simhash.hpp"

namespace kvsim {
namespace {

TokenTrace tiny_trace(const std::vector<float>& queries, const std::vector<float>& keys) {
    TraceHeader h;
    h.dim = 1;
    h.value_dim = 1;
    h.n_layers = 1;
    h.n_kv_heads = 1;
    h.total_len = static_cast<std::uint32_t>(queries.size());
    TokenTrace trace(h);
    for (std::size_t t = 0; t < queries.size(); ++t) {
        trace.query_mut(0, t)[0] = queries[t];
        trace.key_mut(0, t)[0] = keys[t];
        trace.value_mut(0, t)[0] = static_cast<float>(t);
    }
    return trace;
}

/// Y computed from its definition: for every prefix length m, the mass of the first m dropped positions minus the
/// smallest mass any m positions could have.
double brute_force_alr(const std::vector<double>& mean, const Ranking& ranking) {
    std::vector<double> sorted = mean;
    std::sort(sorted.begin(), sorted.end());
    double y = 0.0;
    double dropped = 0.0;
    double best = 0.0;
    for (std::size_t m = 0; m < ranking.size(); ++m) {
        dropped += mean[ranking[m]];
        best += sorted[m];
        y += dropped - best;
    }
    return y;
}

TEST(FullAttention, RowsAreCausalDistributions) {
    SyntheticSpec spec;
    spec.n = 40;
    spec.dim = 8;
    const auto trace = generate_synthetic(spec);
    const auto attention = full_attention(trace.stream(0));
    for (std::size_t i = 0; i < attention.size(); ++i) {
        const auto row = attention.row(i);
        EXPECT_EQ(row.size(), i + 1);
        EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
        for (std::size_t j = i + 1; j < attention.size(); ++j) {
            EXPECT_EQ(attention.at(i, j), 0.0);
        }
    }
}

TEST(FullAttention, TwoTokenHandCase) {
    const auto trace = tiny_trace({0.0F, 1.0F}, {1.0F, 0.0F});
    const auto attention = full_attention(trace.stream(0));
    const double e = std::exp(1.0);
    EXPECT_DOUBLE_EQ(attention.at(0, 0), 1.0);
    EXPECT_NEAR(attention.at(1, 0), e / (e + 1.0), 1e-12);
    const auto outputs = full_attention_outputs(trace.stream(0));
    EXPECT_NEAR(outputs[1], 1.0 / (e + 1.0), 1e-12);
    const auto mean = mean_attention(attention);
    EXPECT_NEAR(mean[0], (1.0 + e / (e + 1.0)) / 2.0, 1e-12);
    EXPECT_NEAR(mean[1], (1.0 / (e + 1.0)) / 2.0, 1e-12);
}

TEST(MeanAttention, SumsToOne) {
    SyntheticSpec spec;
    spec.n = 77;
    spec.dim = 4;
    const auto mean = mean_attention(full_attention(generate_synthetic(spec).stream(0)));
    EXPECT_NEAR(std::accumulate(mean.begin(), mean.end(), 0.0), 1.0, 1e-12);
}

TEST(AttentionLoss, SumsEvictedEntries) {
    const std::vector<double> row{0.1, 0.2, 0.3, 0.4};
    EXPECT_DOUBLE_EQ(attention_loss(row, std::vector<std::size_t>{}), 0.0);
    EXPECT_DOUBLE_EQ(attention_loss(row, std::vector<std::size_t>{1, 3}), 0.6000000000000001);
    EXPECT_THROW(attention_loss(row, std::vector<std::size_t>{4}), DimensionError);
}

TEST(CumulativeLossCurve, IsPrefixSums) {
    const std::vector<double> mean{0.4, 0.1, 0.3, 0.2};
    const auto curve = cumulative_loss_curve(mean, {1, 3, 2, 0});
    ASSERT_EQ(curve.size(), 4U);
    EXPECT_DOUBLE_EQ(curve[0], 0.1);
    EXPECT_NEAR(curve[1], 0.3, 1e-15);
    EXPECT_NEAR(curve[2], 0.6, 1e-15);
    EXPECT_NEAR(curve[3], 1.0, 1e-15);
}

TEST(Alr, HandCase) {
    const std::vector<double> mean{0.4, 0.1, 0.3, 0.2};
    // Identity order: prefix sums 0.4, 0.5, 0.8, 1.0 against ideal 0.1, 0.3, 0.6, 1.0.
    EXPECT_NEAR(alr(mean, {0, 1, 2, 3}), 0.7, 4 * std::numeric_limits<double>::epsilon());
    EXPECT_EQ(alr(mean, ideal_ranking(mean)), 0.0);
}

TEST(Alr, MatchesBruteForceOverEveryPermutation) {
    const std::vector<double> mean{0.05, 0.3, 0.1, 0.25, 0.2, 0.1};
    Ranking ranking(mean.size());
    std::iota(ranking.begin(), ranking.end(), std::size_t{0});
    double smallest = INFINITY;
    do {
        const double y = alr(mean, ranking);
        EXPECT_NEAR(y, brute_force_alr(mean, ranking), 1e-12);
        EXPECT_GE(y, 0.0);
        smallest = std::min(smallest, y);
    } while (std::next_permutation(ranking.begin(), ranking.end()));
    EXPECT_EQ(smallest, 0.0);
}

TEST(Alr, SwappingAnIdealPairNeverHelps) {
    RngStream rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> mean(12);
        for (auto& x : mean) {
            x = rng.uniform();
        }
        auto ranking = ideal_ranking(mean);
        const std::size_t i = rng.below(mean.size() - 1);
        std::swap(ranking[i], ranking[i + 1]);
        EXPECT_GE(alr(mean, ranking), 0.0);
        // Moving a heavier token forward by one slot costs exactly the mass difference once.
        EXPECT_NEAR(alr(mean, ranking), mean[ranking[i]] - mean[ranking[i + 1]], 1e-12);
    }
}

TEST(IdealRanking, TiesDropTheOlderPositionFirst) {
    const std::vector<double> mean{0.2, 0.1, 0.2, 0.1};
    EXPECT_EQ(ideal_ranking(mean), (Ranking{1, 3, 0, 2}));
}

TEST(CheckRanking, RejectsNonPermutations) {
    EXPECT_NO_THROW(check_ranking({2, 0, 1}, 3));
    EXPECT_THROW(check_ranking({0, 1}, 3), DimensionError);
    EXPECT_THROW(check_ranking({0, 0, 1}, 3), DimensionError);
    EXPECT_THROW(check_ranking({0, 1, 3}, 3), DimensionError);
}

TEST(L2Ranking, LargestNormFirstWithOlderTiesFirst) {
    const auto trace = tiny_trace({0, 0, 0, 0}, {1.0F, -3.0F, 3.0F, 0.5F});
    EXPECT_EQ(l2_ranking(trace.stream(0)), (Ranking{1, 2, 0, 3}));
}

TEST(LshRanking, IsAPermutationWithTheLastTokenLast) {
    SyntheticSpec spec;
    spec.n = 50;
    spec.dim = 16;
    const auto trace = generate_synthetic(spec);
    const auto ranking = lsh_ranking(trace.stream(0), 16, 4, 1);
    EXPECT_NO_THROW(check_ranking(ranking, 50));
    EXPECT_EQ(ranking.back(), 49U);
}

TEST(AverageKeyQueryHamming, MatchesDirectComputation) {
    SyntheticSpec spec;
    spec.n = 12;
    spec.dim = 6;
    spec.seed = 3;
    const auto trace = generate_synthetic(spec);
    const auto s = trace.stream(0);
    const auto average = average_key_query_hamming(s, 10, 3, 7);
    EXPECT_TRUE(std::isnan(average.back()));
    for (std::size_t i = 0; i + 1 < s.steps; ++i) {
        double total = 0.0;
        for (std::size_t proj = 0; proj < 3; ++proj) {
            const auto r = ProjectionMatrix::gaussian(7, 10, 6, s.id, salt::kAnalysis + proj);
            for (std::size_t j = i + 1; j < s.steps; ++j) {
                total += hamming(hash(r, s.key(i)), hash(r, s.query(j)));
            }
        }
        EXPECT_NEAR(average[i], total / static_cast<double>(3 * (s.steps - 1 - i)), 1e-12) << i;
    }
    EXPECT_THROW(average_key_query_hamming(s, 0, 1, 0), ConfigError);
}

TEST(AverageKeyQueryHamming, NormalizingDoesNotChangeCodes) {
    SyntheticSpec spec;
    spec.n = 20;
    spec.dim = 8;
    const auto trace = generate_synthetic(spec);
    const auto s = trace.stream(0);
    const auto raw = average_key_query_hamming(s, 16, 2, 0, false);
    const auto unit = average_key_query_hamming(s, 16, 2, 0, true);
    for (std::size_t i = 0; i + 1 < raw.size(); ++i) {
        EXPECT_EQ(raw[i], unit[i]);
    }
}

}  // namespace
}  // namespace kvsim
