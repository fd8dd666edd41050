// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "kvsim/cache_state.hpp"
#include "kvsim/error.hpp"
#include "kvsim/policy.hpp"

namespace kvsim {
namespace {

std::vector<double> ranks(const std::vector<double>& x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) {
            ++j;
        }
        for (std::size_t k = i; k <= j; ++k) {
            r[order[k]] = 0.5 * static_cast<double>(i + j);
        }
        i = j + 1;
    }
    return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

CacheState filled_state(const CacheConfig& config, std::size_t n, std::size_t dim, RngStream& rng) {
    CacheState state(config, n, dim, 1);
    std::vector<float> key(dim);
    const std::vector<float> value(1, 0.0F);
    for (std::size_t j = 0; j < n; ++j) {
        for (auto& x : key) {
            x = static_cast<float>(rng.normal());
        }
        state.write(j, static_cast<std::int64_t>(j), key, value);
    }
    return state;
}

TEST(SelectEviction, PicksMinimumUnprotectedScore) {
    const std::vector<double> scores{-1.0, -5.0, -3.0, -2.0};
    const std::vector<std::uint8_t> mask{0, 1, 0, 0};
    const auto decision = select_eviction(scores, mask);
    EXPECT_EQ(decision.slot, 2U);
    EXPECT_EQ(decision.score(), -3.0);
    EXPECT_EQ(decision.score_snapshot, scores);
}

TEST(SelectEviction, TiesGoToTheOldestToken) {
    const std::vector<double> scores{-3.0, -1.0, -3.0, -3.0};
    const std::vector<std::uint8_t> mask(4, 0);
    const std::vector<std::int64_t> positions{9, 2, 4, 7};
    EXPECT_EQ(select_eviction(scores, mask, positions).slot, 2U);
    EXPECT_EQ(select_eviction(scores, mask).slot, 0U);
}

TEST(SelectEviction, AllProtectedIsAConfigError) {
    const std::vector<double> scores{1.0, 2.0};
    const std::vector<std::uint8_t> mask{1, 1};
    EXPECT_THROW(select_eviction(scores, mask), ConfigError);
}

TEST(SelectEviction, MisalignedInputsThrow) {
    const std::vector<double> scores{1.0, 2.0};
    const std::vector<std::uint8_t> mask{0};
    EXPECT_THROW(select_eviction(scores, mask), DimensionError);
}

int seeds_with_positive_rank_correlation(std::size_t bits) {
    int positive = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        CacheConfig config;
        config.hash_bits = bits;
        config.seed = seed;
        RngStream rng(seed, {}, 5);
        const auto state = filled_state(config, 8, 32, rng);
        std::vector<float> q(32);
        for (auto& x : q) {
            x = static_cast<float>(rng.normal());
        }
        positive += spearman(hashevict_scores(q, state), cosine_scores(q, state)) > 0.0 ? 1 : 0;
    }
    return positive;
}

// Over many seeds the positive fraction is about 0.85 at 16 bits (angular noise of a 16-bit code exceeds the cosine
// spread of random keys in 32 dimensions) and above 0.99 at 256 bits.
TEST(HashEvictScores, RankCorrelationWithCosineIsPositive) {
    EXPECT_GE(seeds_with_positive_rank_correlation(16), 75);
    EXPECT_GE(seeds_with_positive_rank_correlation(256), 95);
}

TEST(HashEvictScores, OrthogonalKeyScoresBelowAnEqualKey) {
    CacheConfig config;
    config.hash_bits = 10000;
    CacheState state(config, 2, 4, 1);
    const std::vector<float> q{1.0F, 0.0F, 0.0F, 0.0F};
    const std::vector<float> v{0.0F};
    state.write(0, 0, std::vector<float>{0.05F, 1.0F, 0.0F, 0.0F}, v);
    state.write(1, 1, q, v);
    const auto scores = hashevict_scores(q, state);
    EXPECT_LT(scores[0], scores[1]);
    EXPECT_EQ(scores[1], 0.0);
    // Roughly half of 10000 hyperplanes separate nearly orthogonal vectors.
    EXPECT_NEAR(-scores[0] / 10000.0, 0.5, 0.03);
}

TEST(HashEvictScores, ScoresAreNegatedHammingDistances) {
    CacheConfig config;
    config.hash_bits = 12;
    RngStream rng(4);
    const auto state = filled_state(config, 10, 6, rng);
    std::vector<float> q(6);
    for (auto& x : q) {
        x = static_cast<float>(rng.normal());
    }
    const auto scores = hashevict_scores(q, state);
    const auto q_code = hash(*state.projection(), q);
    for (std::size_t j = 0; j < 10; ++j) {
        EXPECT_EQ(scores[j], -hamming(q_code, hash(*state.projection(), state.key(j))));
    }
}

TEST(HashEvictScores, NeedAHashTable) {
    CacheConfig config;
    config.policy = PolicyKind::kL2;
    RngStream rng(1);
    const auto state = filled_state(config, 3, 4, rng);
    const std::vector<float> q(4, 1.0F);
    EXPECT_THROW(hashevict_scores(q, state), ConfigError);
}

TEST(L2Scores, LargestNormScoresLowest) {
    CacheConfig config;
    config.policy = PolicyKind::kL2;
    CacheState state(config, 3, 2, 1);
    const std::vector<float> v(1, 0.0F);
    state.write(0, 0, std::vector<float>{3.0F, 4.0F}, v);
    state.write(1, 1, std::vector<float>{1.0F, 0.0F}, v);
    state.write(2, 2, std::vector<float>{0.0F, 2.0F}, v);
    EXPECT_EQ(l2_scores(state), (std::vector<double>{-5.0, -1.0, -2.0}));
}

TEST(H2O, AccumulatesRowsAndResetsOnInsert) {
    CacheConfig config;
    config.policy = PolicyKind::kH2O;
    PolicyState policy(config, {});
    ASSERT_TRUE(policy.needs_attention());
    policy.on_insert(0);
    policy.observe(std::vector<double>{1.0});
    policy.on_insert(1);
    policy.observe(std::vector<double>{0.25, 0.75});
    policy.on_insert(2);
    policy.observe(std::vector<double>{0.5, 0.25, 0.25});
    EXPECT_EQ(policy.accumulated()->mass, (std::vector<double>{1.75, 1.0, 0.25}));
    policy.on_insert(1);
    EXPECT_EQ(policy.accumulated()->mass, (std::vector<double>{1.75, 0.0, 0.25}));
    EXPECT_THROW(policy.observe(std::vector<double>{1.0}), DimensionError);
}

TEST(Scissorhands, OnlyTheLastWindowRowsCount) {
    CacheConfig config;
    config.policy = PolicyKind::kScissorhands;
    config.scissorhands_window = 2;
    PolicyState policy(config, {});
    policy.on_insert(0);
    policy.on_insert(1);
    policy.observe(std::vector<double>{0.9, 0.1});
    policy.observe(std::vector<double>{0.6, 0.4});
    policy.observe(std::vector<double>{0.2, 0.8});
    const auto* win = policy.windowed();
    ASSERT_NE(win, nullptr);
    EXPECT_DOUBLE_EQ(win->score(0), 0.8);
    EXPECT_DOUBLE_EQ(win->score(1), 1.2);
}

TEST(Scissorhands, WindowOfOneKeepsTheLatestRow) {
    WindowedAttention win(1);
    win.slots = 2;
    win.ring.assign(2, 0.0);
    scissorhands_update(win, std::vector<double>{0.3, 0.7});
    scissorhands_update(win, std::vector<double>{0.6, 0.4});
    EXPECT_DOUBLE_EQ(win.score(0), 0.6);
    EXPECT_DOUBLE_EQ(win.score(1), 0.4);
}

TEST(PolicyState, RandomScoresReplayPerSeedAndStream) {
    CacheConfig config;
    config.policy = PolicyKind::kRandom;
    config.seed = 3;
    RngStream rng(0);
    const auto state = filled_state(config, 16, 2, rng);
    const std::vector<float> q(2, 0.0F);
    PolicyState a(config, {0, 0});
    PolicyState b(config, {0, 0});
    PolicyState c(config, {0, 1});
    const auto sa = a.scores(q, state);
    EXPECT_EQ(sa, b.scores(q, state));
    EXPECT_NE(sa, c.scores(q, state));
    EXPECT_FALSE(a.needs_attention());
}

TEST(PolicyState, FullPolicyRefusesToScore) {
    CacheConfig config;
    config.policy = PolicyKind::kFull;
    RngStream rng(0);
    const auto state = filled_state(config, 2, 2, rng);
    PolicyState policy(config, {});
    EXPECT_THROW(policy.scores(std::vector<float>(2, 0.0F), state), ConfigError);
}

TEST(CacheState, ProtectionCoversSinksAndRecentWindow) {
    CacheConfig config;
    config.protect_first = 2;
    config.protect_recent = 3;
    CacheState state(config, 8, 2, 1);
    const std::vector<float> k{1.0F, 0.0F};
    const std::vector<float> v{0.0F};
    for (std::int64_t p = 0; p < 8; ++p) {
        state.write(static_cast<std::size_t>(p), p, k, v);
    }
    state.refresh_protection(8);
    EXPECT_EQ(state.protected_mask(), (std::vector<std::uint8_t>{1, 1, 0, 0, 0, 1, 1, 1}));
    EXPECT_TRUE(state.table_consistent());
}

TEST(CacheState, WritesMustFillInOrderAndMatchDimensions) {
    CacheConfig config;
    CacheState state(config, 4, 2, 1);
    const std::vector<float> k{1.0F, 0.0F};
    const std::vector<float> v{0.0F};
    EXPECT_THROW(state.write(1, 0, k, v), DimensionError);
    EXPECT_THROW(state.write(0, 0, std::vector<float>{1.0F}, v), DimensionError);
    state.write(0, 0, k, v);
    EXPECT_EQ(state.occupancy(), 1U);
}

}  // namespace
}  // namespace kvsim
