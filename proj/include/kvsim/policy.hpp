// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "kvsim/cache_state.hpp"
#include "kvsim/core.hpp"

namespace kvsim {

/// Slot chosen for eviction together with the scores it was chosen from. Lower score = evicted first.
struct EvictionDecision {
    std::size_t slot = 0;
    std::vector<double> score_snapshot;

    double score() const {
        return score_snapshot.at(slot);
    }
};

/**
 * Picks the unprotected slot of minimum score. Ties go to the oldest token (smallest entry of `token_positions`), or
 * to the lowest slot when `token_positions` is empty. Throws ConfigError when every slot is protected.
 */
EvictionDecision select_eviction(std::span<const double> scores,
                                 std::span<const std::uint8_t> protected_mask,
                                 std::span<const std::int64_t> token_positions = {});

/// -d_H(h(q), H[j]) for every occupied slot, using the state's projection and hash table.
std::vector<double> hashevict_scores(ConstVector query, const CacheState& state);

/// -||k_j||: the largest key norm is evicted first. Query independent.
std::vector<double> l2_scores(const CacheState& state);

/// cos(q, k_j), the exact quantity HashEvict's Hamming score estimates.
std::vector<double> cosine_scores(ConstVector query, const CacheState& state);

/// Accumulated attention per slot (H2O).
struct AccumulatedAttention {
    std::vector<double> mass;
};

/// Attention accumulated over the last `window` rows only (Scissorhands). `ring[slot * window + i]` holds the
/// contribution of the i-th ring position.
struct WindowedAttention {
    std::size_t window = 1;
    std::size_t cursor = 0;
    std::size_t slots = 0;
    std::vector<double> ring;

    explicit WindowedAttention(std::size_t window_length) : window(window_length) {}

    double score(std::size_t slot) const;
};

/// Adds `attention_row` (one entry per occupied slot) to the accumulated masses.
void h2o_update(AccumulatedAttention& state, std::span<const double> attention_row);

/// Pushes `attention_row` into the window, dropping the row that falls out of it.
void scissorhands_update(WindowedAttention& state, std::span<const double> attention_row);

/**
 * Per-slot statistics of one eviction policy, kept slot-aligned with the owning CacheState.
 *
 * The engine calls on_insert() whenever a slot receives a new token, observe() with the attention row it computed
 * over the cache, and scores() when it needs to evict.
 */
class PolicyState {
public:
    PolicyState(const CacheConfig& config, StreamId stream);

    PolicyKind kind() const {
        return m_kind;
    }

    /// True for policies that consume attention rows.
    bool needs_attention() const;

    void on_insert(std::size_t slot);
    void observe(std::span<const double> attention_row);

    /// Scores of all occupied slots for query `query`.
    std::vector<double> scores(ConstVector query, const CacheState& state);

    const AccumulatedAttention* accumulated() const {
        return std::get_if<AccumulatedAttention>(&m_stats);
    }
    const WindowedAttention* windowed() const {
        return std::get_if<WindowedAttention>(&m_stats);
    }

private:
    struct Stateless {};

    PolicyKind m_kind;
    std::variant<Stateless, AccumulatedAttention, WindowedAttention, RngStream> m_stats;
};

}  // namespace kvsim
