// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "kvsim/cache_state.hpp"
#include "kvsim/core.hpp"
#include "kvsim/oracle.hpp"
#include "kvsim/policy.hpp"
#include "kvsim/trace.hpp"

namespace kvsim {

struct AttentionResult {
    std::vector<double> output;  ///< value_dim entries
    std::vector<double> row;     ///< one probability per occupied slot
};

/// Single-query softmax attention over the occupied slots. Throws on an empty cache or query dimension mismatch.
AttentionResult attention_step(ConstVector query, const CacheState& state);

struct StepResult {
    std::vector<double> attention_output;
    std::vector<double> attention_row;
    std::optional<std::int64_t> evicted_position;
    std::optional<std::size_t> evicted_slot;
    double eviction_score = 0.0;
    /// Exact attention this step's query would have paid the token evicted now (0 without loss tracking).
    double attention_mass_lost = 0.0;
    /// Exact attention mass of this step's query on every token evicted so far.
    double step_attention_loss = 0.0;
    /// Running sum of step_attention_loss.
    double attention_loss_so_far = 0.0;
    std::int64_t scoring_ns = 0;
    std::int64_t step_ns = 0;
};

/// One row of the eviction log CSV.
struct EvictionRecord {
    std::int64_t step = 0;
    std::int64_t token_position = 0;
    double policy_score = 0.0;
    double attention_mass_lost = 0.0;
};

/**
 * Fixed-budget cache of one (layer, head) stream driven token by token.
 *
 * Each step runs: (if full) score, pick the eviction slot, evict; insert the new (k, v, h(k)) into that slot; attend
 * with the step's query over the cache, which now includes the current token. Below the budget no eviction happens,
 * which covers the prompt-filling phase.
 */
class Engine {
public:
    Engine(const CacheConfig& config, std::size_t capacity, std::size_t dim, std::size_t value_dim,
           StreamId stream = {});

    StepResult decode_step(ConstVector query, ConstVector key, ConstVector value);

    /// Runs every step of `prompt` through decode_step.
    void prefill(const StreamView& prompt);

    const CacheState& state() const {
        return m_state;
    }
    const PolicyState& policy() const {
        return m_policy;
    }
    /// Position the next token will receive.
    std::int64_t next_position() const {
        return m_next_position;
    }
    const std::vector<EvictionRecord>& eviction_log() const {
        return m_log;
    }
    double attention_loss_so_far() const {
        return m_loss_so_far;
    }

private:
    CacheState m_state;
    PolicyState m_policy;
    std::optional<FullAttentionTracker> m_tracker;
    std::vector<std::int64_t> m_evicted;
    std::vector<EvictionRecord> m_log;
    std::int64_t m_next_position = 0;
    double m_loss_so_far = 0.0;
};

struct StreamMetrics {
    StreamId stream;
    std::size_t capacity = 0;
    std::size_t steps = 0;
    std::size_t evictions = 0;
    std::size_t max_occupancy = 0;
    double total_attention_loss = 0.0;
    /// total_attention_loss / steps.
    double mean_attention_loss = 0.0;
    std::vector<EvictionRecord> eviction_log;
    /// Per-step wall time, filled when RunOptions::record_timing is set.
    std::vector<std::int64_t> step_ns;
    std::vector<std::int64_t> scoring_ns;
};

struct RunMetrics {
    PolicyKind policy = PolicyKind::kHashEvict;
    double budget_fraction = 1.0;
    std::size_t hash_bits = 0;
    std::uint64_t seed = 0;
    std::vector<StreamMetrics> streams;
    /// Mean over streams of StreamMetrics::mean_attention_loss.
    double mean_attention_loss = 0.0;
    /// Evicted tokens / total tokens.
    double compression_ratio = 0.0;
    std::size_t total_evictions = 0;
    double wall_seconds = 0.0;
    double tokens_per_second = 0.0;
};

struct RunOptions {
    std::size_t threads = 1;
    bool record_timing = false;
    /// Called after every step with the engine that produced it. Invoked from worker threads when threads > 1.
    std::function<void(const Engine&, const StepResult&)> observer;
};

/// Runs the prompt and decode phases of one stream.
StreamMetrics run_stream(const StreamView& stream, const CacheConfig& config, const RunOptions& options = {});

/// Runs every (layer, head) stream of `trace` independently.
RunMetrics run(const TokenTrace& trace, const CacheConfig& config, const RunOptions& options = {});

}  // namespace kvsim
