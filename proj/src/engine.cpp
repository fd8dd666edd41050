// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvsim/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "kvsim/error.hpp"

namespace kvsim {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(Clock::time_point since) {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - since).count();
}

}  // namespace

// ---------------------------------------------------------------------------------------------------------------
// Attention and the step loop

AttentionResult attention_step(ConstVector query, const CacheState& state) {
    if (state.occupancy() == 0) {
        throw DegenerateInputError("attention over an empty cache");
    }
    if (query.size() != state.dim()) {
        throw DimensionError("attention: query has dimension " + std::to_string(query.size()) + ", cache holds " +
                             std::to_string(state.dim()));
    }
    AttentionResult result;
    result.row = attention_row(query, state.keys(), state.occupancy());
    result.output.assign(state.value_dim(), 0.0);
    for (std::size_t j = 0; j < result.row.size(); ++j) {
        const auto v = state.value(j);
        for (std::size_t c = 0; c < v.size(); ++c) {
            result.output[c] += result.row[j] * v[c];
        }
    }
    return result;
}

Engine::Engine(const CacheConfig& config, std::size_t capacity, std::size_t dim, std::size_t value_dim, StreamId stream)
    : m_state(config, capacity, dim, value_dim, stream),
      m_policy(config, stream) {
    if (config.policy != PolicyKind::kFull && capacity < config.protect_first + config.protect_recent + 1) {
        throw ConfigError("cache capacity " + std::to_string(capacity) + " cannot hold protect_first (" +
                          std::to_string(config.protect_first) + ") + protect_recent (" +
                          std::to_string(config.protect_recent) + ") tokens plus one evictable slot");
    }
    if (config.track_attention_loss) {
        m_tracker.emplace(dim);
    }
}

StepResult Engine::decode_step(ConstVector query, ConstVector key, ConstVector value) {
    const auto started = Clock::now();
    if (query.size() != m_state.dim() || key.size() != m_state.dim() || value.size() != m_state.value_dim()) {
        throw DimensionError("decode_step: vector dimensions do not match the cache");
    }
    if (!all_finite(query) || !all_finite(key) || !all_finite(value)) {
        throw DimensionError("decode_step: non-finite input vector");
    }

    StepResult result;
    const std::int64_t position = m_next_position;
    std::size_t slot = m_state.occupancy();

    if (m_state.full()) {
        if (m_policy.kind() == PolicyKind::kFull) {
            throw ConfigError("the full-cache policy ran out of capacity");
        }
        m_state.refresh_protection(position);
        const auto scoring_started = Clock::now();
        const auto scores = m_policy.scores(query, m_state);
        const auto positions = m_state.token_positions();
        const auto decision = select_eviction(scores, m_state.protected_mask(), positions);
        result.scoring_ns = elapsed_ns(scoring_started);
        slot = decision.slot;
        result.evicted_slot = slot;
        result.evicted_position = positions[slot];
        result.eviction_score = decision.score();
        m_evicted.push_back(positions[slot]);
    }

    m_state.write(slot, position, key, value);
    m_policy.on_insert(slot);

    auto attention = attention_step(query, m_state);
    if (m_policy.needs_attention()) {
        m_policy.observe(attention.row);
    }
    result.attention_output = std::move(attention.output);
    result.attention_row = std::move(attention.row);

    if (m_tracker) {
        m_tracker->append(key);
        const auto full_row = m_tracker->row(query);
        double loss = 0.0;
        for (std::int64_t p : m_evicted) {
            loss += full_row[static_cast<std::size_t>(p)];
        }
        result.step_attention_loss = loss;
        if (result.evicted_position) {
            result.attention_mass_lost = full_row[static_cast<std::size_t>(*result.evicted_position)];
        }
    }
    m_loss_so_far += result.step_attention_loss;
    result.attention_loss_so_far = m_loss_so_far;

    if (result.evicted_position) {
        m_log.push_back({position, *result.evicted_position, result.eviction_score, result.attention_mass_lost});
    }
    ++m_next_position;
    result.step_ns = elapsed_ns(started);
    return result;
}

void Engine::prefill(const StreamView& prompt) {
    for (std::size_t t = 0; t < prompt.steps; ++t) {
        decode_step(prompt.query(t), prompt.key(t), prompt.value(t));
    }
}

// ---------------------------------------------------------------------------------------------------------------
// Whole-trace runs

StreamMetrics run_stream(const StreamView& stream, const CacheConfig& config, const RunOptions& options) {
    StreamMetrics metrics;
    metrics.stream = stream.id;
    metrics.steps = stream.steps;
    metrics.capacity = config.resolve_capacity(stream.steps);
    Engine engine(config, metrics.capacity, stream.dim, stream.value_dim, stream.id);
    if (options.record_timing) {
        metrics.step_ns.reserve(stream.steps);
        metrics.scoring_ns.reserve(stream.steps);
    }
    // Prompt and decode tokens go through the same step; the phases differ only in where the budget binds.
    for (std::size_t t = 0; t < stream.steps; ++t) {
        const StepResult step = engine.decode_step(stream.query(t), stream.key(t), stream.value(t));
        metrics.max_occupancy = std::max(metrics.max_occupancy, engine.state().occupancy());
        if (options.record_timing) {
            metrics.step_ns.push_back(step.step_ns);
            metrics.scoring_ns.push_back(step.scoring_ns);
        }
        if (options.observer) {
            options.observer(engine, step);
        }
    }
    metrics.eviction_log = engine.eviction_log();
    metrics.evictions = metrics.eviction_log.size();
    metrics.total_attention_loss = engine.attention_loss_so_far();
    metrics.mean_attention_loss =
        stream.steps > 0 ? metrics.total_attention_loss / static_cast<double>(stream.steps) : 0.0;
    return metrics;
}

RunMetrics run(const TokenTrace& trace, const CacheConfig& config, const RunOptions& options) {
    config.validate();
    const auto started = Clock::now();
    RunMetrics metrics;
    metrics.policy = config.policy;
    metrics.budget_fraction = config.policy == PolicyKind::kFull ? 1.0 : config.budget_fraction;
    metrics.hash_bits = config.hash_bits;
    metrics.seed = config.seed;
    metrics.streams.resize(trace.n_streams());
    parallel_for(trace.n_streams(), options.threads, [&](std::size_t index) {
        metrics.streams[index] = run_stream(trace.stream(index), config, options);
    });

    std::size_t tokens = 0;
    double loss_sum = 0.0;
    for (const auto& s : metrics.streams) {
        tokens += s.steps;
        metrics.total_evictions += s.evictions;
        loss_sum += s.mean_attention_loss;
    }
    if (!metrics.streams.empty()) {
        metrics.mean_attention_loss = loss_sum / static_cast<double>(metrics.streams.size());
    }
    if (tokens > 0) {
        metrics.compression_ratio = static_cast<double>(metrics.total_evictions) / static_cast<double>(tokens);
    }
    metrics.wall_seconds = static_cast<double>(elapsed_ns(started)) * 1e-9;
    metrics.tokens_per_second = metrics.wall_seconds > 0.0 ? static_cast<double>(tokens) / metrics.wall_seconds : 0.0;
    return metrics;
}

}  // namespace kvsim
