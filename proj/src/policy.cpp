// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvsim/policy.hpp"

#include <algorithm>
#include <limits>

#include "kvsim/error.hpp"

namespace kvsim {

EvictionDecision select_eviction(std::span<const double> scores,
                                 std::span<const std::uint8_t> protected_mask,
                                 std::span<const std::int64_t> token_positions) {
    const bool positions_ok = token_positions.empty() || token_positions.size() == scores.size();
    if (protected_mask.size() != scores.size() || !positions_ok) {
        throw DimensionError("select_eviction: scores, protection mask and positions must be slot-aligned");
    }
    std::size_t best = scores.size();
    for (std::size_t j = 0; j < scores.size(); ++j) {
        if (protected_mask[j] != 0) {
            continue;
        }
        if (best == scores.size() || scores[j] < scores[best]) {
            best = j;
        } else if (scores[j] == scores[best] && !token_positions.empty() &&
                   token_positions[j] < token_positions[best]) {
            best = j;
        }
    }
    if (best == scores.size()) {
        throw ConfigError("every cached token is protected; the cache budget is too small for the protection window");
    }
    return EvictionDecision{best, std::vector<double>(scores.begin(), scores.end())};
}

std::vector<double> hashevict_scores(ConstVector query, const CacheState& state) {
    if (!state.hash_table() || !state.projection()) {
        throw ConfigError("hashevict scoring needs a cache built for the hashevict policy");
    }
    const HashCode code = state.config().normalize_before_hash ? hash(*state.projection(), normalized(query))
                                                               : hash(*state.projection(), query);
    const auto hamming_scores = score_against_table(code, *state.hash_table());
    return std::vector<double>(hamming_scores.begin(), hamming_scores.end());
}

std::vector<double> l2_scores(const CacheState& state) {
    std::vector<double> scores(state.occupancy());
    for (std::size_t j = 0; j < scores.size(); ++j) {
        scores[j] = -l2_norm(state.key(j));
    }
    return scores;
}

std::vector<double> cosine_scores(ConstVector query, const CacheState& state) {
    std::vector<double> scores(state.occupancy());
    for (std::size_t j = 0; j < scores.size(); ++j) {
        scores[j] = cosine(query, state.key(j));
    }
    return scores;
}

double WindowedAttention::score(std::size_t slot) const {
    double total = 0.0;
    for (std::size_t i = 0; i < window; ++i) {
        total += ring[slot * window + i];
    }
    return total;
}

void h2o_update(AccumulatedAttention& state, std::span<const double> attention_row) {
    if (attention_row.size() != state.mass.size()) {
        throw DimensionError("h2o_update: row covers " + std::to_string(attention_row.size()) + " slots, state tracks " +
                             std::to_string(state.mass.size()));
    }
    for (std::size_t j = 0; j < attention_row.size(); ++j) {
        state.mass[j] += attention_row[j];
    }
}

void scissorhands_update(WindowedAttention& state, std::span<const double> attention_row) {
    if (attention_row.size() != state.slots) {
        throw DimensionError("scissorhands_update: row covers " + std::to_string(attention_row.size()) +
                             " slots, state tracks " + std::to_string(state.slots));
    }
    for (std::size_t j = 0; j < attention_row.size(); ++j) {
        state.ring[j * state.window + state.cursor] = attention_row[j];
    }
    state.cursor = (state.cursor + 1) % state.window;
}

PolicyState::PolicyState(const CacheConfig& config, StreamId stream) : m_kind(config.policy) {
    switch (m_kind) {
    case PolicyKind::kH2O:
        m_stats = AccumulatedAttention{};
        break;
    case PolicyKind::kScissorhands:
        m_stats = WindowedAttention(config.resolved_window());
        break;
    case PolicyKind::kRandom:
        m_stats = RngStream(config.seed, stream, salt::kRandomPolicy);
        break;
    default:
        m_stats = Stateless{};
        break;
    }
}

bool PolicyState::needs_attention() const {
    return m_kind == PolicyKind::kH2O || m_kind == PolicyKind::kScissorhands;
}

void PolicyState::on_insert(std::size_t slot) {
    if (auto* acc = std::get_if<AccumulatedAttention>(&m_stats)) {
        if (slot == acc->mass.size()) {
            acc->mass.push_back(0.0);
        } else {
            acc->mass.at(slot) = 0.0;
        }
    } else if (auto* win = std::get_if<WindowedAttention>(&m_stats)) {
        if (slot == win->slots) {
            win->ring.resize(win->ring.size() + win->window, 0.0);
            ++win->slots;
        } else {
            std::fill_n(win->ring.begin() + static_cast<std::ptrdiff_t>(slot * win->window), win->window, 0.0);
        }
    }
}

void PolicyState::observe(std::span<const double> attention_row) {
    if (auto* acc = std::get_if<AccumulatedAttention>(&m_stats)) {
        h2o_update(*acc, attention_row);
    } else if (auto* win = std::get_if<WindowedAttention>(&m_stats)) {
        scissorhands_update(*win, attention_row);
    }
}

std::vector<double> PolicyState::scores(ConstVector query, const CacheState& state) {
    switch (m_kind) {
    case PolicyKind::kHashEvict:
        return hashevict_scores(query, state);
    case PolicyKind::kL2:
        return l2_scores(state);
    case PolicyKind::kCosine:
        return cosine_scores(query, state);
    case PolicyKind::kH2O:
        return std::get<AccumulatedAttention>(m_stats).mass;
    case PolicyKind::kScissorhands: {
        const auto& win = std::get<WindowedAttention>(m_stats);
        std::vector<double> out(win.slots);
        for (std::size_t j = 0; j < out.size(); ++j) {
            out[j] = win.score(j);
        }
        return out;
    }
    case PolicyKind::kRandom: {
        auto& rng = std::get<RngStream>(m_stats);
        std::vector<double> out(state.occupancy());
        for (auto& x : out) {
            x = rng.uniform();
        }
        return out;
    }
    case PolicyKind::kFull:
        throw ConfigError("the full-cache policy never evicts");
    }
    throw ConfigError("unknown policy");
}

}  // namespace kvsim
