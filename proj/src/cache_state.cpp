// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvsim/cache_state.hpp"

#include <algorithm>
#include <string>

#include "kvsim/error.hpp"

namespace kvsim {

CacheState::CacheState(const CacheConfig& config,
                       std::size_t capacity,
                       std::size_t dim,
                       std::size_t value_dim,
                       StreamId stream)
    : m_config(config),
      m_stream(stream),
      m_capacity(capacity),
      m_dim(dim),
      m_value_dim(value_dim),
      m_keys(capacity * dim, 0.0F),
      m_values(capacity * value_dim, 0.0F) {
    config.validate();
    if (capacity == 0 || dim == 0 || value_dim == 0) {
        throw ConfigError("cache needs positive capacity and vector dimensions");
    }
    m_meta.reserve(capacity);
    if (config.policy == PolicyKind::kHashEvict) {
        m_projection = ProjectionMatrix::gaussian(config.seed, config.hash_bits, dim, stream);
        m_table.emplace(config.hash_bits, capacity);
    }
}

std::vector<std::int64_t> CacheState::token_positions() const {
    std::vector<std::int64_t> out(m_meta.size());
    std::transform(m_meta.begin(), m_meta.end(), out.begin(), [](const SlotMeta& m) { return m.token_position; });
    return out;
}

void CacheState::write(std::size_t slot, std::int64_t position, ConstVector key, ConstVector value) {
    if (key.size() != m_dim || value.size() != m_value_dim) {
        throw DimensionError("cache write: got key/value of dimension " + std::to_string(key.size()) + "/" +
                             std::to_string(value.size()) + ", cache holds " + std::to_string(m_dim) + "/" +
                             std::to_string(m_value_dim));
    }
    if (slot > m_meta.size() || slot >= m_capacity) {
        throw DimensionError("cache write: slot " + std::to_string(slot) + " is not writable");
    }
    std::copy(key.begin(), key.end(), m_keys.begin() + static_cast<std::ptrdiff_t>(slot * m_dim));
    std::copy(value.begin(), value.end(), m_values.begin() + static_cast<std::ptrdiff_t>(slot * m_value_dim));
    if (slot == m_meta.size()) {
        m_meta.push_back({});
    }
    m_meta[slot] = SlotMeta{position, false};
    if (m_table) {
        if (m_config.normalize_before_hash) {
            m_table->set_from(slot, *m_projection, normalized(key));
        } else {
            m_table->set_from(slot, *m_projection, key);
        }
    }
}

void CacheState::refresh_protection(std::int64_t next_position) {
    const auto first = static_cast<std::int64_t>(m_config.protect_first);
    const auto recent_from = next_position - static_cast<std::int64_t>(m_config.protect_recent);
    for (auto& meta : m_meta) {
        meta.is_protected = meta.token_position < first || meta.token_position >= recent_from;
    }
}

std::vector<std::uint8_t> CacheState::protected_mask() const {
    std::vector<std::uint8_t> mask(m_meta.size());
    std::transform(m_meta.begin(), m_meta.end(), mask.begin(), [](const SlotMeta& m) {
        return static_cast<std::uint8_t>(m.is_protected ? 1 : 0);
    });
    return mask;
}

bool CacheState::table_consistent() const {
    if (!m_table) {
        return true;
    }
    if (m_table->size() != occupancy()) {
        return false;
    }
    for (std::size_t j = 0; j < occupancy(); ++j) {
        const HashCode expected =
            m_config.normalize_before_hash ? hash(*m_projection, normalized(key(j))) : hash(*m_projection, key(j));
        if (!(m_table->code(j) == expected)) {
            return false;
        }
    }
    return true;
}

}  // namespace kvsim
