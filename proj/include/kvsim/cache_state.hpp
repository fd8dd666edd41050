// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "kvsim/core.hpp"
#include "kvsim/simhash.hpp"

namespace kvsim {

struct SlotMeta {
    std::int64_t token_position = -1;
    bool is_protected = false;
};

/**
 * Fixed-budget key/value store of one (layer, head) stream plus its hash table.
 *
 * Slots [0, occupancy()) are occupied. Slots fill in order until the budget is reached; after that an incoming token
 * overwrites the evicted slot in place, so per-slot policy statistics stay aligned without compaction. The hash table
 * and projection exist only for the hashevict policy.
 */
class CacheState {
public:
    CacheState(const CacheConfig& config, std::size_t capacity, std::size_t dim, std::size_t value_dim,
               StreamId stream = {});

    const CacheConfig& config() const {
        return m_config;
    }
    StreamId stream() const {
        return m_stream;
    }
    std::size_t capacity() const {
        return m_capacity;
    }
    std::size_t occupancy() const {
        return m_meta.size();
    }
    bool full() const {
        return occupancy() == m_capacity;
    }
    std::size_t dim() const {
        return m_dim;
    }
    std::size_t value_dim() const {
        return m_value_dim;
    }

    ConstVector key(std::size_t slot) const {
        return ConstVector(m_keys).subspan(slot * m_dim, m_dim);
    }
    ConstVector value(std::size_t slot) const {
        return ConstVector(m_values).subspan(slot * m_value_dim, m_value_dim);
    }
    /// Keys of the occupied slots, row-major.
    std::span<const float> keys() const {
        return ConstVector(m_keys).first(occupancy() * m_dim);
    }

    const SlotMeta& meta(std::size_t slot) const {
        return m_meta[slot];
    }
    std::vector<std::int64_t> token_positions() const;

    const std::optional<HashTable>& hash_table() const {
        return m_table;
    }
    const std::optional<ProjectionMatrix>& projection() const {
        return m_projection;
    }

    /// Stores (k, v) for `position` at `slot` (an occupied slot or the next free one) and refreshes its hash code.
    void write(std::size_t slot, std::int64_t position, ConstVector key, ConstVector value);

    /// Recomputes protection flags for the moment token `next_position` arrives: positions below protect_first and
    /// the protect_recent positions immediately preceding `next_position` are protected.
    void refresh_protection(std::int64_t next_position);

    std::vector<std::uint8_t> protected_mask() const;

    /// True when every occupied slot's hash code equals hash(R, key).
    bool table_consistent() const;

private:
    CacheConfig m_config;
    StreamId m_stream;
    std::size_t m_capacity;
    std::size_t m_dim;
    std::size_t m_value_dim;
    std::vector<float> m_keys;
    std::vector<float> m_values;
    std::vector<SlotMeta> m_meta;
    std::optional<ProjectionMatrix> m_projection;
    std::optional<HashTable> m_table;
};

}  // namespace kvsim
