// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>

#include "kvsim/engine.hpp"

namespace kvsim::testing {

/// Counts budget, protection and hash-table violations over every step it observes. Thread safe.
class InvariantMonitor {
public:
    void check(const Engine& engine, const StepResult& step) {
        ++m_steps;
        const CacheState& state = engine.state();
        const CacheConfig& config = state.config();
        if (state.occupancy() > state.capacity()) {
            ++m_budget;
        }
        if (step.evicted_position) {
            const std::int64_t t = engine.next_position() - 1;
            const std::int64_t p = *step.evicted_position;
            if (p < static_cast<std::int64_t>(config.protect_first) ||
                p >= t - static_cast<std::int64_t>(config.protect_recent)) {
                ++m_protection;
            }
        }
        if (!state.table_consistent()) {
            ++m_table;
        }
    }

    RunOptions options(std::size_t threads = 1) {
        RunOptions o;
        o.threads = threads;
        o.observer = [this](const Engine& e, const StepResult& s) { check(e, s); };
        return o;
    }

    std::size_t steps() const {
        return m_steps;
    }
    std::size_t budget_violations() const {
        return m_budget;
    }
    std::size_t protection_violations() const {
        return m_protection;
    }
    std::size_t table_violations() const {
        return m_table;
    }
    std::size_t violations() const {
        return m_budget + m_protection + m_table;
    }

private:
    std::atomic<std::size_t> m_steps{0};
    std::atomic<std::size_t> m_budget{0};
    std::atomic<std::size_t> m_protection{0};
    std::atomic<std::size_t> m_table{0};
};

}  // namespace kvsim::testing
