// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "kvsim/core.hpp"
#include "kvsim/engine.hpp"
#include "kvsim/trace.hpp"

namespace kvsim {

/// Pearson correlation. Throws DimensionError on length mismatch or fewer than 2 points, DegenerateInputError when
/// either series has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

struct CorrelationEntry {
    StreamId stream;
    std::size_t bits = 0;
    double r = 0.0;
};

struct CorrelationSummary {
    std::size_t bits = 0;
    std::size_t count = 0;
    double mean = 0.0;
    double stddev = 0.0;  ///< sample standard deviation; 0 for a single stream
};

struct CorrelationReport {
    std::vector<CorrelationEntry> entries;  ///< stream-major, then projection length
    std::vector<CorrelationSummary> summary;
};

struct CorrelationOptions {
    std::vector<std::size_t> projection_lengths{8, 16, 24, 32};
    std::size_t n_projections = 8;
    std::uint64_t seed = 0;
    bool normalize = true;
    std::size_t threads = 1;
};

/**
 * Per stream and projection length, Pearson r between the mean attention each position receives and the negated
 * average Hamming distance between its key code and the codes of all later queries. The last token has no later
 * queries and is left out. Requires at least 8 steps per stream.
 */
CorrelationReport correlation_study(const TokenTrace& trace, const CorrelationOptions& options = {});

struct MemoryModelInput {
    std::uint64_t layers = 80;
    std::uint64_t kv_heads = 8;
    std::uint64_t seq_len = 8192;
    std::uint64_t batch = 8;
    double budget_fraction = 0.5;
    std::uint64_t hash_bits = 8;
    std::uint64_t bytes_per_scalar = 2;
    std::uint64_t head_dim = 128;

    /// Throws ConfigError unless every size is positive and budget_fraction is in (0, 1]. hash_bits may be 0.
    void validate() const;
};

struct MemoryEstimate {
    /// layers * kv_heads * batch * ceil(seq_len * budget) * hash_bits / 8, rounded up to whole bytes.
    std::uint64_t hash_bytes = 0;
    /// Uncompressed K and V: layers * kv_heads * batch * seq_len * head_dim * 2 * bytes_per_scalar.
    std::uint64_t kv_bytes = 0;
    /// K and V of the retained slots only.
    std::uint64_t retained_kv_bytes = 0;
    /// 1 - (retained_kv_bytes + hash_bytes) / kv_bytes: fraction of the uncompressed footprint saved.
    double compression_ratio = 0.0;
};

MemoryEstimate memory_model(const MemoryModelInput& input);

struct AblationRow {
    std::size_t bits = 0;
    double attention_loss = 0.0;
    std::uint64_t hash_bytes = 0;
    RunMetrics metrics;
};

inline const std::vector<std::size_t> kDefaultAblationDims{4, 8, 16, 24, 32, 64};

/**
 * Runs the hashevict engine over `trace` once per hash dimension, all other fields taken from `config`. hash_bytes is
 * the table footprint of the run (batch 1, the trace's layers and heads, its total length).
 */
std::vector<AblationRow> hash_dim_ablation(const TokenTrace& trace,
                                           std::span<const std::size_t> dims,
                                           const CacheConfig& config,
                                           std::size_t threads = 1);

/// One engine run per policy, every other field from `config`.
std::vector<RunMetrics> compare_policies(const TokenTrace& trace,
                                         std::span<const PolicyKind> policies,
                                         const CacheConfig& config,
                                         std::size_t threads = 1);

enum class AlrRanking { kIdeal, kL2, kLsh };

std::string_view to_string(AlrRanking ranking);

/// Parses "ideal", "l2" or "lsh"; throws UsageError otherwise.
AlrRanking parse_alr_ranking(std::string_view id);

struct AlrOptions {
    std::size_t bits = 16;
    std::size_t n_projections = 8;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

struct AlrCell {
    StreamId stream;
    double y = 0.0;
};

/// Y of `ranking` against the ideal ranking for every (layer, head), stream order.
std::vector<AlrCell> alr_matrix(const TokenTrace& trace, AlrRanking ranking, const AlrOptions& options = {});

}  // namespace kvsim
