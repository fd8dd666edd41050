// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kvsim/core.hpp"
#include "kvsim/trace.hpp"

namespace kvsim {

/// softmax(q . k_j / sqrt(d)) over `n_keys` row-major keys; max-subtracted, accumulated in double.
std::vector<double> attention_row(ConstVector query, std::span<const float> keys, std::size_t n_keys);

/// Causal attention probabilities of one stream without eviction. Row i covers columns 0..i.
class AttentionMatrix {
public:
    AttentionMatrix() = default;
    explicit AttentionMatrix(std::size_t n) : m_n(n), m_entries(n * n, 0.0) {}

    std::size_t size() const {
        return m_n;
    }

    double at(std::size_t row, std::size_t col) const {
        return m_entries[row * m_n + col];
    }

    /// Row i restricted to its causal prefix (i + 1 entries).
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(m_entries).subspan(i * m_n, i + 1);
    }

    std::span<double> row_mut(std::size_t i) {
        return std::span<double>(m_entries).subspan(i * m_n, i + 1);
    }

private:
    std::size_t m_n = 0;
    std::vector<double> m_entries;
};

AttentionMatrix full_attention(const StreamView& stream);

/// Full-cache attention outputs, one value_dim row per step.
std::vector<double> full_attention_outputs(const StreamView& stream);

/// Attention mass a row assigns to the `evicted` positions.
double attention_loss(std::span<const double> row, std::span<const std::size_t> evicted);

/**
 * Incrementally grows the key history of one stream and returns exact attention rows over everything seen so far.
 * The engine uses it to price evictions against uncompressed attention.
 */
class FullAttentionTracker {
public:
    explicit FullAttentionTracker(std::size_t dim) : m_dim(dim) {}

    void append(ConstVector key);

    std::size_t size() const {
        return m_keys.size() / m_dim;
    }

    std::vector<double> row(ConstVector query) const {
        return attention_row(query, m_keys, size());
    }

private:
    std::size_t m_dim;
    std::vector<float> m_keys;
};

/// Per-position mean attention received, (1/n) * sum over queries of a[query][p] (literal 1/n, causal rows).
using MeanAttention = std::vector<double>;

MeanAttention mean_attention(const AttentionMatrix& attention);

/// Drop order over token positions: element 0 is dropped first.
using Ranking = std::vector<std::size_t>;

/// Throws DimensionError unless `ranking` is a permutation of 0..n-1.
void check_ranking(const Ranking& ranking, std::size_t n);

/// Ascending mean attention; ties drop the older (lower) position first.
Ranking ideal_ranking(std::span<const double> mean_attn);

/// Prefix sums L^m = sum_{i<=m} mean_attn[ranking[i]].
std::vector<double> cumulative_loss_curve(std::span<const double> mean_attn, const Ranking& ranking);

/// Y = sum_m (L^m - L^m_ref) against the ideal ranking.
double alr(std::span<const double> mean_attn, const Ranking& ranking);

/// Descending key L2 norm; ties drop the older position first.
Ranking l2_ranking(const StreamView& stream);

/**
 * For each token i < n-1, the mean over later queries j > i and over `n_projections` independent projection matrices
 * of d_H(h(k_i), h(q_j)). The last token has no later queries; its entry is NaN.
 */
std::vector<double> average_key_query_hamming(const StreamView& stream,
                                              std::size_t bits,
                                              std::size_t n_projections,
                                              std::uint64_t seed,
                                              bool normalize = false);

/// Most-distant key (largest average Hamming distance) dropped first; the last token is ranked last.
Ranking lsh_ranking(const StreamView& stream, std::size_t bits, std::size_t n_projections = 8, std::uint64_t seed = 0);

}  // namespace kvsim
