// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvsim/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "kvsim/error.hpp"
#include "kvsim/simhash.hpp"

namespace kvsim {

std::vector<double> attention_row(ConstVector query, std::span<const float> keys, std::size_t n_keys) {
    const std::size_t d = query.size();
    if (n_keys == 0) {
        throw DegenerateInputError("attention over an empty key set");
    }
    if (d == 0 || keys.size() < n_keys * d) {
        throw DimensionError("attention_row: key buffer too small for " + std::to_string(n_keys) + " keys");
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> row(n_keys);
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n_keys; ++j) {
        row[j] = dot(query, keys.subspan(j * d, d)) * scale;
        max_logit = std::max(max_logit, row[j]);
    }
    double total = 0.0;
    for (auto& x : row) {
        x = std::exp(x - max_logit);
        total += x;
    }
    for (auto& x : row) {
        x /= total;
    }
    return row;
}

AttentionMatrix full_attention(const StreamView& stream) {
    AttentionMatrix out(stream.steps);
    for (std::size_t i = 0; i < stream.steps; ++i) {
        const auto row = attention_row(stream.query(i), stream.keys, i + 1);
        std::copy(row.begin(), row.end(), out.row_mut(i).begin());
    }
    return out;
}

std::vector<double> full_attention_outputs(const StreamView& stream) {
    std::vector<double> out(stream.steps * stream.value_dim, 0.0);
    for (std::size_t i = 0; i < stream.steps; ++i) {
        const auto row = attention_row(stream.query(i), stream.keys, i + 1);
        auto* dst = out.data() + i * stream.value_dim;
        for (std::size_t j = 0; j <= i; ++j) {
            const auto v = stream.value(j);
            for (std::size_t c = 0; c < stream.value_dim; ++c) {
                dst[c] += row[j] * v[c];
            }
        }
    }
    return out;
}

double attention_loss(std::span<const double> row, std::span<const std::size_t> evicted) {
    double loss = 0.0;
    for (std::size_t p : evicted) {
        if (p >= row.size()) {
            throw DimensionError("evicted position " + std::to_string(p) + " outside a row of " +
                                 std::to_string(row.size()));
        }
        loss += row[p];
    }
    return loss;
}

void FullAttentionTracker::append(ConstVector key) {
    if (key.size() != m_dim) {
        throw DimensionError("tracker key has dimension " + std::to_string(key.size()));
    }
    m_keys.insert(m_keys.end(), key.begin(), key.end());
}

MeanAttention mean_attention(const AttentionMatrix& attention) {
    const std::size_t n = attention.size();
    MeanAttention mean(n, 0.0);
    for (std::size_t q = 0; q < n; ++q) {
        const auto row = attention.row(q);
        for (std::size_t p = 0; p <= q; ++p) {
            mean[p] += row[p];
        }
    }
    for (auto& x : mean) {
        x /= static_cast<double>(n);
    }
    return mean;
}

void check_ranking(const Ranking& ranking, std::size_t n) {
    if (ranking.size() != n) {
        throw DimensionError("ranking has " + std::to_string(ranking.size()) + " entries, expected " +
                             std::to_string(n));
    }
    std::vector<std::uint8_t> seen(n, 0);
    for (std::size_t p : ranking) {
        if (p >= n || seen[p] != 0) {
            throw DimensionError("ranking is not a permutation of 0.." + std::to_string(n - 1));
        }
        seen[p] = 1;
    }
}

namespace {

/// Positions sorted by `key` ascending, ties broken by position.
template <typename Key>
Ranking sorted_positions(std::size_t n, Key key) {
    Ranking order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
    return order;
}

}  // namespace

Ranking ideal_ranking(std::span<const double> mean_attn) {
    return sorted_positions(mean_attn.size(), [&](std::size_t p) { return mean_attn[p]; });
}

std::vector<double> cumulative_loss_curve(std::span<const double> mean_attn, const Ranking& ranking) {
    check_ranking(ranking, mean_attn.size());
    std::vector<double> curve(ranking.size());
    double acc = 0.0;
    for (std::size_t m = 0; m < ranking.size(); ++m) {
        acc += mean_attn[ranking[m]];
        curve[m] = acc;
    }
    return curve;
}

double alr(std::span<const double> mean_attn, const Ranking& ranking) {
    const auto curve = cumulative_loss_curve(mean_attn, ranking);
    const auto reference = cumulative_loss_curve(mean_attn, ideal_ranking(mean_attn));
    // The ideal prefix sums are minimal at every m; clamp round-off so Y stays non-negative.
    double y = 0.0;
    for (std::size_t m = 0; m < curve.size(); ++m) {
        y += std::max(0.0, curve[m] - reference[m]);
    }
    return y;
}

Ranking l2_ranking(const StreamView& stream) {
    std::vector<double> norms(stream.steps);
    for (std::size_t p = 0; p < stream.steps; ++p) {
        norms[p] = l2_norm(stream.key(p));
    }
    return sorted_positions(stream.steps, [&](std::size_t p) { return -norms[p]; });
}

std::vector<double> average_key_query_hamming(const StreamView& stream,
                                              std::size_t bits,
                                              std::size_t n_projections,
                                              std::uint64_t seed,
                                              bool normalize) {
    if (bits == 0 || n_projections == 0) {
        throw ConfigError("LSH averaging needs bits >= 1 and n_projections >= 1");
    }
    const std::size_t n = stream.steps;
    const std::size_t words = HashCode::words_for(bits);
    std::vector<double> totals(n, 0.0);
    std::vector<std::uint64_t> q_codes(n * words);
    std::vector<std::uint64_t> k_codes(n * words);

    auto hash_all = [&](const ProjectionMatrix& projection, auto vector_at, std::vector<std::uint64_t>& codes) {
        for (std::size_t t = 0; t < n; ++t) {
            auto dst = std::span<std::uint64_t>(codes).subspan(t * words, words);
            if (normalize) {
                hash_into(projection, normalized(vector_at(t)), dst);
            } else {
                hash_into(projection, vector_at(t), dst);
            }
        }
    };

    for (std::size_t proj = 0; proj < n_projections; ++proj) {
        // Salt excludes `bits`: shorter codes are prefixes of longer ones for the same (seed, proj).
        const auto projection = ProjectionMatrix::gaussian(seed, bits, stream.dim, stream.id, salt::kAnalysis + proj);
        hash_all(projection, [&](std::size_t t) { return stream.query(t); }, q_codes);
        hash_all(projection, [&](std::size_t t) { return stream.key(t); }, k_codes);
        for (std::size_t i = 0; i < n; ++i) {
            const auto k = std::span<const std::uint64_t>(k_codes).subspan(i * words, words);
            long sum = 0;
            for (std::size_t j = i + 1; j < n; ++j) {
                sum += hamming_words(k, std::span<const std::uint64_t>(q_codes).subspan(j * words, words));
            }
            totals[i] += static_cast<double>(sum);
        }
    }

    std::vector<double> average(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i + 1 < n; ++i) {
        average[i] = totals[i] / static_cast<double>((n - 1 - i) * n_projections);
    }
    return average;
}

Ranking lsh_ranking(const StreamView& stream, std::size_t bits, std::size_t n_projections, std::uint64_t seed) {
    if (stream.steps == 0) {
        return {};
    }
    const auto average = average_key_query_hamming(stream, bits, n_projections, seed);
    const std::size_t last = stream.steps - 1;
    return sorted_positions(stream.steps, [&](std::size_t p) {
        return p == last ? std::numeric_limits<double>::infinity() : -average[p];
    });
}

}  // namespace kvsim
