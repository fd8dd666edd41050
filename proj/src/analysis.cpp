// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvsim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kvsim/error.hpp"
#include "kvsim/oracle.hpp"

namespace kvsim {

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw DimensionError("pearson: series lengths differ (" + std::to_string(x.size()) + " vs " +
                             std::to_string(y.size()) + ")");
    }
    if (x.size() < 2) {
        throw DimensionError("pearson: need at least 2 points");
    }
    const auto n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // Relative threshold: a constant series leaves only round-off in its centred squares.
    const double scale_x = mx * mx * n;
    const double scale_y = my * my * n;
    if (sxx <= 1e-24 * std::max(scale_x, 1.0) || syy <= 1e-24 * std::max(scale_y, 1.0)) {
        throw DegenerateInputError("pearson: a series has zero variance");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationReport correlation_study(const TokenTrace& trace, const CorrelationOptions& options) {
    if (options.projection_lengths.empty()) {
        throw ConfigError("correlation study needs at least one projection length");
    }
    if (trace.header().total_len < 8) {
        throw DegenerateInputError("correlation study needs at least 8 steps per stream");
    }
    const std::size_t n_lengths = options.projection_lengths.size();
    CorrelationReport report;
    report.entries.resize(trace.n_streams() * n_lengths);

    parallel_for(trace.n_streams(), options.threads, [&](std::size_t s) {
        const StreamView stream = trace.stream(s);
        const MeanAttention attention = mean_attention(full_attention(stream));
        const std::size_t usable = stream.steps - 1;
        const std::vector<double> scores(attention.begin(), attention.begin() + static_cast<std::ptrdiff_t>(usable));
        for (std::size_t l = 0; l < n_lengths; ++l) {
            const std::size_t bits = options.projection_lengths[l];
            auto inverted = average_key_query_hamming(stream, bits, options.n_projections, options.seed,
                                                      options.normalize);
            inverted.resize(usable);
            for (double& h : inverted) {
                h = -h;
            }
            report.entries[s * n_lengths + l] = CorrelationEntry{stream.id, bits, pearson(scores, inverted)};
        }
    });

    for (std::size_t l = 0; l < n_lengths; ++l) {
        CorrelationSummary summary;
        summary.bits = options.projection_lengths[l];
        summary.count = trace.n_streams();
        for (std::size_t s = 0; s < trace.n_streams(); ++s) {
            summary.mean += report.entries[s * n_lengths + l].r;
        }
        summary.mean /= static_cast<double>(summary.count);
        if (summary.count > 1) {
            double ss = 0.0;
            for (std::size_t s = 0; s < trace.n_streams(); ++s) {
                const double d = report.entries[s * n_lengths + l].r - summary.mean;
                ss += d * d;
            }
            summary.stddev = std::sqrt(ss / static_cast<double>(summary.count - 1));
        }
        report.summary.push_back(summary);
    }
    return report;
}

void MemoryModelInput::validate() const {
    if (layers == 0 || kv_heads == 0 || seq_len == 0 || batch == 0 || bytes_per_scalar == 0 || head_dim == 0) {
        throw ConfigError("memory model: layers, kv_heads, seq_len, batch, head_dim and bytes_per_scalar must be "
                          "positive");
    }
    if (!(budget_fraction > 0.0 && budget_fraction <= 1.0)) {
        throw ConfigError("memory model: budget_fraction must lie in (0, 1]");
    }
}

MemoryEstimate memory_model(const MemoryModelInput& input) {
    input.validate();
    const std::uint64_t streams = input.layers * input.kv_heads * input.batch;
    const auto retained =
        static_cast<std::uint64_t>(std::ceil(static_cast<double>(input.seq_len) * input.budget_fraction - 1e-9));
    MemoryEstimate estimate;
    estimate.hash_bytes = (streams * retained * input.hash_bits + 7) / 8;
    const std::uint64_t per_token = input.head_dim * 2 * input.bytes_per_scalar;
    estimate.kv_bytes = streams * input.seq_len * per_token;
    estimate.retained_kv_bytes = streams * retained * per_token;
    const auto kept = static_cast<double>(estimate.retained_kv_bytes + estimate.hash_bytes);
    estimate.compression_ratio = 1.0 - kept / static_cast<double>(estimate.kv_bytes);
    return estimate;
}

std::vector<AblationRow> hash_dim_ablation(const TokenTrace& trace,
                                           std::span<const std::size_t> dims,
                                           const CacheConfig& config,
                                           std::size_t threads) {
    if (dims.empty()) {
        throw ConfigError("hash-dimension ablation needs at least one dimension");
    }
    const TraceHeader& header = trace.header();
    std::vector<AblationRow> rows;
    rows.reserve(dims.size());
    for (std::size_t bits : dims) {
        CacheConfig run_config = config;
        run_config.policy = PolicyKind::kHashEvict;
        run_config.hash_bits = bits;
        run_config.validate();

        AblationRow row;
        row.bits = bits;
        row.metrics = run(trace, run_config, RunOptions{threads, false, {}});
        row.attention_loss = row.metrics.mean_attention_loss;
        const std::uint64_t slots = run_config.resolve_capacity(header.total_len);
        row.hash_bytes = (static_cast<std::uint64_t>(header.n_streams()) * slots * bits + 7) / 8;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<RunMetrics> compare_policies(const TokenTrace& trace,
                                         std::span<const PolicyKind> policies,
                                         const CacheConfig& config,
                                         std::size_t threads) {
    std::vector<RunMetrics> out;
    out.reserve(policies.size());
    for (PolicyKind policy : policies) {
        CacheConfig run_config = config;
        run_config.policy = policy;
        out.push_back(run(trace, run_config, RunOptions{threads, false, {}}));
    }
    return out;
}

std::string_view to_string(AlrRanking ranking) {
    switch (ranking) {
    case AlrRanking::kIdeal:
        return "ideal";
    case AlrRanking::kL2:
        return "l2";
    case AlrRanking::kLsh:
        return "lsh";
    }
    return "unknown";
}

AlrRanking parse_alr_ranking(std::string_view id) {
    for (AlrRanking r : {AlrRanking::kIdeal, AlrRanking::kL2, AlrRanking::kLsh}) {
        if (to_string(r) == id) {
            return r;
        }
    }
    throw UsageError("unknown ranking '" + std::string(id) + "'; valid rankings: ideal, l2, lsh");
}

std::vector<AlrCell> alr_matrix(const TokenTrace& trace, AlrRanking ranking, const AlrOptions& options) {
    std::vector<AlrCell> cells(trace.n_streams());
    parallel_for(trace.n_streams(), options.threads, [&](std::size_t s) {
        const StreamView stream = trace.stream(s);
        const MeanAttention attention = mean_attention(full_attention(stream));
        Ranking order;
        switch (ranking) {
        case AlrRanking::kIdeal:
            order = ideal_ranking(attention);
            break;
        case AlrRanking::kL2:
            order = l2_ranking(stream);
            break;
        case AlrRanking::kLsh:
            order = lsh_ranking(stream, options.bits, options.n_projections, options.seed);
            break;
        }
        cells[s] = AlrCell{stream.id, alr(attention, order)};
    });
    return cells;
}

}  // namespace kvsim
