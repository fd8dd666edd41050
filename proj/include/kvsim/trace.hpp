// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kvsim/core.hpp"

namespace kvsim {

struct TraceHeader {
    std::uint32_t dim = 0;        ///< query/key dimension d
    std::uint32_t value_dim = 0;  ///< value dimension d_out
    std::uint32_t n_layers = 0;
    std::uint32_t n_kv_heads = 0;
    std::uint32_t prompt_len = 0;  ///< N
    std::uint32_t total_len = 0;   ///< N + T
    /// Free-form tag naming the exporter; exporters record here that vectors are post-RoPE.
    std::string producer;
    /// Producer unit-normalized the vectors before export.
    bool normalized = false;

    std::size_t n_streams() const {
        return static_cast<std::size_t>(n_layers) * n_kv_heads;
    }

    bool operator==(const TraceHeader&) const = default;
};

/// Read-only view of one (layer, head) stream: total_len steps of q, k (dim) and v (value_dim), row-major.
struct StreamView {
    StreamId id;
    std::size_t steps = 0;
    std::size_t dim = 0;
    std::size_t value_dim = 0;
    std::span<const float> queries;
    std::span<const float> keys;
    std::span<const float> values;

    ConstVector query(std::size_t t) const {
        return queries.subspan(t * dim, dim);
    }
    ConstVector key(std::size_t t) const {
        return keys.subspan(t * dim, dim);
    }
    ConstVector value(std::size_t t) const {
        return values.subspan(t * value_dim, value_dim);
    }

    /// The first `n` steps of this stream.
    StreamView prefix(std::size_t n) const;
};

/**
 * Ordered (q, k, v) streams for every (layer, KV head). Streams are stored separately and contiguously; stream
 * index = layer * n_kv_heads + head.
 */
class TokenTrace {
public:
    TokenTrace() = default;

    /// Allocates zero-filled streams for `header`; throws TraceValidationError on an inconsistent header.
    explicit TokenTrace(TraceHeader header);

    const TraceHeader& header() const {
        return m_header;
    }

    std::size_t n_streams() const {
        return m_streams.size();
    }

    StreamView stream(std::size_t index) const;
    StreamView stream(StreamId id) const;

    std::span<float> query_mut(std::size_t stream, std::size_t step);
    std::span<float> key_mut(std::size_t stream, std::size_t step);
    std::span<float> value_mut(std::size_t stream, std::size_t step);

    /// Checks the header and that every vector is finite. Throws TraceValidationError.
    void validate() const;

    bool operator==(const TokenTrace&) const = default;

private:
    struct Stream {
        std::vector<float> queries;
        std::vector<float> keys;
        std::vector<float> values;

        bool operator==(const Stream&) const = default;
    };

    TraceHeader m_header;
    std::vector<Stream> m_streams;
};

/// Throws TraceValidationError when the header cannot describe a trace.
void validate_header(const TraceHeader& header);

/// Parameters of a synthetic planted-needle trace.
struct SyntheticSpec {
    std::size_t n = 256;  ///< total tokens per stream
    std::size_t dim = 64;
    std::size_t value_dim = 0;  ///< 0 means "same as dim"
    std::size_t n_layers = 1;
    std::size_t n_kv_heads = 1;
    std::size_t prompt_len = 0;  ///< 0 means "n / 2"
    std::uint64_t seed = 0;
    std::size_t needle_count = 0;
    /// 0 gives i.i.d. Gaussian queries and keys.
    double needle_strength = 0.0;
    double noise_scale = 1.0;
    /// Needles never land in the first `needle_margin` positions, which are typically protected.
    std::size_t needle_margin = 4;

    void validate() const;
};

/**
 * Gaussian q/k/v streams with planted high-attention keys.
 *
 * Every stream draws a unit direction u. Queries are q = noise * (g + s * sqrt(d) * u). Ordinary keys are
 * k = noise * g. Needle keys point at cos(k, u) = s / (1 + s) with half the typical key norm, so they attract
 * attention from every later query while having small L2 norms. With s = 0 all vectors are i.i.d. N(0, noise^2).
 */
TokenTrace generate_synthetic(const SyntheticSpec& spec);

/// Needle positions `generate_synthetic` plants for `spec` in stream `stream`, ascending.
std::vector<std::size_t> needle_positions(const SyntheticSpec& spec, StreamId stream);

/// How query heads sharing one KV head are folded into the single query stream a trace carries.
enum class QueryAggregation { kMean, kFirst };

/**
 * Folds a trace whose heads are query heads (k/v repeated across each group of `group_size` heads) into one stream
 * per KV head. Keys and values come from the first head of each group.
 */
TokenTrace aggregate_query_groups(const TokenTrace& trace, std::size_t group_size, QueryAggregation method);

/// Current version of the KVTR binary codec.
inline constexpr std::uint16_t kTraceVersion = 1;

/// KVTR binary codec. See docs/format.md.
void write_trace(const TokenTrace& trace, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_trace(const TokenTrace& trace);
TokenTrace decode_trace(std::span<const std::uint8_t> bytes);

/// JSON-lines debug codec with the same schema.
void write_trace_jsonl(const TokenTrace& trace, const std::filesystem::path& path);
std::string encode_trace_jsonl(const TokenTrace& trace);
TokenTrace decode_trace_jsonl(const std::string& text);

/// Reads either codec, sniffing the KVTR magic.
TokenTrace read_trace(const std::filesystem::path& path);

}  // namespace kvsim
