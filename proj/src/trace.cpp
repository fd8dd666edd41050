// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvsim/trace.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

#include "kvsim/error.hpp"

namespace kvsim {

StreamView StreamView::prefix(std::size_t n) const {
    StreamView out = *this;
    out.steps = std::min(n, steps);
    out.queries = queries.first(out.steps * dim);
    out.keys = keys.first(out.steps * dim);
    out.values = values.first(out.steps * value_dim);
    return out;
}

void validate_header(const TraceHeader& header) {
    auto fail = [](const std::string& what) { throw TraceValidationError("invalid trace header: " + what, 0); };
    if (header.dim == 0 || header.value_dim == 0) {
        fail("vector dimensions must be positive");
    }
    if (header.n_layers == 0 || header.n_kv_heads == 0) {
        fail("n_layers and n_kv_heads must be positive");
    }
    if (header.total_len == 0) {
        fail("total_len must be positive");
    }
    if (header.prompt_len > header.total_len) {
        fail("prompt_len " + std::to_string(header.prompt_len) + " exceeds total_len " +
             std::to_string(header.total_len));
    }
    if (header.n_layers > 0xffff || header.n_kv_heads > 0xffff) {
        fail("layer and head counts must fit in 16 bits");
    }
    if (header.producer.size() > 0xffff) {
        fail("producer tag longer than 65535 bytes");
    }
}

TokenTrace::TokenTrace(TraceHeader header) : m_header(std::move(header)) {
    validate_header(m_header);
    const std::size_t steps = m_header.total_len;
    m_streams.resize(m_header.n_streams());
    for (auto& s : m_streams) {
        s.queries.assign(steps * m_header.dim, 0.0F);
        s.keys.assign(steps * m_header.dim, 0.0F);
        s.values.assign(steps * m_header.value_dim, 0.0F);
    }
}

StreamView TokenTrace::stream(std::size_t index) const {
    if (index >= m_streams.size()) {
        throw DimensionError("stream index " + std::to_string(index) + " out of range");
    }
    const auto& s = m_streams[index];
    StreamView view;
    view.id = StreamId{static_cast<std::uint32_t>(index / m_header.n_kv_heads),
                       static_cast<std::uint32_t>(index % m_header.n_kv_heads)};
    view.steps = m_header.total_len;
    view.dim = m_header.dim;
    view.value_dim = m_header.value_dim;
    view.queries = s.queries;
    view.keys = s.keys;
    view.values = s.values;
    return view;
}

StreamView TokenTrace::stream(StreamId id) const {
    if (id.layer >= m_header.n_layers || id.head >= m_header.n_kv_heads) {
        throw DimensionError("stream (" + std::to_string(id.layer) + ", " + std::to_string(id.head) +
                             ") out of range");
    }
    return stream(static_cast<std::size_t>(id.layer) * m_header.n_kv_heads + id.head);
}

std::span<float> TokenTrace::query_mut(std::size_t stream, std::size_t step) {
    return std::span<float>(m_streams.at(stream).queries).subspan(step * m_header.dim, m_header.dim);
}

std::span<float> TokenTrace::key_mut(std::size_t stream, std::size_t step) {
    return std::span<float>(m_streams.at(stream).keys).subspan(step * m_header.dim, m_header.dim);
}

std::span<float> TokenTrace::value_mut(std::size_t stream, std::size_t step) {
    return std::span<float>(m_streams.at(stream).values).subspan(step * m_header.value_dim, m_header.value_dim);
}

void TokenTrace::validate() const {
    validate_header(m_header);
    if (m_streams.size() != m_header.n_streams()) {
        throw TraceValidationError("trace holds " + std::to_string(m_streams.size()) + " streams, header declares " +
                                       std::to_string(m_header.n_streams()),
                                   0);
    }
    for (std::size_t i = 0; i < m_streams.size(); ++i) {
        const auto& s = m_streams[i];
        if (!all_finite(s.queries) || !all_finite(s.keys) || !all_finite(s.values)) {
            throw TraceValidationError("stream " + std::to_string(i) + " contains non-finite values", 0);
        }
    }
}

// ---------------------------------------------------------------------------------------------------------------
// Synthetic traces

void SyntheticSpec::validate() const {
    if (n == 0 || dim == 0) {
        throw ConfigError("synthetic trace needs n >= 1 and dim >= 1");
    }
    if (needle_count >= n) {
        throw ConfigError("needle_count must be smaller than n");
    }
    if (needle_count > 0 && needle_count > n - std::min(n, needle_margin)) {
        throw ConfigError("needle_count does not fit after the needle margin");
    }
    if (!(needle_strength >= 0.0) || !std::isfinite(needle_strength)) {
        throw ConfigError("needle_strength must be finite and non-negative");
    }
    if (!(noise_scale > 0.0) || !std::isfinite(noise_scale)) {
        throw ConfigError("noise_scale must be finite and positive");
    }
    if (prompt_len > n) {
        throw ConfigError("prompt_len exceeds n");
    }
}

std::vector<std::size_t> needle_positions(const SyntheticSpec& spec, StreamId stream) {
    spec.validate();
    std::vector<std::size_t> candidates;
    for (std::size_t p = std::min(spec.needle_margin, spec.n); p < spec.n; ++p) {
        candidates.push_back(p);
    }
    RngStream rng(spec.seed, stream, salt::kSynthetic + 1);
    // Partial Fisher-Yates: the first needle_count entries are a uniform sample.
    for (std::size_t i = 0; i < spec.needle_count; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
        std::swap(candidates[i], candidates[j]);
    }
    candidates.resize(spec.needle_count);
    std::sort(candidates.begin(), candidates.end());
    return candidates;
}

TokenTrace generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    TraceHeader header;
    header.dim = static_cast<std::uint32_t>(spec.dim);
    header.value_dim = static_cast<std::uint32_t>(spec.value_dim == 0 ? spec.dim : spec.value_dim);
    header.n_layers = static_cast<std::uint32_t>(spec.n_layers);
    header.n_kv_heads = static_cast<std::uint32_t>(spec.n_kv_heads);
    header.total_len = static_cast<std::uint32_t>(spec.n);
    header.prompt_len = static_cast<std::uint32_t>(spec.prompt_len == 0 ? spec.n / 2 : spec.prompt_len);
    header.producer = "kvsim-synthetic";
    TokenTrace trace(header);

    const double s = spec.needle_strength;
    const double sigma = spec.noise_scale;
    const double root_d = std::sqrt(static_cast<double>(spec.dim));
    const double alignment = s / (1.0 + s);
    const std::size_t d = spec.dim;

    for (std::size_t index = 0; index < trace.n_streams(); ++index) {
        const StreamId id = trace.stream(index).id;
        RngStream rng(spec.seed, id, salt::kSynthetic);

        std::vector<double> u(d);
        for (auto& x : u) {
            x = rng.normal();
        }
        double u_norm = 0.0;
        for (double x : u) {
            u_norm += x * x;
        }
        u_norm = std::sqrt(u_norm);
        for (auto& x : u) {
            x /= u_norm;
        }

        const auto needles = s > 0.0 ? needle_positions(spec, id) : std::vector<std::size_t>{};
        std::vector<double> g(d);
        for (std::size_t t = 0; t < spec.n; ++t) {
            auto q = trace.query_mut(index, t);
            for (std::size_t i = 0; i < d; ++i) {
                q[i] = static_cast<float>(sigma * (rng.normal() + s * root_d * u[i]));
            }

            auto k = trace.key_mut(index, t);
            for (auto& x : g) {
                x = rng.normal();
            }
            if (std::binary_search(needles.begin(), needles.end(), t)) {
                // Component of g orthogonal to u, rescaled to unit length.
                double along = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    along += g[i] * u[i];
                }
                double perp_norm = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    g[i] -= along * u[i];
                    perp_norm += g[i] * g[i];
                }
                perp_norm = std::sqrt(perp_norm);
                const double ortho = std::sqrt(1.0 - alignment * alignment);
                const double norm = 0.5 * sigma * root_d;
                for (std::size_t i = 0; i < d; ++i) {
                    const double perp = perp_norm > 0.0 ? g[i] / perp_norm : 0.0;
                    k[i] = static_cast<float>(norm * (alignment * u[i] + ortho * perp));
                }
            } else {
                for (std::size_t i = 0; i < d; ++i) {
                    k[i] = static_cast<float>(sigma * g[i]);
                }
            }

            for (auto& x : trace.value_mut(index, t)) {
                x = static_cast<float>(sigma * rng.normal());
            }
        }
    }
    return trace;
}

TokenTrace aggregate_query_groups(const TokenTrace& trace, std::size_t group_size, QueryAggregation method) {
    const auto& in = trace.header();
    if (group_size == 0 || in.n_kv_heads % group_size != 0) {
        throw ConfigError("group size " + std::to_string(group_size) + " does not divide head count " +
                          std::to_string(in.n_kv_heads));
    }
    TraceHeader header = in;
    header.n_kv_heads = static_cast<std::uint32_t>(in.n_kv_heads / group_size);
    header.producer = in.producer + (method == QueryAggregation::kMean ? "+gqa-mean" : "+gqa-first");
    TokenTrace out(header);
    for (std::uint32_t layer = 0; layer < header.n_layers; ++layer) {
        for (std::uint32_t group = 0; group < header.n_kv_heads; ++group) {
            const std::size_t dst = static_cast<std::size_t>(layer) * header.n_kv_heads + group;
            const StreamView first = trace.stream(StreamId{layer, static_cast<std::uint32_t>(group * group_size)});
            for (std::size_t t = 0; t < header.total_len; ++t) {
                auto q = out.query_mut(dst, t);
                if (method == QueryAggregation::kFirst) {
                    std::copy_n(first.query(t).begin(), header.dim, q.begin());
                } else {
                    std::vector<double> acc(header.dim, 0.0);
                    for (std::size_t member = 0; member < group_size; ++member) {
                        const StreamView s = trace.stream(
                            StreamId{layer, static_cast<std::uint32_t>(group * group_size + member)});
                        const auto src = s.query(t);
                        for (std::size_t i = 0; i < header.dim; ++i) {
                            acc[i] += src[i];
                        }
                    }
                    for (std::size_t i = 0; i < header.dim; ++i) {
                        q[i] = static_cast<float>(acc[i] / static_cast<double>(group_size));
                    }
                }
                std::copy_n(first.key(t).begin(), header.dim, out.key_mut(dst, t).begin());
                std::copy_n(first.value(t).begin(), header.value_dim, out.value_mut(dst, t).begin());
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------------------------------------------
// KVTR binary codec

namespace {

constexpr std::uint8_t kMagic[4] = {'K', 'V', 'T', 'R'};
constexpr std::size_t kFixedHeaderBytes = 36;
constexpr std::size_t kRecordPrefixBytes = 8;

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in bounded chunks.
    constexpr std::size_t kChunk = 1U << 30;
    for (std::size_t pos = 0; pos < bytes.size(); pos += kChunk) {
        const std::size_t len = std::min(kChunk, bytes.size() - pos);
        crc = crc32(crc, bytes.data() + pos, static_cast<uInt>(len));
    }
    return static_cast<std::uint32_t>(crc);
}

class ByteWriter {
public:
    void u8(std::uint8_t v) {
        m_out.push_back(v);
    }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) {
            m_out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            m_out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void f32s(std::span<const float> values) {
        for (float f : values) {
            u32(std::bit_cast<std::uint32_t>(f));
        }
    }
    void bytes(std::span<const std::uint8_t> b) {
        m_out.insert(m_out.end(), b.begin(), b.end());
    }
    std::size_t size() const {
        return m_out.size();
    }
    std::vector<std::uint8_t>& buffer() {
        return m_out;
    }

private:
    std::vector<std::uint8_t> m_out;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : m_bytes(bytes) {}

    std::size_t offset() const {
        return m_pos;
    }
    std::size_t remaining() const {
        return m_bytes.size() - m_pos;
    }

    void require(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw TraceError(std::string("truncated trace: expected ") + what, m_pos);
        }
    }
    std::uint8_t u8(const char* what) {
        require(1, what);
        return m_bytes[m_pos++];
    }
    std::uint16_t u16(const char* what) {
        require(2, what);
        const auto v = static_cast<std::uint16_t>(m_bytes[m_pos] | (m_bytes[m_pos + 1] << 8));
        m_pos += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        require(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(m_bytes[m_pos + i]) << (8 * i);
        }
        m_pos += 4;
        return v;
    }
    void f32s(std::span<float> out, const char* what) {
        require(out.size() * 4, what);
        for (auto& f : out) {
            f = std::bit_cast<float>(u32(what));
        }
    }
    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        require(n, what);
        auto out = m_bytes.subspan(m_pos, n);
        m_pos += n;
        return out;
    }

private:
    std::span<const std::uint8_t> m_bytes;
    std::size_t m_pos = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_trace(const TokenTrace& trace) {
    trace.validate();
    const auto& h = trace.header();
    ByteWriter w;
    w.bytes(kMagic);
    w.u16(kTraceVersion);
    w.u16(0);  // reserved
    w.u32(h.dim);
    w.u32(h.value_dim);
    w.u32(h.n_layers);
    w.u32(h.n_kv_heads);
    w.u32(h.prompt_len);
    w.u32(h.total_len);
    w.u8(h.normalized ? 1 : 0);
    w.u8(0);  // reserved
    w.u16(static_cast<std::uint16_t>(h.producer.size()));
    w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(h.producer.data()), h.producer.size()));
    w.u32(crc32_of(w.buffer()));

    const std::size_t payload_start = w.size();
    for (std::size_t index = 0; index < trace.n_streams(); ++index) {
        const StreamView s = trace.stream(index);
        for (std::size_t t = 0; t < s.steps; ++t) {
            w.u32(static_cast<std::uint32_t>(t));
            w.u16(static_cast<std::uint16_t>(s.id.layer));
            w.u16(static_cast<std::uint16_t>(s.id.head));
            w.f32s(s.query(t));
            w.f32s(s.key(t));
            w.f32s(s.value(t));
        }
    }
    w.u32(crc32_of(std::span(w.buffer()).subspan(payload_start)));
    return std::move(w.buffer());
}

TokenTrace decode_trace(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    const auto magic = r.take(4, "magic");
    if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
        throw TraceError("bad magic: not a KVTR trace", 0);
    }
    const std::uint16_t version = r.u16("version");
    if (version != kTraceVersion) {
        throw TraceError("unsupported KVTR version " + std::to_string(version), 4);
    }
    if (r.u16("reserved") != 0) {
        throw TraceError("reserved header field is not zero", 6);
    }
    TraceHeader h;
    h.dim = r.u32("dim");
    h.value_dim = r.u32("value_dim");
    h.n_layers = r.u32("n_layers");
    h.n_kv_heads = r.u32("n_kv_heads");
    h.prompt_len = r.u32("prompt_len");
    h.total_len = r.u32("total_len");
    const std::uint8_t flags = r.u8("flags");
    if ((flags & ~1U) != 0) {
        throw TraceError("unknown header flags", 32);
    }
    h.normalized = (flags & 1U) != 0;
    if (r.u8("reserved") != 0) {
        throw TraceError("reserved header field is not zero", 33);
    }
    const std::uint16_t producer_len = r.u16("producer length");
    const auto producer = r.take(producer_len, "producer tag");
    h.producer.assign(producer.begin(), producer.end());
    const std::size_t header_end = r.offset();
    const std::uint32_t header_crc = r.u32("header checksum");
    if (header_crc != crc32_of(bytes.first(header_end))) {
        throw TraceError("header checksum mismatch", header_end);
    }
    try {
        validate_header(h);
    } catch (const TraceValidationError& e) {
        throw TraceValidationError(e.what(), 8);
    }

    const std::size_t record_bytes = kRecordPrefixBytes + 4 * (2 * std::size_t{h.dim} + h.value_dim);
    const std::size_t expected_records = h.n_streams() * h.total_len;
    // Reject impossible sizes before allocating stream storage.
    if (r.remaining() / record_bytes < expected_records) {
        throw TraceError("truncated trace: header promises " + std::to_string(expected_records) + " records of " +
                             std::to_string(record_bytes) + " bytes",
                         r.offset());
    }

    TokenTrace trace(h);
    const std::size_t payload_start = r.offset();
    for (std::size_t index = 0; index < trace.n_streams(); ++index) {
        const StreamId id = trace.stream(index).id;
        for (std::size_t t = 0; t < h.total_len; ++t) {
            const std::size_t at = r.offset();
            const std::uint32_t step = r.u32("record step");
            const std::uint16_t layer = r.u16("record layer");
            const std::uint16_t head = r.u16("record head");
            if (layer >= h.n_layers || head >= h.n_kv_heads) {
                throw TraceValidationError("record for (layer " + std::to_string(layer) + ", head " +
                                               std::to_string(head) + ") outside header n_layers=" +
                                               std::to_string(h.n_layers) + ", n_kv_heads=" +
                                               std::to_string(h.n_kv_heads),
                                           at);
            }
            if (layer != id.layer || head != id.head || step != t) {
                throw TraceValidationError("out-of-order record (" + std::to_string(layer) + ", " +
                                               std::to_string(head) + ", step " + std::to_string(step) +
                                               "); expected (" + std::to_string(id.layer) + ", " +
                                               std::to_string(id.head) + ", step " + std::to_string(t) + ")",
                                           at);
            }
            r.f32s(trace.query_mut(index, t), "query");
            r.f32s(trace.key_mut(index, t), "key");
            r.f32s(trace.value_mut(index, t), "value");
        }
    }
    const std::size_t payload_end = r.offset();
    if (r.remaining() > 4) {
        // Surplus records usually mean the header undercounts layers or heads.
        if (r.remaining() >= kRecordPrefixBytes + 4) {
            ByteReader peek(bytes.subspan(payload_end));
            peek.u32("step");
            const std::uint16_t layer = peek.u16("layer");
            const std::uint16_t head = peek.u16("head");
            if (layer >= h.n_layers || head >= h.n_kv_heads) {
                throw TraceValidationError("records for (layer " + std::to_string(layer) + ", head " +
                                               std::to_string(head) + ") beyond header n_layers=" +
                                               std::to_string(h.n_layers) + ", n_kv_heads=" +
                                               std::to_string(h.n_kv_heads),
                                           payload_end);
            }
        }
        throw TraceError("unexpected bytes after the last record", payload_end);
    }
    const std::uint32_t payload_crc = r.u32("payload checksum");
    if (payload_crc != crc32_of(bytes.subspan(payload_start, payload_end - payload_start))) {
        throw TraceError("payload checksum mismatch", payload_end);
    }
    try {
        trace.validate();
    } catch (const TraceValidationError& e) {
        throw TraceValidationError(e.what(), payload_start);
    }
    return trace;
}

void write_trace(const TokenTrace& trace, const std::filesystem::path& path) {
    const auto bytes = encode_trace(trace);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

// ---------------------------------------------------------------------------------------------------------------
// JSON-lines codec

namespace {

using nlohmann::json;

constexpr const char* kJsonlFormat = "KVTR-JSONL";

template <typename T>
T field(const json& obj, const char* name, std::size_t line) {
    if (!obj.contains(name)) {
        throw TraceError(std::string("missing field '") + name + "'", line);
    }
    try {
        return obj.at(name).get<T>();
    } catch (const json::exception&) {
        throw TraceError(std::string("field '") + name + "' has the wrong type", line);
    }
}

}  // namespace

std::string encode_trace_jsonl(const TokenTrace& trace) {
    trace.validate();
    const auto& h = trace.header();
    std::ostringstream out;
    json header = {{"format", kJsonlFormat},
                   {"version", kTraceVersion},
                   {"dim", h.dim},
                   {"value_dim", h.value_dim},
                   {"n_layers", h.n_layers},
                   {"n_kv_heads", h.n_kv_heads},
                   {"prompt_len", h.prompt_len},
                   {"total_len", h.total_len},
                   {"producer", h.producer},
                   {"normalized", h.normalized}};
    out << header.dump() << '\n';
    for (std::size_t index = 0; index < trace.n_streams(); ++index) {
        const StreamView s = trace.stream(index);
        for (std::size_t t = 0; t < s.steps; ++t) {
            const auto q = s.query(t);
            const auto k = s.key(t);
            const auto v = s.value(t);
            json rec = {{"step", t},
                        {"layer", s.id.layer},
                        {"head", s.id.head},
                        {"q", std::vector<float>(q.begin(), q.end())},
                        {"k", std::vector<float>(k.begin(), k.end())},
                        {"v", std::vector<float>(v.begin(), v.end())}};
            out << rec.dump() << '\n';
        }
    }
    return out.str();
}

TokenTrace decode_trace_jsonl(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;

    auto parse_line = [&](const std::string& src) {
        try {
            return json::parse(src);
        } catch (const json::parse_error& e) {
            throw TraceError(std::string("malformed JSON: ") + e.what(), line_no);
        }
    };

    while (line.empty() && std::getline(in, line)) {
        ++line_no;
    }
    if (line.empty()) {
        throw TraceError("empty JSONL trace", 0);
    }
    const json head = parse_line(line);
    if (!head.is_object() || head.value("format", std::string{}) != kJsonlFormat) {
        throw TraceError("first line is not a KVTR-JSONL header", line_no);
    }
    if (field<std::uint32_t>(head, "version", line_no) != kTraceVersion) {
        throw TraceError("unsupported KVTR-JSONL version", line_no);
    }
    TraceHeader h;
    h.dim = field<std::uint32_t>(head, "dim", line_no);
    h.value_dim = field<std::uint32_t>(head, "value_dim", line_no);
    h.n_layers = field<std::uint32_t>(head, "n_layers", line_no);
    h.n_kv_heads = field<std::uint32_t>(head, "n_kv_heads", line_no);
    h.prompt_len = field<std::uint32_t>(head, "prompt_len", line_no);
    h.total_len = field<std::uint32_t>(head, "total_len", line_no);
    h.producer = field<std::string>(head, "producer", line_no);
    h.normalized = field<bool>(head, "normalized", line_no);
    try {
        validate_header(h);
    } catch (const TraceValidationError& e) {
        throw TraceValidationError(e.what(), line_no);
    }

    TokenTrace trace(h);
    std::vector<std::uint8_t> seen(h.n_streams() * h.total_len, 0);
    std::size_t records = 0;
    auto copy_vector = [&](const json& rec, const char* name, std::span<float> dst) {
        const auto values = field<std::vector<float>>(rec, name, line_no);
        if (values.size() != dst.size()) {
            throw TraceValidationError(std::string("field '") + name + "' has " + std::to_string(values.size()) +
                                           " entries, header expects " + std::to_string(dst.size()),
                                       line_no);
        }
        std::copy(values.begin(), values.end(), dst.begin());
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const json rec = parse_line(line);
        const auto layer = field<std::uint32_t>(rec, "layer", line_no);
        const auto head_idx = field<std::uint32_t>(rec, "head", line_no);
        const auto step = field<std::uint32_t>(rec, "step", line_no);
        if (layer >= h.n_layers || head_idx >= h.n_kv_heads || step >= h.total_len) {
            throw TraceValidationError("record (layer " + std::to_string(layer) + ", head " +
                                           std::to_string(head_idx) + ", step " + std::to_string(step) +
                                           ") outside the header's bounds",
                                       line_no);
        }
        const std::size_t index = static_cast<std::size_t>(layer) * h.n_kv_heads + head_idx;
        auto& flag = seen[index * h.total_len + step];
        if (flag != 0) {
            throw TraceValidationError("duplicate record", line_no);
        }
        flag = 1;
        copy_vector(rec, "q", trace.query_mut(index, step));
        copy_vector(rec, "k", trace.key_mut(index, step));
        copy_vector(rec, "v", trace.value_mut(index, step));
        ++records;
    }
    if (records != seen.size()) {
        throw TraceValidationError("trace has " + std::to_string(records) + " records, header implies " +
                                       std::to_string(seen.size()),
                                   line_no);
    }
    trace.validate();
    return trace;
}

void write_trace_jsonl(const TokenTrace& trace, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out << encode_trace_jsonl(trace);
    if (!out) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

TokenTrace read_trace(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open trace '" + path.string() + "'");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, std::begin(kMagic))) {
        return decode_trace(bytes);
    }
    const auto first = std::find_if(bytes.begin(), bytes.end(), [](std::uint8_t c) { return !std::isspace(c); });
    if (first != bytes.end() && *first == '{') {
        return decode_trace_jsonl(std::string(bytes.begin(), bytes.end()));
    }
    throw TraceError("bad magic: not a KVTR trace", 0);
}

}  // namespace kvsim
