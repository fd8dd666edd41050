// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "kvsim/error.hpp"
#include "kvsim/oracle.hpp"
#include "kvsim/trace.hpp"
#include "stats.hpp"

namespace kvsim {
namespace {

// Header field offsets of the binary codec.
constexpr std::size_t kNLayersOffset = 16;
constexpr std::size_t kProducerLenOffset = 34;
constexpr std::size_t kProducerOffset = 36;

std::size_t header_end(const std::vector<std::uint8_t>& bytes) {
    const std::size_t producer_len = bytes[kProducerLenOffset] | (bytes[kProducerLenOffset + 1] << 8);
    return kProducerOffset + producer_len;
}

void put_u32(std::vector<std::uint8_t>& bytes, std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        bytes[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
    }
}

void reseal_header(std::vector<std::uint8_t>& bytes) {
    const std::size_t end = header_end(bytes);
    put_u32(bytes, end, static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(end))));
}

TokenTrace random_trace(RngStream& rng) {
    TraceHeader h;
    h.dim = 1 + static_cast<std::uint32_t>(rng.below(9));
    h.value_dim = 1 + static_cast<std::uint32_t>(rng.below(9));
    h.n_layers = 1 + static_cast<std::uint32_t>(rng.below(3));
    h.n_kv_heads = 1 + static_cast<std::uint32_t>(rng.below(3));
    h.total_len = 1 + static_cast<std::uint32_t>(rng.below(20));
    h.prompt_len = static_cast<std::uint32_t>(rng.below(h.total_len + 1));
    h.producer = rng.below(2) == 0 ? "" : "unit-test post-rope";
    h.normalized = rng.below(2) == 1;
    TokenTrace trace(h);
    for (std::size_t s = 0; s < trace.n_streams(); ++s) {
        for (std::size_t t = 0; t < h.total_len; ++t) {
            for (auto span : {trace.query_mut(s, t), trace.key_mut(s, t), trace.value_mut(s, t)}) {
                for (float& x : span) {
                    // Mix of ordinary values, extreme magnitudes and subnormals to stress bit-exactness.
                    const auto pick = rng.below(10);
                    x = pick == 0   ? 1e-40F
                        : pick == 1 ? -3.0e38F
                                    : static_cast<float>(rng.normal());
                }
            }
        }
    }
    return trace;
}

TEST(Synthetic, SameSpecAndSeedIsBitIdentical) {
    SyntheticSpec spec;
    spec.n = 64;
    spec.needle_count = 3;
    spec.needle_strength = 2.0;
    spec.seed = 17;
    EXPECT_EQ(generate_synthetic(spec), generate_synthetic(spec));
    const auto a = encode_trace(generate_synthetic(spec));
    const auto b = encode_trace(generate_synthetic(spec));
    EXPECT_EQ(a, b);
    spec.seed = 18;
    EXPECT_NE(encode_trace(generate_synthetic(spec)), a);
}

TEST(Synthetic, HeaderReflectsSpec) {
    SyntheticSpec spec;
    spec.n = 40;
    spec.dim = 8;
    spec.value_dim = 5;
    spec.n_layers = 2;
    spec.n_kv_heads = 3;
    const auto trace = generate_synthetic(spec);
    EXPECT_EQ(trace.header().dim, 8U);
    EXPECT_EQ(trace.header().value_dim, 5U);
    EXPECT_EQ(trace.header().total_len, 40U);
    EXPECT_EQ(trace.header().prompt_len, 20U);
    EXPECT_EQ(trace.n_streams(), 6U);
    EXPECT_NO_THROW(trace.validate());
}

TEST(Synthetic, RejectsBadSpecs) {
    SyntheticSpec spec;
    spec.n = 0;
    EXPECT_THROW(generate_synthetic(spec), ConfigError);
    spec = {};
    spec.needle_count = spec.n;
    EXPECT_THROW(generate_synthetic(spec), ConfigError);
    spec = {};
    spec.noise_scale = 0.0;
    EXPECT_THROW(generate_synthetic(spec), ConfigError);
    spec = {};
    spec.prompt_len = spec.n + 1;
    EXPECT_THROW(generate_synthetic(spec), ConfigError);
}

// Without needles the argmax of every attention row lands anywhere in the causal prefix, so the argmax position
// normalized by the row length is uniform on (0, 1]. Ties to discrete positions are broken with uniform jitter.
TEST(Synthetic, IidArgmaxPositionsAreUniform) {
    int rejections = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SyntheticSpec spec;
        spec.n = 400;
        spec.dim = 16;
        spec.seed = seed;
        const auto trace = generate_synthetic(spec);
        const auto attention = full_attention(trace.stream(0));
        RngStream jitter(seed, {}, 99);
        std::vector<double> samples;
        for (std::size_t i = 0; i < attention.size(); ++i) {
            const auto row = attention.row(i);
            const auto argmax = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
            samples.push_back((static_cast<double>(argmax) + jitter.uniform()) / static_cast<double>(i + 1));
        }
        rejections += testing::ks_uniform_p(samples) < 0.01 ? 1 : 0;
    }
    // Under the null at most a couple of the 20 tests should reject at the 1% level.
    EXPECT_LE(rejections, 2);
}

TEST(Synthetic, NeedlesReceiveAtLeastFiveTimesMeanAttention) {
    SyntheticSpec spec;
    spec.n = 256;
    spec.needle_count = 8;
    spec.needle_strength = 2.0;
    spec.seed = 5;
    const auto trace = generate_synthetic(spec);
    const auto mean = mean_attention(full_attention(trace.stream(0)));
    const auto needles = needle_positions(spec, {});
    ASSERT_EQ(needles.size(), 8U);
    std::vector<bool> is_needle(spec.n, false);
    for (auto p : needles) {
        is_needle[p] = true;
        EXPECT_GE(p, spec.needle_margin);
    }
    double needle_mass = 0.0;
    double other_mass = 0.0;
    for (std::size_t p = 0; p < spec.n; ++p) {
        (is_needle[p] ? needle_mass : other_mass) += mean[p];
    }
    const double needle_avg = needle_mass / 8.0;
    const double other_avg = other_mass / static_cast<double>(spec.n - 8);
    EXPECT_GE(needle_avg, 5.0 * other_avg);
}

TEST(BinaryCodec, RoundTripIsBitExact) {
    RngStream rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const auto trace = random_trace(rng);
        const auto bytes = encode_trace(trace);
        const auto decoded = decode_trace(bytes);
        EXPECT_EQ(decoded.header(), trace.header());
        for (std::size_t s = 0; s < trace.n_streams(); ++s) {
            const auto a = trace.stream(s);
            const auto b = decoded.stream(s);
            ASSERT_EQ(std::memcmp(a.queries.data(), b.queries.data(), a.queries.size_bytes()), 0);
            ASSERT_EQ(std::memcmp(a.keys.data(), b.keys.data(), a.keys.size_bytes()), 0);
            ASSERT_EQ(std::memcmp(a.values.data(), b.values.data(), a.values.size_bytes()), 0);
        }
        EXPECT_EQ(encode_trace(decoded), bytes);
    }
}

TEST(JsonlCodec, RoundTripIsBitExact) {
    RngStream rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const auto trace = random_trace(rng);
        const auto decoded = decode_trace_jsonl(encode_trace_jsonl(trace));
        EXPECT_EQ(encode_trace(decoded), encode_trace(trace));
    }
}

TEST(BinaryCodec, BadMagicFailsAtOffsetZero) {
    SyntheticSpec spec;
    spec.n = 8;
    spec.dim = 4;
    auto bytes = encode_trace(generate_synthetic(spec));
    bytes[0] = 'X';
    try {
        decode_trace(bytes);
        FAIL() << "expected TraceError";
    } catch (const TraceError& e) {
        EXPECT_EQ(e.offset(), 0U);
    }
}

TEST(BinaryCodec, UnknownVersionFailsAtItsOffset) {
    SyntheticSpec spec;
    spec.n = 8;
    spec.dim = 4;
    auto bytes = encode_trace(generate_synthetic(spec));
    bytes[4] = 9;
    try {
        decode_trace(bytes);
        FAIL() << "expected TraceError";
    } catch (const TraceError& e) {
        EXPECT_EQ(e.offset(), 4U);
    }
}

TEST(BinaryCodec, SurplusLayerRecordsAreAValidationError) {
    SyntheticSpec spec;
    spec.n = 6;
    spec.dim = 4;
    spec.n_layers = 3;
    auto bytes = encode_trace(generate_synthetic(spec));
    put_u32(bytes, kNLayersOffset, 2);
    reseal_header(bytes);
    EXPECT_THROW(decode_trace(bytes), TraceValidationError);
}

TEST(BinaryCodec, TruncationIsReported) {
    SyntheticSpec spec;
    spec.n = 8;
    spec.dim = 4;
    const auto bytes = encode_trace(generate_synthetic(spec));
    const std::size_t cuts[] = {0, 3, 20, header_end(bytes) + 4, bytes.size() - 1};
    for (std::size_t keep : cuts) {
        const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(keep));
        EXPECT_THROW(decode_trace(cut), TraceError) << keep;
    }
}

TEST(BinaryCodec, PayloadCorruptionFailsTheChecksum) {
    SyntheticSpec spec;
    spec.n = 8;
    spec.dim = 4;
    auto bytes = encode_trace(generate_synthetic(spec));
    bytes[header_end(bytes) + 4 + 8 + 1] ^= 0x10;  // inside the first query
    EXPECT_THROW(decode_trace(bytes), TraceError);
}

TEST(BinaryCodec, EveryHeaderByteFlipIsRejected) {
    SyntheticSpec spec;
    spec.n = 8;
    spec.dim = 4;
    const auto bytes = encode_trace(generate_synthetic(spec));
    const std::size_t end = header_end(bytes) + 4;
    for (std::size_t i = 0; i < end; ++i) {
        for (std::uint8_t mask : {std::uint8_t{0x01}, std::uint8_t{0x80}, std::uint8_t{0xff}}) {
            auto corrupt = bytes;
            corrupt[i] ^= mask;
            EXPECT_THROW(decode_trace(corrupt), TraceError) << "byte " << i;
        }
    }
}

TEST(JsonlCodec, ErrorsCarryLineNumbers) {
    SyntheticSpec spec;
    spec.n = 3;
    spec.dim = 2;
    const auto text = encode_trace_jsonl(generate_synthetic(spec));
    EXPECT_THROW(decode_trace_jsonl(""), TraceError);
    const auto first_newline = text.find('\n');
    const auto broken = text.substr(0, first_newline + 1) + "{not json\n";
    try {
        decode_trace_jsonl(broken);
        FAIL() << "expected TraceError";
    } catch (const TraceError& e) {
        EXPECT_EQ(e.offset(), 2U);
    }
    // Dropping a record leaves the trace short.
    const auto last = text.rfind('\n', text.size() - 2);
    EXPECT_THROW(decode_trace_jsonl(text.substr(0, last + 1)), TraceValidationError);
}

TEST(ReadTrace, SniffsBothCodecsAndReportsMissingFiles) {
    const auto dir = std::filesystem::temp_directory_path() / "kvsim_test_trace";
    std::filesystem::create_directories(dir);
    SyntheticSpec spec;
    spec.n = 10;
    spec.dim = 3;
    const auto trace = generate_synthetic(spec);
    write_trace(trace, dir / "t.kvtr");
    write_trace_jsonl(trace, dir / "t.jsonl");
    EXPECT_EQ(read_trace(dir / "t.kvtr"), trace);
    EXPECT_EQ(encode_trace(read_trace(dir / "t.jsonl")), encode_trace(trace));
    EXPECT_THROW(read_trace(dir / "absent.kvtr"), Error);
    {
        std::ofstream junk(dir / "junk.bin", std::ios::binary);
        junk << "GARBAGE";
    }
    EXPECT_THROW(read_trace(dir / "junk.bin"), TraceError);
    std::filesystem::remove_all(dir);
}

TEST(TokenTrace, ValidateRejectsNonFiniteValues) {
    TraceHeader h;
    h.dim = 2;
    h.value_dim = 2;
    h.n_layers = 1;
    h.n_kv_heads = 1;
    h.total_len = 2;
    TokenTrace trace(h);
    EXPECT_NO_THROW(trace.validate());
    trace.key_mut(0, 1)[0] = std::nanf("");
    EXPECT_THROW(trace.validate(), TraceValidationError);
    EXPECT_THROW(encode_trace(trace), TraceValidationError);
}

TEST(TokenTrace, InconsistentHeaderIsRejected) {
    TraceHeader h;
    h.dim = 2;
    h.value_dim = 2;
    h.n_layers = 1;
    h.n_kv_heads = 1;
    h.total_len = 2;
    h.prompt_len = 3;
    EXPECT_THROW(TokenTrace{h}, TraceValidationError);
}

TEST(AggregateQueryGroups, MeanAndFirstFolding) {
    TraceHeader h;
    h.dim = 1;
    h.value_dim = 1;
    h.n_layers = 1;
    h.n_kv_heads = 4;
    h.total_len = 1;
    TokenTrace trace(h);
    for (std::size_t s = 0; s < 4; ++s) {
        trace.query_mut(s, 0)[0] = static_cast<float>(s + 1);
        trace.key_mut(s, 0)[0] = static_cast<float>(10 * (s / 2));
        trace.value_mut(s, 0)[0] = static_cast<float>(100 * (s / 2));
    }
    const auto mean = aggregate_query_groups(trace, 2, QueryAggregation::kMean);
    ASSERT_EQ(mean.n_streams(), 2U);
    EXPECT_FLOAT_EQ(mean.stream(0).query(0)[0], 1.5F);
    EXPECT_FLOAT_EQ(mean.stream(1).query(0)[0], 3.5F);
    EXPECT_FLOAT_EQ(mean.stream(1).key(0)[0], 10.0F);
    EXPECT_FLOAT_EQ(mean.stream(1).value(0)[0], 100.0F);
    const auto first = aggregate_query_groups(trace, 2, QueryAggregation::kFirst);
    EXPECT_FLOAT_EQ(first.stream(1).query(0)[0], 3.0F);
    EXPECT_THROW(aggregate_query_groups(trace, 3, QueryAggregation::kMean), ConfigError);
}

}  // namespace
}  // namespace kvsim
