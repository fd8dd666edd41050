// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kvsim {

/// Read-only view of one embedding (query, key or value). Storage is always 32-bit.
using ConstVector = std::span<const float>;

/// Identifies one (layer, KV head) stream. Every per-head random quantity is keyed by it.
struct StreamId {
    std::uint32_t layer = 0;
    std::uint32_t head = 0;

    auto operator<=>(const StreamId&) const = default;
};

/// Dot product accumulated in double precision.
double dot(ConstVector a, ConstVector b);

double l2_norm(ConstVector a);

/// Cosine similarity; 0 when either vector is zero.
double cosine(ConstVector a, ConstVector b);

bool all_finite(ConstVector a);

/// Returns a / ||a|| (a copy of `a` when its norm is zero).
std::vector<float> normalized(ConstVector a);

/**
 * Splittable pseudo-random stream.
 *
 * The generator is xoshiro256** whose state is derived with SplitMix64 from (seed, layer, head, salt), so any two
 * distinct keys give unrelated streams and the same key always replays the same sequence. Normal deviates use the
 * Box-Muller transform over 53-bit uniforms, which keeps the output independent of the standard library's
 * distribution implementations.
 *
 * Satisfies UniformRandomBitGenerator.
 */
class RngStream {
public:
    using result_type = std::uint64_t;

    explicit RngStream(std::uint64_t seed, StreamId stream = {}, std::uint64_t salt = 0);

    static constexpr result_type min() {
        return 0;
    }
    static constexpr result_type max() {
        return std::numeric_limits<result_type>::max();
    }

    result_type operator()() {
        return next_u64();
    }

    std::uint64_t next_u64();

    /// Uniform double in [0, 1).
    double uniform();

    /// Standard normal deviate.
    double normal();

    /// Uniform integer in [0, n). Requires n > 0.
    std::uint64_t below(std::uint64_t n);

private:
    std::array<std::uint64_t, 4> m_state{};
    double m_spare = 0.0;
    bool m_has_spare = false;
};

/// Salts separating the independent uses of one (seed, stream) pair.
namespace salt {
inline constexpr std::uint64_t kProjection = 0x50524f4aULL;  // "PROJ"
inline constexpr std::uint64_t kRandomPolicy = 0x524e4450ULL;
inline constexpr std::uint64_t kSynthetic = 0x53594e54ULL;
inline constexpr std::uint64_t kAnalysis = 0x414e4c59ULL;
}  // namespace salt

/**
 * Row-major c x d matrix of i.i.d. standard normal entries (the random hyperplanes of SimHash).
 *
 * Entries are drawn row by row from one RngStream, so the matrix for c bits is the leading block of the matrix for
 * any larger bit count built from the same key.
 */
class ProjectionMatrix {
public:
    ProjectionMatrix(std::size_t bits, std::size_t dim, std::vector<float> entries, std::uint64_t seed = 0);

    static ProjectionMatrix gaussian(std::uint64_t seed,
                                     std::size_t bits,
                                     std::size_t dim,
                                     StreamId stream = {},
                                     std::uint64_t salt = salt::kProjection);

    std::size_t bits() const {
        return m_bits;
    }
    std::size_t dim() const {
        return m_dim;
    }
    std::uint64_t seed() const {
        return m_seed;
    }

    ConstVector row(std::size_t i) const {
        return ConstVector(m_entries).subspan(i * m_dim, m_dim);
    }

    std::span<const float> entries() const {
        return m_entries;
    }

    bool operator==(const ProjectionMatrix&) const = default;

private:
    std::size_t m_bits;
    std::size_t m_dim;
    std::uint64_t m_seed;
    std::vector<float> m_entries;
};

/// c x d Gaussian projection matrix for stream (0, 0).
ProjectionMatrix normal_matrix(std::uint64_t seed, std::size_t bits, std::size_t dim);

/// Eviction policy identifiers.
enum class PolicyKind {
    kHashEvict,
    kL2,
    kH2O,
    kScissorhands,
    kRandom,
    kFull,
    /// Exact cosine scoring; the un-hashed reference HashEvict approximates. Not exposed as a CLI id.
    kCosine,
};

std::string_view to_string(PolicyKind kind);

/// Parses a CLI/config policy id. Throws UsageError listing the valid ids.
PolicyKind parse_policy(std::string_view id);

/// The ids accepted by parse_policy, in documentation order.
std::span<const std::string_view> policy_ids();

struct CacheConfig {
    /// Fraction of the stream length kept in cache, in (0, 1].
    double budget_fraction = 0.5;
    std::size_t hash_bits = 16;
    std::size_t protect_first = 4;
    std::size_t protect_recent = 10;
    std::uint64_t seed = 0;
    PolicyKind policy = PolicyKind::kHashEvict;

    /// Absolute slot count; overrides budget_fraction when set.
    std::optional<std::size_t> capacity;
    /// Scissorhands accumulation window; defaults to 8 * protect_recent.
    std::optional<std::size_t> scissorhands_window;
    /// Hash unit-normalized vectors instead of raw ones (identical codes, since sgn(Rx) is scale invariant).
    bool normalize_before_hash = false;
    /// Compute the exact full-attention row each step to account attention loss.
    bool track_attention_loss = true;

    /// Throws ConfigError on out-of-range fields.
    void validate() const;

    /// Slot budget C for a stream of `total_steps` tokens: max(ceil(fraction * steps), first + recent + 1), or
    /// `total_steps` for the full-cache policy. An explicit capacity below first + recent + 1 is a ConfigError.
    std::size_t resolve_capacity(std::size_t total_steps) const;

    std::size_t resolved_window() const;
};

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Exceptions from workers are rethrown (first one wins).
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace kvsim
