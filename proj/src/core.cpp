// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvsim/core.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

#include "kvsim/error.hpp"

namespace kvsim {

double dot(ConstVector a, ConstVector b) {
    if (a.size() != b.size()) {
        throw DimensionError("dot: length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

double l2_norm(ConstVector a) {
    return std::sqrt(dot(a, a));
}

double cosine(ConstVector a, ConstVector b) {
    const double denom = l2_norm(a) * l2_norm(b);
    return denom > 0.0 ? dot(a, b) / denom : 0.0;
}

bool all_finite(ConstVector a) {
    return std::all_of(a.begin(), a.end(), [](float x) { return std::isfinite(x); });
}

std::vector<float> normalized(ConstVector a) {
    std::vector<float> out(a.begin(), a.end());
    const double norm = l2_norm(a);
    if (norm > 0.0) {
        for (auto& x : out) {
            x = static_cast<float>(x / norm);
        }
    }
    return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t mix(std::uint64_t value) {
    return splitmix64(value);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, StreamId stream, std::uint64_t salt) {
    const std::uint64_t stream_key = (static_cast<std::uint64_t>(stream.layer) << 32) | stream.head;
    std::uint64_t key = mix(seed) ^ mix(stream_key ^ 0x6a09e667f3bcc909ULL) ^ mix(salt ^ 0xbb67ae8584caa73bULL);
    for (auto& word : m_state) {
        word = splitmix64(key);
    }
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t result = std::rotl(m_state[1] * 5, 7) * 9;
    const std::uint64_t t = m_state[1] << 17;
    m_state[2] ^= m_state[0];
    m_state[3] ^= m_state[1];
    m_state[1] ^= m_state[2];
    m_state[0] ^= m_state[3];
    m_state[2] ^= t;
    m_state[3] = std::rotl(m_state[3], 45);
    return result;
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
    if (m_has_spare) {
        m_has_spare = false;
        return m_spare;
    }
    // u1 in (0, 1] keeps the logarithm finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    m_spare = radius * std::sin(angle);
    m_has_spare = true;
    return radius * std::cos(angle);
}

std::uint64_t RngStream::below(std::uint64_t n) {
    // Lemire's multiply-shift with rejection.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            x = next_u64();
            m = static_cast<__uint128_t>(x) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

ProjectionMatrix::ProjectionMatrix(std::size_t bits, std::size_t dim, std::vector<float> entries, std::uint64_t seed)
    : m_bits(bits),
      m_dim(dim),
      m_seed(seed),
      m_entries(std::move(entries)) {
    if (bits == 0 || dim == 0) {
        throw ConfigError("projection matrix needs at least one row and one column");
    }
    if (m_entries.size() != bits * dim) {
        throw DimensionError("projection matrix entries: expected " + std::to_string(bits * dim) + ", got " +
                             std::to_string(m_entries.size()));
    }
}

ProjectionMatrix ProjectionMatrix::gaussian(std::uint64_t seed,
                                            std::size_t bits,
                                            std::size_t dim,
                                            StreamId stream,
                                            std::uint64_t salt) {
    RngStream rng(seed, stream, salt);
    std::vector<float> entries(bits * dim);
    for (auto& e : entries) {
        e = static_cast<float>(rng.normal());
    }
    return ProjectionMatrix(bits, dim, std::move(entries), seed);
}

ProjectionMatrix normal_matrix(std::uint64_t seed, std::size_t bits, std::size_t dim) {
    return ProjectionMatrix::gaussian(seed, bits, dim);
}

namespace {

constexpr std::array<std::string_view, 6> kPolicyIds = {"hashevict", "l2", "h2o", "scissorhands", "random", "full"};

}  // namespace

std::string_view to_string(PolicyKind kind) {
    switch (kind) {
    case PolicyKind::kHashEvict:
        return "hashevict";
    case PolicyKind::kL2:
        return "l2";
    case PolicyKind::kH2O:
        return "h2o";
    case PolicyKind::kScissorhands:
        return "scissorhands";
    case PolicyKind::kRandom:
        return "random";
    case PolicyKind::kFull:
        return "full";
    case PolicyKind::kCosine:
        return "cosine";
    }
    return "unknown";
}

PolicyKind parse_policy(std::string_view id) {
    static constexpr std::array<PolicyKind, 6> kinds = {PolicyKind::kHashEvict,
                                                        PolicyKind::kL2,
                                                        PolicyKind::kH2O,
                                                        PolicyKind::kScissorhands,
                                                        PolicyKind::kRandom,
                                                        PolicyKind::kFull};
    for (std::size_t i = 0; i < kPolicyIds.size(); ++i) {
        if (kPolicyIds[i] == id) {
            return kinds[i];
        }
    }
    std::string valid;
    for (auto name : kPolicyIds) {
        valid += valid.empty() ? "" : ", ";
        valid += name;
    }
    throw UsageError("unknown policy '" + std::string(id) + "'; valid policies: " + valid);
}

std::span<const std::string_view> policy_ids() {
    return kPolicyIds;
}

void CacheConfig::validate() const {
    if (!(budget_fraction > 0.0 && budget_fraction <= 1.0)) {
        throw ConfigError("budget_fraction must lie in (0, 1], got " + std::to_string(budget_fraction));
    }
    if (hash_bits == 0) {
        throw ConfigError("hash_bits must be at least 1");
    }
    if (capacity && *capacity == 0) {
        throw ConfigError("capacity must be at least 1");
    }
    if (scissorhands_window && *scissorhands_window == 0) {
        throw ConfigError("scissorhands window must be at least 1");
    }
}

std::size_t CacheConfig::resolve_capacity(std::size_t total_steps) const {
    validate();
    if (policy == PolicyKind::kFull) {
        return std::max<std::size_t>(total_steps, 1);
    }
    const std::size_t minimum = protect_first + protect_recent + 1;
    if (capacity) {
        if (*capacity < minimum) {
            throw ConfigError("cache capacity " + std::to_string(*capacity) + " cannot hold protect_first (" +
                              std::to_string(protect_first) + ") + protect_recent (" + std::to_string(protect_recent) +
                              ") tokens plus one evictable slot");
        }
        return *capacity;
    }
    // Guard against 0.5 * 2C landing a hair above an integer.
    const double scaled = budget_fraction * static_cast<double>(total_steps);
    auto budget = static_cast<std::size_t>(std::ceil(scaled - 1e-9));
    return std::max(budget, minimum);
}

std::size_t CacheConfig::resolved_window() const {
    if (scissorhands_window) {
        return *scissorhands_window;
    }
    return std::max<std::size_t>(8 * protect_recent, 1);
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> workers;
    workers.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& worker : workers) {
        worker.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

}  // namespace kvsim
