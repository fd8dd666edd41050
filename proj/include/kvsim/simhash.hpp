// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvsim/core.hpp"

namespace kvsim {

/**
 * A c-bit binary code packed into 64-bit words, bit i living in word i / 64 at position i % 64.
 * Bits past size() are always zero, so word-wise XOR + popcount never sees padding.
 */
class HashCode {
public:
    HashCode() = default;

    /// All-zero code of `bits` bits.
    explicit HashCode(std::size_t bits);

    /// Parses a string of '0'/'1' characters; character i becomes bit i.
    static HashCode from_string(std::string_view bits);

    static std::size_t words_for(std::size_t bits) {
        return (bits + 63) / 64;
    }

    std::size_t size() const {
        return m_bits;
    }

    bool bit(std::size_t i) const {
        return (m_words[i / 64] >> (i % 64)) & 1U;
    }

    void set(std::size_t i, bool value);

    std::span<const std::uint64_t> words() const {
        return m_words;
    }

    /// Bitwise complement over the first size() bits.
    HashCode complement() const;

    /// '0'/'1' string, bit 0 first.
    std::string to_string() const;

    bool operator==(const HashCode&) const = default;

private:
    friend HashCode hash(const ProjectionMatrix& projection, ConstVector x);

    std::size_t m_bits = 0;
    std::vector<std::uint64_t> m_words;
};

/// h(x) = sgn(Rx) with sgn(0) = 1. Throws DimensionError when x.size() != R.dim().
HashCode hash(const ProjectionMatrix& projection, ConstVector x);

/// Writes sgn(Rx) into `words`, which must hold HashCode::words_for(R.bits()) entries.
void hash_into(const ProjectionMatrix& projection, ConstVector x, std::span<std::uint64_t> words);

/// Number of differing bits. Throws DimensionError on length mismatch.
int hamming(const HashCode& a, const HashCode& b);

/// pi * d_H(a, b) / c, the SimHash estimate of the angle between the hashed vectors.
double angle_estimate(const HashCode& a, const HashCode& b);

/// Word-level popcount of XOR; both spans must have the same length.
inline int hamming_words(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
    int distance = 0;
    for (std::size_t w = 0; w < a.size(); ++w) {
        distance += std::popcount(a[w] ^ b[w]);
    }
    return distance;
}

/**
 * Per-slot key codes of one cache (the hash table H). Slots [0, size()) are occupied; slots are filled in order
 * and then overwritten in place.
 */
class HashTable {
public:
    HashTable(std::size_t bits, std::size_t capacity);

    std::size_t bits() const {
        return m_bits;
    }
    std::size_t capacity() const {
        return m_capacity;
    }
    std::size_t size() const {
        return m_size;
    }
    std::size_t words_per_code() const {
        return m_words_per_code;
    }

    /// Stores `code` at `slot`; slot may be an occupied slot or exactly size().
    void set(std::size_t slot, const HashCode& code);

    /// Hashes `key` straight into `slot`.
    void set_from(std::size_t slot, const ProjectionMatrix& projection, ConstVector key);

    HashCode code(std::size_t slot) const;

    std::span<const std::uint64_t> words(std::size_t slot) const {
        return std::span<const std::uint64_t>(m_words).subspan(slot * m_words_per_code, m_words_per_code);
    }

private:
    std::span<std::uint64_t> claim(std::size_t slot);

    std::size_t m_bits;
    std::size_t m_capacity;
    std::size_t m_words_per_code;
    std::size_t m_size = 0;
    std::vector<std::uint64_t> m_words;
};

/// F_score: score[j] = -d_H(q_code, H[j]) for every occupied slot j. Throws on an empty table or length mismatch.
std::vector<int> score_against_table(const HashCode& q_code, const HashTable& table);

}  // namespace kvsim
