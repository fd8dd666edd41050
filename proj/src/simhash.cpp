// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvsim/simhash.hpp"

#include <algorithm>
#include <numbers>

#include "kvsim/error.hpp"

namespace kvsim {

HashCode::HashCode(std::size_t bits) : m_bits(bits), m_words(words_for(bits), 0) {}

HashCode HashCode::from_string(std::string_view bits) {
    HashCode code(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] != '0' && bits[i] != '1') {
            throw DimensionError("hash code string may only contain '0' and '1'");
        }
        code.set(i, bits[i] == '1');
    }
    return code;
}

void HashCode::set(std::size_t i, bool value) {
    const std::uint64_t mask = std::uint64_t{1} << (i % 64);
    if (value) {
        m_words[i / 64] |= mask;
    } else {
        m_words[i / 64] &= ~mask;
    }
}

HashCode HashCode::complement() const {
    HashCode out(m_bits);
    for (std::size_t w = 0; w < m_words.size(); ++w) {
        out.m_words[w] = ~m_words[w];
    }
    if (const std::size_t tail = m_bits % 64; tail != 0) {
        out.m_words.back() &= (std::uint64_t{1} << tail) - 1;
    }
    return out;
}

std::string HashCode::to_string() const {
    std::string out(m_bits, '0');
    for (std::size_t i = 0; i < m_bits; ++i) {
        out[i] = bit(i) ? '1' : '0';
    }
    return out;
}

void hash_into(const ProjectionMatrix& projection, ConstVector x, std::span<std::uint64_t> words) {
    if (x.size() != projection.dim()) {
        throw DimensionError("hash: vector has dimension " + std::to_string(x.size()) +
                             ", projection expects " + std::to_string(projection.dim()));
    }
    std::fill(words.begin(), words.end(), 0);
    for (std::size_t i = 0; i < projection.bits(); ++i) {
        if (dot(projection.row(i), x) >= 0.0) {
            words[i / 64] |= std::uint64_t{1} << (i % 64);
        }
    }
}

HashCode hash(const ProjectionMatrix& projection, ConstVector x) {
    HashCode code(projection.bits());
    hash_into(projection, x, code.m_words);
    return code;
}

int hamming(const HashCode& a, const HashCode& b) {
    if (a.size() != b.size()) {
        throw DimensionError("hamming: code lengths " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()) + " differ");
    }
    return hamming_words(a.words(), b.words());
}

double angle_estimate(const HashCode& a, const HashCode& b) {
    if (a.size() == 0) {
        throw DimensionError("angle_estimate: empty codes");
    }
    return std::numbers::pi * hamming(a, b) / static_cast<double>(a.size());
}

HashTable::HashTable(std::size_t bits, std::size_t capacity)
    : m_bits(bits),
      m_capacity(capacity),
      m_words_per_code(HashCode::words_for(bits)),
      m_words(m_words_per_code * capacity, 0) {
    if (bits == 0) {
        throw ConfigError("hash table needs codes of at least one bit");
    }
}

std::span<std::uint64_t> HashTable::claim(std::size_t slot) {
    if (slot > m_size || slot >= m_capacity) {
        throw DimensionError("hash table: slot " + std::to_string(slot) + " is not writable (size " +
                             std::to_string(m_size) + ", capacity " + std::to_string(m_capacity) + ")");
    }
    if (slot == m_size) {
        ++m_size;
    }
    return std::span<std::uint64_t>(m_words).subspan(slot * m_words_per_code, m_words_per_code);
}

void HashTable::set(std::size_t slot, const HashCode& code) {
    if (code.size() != m_bits) {
        throw DimensionError("hash table: code has " + std::to_string(code.size()) + " bits, table holds " +
                             std::to_string(m_bits));
    }
    auto dst = claim(slot);
    std::copy(code.words().begin(), code.words().end(), dst.begin());
}

void HashTable::set_from(std::size_t slot, const ProjectionMatrix& projection, ConstVector key) {
    if (projection.bits() != m_bits) {
        throw DimensionError("hash table: projection produces " + std::to_string(projection.bits()) +
                             "-bit codes, table holds " + std::to_string(m_bits));
    }
    if (key.size() != projection.dim()) {
        throw DimensionError("hash: vector has dimension " + std::to_string(key.size()) +
                             ", projection expects " + std::to_string(projection.dim()));
    }
    hash_into(projection, key, claim(slot));
}

HashCode HashTable::code(std::size_t slot) const {
    HashCode out(m_bits);
    const auto src = words(slot);
    for (std::size_t i = 0; i < m_bits; ++i) {
        out.set(i, (src[i / 64] >> (i % 64)) & 1U);
    }
    return out;
}

std::vector<int> score_against_table(const HashCode& q_code, const HashTable& table) {
    if (table.size() == 0) {
        throw DegenerateInputError("score_against_table: hash table has no occupied slots");
    }
    if (q_code.size() != table.bits()) {
        throw DimensionError("score_against_table: query code has " + std::to_string(q_code.size()) +
                             " bits, table holds " + std::to_string(table.bits()));
    }
    std::vector<int> scores(table.size());
    const auto q = q_code.words();
    if (table.words_per_code() == 1) {
        const std::uint64_t qw = q[0];
        for (std::size_t j = 0; j < scores.size(); ++j) {
            scores[j] = -std::popcount(qw ^ table.words(j)[0]);
        }
    } else {
        for (std::size_t j = 0; j < scores.size(); ++j) {
            scores[j] = -hamming_words(q, table.words(j));
        }
    }
    return scores;
}

}  // namespace kvsim
