// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <stdexcept>

namespace kvsim::testing {

namespace {

struct Entry {
    std::int64_t position;
    std::vector<float> key;
    std::vector<float> value;
    std::vector<int> code;
    double accumulated = 0.0;
    std::deque<double> recent;
};

std::vector<int> sign_bits(const ProjectionMatrix& r, ConstVector x) {
    std::vector<int> bits(r.bits());
    for (std::size_t i = 0; i < r.bits(); ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) {
            s += static_cast<double>(r.entries()[i * r.dim() + c]) * static_cast<double>(x[c]);
        }
        bits[i] = s >= 0.0 ? 1 : 0;
    }
    return bits;
}

std::vector<double> softmax_over(ConstVector q, const std::vector<Entry>& cache) {
    std::vector<double> logits(cache.size());
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.size()));
    for (std::size_t j = 0; j < cache.size(); ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < q.size(); ++c) {
            s += static_cast<double>(q[c]) * static_cast<double>(cache[j].key[c]);
        }
        logits[j] = s * scale;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double& l : logits) {
        l = std::exp(l - top);
        total += l;
    }
    for (double& l : logits) {
        l /= total;
    }
    return logits;
}

}  // namespace

ReferenceOutcome reference_run(const StreamView& stream, const CacheConfig& config, std::size_t capacity) {
    std::optional<ProjectionMatrix> r;
    if (config.policy == PolicyKind::kHashEvict) {
        r = ProjectionMatrix::gaussian(config.seed, config.hash_bits, stream.dim, stream.id);
    }
    const std::size_t window = std::max<std::size_t>(config.scissorhands_window.value_or(8 * config.protect_recent), 1);
    const auto first = static_cast<std::int64_t>(config.protect_first);
    const auto recent = static_cast<std::int64_t>(config.protect_recent);

    std::vector<Entry> cache;
    ReferenceOutcome out;
    for (std::size_t step = 0; step < stream.steps; ++step) {
        const auto t = static_cast<std::int64_t>(step);
        const ConstVector q = stream.query(step);
        std::int64_t evicted = -1;

        if (cache.size() == capacity) {
            std::vector<int> q_code;
            if (r) {
                q_code = sign_bits(*r, q);
            }
            std::size_t victim = cache.size();
            double victim_score = 0.0;
            for (std::size_t j = 0; j < cache.size(); ++j) {
                const Entry& e = cache[j];
                if (e.position < first || e.position >= t - recent) {
                    continue;
                }
                double score = 0.0;
                switch (config.policy) {
                case PolicyKind::kHashEvict: {
                    int d = 0;
                    for (std::size_t b = 0; b < q_code.size(); ++b) {
                        d += q_code[b] != e.code[b] ? 1 : 0;
                    }
                    score = -d;
                    break;
                }
                case PolicyKind::kL2: {
                    double s = 0.0;
                    for (float x : e.key) {
                        s += static_cast<double>(x) * x;
                    }
                    score = -std::sqrt(s);
                    break;
                }
                case PolicyKind::kH2O:
                    score = e.accumulated;
                    break;
                case PolicyKind::kScissorhands:
                    score = 0.0;
                    for (double a : e.recent) {
                        score += a;
                    }
                    break;
                default:
                    throw std::logic_error("reference interpreter: unsupported policy");
                }
                const bool better = victim == cache.size() || score < victim_score ||
                                    (score == victim_score && e.position < cache[victim].position);
                if (better) {
                    victim = j;
                    victim_score = score;
                }
            }
            if (victim == cache.size()) {
                throw std::logic_error("reference interpreter: everything protected");
            }
            evicted = cache[victim].position;
            cache.erase(cache.begin() + static_cast<std::ptrdiff_t>(victim));
        }

        Entry entry;
        entry.position = t;
        entry.key.assign(stream.key(step).begin(), stream.key(step).end());
        entry.value.assign(stream.value(step).begin(), stream.value(step).end());
        if (r) {
            entry.code = sign_bits(*r, stream.key(step));
        }
        cache.push_back(std::move(entry));

        const auto row = softmax_over(q, cache);
        for (std::size_t j = 0; j < cache.size(); ++j) {
            cache[j].accumulated += row[j];
            cache[j].recent.push_back(row[j]);
            if (cache[j].recent.size() > window) {
                cache[j].recent.pop_front();
            }
        }
        out.evicted.push_back(evicted);
    }

    std::sort(cache.begin(), cache.end(), [](const Entry& a, const Entry& b) { return a.position < b.position; });
    for (const Entry& e : cache) {
        out.final_positions.push_back(e.position);
        out.final_keys.push_back(e.key);
        out.final_values.push_back(e.value);
    }
    return out;
}

}  // namespace kvsim::testing
