// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvsim/report.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "kvsim/error.hpp"

namespace kvsim {

namespace {

using nlohmann::ordered_json;

std::string dump(const ordered_json& doc) {
    return doc.dump(2) + "\n";
}

/// Shortest text that reads back to the same double.
std::string csv_number(double x) {
    return ordered_json(x).dump();
}

}  // namespace

std::string run_metrics_json(const RunMetrics& metrics) {
    ordered_json doc;
    doc["schema"] = "kvsim.run_metrics/1";
    doc["policy"] = std::string(to_string(metrics.policy));
    doc["budget_fraction"] = metrics.budget_fraction;
    doc["hash_bits"] = metrics.hash_bits;
    doc["seed"] = metrics.seed;
    doc["mean_attention_loss"] = metrics.mean_attention_loss;
    doc["compression_ratio"] = metrics.compression_ratio;
    doc["total_evictions"] = metrics.total_evictions;
    ordered_json streams = ordered_json::array();
    for (const auto& s : metrics.streams) {
        ordered_json entry;
        entry["layer"] = s.stream.layer;
        entry["head"] = s.stream.head;
        entry["capacity"] = s.capacity;
        entry["steps"] = s.steps;
        entry["evictions"] = s.evictions;
        entry["max_occupancy"] = s.max_occupancy;
        entry["total_attention_loss"] = s.total_attention_loss;
        entry["mean_attention_loss"] = s.mean_attention_loss;
        streams.push_back(std::move(entry));
    }
    doc["streams"] = std::move(streams);
    return dump(doc);
}

std::string timing_json(const RunMetrics& metrics) {
    ordered_json doc;
    doc["schema"] = "kvsim.timing/1";
    doc["wall_seconds"] = metrics.wall_seconds;
    doc["tokens_per_second"] = metrics.tokens_per_second;
    ordered_json streams = ordered_json::array();
    for (const auto& s : metrics.streams) {
        ordered_json entry;
        entry["layer"] = s.stream.layer;
        entry["head"] = s.stream.head;
        entry["step_ns"] = s.step_ns;
        entry["scoring_ns"] = s.scoring_ns;
        streams.push_back(std::move(entry));
    }
    doc["streams"] = std::move(streams);
    return dump(doc);
}

void write_eviction_log_csv(std::ostream& out, const RunMetrics& metrics) {
    out << "layer,head,step,token_position_evicted,policy_score,attention_mass_lost\n";
    for (const auto& s : metrics.streams) {
        for (const auto& e : s.eviction_log) {
            out << s.stream.layer << ',' << s.stream.head << ',' << e.step << ',' << e.token_position << ','
                << csv_number(e.policy_score) << ',' << csv_number(e.attention_mass_lost) << '\n';
        }
    }
}

std::string ablation_json(std::span<const AblationRow> rows) {
    ordered_json doc;
    doc["schema"] = "kvsim.ablation/1";
    ordered_json entries = ordered_json::array();
    for (const auto& row : rows) {
        entries.push_back({{"dim", row.bits},
                           {"attention_loss", row.attention_loss},
                           {"hash_bytes", row.hash_bytes},
                           {"budget_fraction", row.metrics.budget_fraction},
                           {"compression_ratio", row.metrics.compression_ratio}});
    }
    doc["rows"] = std::move(entries);
    return dump(doc);
}

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows) {
    out << "dim,attention_loss,hash_bytes\n";
    for (const auto& row : rows) {
        out << row.bits << ',' << csv_number(row.attention_loss) << ',' << row.hash_bytes << '\n';
    }
}

std::string correlation_json(const CorrelationReport& report) {
    ordered_json doc;
    doc["schema"] = "kvsim.correlation/1";
    ordered_json summary = ordered_json::array();
    for (const auto& s : report.summary) {
        summary.push_back({{"bits", s.bits}, {"streams", s.count}, {"mean_r", s.mean}, {"std_r", s.stddev}});
    }
    doc["summary"] = std::move(summary);
    ordered_json entries = ordered_json::array();
    for (const auto& e : report.entries) {
        entries.push_back({{"layer", e.stream.layer}, {"head", e.stream.head}, {"bits", e.bits}, {"r", e.r}});
    }
    doc["entries"] = std::move(entries);
    return dump(doc);
}

void write_correlation_csv(std::ostream& out, const CorrelationReport& report) {
    out << "layer,head,bits,r\n";
    for (const auto& e : report.entries) {
        out << e.stream.layer << ',' << e.stream.head << ',' << e.bits << ',' << csv_number(e.r) << '\n';
    }
}

std::string memory_json(const MemoryModelInput& input, std::span<const MemoryEstimate> estimates,
                        std::span<const std::uint64_t> hash_bits) {
    ordered_json doc;
    doc["schema"] = "kvsim.memory/1";
    doc["input"] = {{"layers", input.layers},
                    {"kv_heads", input.kv_heads},
                    {"seq_len", input.seq_len},
                    {"batch", input.batch},
                    {"budget_fraction", input.budget_fraction},
                    {"bytes_per_scalar", input.bytes_per_scalar},
                    {"head_dim", input.head_dim}};
    ordered_json rows = ordered_json::array();
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        rows.push_back({{"hash_bits", hash_bits[i]},
                        {"hash_bytes", estimates[i].hash_bytes},
                        {"kv_bytes", estimates[i].kv_bytes},
                        {"retained_kv_bytes", estimates[i].retained_kv_bytes},
                        {"compression_ratio", estimates[i].compression_ratio}});
    }
    doc["rows"] = std::move(rows);
    return dump(doc);
}

void write_alr_csv(std::ostream& out, AlrRanking ranking, std::span<const AlrCell> cells) {
    out << "layer,head,ranking,alr\n";
    for (const auto& c : cells) {
        out << c.stream.layer << ',' << c.stream.head << ',' << to_string(ranking) << ',' << csv_number(c.y) << '\n';
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    file << text;
    if (!file) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

}  // namespace kvsim
