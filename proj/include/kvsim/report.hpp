// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <ostream>
#include <span>
#include <string>

#include "kvsim/analysis.hpp"
#include "kvsim/engine.hpp"

namespace kvsim {

// Report serializers. JSON reports are pure functions of their inputs: wall-clock fields live only in the
// separate timing report, so every other file is bit-reproducible for a fixed seed.

std::string run_metrics_json(const RunMetrics& metrics);
std::string timing_json(const RunMetrics& metrics);
void write_eviction_log_csv(std::ostream& out, const RunMetrics& metrics);

std::string ablation_json(std::span<const AblationRow> rows);
void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows);

std::string correlation_json(const CorrelationReport& report);
void write_correlation_csv(std::ostream& out, const CorrelationReport& report);

std::string memory_json(const MemoryModelInput& input, std::span<const MemoryEstimate> estimates,
                        std::span<const std::uint64_t> hash_bits);

void write_alr_csv(std::ostream& out, AlrRanking ranking, std::span<const AlrCell> cells);

/// Writes `text` to `path`, throwing kvsim::Error on I/O failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace kvsim
