// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvsim/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kvsim/analysis.hpp"
#include "kvsim/engine.hpp"
#include "kvsim/error.hpp"
#include "kvsim/report.hpp"
#include "kvsim/trace.hpp"

namespace kvsim {

namespace {

namespace fs = std::filesystem;

struct GlobalOptions {
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    int verbosity = 0;
    std::size_t threads = 1;
};

std::size_t threads_from_env() {
    const char* raw = std::getenv("KVSIM_THREADS");
    if (raw == nullptr || *raw == '\0') {
        return 1;
    }
    char* end = nullptr;
    const unsigned long long value = std::strtoull(raw, &end, 10);
    if (*end != '\0' || value == 0) {
        throw UsageError(std::string("KVSIM_THREADS must be a positive integer, got '") + raw + "'");
    }
    return static_cast<std::size_t>(value);
}

const CLI::Validator kBudget(
    [](const std::string& text) -> std::string {
        double value = 0.0;
        if (!CLI::detail::lexical_cast(text, value) || !(value > 0.0 && value <= 1.0)) {
            return "budget must lie in (0, 1]";
        }
        return {};
    },
    "FRACTION in (0,1]");

fs::path output_dir(const GlobalOptions& global) {
    fs::path dir(global.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw Error("output directory '" + dir.string() + "' is not writable");
    }
    return dir;
}

template <typename Writer>
void write_csv(const fs::path& path, Writer writer) {
    std::ostringstream buffer;
    writer(buffer);
    write_text_file(path, buffer.str());
}

/// Left-aligned text table with a header rule.
class TextTable {
public:
    explicit TextTable(std::vector<std::string> header) : m_rows{std::move(header)} {}

    void add(std::vector<std::string> row) {
        m_rows.push_back(std::move(row));
    }

    void print(std::ostream& out) const {
        std::vector<std::size_t> width(m_rows.front().size(), 0);
        for (const auto& row : m_rows) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                width[c] = std::max(width[c], row[c].size());
            }
        }
        for (std::size_t r = 0; r < m_rows.size(); ++r) {
            for (std::size_t c = 0; c < m_rows[r].size(); ++c) {
                out << std::left << std::setw(static_cast<int>(width[c]) + 2) << m_rows[r][c];
            }
            out << '\n';
            if (r == 0) {
                std::size_t total = 0;
                for (std::size_t w : width) {
                    total += w + 2;
                }
                out << std::string(total, '-') << '\n';
            }
        }
    }

private:
    std::vector<std::vector<std::string>> m_rows;
};

std::string fixed(double x, int precision = 6) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << x;
    return s.str();
}

// ---------------------------------------------------------------------------------------------------------------

struct SimulateArgs {
    std::string trace;
    std::string policy = "hashevict";
    double budget = 0.5;
    std::size_t hash_bits = 16;
    std::size_t protect_first = 4;
    std::size_t protect_recent = 10;
    std::size_t window = 0;
    bool normalize = false;
    bool no_loss = false;
    bool timing = false;
};

int cmd_simulate(const SimulateArgs& args, const GlobalOptions& global, std::ostream& out, std::ostream& err) {
    CacheConfig config;
    config.policy = parse_policy(args.policy);
    config.budget_fraction = args.budget;
    config.hash_bits = args.hash_bits;
    config.protect_first = args.protect_first;
    config.protect_recent = args.protect_recent;
    config.seed = global.seed;
    config.normalize_before_hash = args.normalize;
    config.track_attention_loss = !args.no_loss;
    if (args.window > 0) {
        config.scissorhands_window = args.window;
    }
    config.validate();

    const TokenTrace trace = read_trace(args.trace);
    if (global.verbosity > 0) {
        err << "simulate: " << trace.n_streams() << " streams x " << trace.header().total_len << " steps, policy "
            << args.policy << '\n';
    }
    const RunMetrics metrics = run(trace, config, RunOptions{global.threads, args.timing, {}});

    const fs::path dir = output_dir(global);
    write_text_file(dir / "run_metrics.json", run_metrics_json(metrics));
    write_csv(dir / "eviction_log.csv", [&](std::ostream& s) { write_eviction_log_csv(s, metrics); });
    if (args.timing) {
        write_text_file(dir / "timing.json", timing_json(metrics));
    }

    TextTable table({"policy", "budget", "attention_loss", "compression_ratio", "evictions", "tokens/s"});
    table.add({std::string(to_string(metrics.policy)), fixed(metrics.budget_fraction, 3),
               fixed(metrics.mean_attention_loss), fixed(metrics.compression_ratio, 4),
               std::to_string(metrics.total_evictions), fixed(metrics.tokens_per_second, 0)});
    table.print(out);
    return kExitOk;
}

struct AblateArgs {
    std::string trace;
    std::vector<std::size_t> dims = kDefaultAblationDims;
    double budget = 0.5;
    std::size_t protect_first = 4;
    std::size_t protect_recent = 10;
};

int cmd_ablate(const AblateArgs& args, const GlobalOptions& global, std::ostream& out, std::ostream&) {
    if (args.dims.empty()) {
        throw UsageError("--dims needs at least one hash dimension");
    }
    for (std::size_t d : args.dims) {
        if (d == 0) {
            throw UsageError("--dims entries must be positive");
        }
    }
    CacheConfig config;
    config.budget_fraction = args.budget;
    config.protect_first = args.protect_first;
    config.protect_recent = args.protect_recent;
    config.seed = global.seed;

    const TokenTrace trace = read_trace(args.trace);
    const auto rows = hash_dim_ablation(trace, args.dims, config, global.threads);

    const fs::path dir = output_dir(global);
    write_csv(dir / "ablation.csv", [&](std::ostream& s) { write_ablation_csv(s, rows); });
    write_text_file(dir / "ablation.json", ablation_json(rows));

    TextTable table({"dim", "attention_loss", "hash_bytes"});
    for (const auto& row : rows) {
        table.add({std::to_string(row.bits), fixed(row.attention_loss), std::to_string(row.hash_bytes)});
    }
    table.print(out);
    return kExitOk;
}

struct AlrArgs {
    std::string trace;
    std::string ranking = "all";
    std::size_t bits = 16;
    std::size_t projections = 8;
};

int cmd_alr(const AlrArgs& args, const GlobalOptions& global, std::ostream& out, std::ostream&) {
    std::vector<AlrRanking> rankings;
    if (args.ranking == "all") {
        rankings = {AlrRanking::kL2, AlrRanking::kLsh};
    } else {
        rankings = {parse_alr_ranking(args.ranking)};
    }
    const TokenTrace trace = read_trace(args.trace);
    const AlrOptions options{args.bits, args.projections, global.seed, global.threads};
    const fs::path dir = output_dir(global);

    TextTable table({"ranking", "layers", "heads", "mean_alr", "max_alr"});
    for (AlrRanking ranking : rankings) {
        const auto cells = alr_matrix(trace, ranking, options);
        write_csv(dir / ("alr_" + std::string(to_string(ranking)) + ".csv"),
                  [&](std::ostream& s) { write_alr_csv(s, ranking, cells); });
        double sum = 0.0;
        double max = 0.0;
        for (const auto& c : cells) {
            sum += c.y;
            max = std::max(max, c.y);
        }
        table.add({std::string(to_string(ranking)), std::to_string(trace.header().n_layers),
                   std::to_string(trace.header().n_kv_heads), fixed(sum / static_cast<double>(cells.size())),
                   fixed(max)});
    }
    table.print(out);
    return kExitOk;
}

struct CorrelateArgs {
    std::string trace;
    std::vector<std::size_t> lengths{8, 16, 24, 32};
    std::size_t projections = 8;
    bool raw = false;
};

int cmd_correlate(const CorrelateArgs& args, const GlobalOptions& global, std::ostream& out, std::ostream&) {
    if (args.lengths.empty()) {
        throw UsageError("--lengths needs at least one projection length");
    }
    const TokenTrace trace = read_trace(args.trace);
    CorrelationOptions options;
    options.projection_lengths = args.lengths;
    options.n_projections = args.projections;
    options.seed = global.seed;
    options.normalize = !args.raw;
    options.threads = global.threads;
    const CorrelationReport report = correlation_study(trace, options);

    const fs::path dir = output_dir(global);
    write_csv(dir / "correlation.csv", [&](std::ostream& s) { write_correlation_csv(s, report); });
    write_text_file(dir / "correlation.json", correlation_json(report));

    TextTable table({"bits", "streams", "mean_r", "std_r"});
    for (const auto& s : report.summary) {
        table.add({std::to_string(s.bits), std::to_string(s.count), fixed(s.mean, 4), fixed(s.stddev, 4)});
    }
    table.print(out);
    return kExitOk;
}

struct MemoryArgs {
    MemoryModelInput input;
    std::vector<std::uint64_t> hash_bits{8, 16, 32};
};

int cmd_memory(const MemoryArgs& args, const GlobalOptions& global, std::ostream& out, std::ostream&) {
    try {
        args.input.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    std::vector<MemoryEstimate> estimates;
    TextTable table({"hash_bits", "hash_bytes", "hash_MiB", "kv_bytes", "compression_ratio"});
    for (std::uint64_t bits : args.hash_bits) {
        MemoryModelInput input = args.input;
        input.hash_bits = bits;
        const MemoryEstimate e = memory_model(input);
        estimates.push_back(e);
        table.add({std::to_string(bits), std::to_string(e.hash_bytes),
                   fixed(static_cast<double>(e.hash_bytes) / (1024.0 * 1024.0), 2), std::to_string(e.kv_bytes),
                   fixed(e.compression_ratio, 4)});
    }
    const fs::path dir = output_dir(global);
    write_text_file(dir / "memory.json", memory_json(args.input, estimates, args.hash_bits));
    table.print(out);
    return kExitOk;
}

struct GenerateArgs {
    SyntheticSpec spec;
    std::string output;
    std::string format = "kvtr";
};

int cmd_generate(GenerateArgs args, const GlobalOptions& global, std::ostream& out, std::ostream&) {
    args.spec.seed = global.seed;
    try {
        args.spec.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    const TokenTrace trace = generate_synthetic(args.spec);
    if (args.format == "jsonl") {
        write_trace_jsonl(trace, args.output);
    } else {
        write_trace(trace, args.output);
    }
    out << "wrote " << args.output << " (" << trace.n_streams() << " streams x " << trace.header().total_len
        << " steps)\n";
    return kExitOk;
}

struct AggregateArgs {
    std::string trace;
    std::string output;
    std::size_t group_size = 1;
    std::string method = "mean";
};

int cmd_aggregate(const AggregateArgs& args, const GlobalOptions&, std::ostream& out, std::ostream&) {
    const TokenTrace trace = read_trace(args.trace);
    const auto method = args.method == "first" ? QueryAggregation::kFirst : QueryAggregation::kMean;
    const TokenTrace folded = aggregate_query_groups(trace, args.group_size, method);
    write_trace(folded, args.output);
    out << "wrote " << args.output << " (" << folded.header().n_kv_heads << " KV heads)\n";
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"kvsim: trace-driven KV-cache eviction simulator"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions global;
    std::size_t threads = 0;
    app.add_option("--seed", global.seed, "Seed for every randomized quantity");
    app.add_option("--out", global.out_dir, "Directory for report files")->capture_default_str();
    app.add_flag("-v,--verbose", global.verbosity, "Print progress to stderr (repeat for more)");
    app.add_option("--threads", threads, "Worker threads across (layer, head) streams [env KVSIM_THREADS]")
        ->check(CLI::PositiveNumber);

    SimulateArgs simulate;
    auto* sim = app.add_subcommand("simulate", "Run one eviction policy over a trace");
    sim->add_option("--trace", simulate.trace, "Trace file (KVTR or JSONL)")->required();
    sim->add_option("--policy", simulate.policy, "hashevict | l2 | h2o | scissorhands | random | full")
        ->capture_default_str();
    sim->add_option("--budget", simulate.budget, "Cache budget as a fraction of stream length")
        ->check(kBudget)
        ->capture_default_str();
    sim->add_option("--hash-bits", simulate.hash_bits, "SimHash code length")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sim->add_option("--protect-first", simulate.protect_first)->capture_default_str();
    sim->add_option("--protect-recent", simulate.protect_recent)->capture_default_str();
    sim->add_option("--window", simulate.window, "Scissorhands window (default 8 x protect-recent)");
    sim->add_flag("--normalize", simulate.normalize, "Hash unit-normalized vectors");
    sim->add_flag("--no-loss", simulate.no_loss, "Skip exact attention-loss accounting");
    sim->add_flag("--timing", simulate.timing, "Also write per-step timings to timing.json");

    AblateArgs ablate;
    auto* abl = app.add_subcommand("ablate", "Hash-dimension ablation of hashevict");
    abl->add_option("--trace", ablate.trace, "Trace file")->required();
    abl->add_option("--dims", ablate.dims, "Hash dimensions")->delimiter(',')->capture_default_str();
    abl->add_option("--budget", ablate.budget)->check(kBudget)->capture_default_str();
    abl->add_option("--protect-first", ablate.protect_first)->capture_default_str();
    abl->add_option("--protect-recent", ablate.protect_recent)->capture_default_str();

    AlrArgs alr_args;
    auto* alr_cmd = app.add_subcommand("alr", "Attention-loss ratio per (layer, head)");
    alr_cmd->add_option("--trace", alr_args.trace, "Trace file")->required();
    alr_cmd->add_option("--ranking", alr_args.ranking, "l2 | lsh | ideal | all")
        ->check(CLI::IsMember({"l2", "lsh", "ideal", "all"}))
        ->capture_default_str();
    alr_cmd->add_option("--bits", alr_args.bits, "Code length of the LSH ranking")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    alr_cmd->add_option("--projections", alr_args.projections, "Projections averaged by the LSH ranking")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    CorrelateArgs correlate;
    auto* cor = app.add_subcommand("correlate", "Attention vs. inverted Hamming distance correlation");
    cor->add_option("--trace", correlate.trace, "Trace file")->required();
    cor->add_option("--lengths", correlate.lengths, "Projection lengths")->delimiter(',')->capture_default_str();
    cor->add_option("--projections", correlate.projections, "Projections averaged per length")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cor->add_flag("--raw", correlate.raw, "Hash raw instead of unit-normalized vectors");

    MemoryArgs memory;
    auto* mem = app.add_subcommand("memory", "Hash-table and KV memory model");
    mem->add_option("--layers", memory.input.layers)->capture_default_str();
    mem->add_option("--kv-heads", memory.input.kv_heads)->capture_default_str();
    mem->add_option("--seq-len", memory.input.seq_len)->capture_default_str();
    mem->add_option("--batch", memory.input.batch)->capture_default_str();
    mem->add_option("--budget", memory.input.budget_fraction)->check(kBudget)->capture_default_str();
    mem->add_option("--hash-bits", memory.hash_bits, "Code lengths to tabulate")
        ->delimiter(',')
        ->capture_default_str();
    mem->add_option("--head-dim", memory.input.head_dim)->capture_default_str();
    mem->add_option("--bytes-per-scalar", memory.input.bytes_per_scalar)->capture_default_str();

    GenerateArgs generate;
    auto* gen = app.add_subcommand("generate", "Write a synthetic planted-needle trace");
    gen->add_option("--output", generate.output, "Destination file")->required();
    gen->add_option("--format", generate.format)->check(CLI::IsMember({"kvtr", "jsonl"}))->capture_default_str();
    gen->add_option("--n", generate.spec.n, "Tokens per stream")->capture_default_str();
    gen->add_option("--dim", generate.spec.dim)->capture_default_str();
    gen->add_option("--value-dim", generate.spec.value_dim, "0 = same as --dim")->capture_default_str();
    gen->add_option("--layers", generate.spec.n_layers)->capture_default_str();
    gen->add_option("--heads", generate.spec.n_kv_heads)->capture_default_str();
    gen->add_option("--prompt-len", generate.spec.prompt_len, "0 = n / 2")->capture_default_str();
    gen->add_option("--needles", generate.spec.needle_count)->capture_default_str();
    gen->add_option("--strength", generate.spec.needle_strength)->capture_default_str();
    gen->add_option("--noise", generate.spec.noise_scale)->capture_default_str();

    AggregateArgs aggregate;
    auto* agg = app.add_subcommand("gqa-aggregate", "Fold grouped query heads into one stream per KV head");
    agg->add_option("--trace", aggregate.trace, "Trace whose heads are query heads")->required();
    agg->add_option("--output", aggregate.output, "Destination KVTR file")->required();
    agg->add_option("--group-size", aggregate.group_size, "Query heads per KV head")
        ->check(CLI::PositiveNumber)
        ->required();
    agg->add_option("--method", aggregate.method)->check(CLI::IsMember({"mean", "first"}))->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e, out, err);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsageError;
    }

    try {
        global.threads = threads > 0 ? threads : threads_from_env();
        if (sim->parsed()) {
            return cmd_simulate(simulate, global, out, err);
        }
        if (abl->parsed()) {
            return cmd_ablate(ablate, global, out, err);
        }
        if (alr_cmd->parsed()) {
            return cmd_alr(alr_args, global, out, err);
        }
        if (cor->parsed()) {
            return cmd_correlate(correlate, global, out, err);
        }
        if (mem->parsed()) {
            return cmd_memory(memory, global, out, err);
        }
        if (gen->parsed()) {
            return cmd_generate(generate, global, out, err);
        }
        if (agg->parsed()) {
            return cmd_aggregate(aggregate, global, out, err);
        }
        err << "error: no command given\n";
        return kExitUsageError;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsageError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntimeError;
    }
}

}  // namespace kvsim
