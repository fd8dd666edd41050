// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "kvsim/analysis.hpp"
#include "kvsim/engine.hpp"
#include "kvsim/error.hpp"
#include "kvsim/report.hpp"
#include "kvsim/simhash.hpp"
#include "kvsim/trace.hpp"

namespace py = pybind11;

namespace kvsim {
namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::object json_loads(const std::string& text) {
    return py::module_::import("json").attr("loads")(text);
}

/// Copies a [layers, heads, steps, width] array into one field of `trace`.
template <typename Accessor>
void fill_field(TokenTrace& trace, const FloatArray& array, std::size_t width, Accessor field, const char* name) {
    const auto& h = trace.header();
    const std::vector<py::ssize_t> expected{
        static_cast<py::ssize_t>(h.n_layers), static_cast<py::ssize_t>(h.n_kv_heads),
        static_cast<py::ssize_t>(h.total_len), static_cast<py::ssize_t>(width)};
    if (array.ndim() != 4 || !std::equal(expected.begin(), expected.end(), array.shape())) {
        throw DimensionError(std::string(name) + " must have shape (layers, heads, steps, width) matching the others");
    }
    const float* data = array.data();
    for (std::size_t s = 0; s < trace.n_streams(); ++s) {
        for (std::size_t t = 0; t < h.total_len; ++t) {
            auto dst = field(s, t);
            std::copy_n(data + (s * h.total_len + t) * width, width, dst.begin());
        }
    }
}

TokenTrace trace_from_arrays(const FloatArray& queries,
                             const FloatArray& keys,
                             const FloatArray& values,
                             std::uint32_t prompt_len,
                             const std::string& producer,
                             bool normalized) {
    if (queries.ndim() != 4 || values.ndim() != 4) {
        throw DimensionError("queries, keys and values must be 4-d arrays (layers, heads, steps, width)");
    }
    TraceHeader h;
    h.n_layers = static_cast<std::uint32_t>(queries.shape(0));
    h.n_kv_heads = static_cast<std::uint32_t>(queries.shape(1));
    h.total_len = static_cast<std::uint32_t>(queries.shape(2));
    h.dim = static_cast<std::uint32_t>(queries.shape(3));
    h.value_dim = static_cast<std::uint32_t>(values.shape(3));
    h.prompt_len = prompt_len;
    h.producer = producer;
    h.normalized = normalized;
    TokenTrace trace(h);
    fill_field(trace, queries, h.dim, [&](std::size_t s, std::size_t t) { return trace.query_mut(s, t); }, "queries");
    fill_field(trace, keys, h.dim, [&](std::size_t s, std::size_t t) { return trace.key_mut(s, t); }, "keys");
    fill_field(trace, values, h.value_dim, [&](std::size_t s, std::size_t t) { return trace.value_mut(s, t); },
               "values");
    trace.validate();
    return trace;
}

/// One field of every stream as a fresh [layers, heads, steps, width] array.
py::array_t<float> field_array(const TokenTrace& trace, int which) {
    const auto& h = trace.header();
    const std::size_t width = which == 2 ? h.value_dim : h.dim;
    py::array_t<float> out({static_cast<py::ssize_t>(h.n_layers), static_cast<py::ssize_t>(h.n_kv_heads),
                            static_cast<py::ssize_t>(h.total_len), static_cast<py::ssize_t>(width)});
    float* dst = out.mutable_data();
    for (std::size_t s = 0; s < trace.n_streams(); ++s) {
        const StreamView view = trace.stream(s);
        const auto src = which == 0 ? view.queries : which == 1 ? view.keys : view.values;
        std::copy(src.begin(), src.end(), dst + s * src.size());
    }
    return out;
}

py::array_t<bool> code_to_array(const HashCode& code) {
    py::array_t<bool> out(static_cast<py::ssize_t>(code.size()));
    auto view = out.mutable_unchecked<1>();
    for (std::size_t i = 0; i < code.size(); ++i) {
        view(static_cast<py::ssize_t>(i)) = code.bit(i);
    }
    return out;
}

HashCode array_to_code(const py::array_t<bool, py::array::c_style | py::array::forcecast>& bits) {
    if (bits.ndim() != 1) {
        throw DimensionError("hash codes must be 1-d boolean arrays");
    }
    HashCode code(static_cast<std::size_t>(bits.shape(0)));
    const auto view = bits.unchecked<1>();
    for (py::ssize_t i = 0; i < bits.shape(0); ++i) {
        code.set(static_cast<std::size_t>(i), view(i));
    }
    return code;
}

ProjectionMatrix projection_from_array(const FloatArray& projection) {
    if (projection.ndim() != 2) {
        throw DimensionError("projection must be a 2-d array (bits, dim)");
    }
    const auto bits = static_cast<std::size_t>(projection.shape(0));
    const auto dim = static_cast<std::size_t>(projection.shape(1));
    return ProjectionMatrix(bits, dim, std::vector<float>(projection.data(), projection.data() + bits * dim));
}

CacheConfig make_config(const std::string& policy,
                        double budget,
                        std::size_t hash_bits,
                        std::size_t protect_first,
                        std::size_t protect_recent,
                        std::uint64_t seed,
                        std::optional<std::size_t> window,
                        std::optional<std::size_t> capacity,
                        bool track_loss) {
    CacheConfig config;
    config.policy = parse_policy(policy);
    config.budget_fraction = budget;
    config.hash_bits = hash_bits;
    config.protect_first = protect_first;
    config.protect_recent = protect_recent;
    config.seed = seed;
    config.scissorhands_window = window;
    config.capacity = capacity;
    config.track_attention_loss = track_loss;
    config.validate();
    return config;
}

}  // namespace
}  // namespace kvsim

PYBIND11_MODULE(_core, m) {
    using namespace kvsim;
    m.doc() = "Native core of kvsim: KV-cache eviction simulation with SimHash scoring";

    // Translators run most-recent first, so the base class is registered before its subclasses.
    auto& error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
    py::register_exception<DimensionError>(m, "DimensionError", error.ptr());
    py::register_exception<DegenerateInputError>(m, "DegenerateInputError", error.ptr());
    auto& trace_error = py::register_exception<TraceError>(m, "TraceError", error.ptr());
    py::register_exception<TraceValidationError>(m, "TraceValidationError", trace_error.ptr());
    py::register_exception<UsageError>(m, "UsageError", error.ptr());

    py::class_<TokenTrace>(m, "Trace")
        .def_static("from_arrays", &trace_from_arrays, py::arg("queries"), py::arg("keys"), py::arg("values"),
                    py::arg("prompt_len") = 0, py::arg("producer") = "", py::arg("normalized") = false,
                    "Builds a trace from (layers, heads, steps, width) float arrays")
        .def_static("load", &read_trace, py::arg("path"), "Reads a KVTR or JSONL trace")
        .def_static(
            "decode",
            [](const py::bytes& data) {
                const std::string raw = data;
                return decode_trace(std::span(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
            },
            py::arg("data"))
        .def(
            "save",
            [](const TokenTrace& t, const std::filesystem::path& path, const std::string& format) {
                if (format == "kvtr") {
                    write_trace(t, path);
                } else if (format == "jsonl") {
                    write_trace_jsonl(t, path);
                } else {
                    throw UsageError("unknown trace format '" + format + "'; valid formats: kvtr, jsonl");
                }
            },
            py::arg("path"), py::arg("format") = "kvtr")
        .def("encode",
             [](const TokenTrace& t) {
                 const auto bytes = encode_trace(t);
                 return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
             })
        .def_property_readonly("dim", [](const TokenTrace& t) { return t.header().dim; })
        .def_property_readonly("value_dim", [](const TokenTrace& t) { return t.header().value_dim; })
        .def_property_readonly("n_layers", [](const TokenTrace& t) { return t.header().n_layers; })
        .def_property_readonly("n_kv_heads", [](const TokenTrace& t) { return t.header().n_kv_heads; })
        .def_property_readonly("prompt_len", [](const TokenTrace& t) { return t.header().prompt_len; })
        .def_property_readonly("total_len", [](const TokenTrace& t) { return t.header().total_len; })
        .def_property_readonly("producer", [](const TokenTrace& t) { return t.header().producer; })
        .def_property_readonly("normalized", [](const TokenTrace& t) { return t.header().normalized; })
        .def_property_readonly("queries", [](const TokenTrace& t) { return field_array(t, 0); })
        .def_property_readonly("keys", [](const TokenTrace& t) { return field_array(t, 1); })
        .def_property_readonly("values", [](const TokenTrace& t) { return field_array(t, 2); })
        .def("__eq__", [](const TokenTrace& a, const TokenTrace& b) { return a == b; });

    m.def(
        "generate_synthetic",
        [](std::size_t n, std::size_t dim, std::size_t value_dim, std::size_t layers, std::size_t heads,
           std::size_t prompt_len, std::size_t needles, double strength, double noise, std::uint64_t seed) {
            SyntheticSpec spec;
            spec.n = n;
            spec.dim = dim;
            spec.value_dim = value_dim;
            spec.n_layers = layers;
            spec.n_kv_heads = heads;
            spec.prompt_len = prompt_len;
            spec.needle_count = needles;
            spec.needle_strength = strength;
            spec.noise_scale = noise;
            spec.seed = seed;
            return generate_synthetic(spec);
        },
        py::arg("n") = 256, py::arg("dim") = 64, py::arg("value_dim") = 0, py::arg("layers") = 1, py::arg("heads") = 1,
        py::arg("prompt_len") = 0, py::arg("needles") = 0, py::arg("strength") = 0.0, py::arg("noise") = 1.0,
        py::arg("seed") = 0);

    m.def(
        "normal_matrix",
        [](std::uint64_t seed, std::size_t bits, std::size_t dim) {
            const auto r = normal_matrix(seed, bits, dim);
            py::array_t<float> out({static_cast<py::ssize_t>(bits), static_cast<py::ssize_t>(dim)});
            std::copy(r.entries().begin(), r.entries().end(), out.mutable_data());
            return out;
        },
        py::arg("seed"), py::arg("bits"), py::arg("dim"), "bits x dim matrix of standard normal entries");

    m.def(
        "simhash",
        [](const FloatArray& projection, const FloatArray& x) {
            if (x.ndim() != 1) {
                throw DimensionError("simhash input must be a 1-d vector");
            }
            const auto r = projection_from_array(projection);
            return code_to_array(hash(r, ConstVector(x.data(), static_cast<std::size_t>(x.shape(0)))));
        },
        py::arg("projection"), py::arg("x"), "sgn(R x) as a boolean array, with sgn(0) = 1");

    m.def(
        "hamming",
        [](const py::array_t<bool, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<bool, py::array::c_style | py::array::forcecast>& b) {
            return hamming(array_to_code(a), array_to_code(b));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "pearson",
        [](const DoubleArray& x, const DoubleArray& y) {
            return pearson(std::span(x.data(), static_cast<std::size_t>(x.size())),
                           std::span(y.data(), static_cast<std::size_t>(y.size())));
        },
        py::arg("x"), py::arg("y"));

    m.def(
        "simulate",
        [](const TokenTrace& trace, const std::string& policy, double budget, std::size_t hash_bits,
           std::size_t protect_first, std::size_t protect_recent, std::uint64_t seed, std::optional<std::size_t> window,
           std::optional<std::size_t> capacity, bool track_loss, std::size_t threads) {
            const auto config = make_config(policy, budget, hash_bits, protect_first, protect_recent, seed, window,
                                            capacity, track_loss);
            RunMetrics metrics;
            {
                py::gil_scoped_release release;
                metrics = run(trace, config, RunOptions{threads, false, {}});
            }
            py::dict result = json_loads(run_metrics_json(metrics));
            py::list log;
            for (const auto& s : metrics.streams) {
                for (const auto& e : s.eviction_log) {
                    log.append(py::make_tuple(s.stream.layer, s.stream.head, e.step, e.token_position, e.policy_score,
                                              e.attention_mass_lost));
                }
            }
            result["eviction_log"] = log;
            return result;
        },
        py::arg("trace"), py::arg("policy") = "hashevict", py::arg("budget") = 0.5, py::arg("hash_bits") = 16,
        py::arg("protect_first") = 4, py::arg("protect_recent") = 10, py::arg("seed") = 0,
        py::arg("window") = py::none(), py::arg("capacity") = py::none(), py::arg("track_loss") = true,
        py::arg("threads") = 1,
        "Runs one policy over every stream; returns the run-metrics report plus the eviction log as tuples "
        "(layer, head, step, token_position, policy_score, attention_mass_lost)");

    m.def(
        "ablate",
        [](const TokenTrace& trace, std::vector<std::size_t> dims, double budget, std::uint64_t seed,
           std::size_t threads) {
            CacheConfig config;
            config.budget_fraction = budget;
            config.seed = seed;
            std::vector<AblationRow> rows;
            {
                py::gil_scoped_release release;
                rows = hash_dim_ablation(trace, dims, config, threads);
            }
            return json_loads(ablation_json(rows));
        },
        py::arg("trace"), py::arg("dims") = kDefaultAblationDims, py::arg("budget") = 0.5, py::arg("seed") = 0,
        py::arg("threads") = 1);

    m.def(
        "correlation",
        [](const TokenTrace& trace, std::vector<std::size_t> lengths, std::size_t projections, std::uint64_t seed,
           bool normalize, std::size_t threads) {
            CorrelationOptions options{std::move(lengths), projections, seed, normalize, threads};
            CorrelationReport report;
            {
                py::gil_scoped_release release;
                report = correlation_study(trace, options);
            }
            return json_loads(correlation_json(report));
        },
        py::arg("trace"), py::arg("lengths") = std::vector<std::size_t>{8, 16, 24, 32}, py::arg("projections") = 8,
        py::arg("seed") = 0, py::arg("normalize") = true, py::arg("threads") = 1);

    m.def(
        "alr",
        [](const TokenTrace& trace, const std::string& ranking, std::size_t bits, std::size_t projections,
           std::uint64_t seed, std::size_t threads) {
            const auto kind = parse_alr_ranking(ranking);
            std::vector<AlrCell> cells;
            {
                py::gil_scoped_release release;
                cells = alr_matrix(trace, kind, AlrOptions{bits, projections, seed, threads});
            }
            py::list out;
            for (const auto& c : cells) {
                out.append(py::make_tuple(c.stream.layer, c.stream.head, c.y));
            }
            return out;
        },
        py::arg("trace"), py::arg("ranking") = "lsh", py::arg("bits") = 16, py::arg("projections") = 8,
        py::arg("seed") = 0, py::arg("threads") = 1, "List of (layer, head, Y) for one ranking");

    m.def(
        "memory_model",
        [](std::uint64_t layers, std::uint64_t kv_heads, std::uint64_t seq_len, std::uint64_t batch, double budget,
           std::uint64_t hash_bits, std::uint64_t head_dim, std::uint64_t bytes_per_scalar) {
            const MemoryModelInput input{layers, kv_heads, seq_len, batch, budget, hash_bits, bytes_per_scalar,
                                         head_dim};
            const auto e = memory_model(input);
            py::dict out;
            out["hash_bytes"] = e.hash_bytes;
            out["kv_bytes"] = e.kv_bytes;
            out["retained_kv_bytes"] = e.retained_kv_bytes;
            out["compression_ratio"] = e.compression_ratio;
            return out;
        },
        py::arg("layers") = 80, py::arg("kv_heads") = 8, py::arg("seq_len") = 8192, py::arg("batch") = 8,
        py::arg("budget") = 0.5, py::arg("hash_bits") = 8, py::arg("head_dim") = 128, py::arg("bytes_per_scalar") = 2);

    m.attr("POLICIES") = [] {
        py::list ids;
        for (auto id : policy_ids()) {
            ids.append(std::string(id));
        }
        return ids;
    }();
}
