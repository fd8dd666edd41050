// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kvsim {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid cache or experiment configuration (budget too small for the protection window, bad fraction, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Vector or code length disagrees with what the receiving structure was built for.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Input series without variance, empty cache, and similar inputs a computation cannot be defined on.
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// Malformed trace input. `offset()` is the byte offset (binary codec) or line number (JSONL codec) at which
/// the problem was detected.
class TraceError : public Error {
public:
    TraceError(const std::string& what, std::size_t offset)
        : Error(what + " (at offset " + std::to_string(offset) + ")"),
          m_offset(offset) {}

    std::size_t offset() const {
        return m_offset;
    }

private:
    std::size_t m_offset;
};

/// Structurally readable trace whose contents contradict its own header.
class TraceValidationError : public TraceError {
public:
    using TraceError::TraceError;
};

/// Bad command-line usage; maps to exit code 2.
class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace kvsim
