# Copyright (C) 2026 The kvsim Authors
# SPDX-License-Identifier: Apache-2.0
"""KV-cache eviction simulation with SimHash attention scoring.

Every function is a thin wrapper over the native core; reports come back as the same dictionaries the command-line
tool writes to disk.
"""

from ._core import (
    POLICIES,
    ConfigError,
    DegenerateInputError,
    DimensionError,
    Error,
    Trace,
    TraceError,
    TraceValidationError,
    UsageError,
    ablate,
    alr,
    correlation,
    generate_synthetic,
    hamming,
    memory_model,
    normal_matrix,
    pearson,
    simhash,
    simulate,
)

__all__ = [
    "POLICIES",
    "ConfigError",
    "DegenerateInputError",
    "DimensionError",
    "Error",
    "Trace",
    "TraceError",
    "TraceValidationError",
    "UsageError",
    "ablate",
    "alr",
    "correlation",
    "generate_synthetic",
    "hamming",
    "memory_model",
    "normal_matrix",
    "pearson",
    "simhash",
    "simulate",
]

__version__ = "0.1.0"
