// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>

namespace kvsim {

/// Process exit codes of the command-line frontend.
enum ExitCode : int {
    kExitOk = 0,
    kExitRuntimeError = 1,
    kExitUsageError = 2,
};

/**
 * Parses and executes one command line (argv[0] is the program name). Human output goes to `out`, diagnostics to
 * `err`. Never throws; every failure is mapped to an exit code.
 */
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kvsim
