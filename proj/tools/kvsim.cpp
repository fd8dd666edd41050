// Copyright (C) 2026 The kvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "kvsim/cli.hpp"

int main(int argc, char** argv) {
    return kvsim::run_cli(argc, argv, std::cout, std::cerr);
}
