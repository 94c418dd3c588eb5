// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace styleswap::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_runtime_failure = 1,
    exit_config_failure = 2,
};

/// Runs the command line `args` (without the program name). Reports go to
/// `out`, diagnostics to `err`; the return value is the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace styleswap::cli
