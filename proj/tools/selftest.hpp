// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace styleswap::cli {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct SelftestOptions {
    /// Fault-injection hook: breaks one alpha_bar constant of the schedule the
    /// checks run against.
    bool corrupt_schedule = false;
};

std::vector<CheckResult> run_selftest(const SelftestOptions& options = {});

}  // namespace styleswap::cli
