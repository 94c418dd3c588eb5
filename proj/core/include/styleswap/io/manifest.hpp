// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "styleswap/io/config.hpp"
#include "styleswap/sampler.hpp"

namespace styleswap::io {

/// Top-level record written by every command.
struct ManifestDocument {
    std::string command;
    ConfigFile config;
    std::vector<RunManifest> runs;
    std::map<std::string, double> metrics;
    std::vector<std::string> artifacts;
    double wall_clock_seconds = 0.0;
};

/// `include_wall_clock = false` drops the only nondeterministic field.
std::string manifest_to_json(const ManifestDocument& doc, bool include_wall_clock = true, int indent = 2);

/// Structural validation plus the self-consistency checks a manifest
/// supports offline: per step, sum(coefficient * pass eps mean) reproduces
/// the composed mean within 1e-6, and post-calibration statistics match the
/// target within 1e-6. Returns the list of problems (empty when valid).
std::vector<std::string> check_manifest(std::string_view json_text);

}  // namespace styleswap::io
