// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "styleswap/sampler.hpp"

namespace styleswap::io {

struct SweepSettings {
    std::vector<double> fractions{0.0, 0.25, 0.5, 0.75, 1.000001};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5};

    friend bool operator==(const SweepSettings&, const SweepSettings&) = default;
};

struct InversionSettings {
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19};

    friend bool operator==(const InversionSettings&, const InversionSettings&) = default;
};

/// Everything a config file holds: the run itself plus the settings of the
/// batch and analysis commands.
struct ConfigFile {
    RunConfig run;
    int batch = 1;
    SweepSettings sweep;
    InversionSettings invert;

    friend bool operator==(const ConfigFile&, const ConfigFile&) = default;
};

/// Parses and validates. `overrides` are "a.b=c" assignments applied to the
/// JSON document before decoding; the value is read as JSON when it parses,
/// otherwise as a string. Relative image paths resolve against `base_dir`.
/// Unknown keys are rejected. Throws invalid-config.
ConfigFile parse_config(std::string_view json_text, const std::vector<std::string>& overrides = {},
                        const std::filesystem::path& base_dir = {});
ConfigFile load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Canonical JSON; parse_config(config_to_json(c)) == c.
std::string config_to_json(const ConfigFile& c, int indent = 2);

}  // namespace styleswap::io
