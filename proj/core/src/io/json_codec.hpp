// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

// JSON encoders shared by the config and manifest writers. Private to the
// library; public headers stay free of the JSON dependency.

#pragma once

#include <json.hpp>

#include "styleswap/guidance.hpp"
#include "styleswap/io/config.hpp"

namespace styleswap::io::detail {

using nlohmann::json;

json condition_to_json(const Condition& c);
json layer_to_json(const LayerAddress& l);
json pass_to_json(const PassSpec& p);
json stack_to_json(const GuidanceStack& s);
json stats_to_json(const ChannelStats& s);
json config_json(const ConfigFile& c);

}  // namespace styleswap::io::detail
