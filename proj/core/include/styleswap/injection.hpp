// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "styleswap/attention.hpp"

namespace styleswap {

enum class Section { down, bottleneck, up };

std::string_view to_string(Section s);
Section section_from_string(std::string_view s);

/// Position of one self-attention layer. `index` is the ordinal across the
/// whole network and is unique.
struct LayerAddress {
    Section section = Section::down;
    int index = 0;

    friend auto operator<=>(const LayerAddress&, const LayerAddress&) = default;
};

struct ArchitectureManifest {
    std::vector<LayerAddress> layers;

    /// Default toy layout: 2 down, 1 bottleneck, 4 up (indices 0..6).
    static ArchitectureManifest default_layout();

    const LayerAddress* find(int index) const noexcept;
    bool contains(const LayerAddress& addr) const noexcept;
    /// Indices must be 0..n-1 in order and sections must run down* bottleneck* up*.
    void validate() const;

    friend bool operator==(const ArchitectureManifest&, const ArchitectureManifest&) = default;
};

enum class InjectionMode { none, kv_inject, q_inject };
/// Which denoising process produced (or consumes) a feature store.
enum class Process { original, reference, negative };

std::string_view to_string(InjectionMode m);
std::string_view to_string(Process p);
InjectionMode injection_mode_from_string(std::string_view s);
Process process_from_string(std::string_view s);

namespace selector {
inline constexpr std::uint8_t q = 1;
inline constexpr std::uint8_t k = 2;
inline constexpr std::uint8_t v = 4;
inline constexpr std::uint8_t kv = k | v;
inline constexpr std::uint8_t all = q | k | v;
}  // namespace selector

/// Pre-injection tensors of one layer at one timestep. Absent selectors are nullopt.
struct CapturedTensors {
    int heads = 0;
    int head_dim = 0;
    std::optional<Matrix> q;
    std::optional<Matrix> k;
    std::optional<Matrix> v;

    std::uint8_t present() const noexcept;
};

class FeatureStore {
public:
    FeatureStore() = default;
    explicit FeatureStore(Process provenance) : provenance_(provenance) {}

    Process provenance() const noexcept { return provenance_; }
    void put(const LayerAddress& layer, int timestep, CapturedTensors tensors);
    /// Exact-match lookup; nullptr when absent.
    const CapturedTensors* find(const LayerAddress& layer, int timestep) const noexcept;
    /// Like find() but throws store-missing when absent or lacking `required` selectors.
    const CapturedTensors& at(const LayerAddress& layer, int timestep, std::uint8_t required) const;
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const std::map<std::pair<LayerAddress, int>, CapturedTensors>& entries() const noexcept { return entries_; }

private:
    Process provenance_ = Process::original;
    std::map<std::pair<LayerAddress, int>, CapturedTensors> entries_;
};

struct Injection {
    InjectionMode mode = InjectionMode::none;
    Process source = Process::reference;
};

/// Which layers capture which tensors, which layers are injected from which
/// store, and where attention maps are recorded.
struct TapPlan {
    std::map<LayerAddress, std::uint8_t> captures;
    std::map<LayerAddress, Injection> injections;
    std::set<LayerAddress> attn_map_layers;
    std::set<int> attn_map_timesteps;

    bool empty() const noexcept {
        return captures.empty() && injections.empty() && attn_map_layers.empty();
    }
    bool wants_map(const LayerAddress& layer, int timestep) const noexcept {
        return attn_map_layers.count(layer) != 0 && attn_map_timesteps.count(timestep) != 0;
    }
};

/// Stores an injected forward may read from, keyed by provenance.
struct InjectionSources {
    const FeatureStore* original = nullptr;
    const FeatureStore* reference = nullptr;
    const FeatureStore* negative = nullptr;

    const FeatureStore* find(Process p) const noexcept;
};

struct AttentionMap {
    LayerAddress layer;
    int timestep = 0;
    Matrix map;  // tokens x tokens, head-averaged
};

struct UpblockSelection {
    std::vector<LayerAddress> layers;
    std::optional<std::string> warning;
};

/// Upblock layers whose position k/n_up within the upblock sequence is at
/// least `start_fraction`. Never returns down or bottleneck layers.
UpblockSelection select_upblock_layers(const ArchitectureManifest& manifest, double start_fraction);

/// none: unchanged. kv_inject: K, V from the store. q_inject: Q from the store.
AttentionTensors apply_injection(const AttentionTensors& at, InjectionMode mode, const CapturedTensors* entry);

/// Head average of the per-head maps. Rows are renormalized (and a warning
/// logged) only when the average drifts from row-sum 1 by more than 1e-5.
AttentionMap capture_attention_map(const LayerAddress& layer, int timestep, const std::vector<Matrix>& head_maps);

/// Mean of the attention rows of the given query tokens.
std::vector<double> query_region_profile(const AttentionMap& map, const std::vector<int>& query_token_ids);

/// Everything one attention layer does inside a forward pass: capture the
/// pre-injection tensors, substitute per the plan, attend, and record maps.
struct LayerContext {
    const TapPlan& plan;
    const InjectionSources& sources;
    int timestep;
    FeatureStore& captured;
    std::vector<AttentionMap>& maps;
};

Matrix run_attention_layer(const LayerAddress& layer, const AttentionTensors& at, LayerContext& ctx);

}  // namespace styleswap
