// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include "styleswap/injection.hpp"

#include <cmath>
#include <iostream>

#include "styleswap/error.hpp"

namespace styleswap {

std::string_view to_string(Section s) {
    switch (s) {
        case Section::down: return "down";
        case Section::bottleneck: return "bottleneck";
        case Section::up: return "up";
    }
    return "?";
}

Section section_from_string(std::string_view s) {
    if (s == "down") return Section::down;
    if (s == "bottleneck") return Section::bottleneck;
    if (s == "up") return Section::up;
    fail(ErrorCode::invalid_config, "unknown section '" + std::string(s) + "'");
}

std::string_view to_string(InjectionMode m) {
    switch (m) {
        case InjectionMode::none: return "none";
        case InjectionMode::kv_inject: return "kv_inject";
        case InjectionMode::q_inject: return "q_inject";
    }
    return "?";
}

std::string_view to_string(Process p) {
    switch (p) {
        case Process::original: return "original";
        case Process::reference: return "reference";
        case Process::negative: return "negative";
    }
    return "?";
}

InjectionMode injection_mode_from_string(std::string_view s) {
    if (s == "none") return InjectionMode::none;
    if (s == "kv_inject") return InjectionMode::kv_inject;
    if (s == "q_inject") return InjectionMode::q_inject;
    fail(ErrorCode::invalid_config, "unknown injection mode '" + std::string(s) + "'");
}

Process process_from_string(std::string_view s) {
    if (s == "original") return Process::original;
    if (s == "reference") return Process::reference;
    if (s == "negative") return Process::negative;
    fail(ErrorCode::invalid_config, "unknown process '" + std::string(s) + "'");
}

ArchitectureManifest ArchitectureManifest::default_layout() {
    ArchitectureManifest m;
    m.layers = {{Section::down, 0},       {Section::down, 1}, {Section::bottleneck, 2}, {Section::up, 3},
                {Section::up, 4},         {Section::up, 5},   {Section::up, 6}};
    return m;
}

const LayerAddress* ArchitectureManifest::find(int index) const noexcept {
    for (const auto& l : layers) {
        if (l.index == index) {
            return &l;
        }
    }
    return nullptr;
}

bool ArchitectureManifest::contains(const LayerAddress& addr) const noexcept {
    const LayerAddress* l = find(addr.index);
    return l != nullptr && l->section == addr.section;
}

void ArchitectureManifest::validate() const {
    require(!layers.empty(), ErrorCode::empty_manifest, "architecture lists no attention layers");
    int last_section = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        require(layers[i].index == static_cast<int>(i), ErrorCode::invalid_layer,
                "layer indices must be 0..n-1 in order");
        const int sec = static_cast<int>(layers[i].section);
        require(sec >= last_section, ErrorCode::invalid_layer, "sections must run down -> bottleneck -> up");
        last_section = sec;
    }
}

std::uint8_t CapturedTensors::present() const noexcept {
    std::uint8_t mask = 0;
    if (q) mask |= selector::q;
    if (k) mask |= selector::k;
    if (v) mask |= selector::v;
    return mask;
}

void FeatureStore::put(const LayerAddress& layer, int timestep, CapturedTensors tensors) {
    entries_[{layer, timestep}] = std::move(tensors);
}

const CapturedTensors* FeatureStore::find(const LayerAddress& layer, int timestep) const noexcept {
    auto it = entries_.find({layer, timestep});
    return it == entries_.end() ? nullptr : &it->second;
}

const CapturedTensors& FeatureStore::at(const LayerAddress& layer, int timestep, std::uint8_t required) const {
    const CapturedTensors* entry = find(layer, timestep);
    const std::string where = std::string(to_string(provenance_)) + " store, layer " + std::to_string(layer.index) +
                              ", t=" + std::to_string(timestep);
    require(entry != nullptr, ErrorCode::store_missing, "no captured tensors in " + where);
    require((entry->present() & required) == required, ErrorCode::store_missing,
            "captured tensors in " + where + " lack the required selectors");
    return *entry;
}

const FeatureStore* InjectionSources::find(Process p) const noexcept {
    switch (p) {
        case Process::original: return original;
        case Process::reference: return reference;
        case Process::negative: return negative;
    }
    return nullptr;
}

UpblockSelection select_upblock_layers(const ArchitectureManifest& manifest, double start_fraction) {
    require(!manifest.layers.empty(), ErrorCode::empty_manifest, "select_upblock_layers: empty manifest");
    require(std::isfinite(start_fraction) && start_fraction >= 0.0, ErrorCode::invalid_range,
            "start_fraction must be finite and >= 0");
    std::vector<LayerAddress> ups;
    for (const auto& l : manifest.layers) {
        if (l.section == Section::up) {
            ups.push_back(l);
        }
    }
    UpblockSelection sel;
    const double n = static_cast<double>(ups.size());
    for (std::size_t k = 0; k < ups.size(); ++k) {
        if (static_cast<double>(k) / n >= start_fraction) {
            sel.layers.push_back(ups[k]);
        }
    }
    if (sel.layers.empty()) {
        sel.warning = "start_fraction " + std::to_string(start_fraction) + " selects no upblock layers; swapping is a no-op";
    }
    return sel;
}

AttentionTensors apply_injection(const AttentionTensors& at, InjectionMode mode, const CapturedTensors* entry) {
    if (mode == InjectionMode::none) {
        return at;
    }
    require(entry != nullptr, ErrorCode::store_missing, "injection requested without a store entry");
    require(entry->heads == at.heads && entry->head_dim == at.head_dim, ErrorCode::shape_mismatch,
            "stored head layout differs from the current layer");
    AttentionTensors out = at;
    auto check = [&](const std::optional<Matrix>& m, const Matrix& cur, const char* name) {
        require(m.has_value(), ErrorCode::store_missing, std::string("store entry lacks ") + name);
        require(m->cols == cur.cols, ErrorCode::shape_mismatch, std::string(name) + " width differs from the layer");
        require(m->rows == cur.rows, ErrorCode::shape_mismatch,
                std::string(name) + " token count " + std::to_string(m->rows) + " differs from " +
                    std::to_string(cur.rows) + "; processes must share the latent geometry");
    };
    if (mode == InjectionMode::kv_inject) {
        check(entry->k, at.k, "K");
        check(entry->v, at.v, "V");
        out.k = *entry->k;
        out.v = *entry->v;
    } else {
        check(entry->q, at.q, "Q");
        out.q = *entry->q;
    }
    return out;
}

AttentionMap capture_attention_map(const LayerAddress& layer, int timestep, const std::vector<Matrix>& head_maps) {
    require(!head_maps.empty(), ErrorCode::invalid_layer,
            "no attention maps captured for layer " + std::to_string(layer.index) + " at t=" + std::to_string(timestep));
    const int rows = head_maps.front().rows;
    const int cols = head_maps.front().cols;
    for (const auto& m : head_maps) {
        require(m.rows == rows && m.cols == cols, ErrorCode::dimension_mismatch, "per-head maps differ in shape");
    }
    AttentionMap out{layer, timestep, Matrix(rows, cols)};
    const double inv = 1.0 / static_cast<double>(head_maps.size());
    bool renormalized = false;
    for (int i = 0; i < rows; ++i) {
        std::vector<double> row(cols, 0.0);
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            double acc = 0.0;
            for (const auto& m : head_maps) {
                acc += m(i, j);
            }
            row[j] = acc * inv;
            sum += row[j];
        }
        const bool fix = std::abs(sum - 1.0) > 1e-5;
        renormalized |= fix;
        for (int j = 0; j < cols; ++j) {
            out.map(i, j) = static_cast<float>(fix ? row[j] / sum : row[j]);
        }
    }
    if (renormalized) {
        std::clog << "warning: attention map for layer " << layer.index << " at t=" << timestep
                  << " needed row renormalization\n";
    }
    return out;
}

std::vector<double> query_region_profile(const AttentionMap& map, const std::vector<int>& query_token_ids) {
    require(!query_token_ids.empty(), ErrorCode::empty_selection, "query_region_profile: no query tokens selected");
    std::vector<double> profile(map.map.cols, 0.0);
    for (int id : query_token_ids) {
        require(id >= 0 && id < map.map.rows, ErrorCode::invalid_range,
                "query token " + std::to_string(id) + " outside [0, " + std::to_string(map.map.rows) + ")");
        for (int j = 0; j < map.map.cols; ++j) {
            profile[j] += map.map(id, j);
        }
    }
    for (double& p : profile) {
        p /= static_cast<double>(query_token_ids.size());
    }
    return profile;
}

Matrix run_attention_layer(const LayerAddress& layer, const AttentionTensors& at, LayerContext& ctx) {
    validate(at);
    if (auto cap = ctx.plan.captures.find(layer); cap != ctx.plan.captures.end()) {
        CapturedTensors ct;
        ct.heads = at.heads;
        ct.head_dim = at.head_dim;
        if (cap->second & selector::q) ct.q = at.q;
        if (cap->second & selector::k) ct.k = at.k;
        if (cap->second & selector::v) ct.v = at.v;
        ctx.captured.put(layer, ctx.timestep, std::move(ct));
    }
    const AttentionTensors* effective = &at;
    AttentionTensors substituted;
    if (auto inj = ctx.plan.injections.find(layer); inj != ctx.plan.injections.end() &&
                                                    inj->second.mode != InjectionMode::none) {
        const FeatureStore* store = ctx.sources.find(inj->second.source);
        require(store != nullptr, ErrorCode::store_missing,
                std::string("no ") + std::string(to_string(inj->second.source)) + " store supplied for layer " +
                    std::to_string(layer.index));
        const std::uint8_t need = inj->second.mode == InjectionMode::kv_inject ? selector::kv : selector::q;
        substituted = apply_injection(at, inj->second.mode, &store->at(layer, ctx.timestep, need));
        effective = &substituted;
    }
    if (ctx.plan.wants_map(layer, ctx.timestep)) {
        std::vector<Matrix> heads;
        Matrix out = attention(*effective, heads);
        ctx.maps.push_back(capture_attention_map(layer, ctx.timestep, heads));
        return out;
    }
    return attention(*effective);
}

}  // namespace styleswap
