// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include "styleswap/guidance.hpp"

#include <cmath>

#include "styleswap/error.hpp"

namespace styleswap {

std::string_view to_string(PassRole r) {
    switch (r) {
        case PassRole::original: return "original";
        case PassRole::reference: return "reference";
        case PassRole::negative: return "negative";
        case PassRole::unconditional: return "unconditional";
    }
    return "?";
}

PassRole pass_role_from_string(std::string_view s) {
    if (s == "original") return PassRole::original;
    if (s == "reference") return PassRole::reference;
    if (s == "negative") return PassRole::negative;
    if (s == "unconditional") return PassRole::unconditional;
    fail(ErrorCode::invalid_config, "unknown pass role '" + std::string(s) + "'");
}

std::string_view to_string(StackMode m) {
    switch (m) {
        case StackMode::plain_cfg: return "plain_cfg";
        case StackMode::cfg_swap: return "cfg_swap";
        case StackMode::nvqg_full: return "nvqg_full";
        case StackMode::nvqg_simplified: return "nvqg_simplified";
        case StackMode::custom: return "custom";
    }
    return "?";
}

StackMode stack_mode_from_string(std::string_view s) {
    if (s == "plain_cfg") return StackMode::plain_cfg;
    if (s == "cfg_swap") return StackMode::cfg_swap;
    if (s == "nvqg_full") return StackMode::nvqg_full;
    if (s == "nvqg_simplified") return StackMode::nvqg_simplified;
    if (s == "custom") return StackMode::custom;
    fail(ErrorCode::invalid_config, "unknown guidance mode '" + std::string(s) + "'");
}

std::string PassSpec::describe() const {
    std::string out = std::string(to_string(role)) + "(" + condition.describe() + ")";
    if (injection != InjectionMode::none) {
        out += "[" + std::string(to_string(injection)) + "<-" + std::string(to_string(source)) + "]";
    }
    return out;
}

void GuidanceWeights::validate() const {
    for (double v : {w, w_visual, w_content, w_neg}) {
        require(std::isfinite(v), ErrorCode::invalid_range, "guidance weights must be finite");
    }
}

double GuidanceStack::coefficient_sum() const noexcept {
    double s = 0.0;
    for (const auto& t : terms) s += t.coefficient;
    return s;
}

std::vector<PassSpec> GuidanceStack::passes() const {
    std::vector<PassSpec> out;
    for (const auto& t : terms) {
        bool seen = false;
        for (const auto& p : out) seen = seen || p == t.pass;
        if (!seen) out.push_back(t.pass);
    }
    return out;
}

void GuidanceStack::validate() const {
    require(!terms.empty(), ErrorCode::missing_pass, "guidance stack has no passes");
    bool injected = false;
    for (const auto& t : terms) {
        require(std::isfinite(t.coefficient), ErrorCode::invalid_range,
                "non-finite coefficient on pass " + t.pass.describe());
        injected = injected || t.pass.injection != InjectionMode::none;
        if (t.pass.role == PassRole::unconditional) {
            require(t.pass.condition.is_null(), ErrorCode::invalid_config, "unconditional pass must use the null condition");
        }
    }
    if (mode == StackMode::plain_cfg) {
        require(terms.size() == 2, ErrorCode::invalid_config, "plain_cfg stacks hold exactly two passes");
    }
    if (injected) {
        require(!layers.empty(), ErrorCode::empty_layers, "injected passes need at least one swap layer");
    }
}

namespace {

// sum == 1 up to rounding on the magnitude of the terms involved.
void require_normalized(const GuidanceStack& s) {
    double mag = 1.0;
    for (const auto& t : s.terms) mag += std::abs(t.coefficient);
    require(std::abs(s.coefficient_sum() - 1.0) <= 1e-12 * mag, ErrorCode::invalid_range,
            "guidance coefficients of " + std::string(to_string(s.mode)) + " stack do not sum to 1");
}

void require_layers(const std::vector<LayerAddress>& layers) {
    require(!layers.empty(), ErrorCode::empty_layers, "swap layer list is empty");
}

PassSpec unconditional_pass() { return PassSpec{Condition::null(), InjectionMode::none, Process::reference, PassRole::unconditional}; }

}  // namespace

Latent compose(const GuidanceStack& stack, const std::map<PassSpec, Latent>& eps_values) {
    require(!stack.terms.empty(), ErrorCode::missing_pass, "compose: empty guidance stack");
    std::vector<std::pair<const Latent*, double>> merged;
    std::vector<PassSpec> order;
    for (const auto& term : stack.terms) {
        auto it = eps_values.find(term.pass);
        require(it != eps_values.end(), ErrorCode::missing_pass, "compose: no eps for pass " + term.pass.describe());
        std::size_t slot = order.size();
        for (std::size_t i = 0; i < order.size(); ++i) {
            if (order[i] == term.pass) slot = i;
        }
        if (slot == order.size()) {
            order.push_back(term.pass);
            merged.emplace_back(&it->second, 0.0);
        }
        merged[slot].second += term.coefficient;
    }
    const Latent& first = *merged.front().first;
    for (const auto& [eps, c] : merged) {
        require_same_shape(*eps, first, "compose");
    }
    std::vector<double> acc(first.size(), 0.0);
    bool any = false;
    for (const auto& [eps, c] : merged) {
        if (c == 0.0) continue;
        const auto d = eps->data();
        if (!any) {
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = c * d[i];
            any = true;
        } else {
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c * d[i];
        }
    }
    Latent out(first.channels(), first.height(), first.width());
    auto o = out.data();
    for (std::size_t i = 0; i < acc.size(); ++i) o[i] = static_cast<float>(acc[i]);
    require_finite(out, "composed eps");
    return out;
}

GuidanceStack cfg_stack(double w, const Condition& c) {
    require(std::isfinite(w), ErrorCode::invalid_range, "cfg scale must be finite");
    GuidanceStack s;
    s.mode = StackMode::plain_cfg;
    s.terms = {{PassSpec{c, InjectionMode::none, Process::reference, PassRole::original}, 1.0 + w},
               {unconditional_pass(), -w}};
    require_normalized(s);
    return s;
}

GuidanceStack cfg_swap_stack(double w, const Condition& c, std::vector<LayerAddress> swap_layers, Process source,
                             bool inject_unconditional) {
    require(std::isfinite(w), ErrorCode::invalid_range, "cfg scale must be finite");
    require_layers(swap_layers);
    GuidanceStack s;
    s.mode = StackMode::cfg_swap;
    s.layers = std::move(swap_layers);
    PassSpec uncond = unconditional_pass();
    if (inject_unconditional) {
        uncond.injection = InjectionMode::kv_inject;
        uncond.source = source;
    }
    s.terms = {{PassSpec{c, InjectionMode::kv_inject, source, PassRole::original}, 1.0 + w}, {uncond, -w}};
    require_normalized(s);
    return s;
}

GuidanceStack concept_negation_stack(double w_neg, const Condition& c, const Condition& negated) {
    require(std::isfinite(w_neg), ErrorCode::invalid_range, "negation scale must be finite");
    GuidanceStack s;
    s.mode = StackMode::custom;
    const PassSpec neg_pass{negated, InjectionMode::none, Process::reference,
                            negated.is_null() ? PassRole::unconditional : PassRole::original};
    s.terms = {{PassSpec{c, InjectionMode::none, Process::reference, PassRole::original}, 1.0},
               {neg_pass, -w_neg},
               {unconditional_pass(), w_neg}};
    require_normalized(s);
    return s;
}

GuidanceStack nvqg_stack(const GuidanceWeights& weights, NvqgVariant variant, const Condition& c,
                         std::vector<LayerAddress> swap_layers, Process query_source) {
    weights.validate();
    require_layers(swap_layers);
    const double w = weights.w;
    const PassSpec kv{c, InjectionMode::kv_inject, Process::reference, PassRole::original};
    const PassSpec q{Condition::null(), InjectionMode::q_inject, query_source, PassRole::negative};
    GuidanceStack s;
    s.layers = std::move(swap_layers);
    std::vector<GuidanceTerm> raw;
    if (variant == NvqgVariant::full) {
        s.mode = StackMode::nvqg_full;
        const double baseline = (1.0 + w) * (1.0 + weights.w_content - weights.w_visual);
        raw = {{kv, (1.0 + w) * weights.w_visual},
               {q, -(1.0 + w) * weights.w_content},
               {unconditional_pass(), baseline - w}};
    } else {
        s.mode = StackMode::nvqg_simplified;
        const double wp = weights.w_prime();
        raw = {{kv, 1.0 + wp}, {q, -wp}};
    }
    for (const auto& t : raw) {
        if (t.coefficient != 0.0) s.terms.push_back(t);
    }
    require_normalized(s);
    return s;
}

}  // namespace styleswap
