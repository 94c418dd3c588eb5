// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "styleswap/denoiser.hpp"
#include "styleswap/injection.hpp"
#include "styleswap/latent.hpp"

namespace styleswap {

enum class PassRole { original, reference, negative, unconditional };

std::string_view to_string(PassRole r);
PassRole pass_role_from_string(std::string_view s);

/// One denoiser evaluation of the original process. `source` names the store
/// an injected pass reads; Process::original means the plain pass of the
/// same condition in the same step.
struct PassSpec {
    Condition condition;
    InjectionMode injection = InjectionMode::none;
    Process source = Process::reference;
    PassRole role = PassRole::original;

    std::string describe() const;

    friend auto operator<=>(const PassSpec&, const PassSpec&) = default;
};

struct GuidanceWeights {
    double w = 7.0;
    double w_visual = 1.0;
    double w_content = 0.5;
    double w_neg = 1.0;

    double w_prime() const noexcept { return w_visual * (w + 1.0); }
    void validate() const;

    friend bool operator==(const GuidanceWeights&, const GuidanceWeights&) = default;
};

enum class StackMode { plain_cfg, cfg_swap, nvqg_full, nvqg_simplified, custom };
enum class NvqgVariant { full, simplified };

std::string_view to_string(StackMode m);
StackMode stack_mode_from_string(std::string_view s);

struct GuidanceTerm {
    PassSpec pass;
    double coefficient = 0.0;

    friend bool operator==(const GuidanceTerm&, const GuidanceTerm&) = default;
};

struct GuidanceStack {
    StackMode mode = StackMode::custom;
    std::vector<GuidanceTerm> terms;
    /// Layers the injected passes act on.
    std::vector<LayerAddress> layers;

    double coefficient_sum() const noexcept;
    /// Distinct passes in first-occurrence order.
    std::vector<PassSpec> passes() const;
    void validate() const;

    friend bool operator==(const GuidanceStack&, const GuidanceStack&) = default;
};

/// sum_i coefficient_i * eps_i. Repeated pass specs are merged (coefficients
/// added in double) and exactly-zero merged coefficients are skipped, so an
/// identity such as c - w (u - u) reproduces c bitwise.
Latent compose(const GuidanceStack& stack, const std::map<PassSpec, Latent>& eps_values);

/// (1 + w) eps(c) - w eps(null).
GuidanceStack cfg_stack(double w, const Condition& c);

/// (1 + w) eps_kv(c) - w eps(null); the unconditional pass is plain unless
/// `inject_unconditional` is set.
GuidanceStack cfg_swap_stack(double w, const Condition& c, std::vector<LayerAddress> swap_layers,
                             Process source = Process::reference, bool inject_unconditional = false);

/// eps(c) - w_neg (eps(c_neg) - eps(null)).
GuidanceStack concept_negation_stack(double w_neg, const Condition& c, const Condition& negated);

/// full: (1+w) w_v eps_kv(c) - (1+w) w_c eps_q(null) + (1+w)(1 + w_c - w_v) eps(null) - w eps(null),
///       with the two null passes merged and zero coefficients dropped.
/// simplified: (1 + w') eps_kv(c) - w' eps_q(null), w' = w_v (w + 1).
GuidanceStack nvqg_stack(const GuidanceWeights& weights, NvqgVariant variant, const Condition& c,
                         std::vector<LayerAddress> swap_layers, Process query_source = Process::reference);

}  // namespace styleswap
