// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "styleswap/injection.hpp"
#include "styleswap/latent.hpp"
#include "styleswap/schedule.hpp"

namespace styleswap {

/// Toy conditioning. Both ids absent is the null condition.
struct Condition {
    std::optional<int> content_id;
    std::optional<int> style_id;

    static Condition null() { return {}; }
    bool is_null() const noexcept { return !content_id && !style_id; }
    std::string describe() const;

    friend auto operator<=>(const Condition&, const Condition&) = default;
};

enum class DenoiserKind { seeded_random, structured_style };

std::string_view to_string(DenoiserKind k);
DenoiserKind denoiser_kind_from_string(std::string_view s);

/// Constants of the structured_style model. Upblock layer l of n gets
/// position weight lerp(position_first, position_last) and structure weight
/// lerp(structure_first, structure_last) at l/(n-1).
struct StructuredParams {
    double content_amplitude = 0.04;
    double style_amplitude = 0.2;
    double prior_mean_std = 0.3;
    double prior_layout_std = 0.6;
    double prior_patch_std = 0.35;
    double prior_residual_std = 0.03;
    double up_position_first = 4.0;
    double up_position_last = 1.0;
    double up_structure_first = 0.2;
    double up_structure_last = 1.0;
    double up_rate = 0.04;
    double down_position = 2.0;
    double down_structure = 0.5;
    double down_rate = 0.3;

    friend bool operator==(const StructuredParams&, const StructuredParams&) = default;
};

struct DenoiserSpec {
    DenoiserKind kind = DenoiserKind::structured_style;
    std::uint64_t seed = 0;
    int channels = 4;
    int height = 16;
    int width = 16;
    int base_width = 16;
    int heads = 2;
    int content_vocab = 8;
    int style_vocab = 40;
    /// Output gain of the seeded_random kind.
    double output_gain = 0.05;
    ArchitectureManifest attention_layout = ArchitectureManifest::default_layout();
    StructuredParams structured;

    int patch() const noexcept { return 2; }
    int tokens() const noexcept { return (height / patch()) * (width / patch()); }
    void validate() const;
    void validate(const Condition& c) const;

    friend bool operator==(const DenoiserSpec&, const DenoiserSpec&) = default;
};

struct ForwardResult {
    Latent eps;
    FeatureStore captured;
    std::vector<AttentionMap> maps;
};

/// Noise predictor with addressable self-attention layers. Implementations
/// are immutable after construction; forward() is reentrant.
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual const DenoiserSpec& spec() const noexcept = 0;
    const ArchitectureManifest& architecture() const noexcept { return spec().attention_layout; }

    /// Condition embedding; the null condition maps to the zero vector.
    virtual std::vector<float> embed(const Condition& c) const = 0;

    virtual ForwardResult forward_embedded(const Latent& x_t, int t, const std::vector<float>& embedding,
                                           const TapPlan& taps, const InjectionSources& sources) const = 0;

    ForwardResult forward(const Latent& x_t, int t, const Condition& c, const TapPlan& taps = {},
                          const InjectionSources& sources = {}) const;

protected:
    void check_forward_inputs(const Latent& x_t, int t, const TapPlan& taps, int num_steps) const;
};

/// The schedule is required by the structured_style kind (its estimate is
/// x0-parameterized) and optional for seeded_random.
std::shared_ptr<const Denoiser> build_denoiser(const DenoiserSpec& spec, std::shared_ptr<const Schedule> schedule);

}  // namespace styleswap
