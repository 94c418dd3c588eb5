// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "styleswap/denoiser.hpp"
#include "styleswap/guidance.hpp"
#include "styleswap/injection.hpp"
#include "styleswap/latent.hpp"
#include "styleswap/schedule.hpp"

namespace styleswap {

inline constexpr std::string_view kEngineVersion = "styleswap 1.0.0";

enum class ReferenceKind { generated, real };
/// How a real reference reaches timestep t: fresh forward noise at every
/// step, one encoding at T followed by the reference's own DDIM steps, or a
/// precomputed DDIM inversion trajectory.
enum class RealEncoding { per_step, single_shot, ddim_inversion };

std::string_view to_string(ReferenceKind k);
std::string_view to_string(RealEncoding e);
ReferenceKind reference_kind_from_string(std::string_view s);
RealEncoding real_encoding_from_string(std::string_view s);

struct ReferenceSource {
    ReferenceKind kind = ReferenceKind::generated;
    /// Condition of the reference pass (generated: the visual condition).
    Condition condition;
    /// generated: seed of the reference x_T. real: seed of the encoding noise.
    std::uint64_t seed = 1;
    /// real only.
    Latent x0_visual;
    std::string image_path;
    RealEncoding encoding = RealEncoding::per_step;
    /// Runs the reference stream with its own CFG instead of one conditional pass.
    bool use_cfg = false;

    void validate() const;

    friend bool operator==(const ReferenceSource&, const ReferenceSource&) = default;
};

struct CalibrationWindow {
    bool enabled = true;
    int t_start = 35;
    int t_end = 15;

    /// [round(0.7 T), round(0.3 T)].
    static CalibrationWindow default_for(int num_steps);
    bool contains(int t) const noexcept { return enabled && t <= t_start && t >= t_end; }
    void validate(int num_steps) const;

    friend bool operator==(const CalibrationWindow&, const CalibrationWindow&) = default;
};

struct ScheduleParams {
    int num_steps = 50;
    double beta_start = 0.002;
    double beta_end = 0.2;
    double eta = 0.0;

    Schedule build() const { return Schedule::linear(num_steps, beta_start, beta_end, eta); }

    friend bool operator==(const ScheduleParams&, const ScheduleParams&) = default;
};

enum class GuidanceMode { plain_cfg, cfg_swap, nvqg_full, nvqg_simplified, concept_negation };

std::string_view to_string(GuidanceMode m);
GuidanceMode guidance_mode_from_string(std::string_view s);

struct GuidanceConfig {
    GuidanceMode mode = GuidanceMode::nvqg_simplified;
    GuidanceWeights weights;
    /// Applies the swap to the unconditional CFG pass as well.
    bool inject_unconditional = false;
    /// c_neg of concept negation.
    Condition negated;

    friend bool operator==(const GuidanceConfig&, const GuidanceConfig&) = default;
};

struct SwapConfig {
    double start_fraction = 0.5;
    /// Injection is active for t_min <= t <= t_max; t_max == 0 means T.
    int t_min = 1;
    int t_max = 0;

    friend bool operator==(const SwapConfig&, const SwapConfig&) = default;
};

struct AttentionCaptureConfig {
    /// Layer indices; empty disables capture.
    std::vector<int> layers;
    /// 1-based denoising step indices; step k acts on t = T - k + 1.
    std::vector<int> steps{20};

    friend bool operator==(const AttentionCaptureConfig&, const AttentionCaptureConfig&) = default;
};

struct OutputConfig {
    std::string dir = "out";
    std::string prefix = "run";
    bool write_png = true;
    /// Keep every pass eps so the manifest can point to tensor dumps.
    bool dump_passes = false;

    friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

struct RunConfig {
    ScheduleParams schedule;
    DenoiserSpec denoiser;
    Condition content;
    /// false: plain CFG on the content condition, no reference, no calibration.
    bool style_enabled = true;
    ReferenceSource reference;
    GuidanceConfig guidance;
    SwapConfig swap;
    CalibrationWindow calibration;
    /// Seed of the original process (x_T and step noise).
    std::uint64_t seed = 0;
    AttentionCaptureConfig attention;
    /// Records the KS p-value of the standardized real reference latent per step.
    bool ks_diagnostics = false;
    OutputConfig output;

    void validate() const;
    int step_to_timestep(int step) const noexcept { return schedule.num_steps - step + 1; }

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// x_T of a process seeded with `seed`.
Latent initial_noise(std::uint64_t seed, int channels, int height, int width);
/// Step noise of a process at timestep t (used only when sigma_t > 0).
Latent step_noise(std::uint64_t seed, int t, const Latent& shape);
/// Forward-encoding noise of a real reference at timestep t.
Latent encoding_noise(std::uint64_t seed, int t, const Latent& shape);

/// Per channel: sigma_ref (x - mu_x) / sigma_x + mu_ref, population statistics.
Latent adain(const Latent& x, const Latent& ref);

/// DDIM update with the predicted x0 colour-matched to `x0_visual`. The
/// caller decides whether t lies in the calibration window.
Latent color_calibrate_step(const Latent& x_t, const Latent& eps, const Latent& x0_visual, int t, const Schedule& s,
                            const Latent* step_noise = nullptr);

/// Deterministic DDIM inversion trajectory {x_0 .. x_T} of `x0_visual`
/// under condition `c`; eps for the step t-1 -> t is evaluated at (x_{t-1}, t).
std::vector<Latent> ddim_invert_reference(const Latent& x0_visual, const Denoiser& denoiser, const Condition& c,
                                          const Schedule& s);

/// Deterministic conditional DDIM sampling from x_T (no guidance).
Latent ddim_sample(const Latent& x_T, const Denoiser& denoiser, const Condition& c, const Schedule& s);

/// The reference process as seen by the sampler.
class ReferenceStream {
public:
    ReferenceStream(const ReferenceSource& src, std::shared_ptr<const Schedule> schedule,
                    const Denoiser* denoiser = nullptr);

    /// Reference latent at t. Generated and single-shot streams only serve
    /// their current timestep (exhausted-trajectory otherwise).
    Latent latent_at(int t) const;
    /// Moves a stateful stream from t to t-1 using the reference eps.
    void advance(int t, const Latent& eps);
    /// True when latent_at depends on advance().
    bool stateful() const noexcept;
    int current_timestep() const noexcept { return t_; }

private:
    ReferenceSource src_;
    std::shared_ptr<const Schedule> schedule_;
    Latent state_;
    std::vector<Latent> trajectory_;
    int t_ = 0;
};

inline Latent reference_latent_at(const ReferenceStream& stream, int t) { return stream.latent_at(t); }

struct PassRecord {
    PassSpec pass;
    double coefficient = 0.0;
    std::vector<double> eps_mean;
    /// Set by writers that dump the pass tensor.
    std::string tensor_path;
};

struct CalibrationRecord {
    ChannelStats before;
    ChannelStats after;
    ChannelStats target;
};

struct StepRecord {
    int step = 0;
    int t = 0;
    bool injected = false;
    std::vector<PassRecord> passes;
    std::vector<double> composed_mean;
    std::optional<CalibrationRecord> calibration;
    std::optional<double> reference_ks_p;
};

struct RunManifest {
    std::string engine_version{kEngineVersion};
    RunConfig config;
    GuidanceStack stack;
    std::vector<LayerAddress> swap_layers;
    std::vector<std::string> warnings;
    std::vector<StepRecord> steps;
    std::map<std::string, double> metrics;
    std::vector<std::string> artifacts;
    double wall_clock_seconds = 0.0;
};

struct StepTensors {
    int t = 0;
    std::vector<std::pair<PassSpec, Latent>> passes;
    Latent composed;
};

struct RunResult {
    Latent x0;
    /// real: x0_visual. generated: the final reference latent.
    Latent reference_x0;
    RunManifest manifest;
    std::vector<AttentionMap> attention_maps;
    /// Filled only when output.dump_passes is set.
    std::vector<StepTensors> step_tensors;
};

/// The guidance stack and swap layers a config resolves to.
struct ResolvedGuidance {
    GuidanceStack stack;
    std::vector<LayerAddress> layers;
    std::vector<std::string> warnings;
};

ResolvedGuidance resolve_guidance(const RunConfig& cfg);

RunResult run_t2i_with_style(const RunConfig& cfg);
/// Same run with a caller-built denoiser (shared across batch cells).
RunResult run_t2i_with_style(const RunConfig& cfg, const Denoiser& denoiser, std::shared_ptr<const Schedule> schedule);

/// The reference image a run is measured against: x0_visual for real
/// references, the end of the reference trajectory for generated ones.
Latent render_reference(const RunConfig& cfg, const Denoiser& denoiser, std::shared_ptr<const Schedule> schedule);

}  // namespace styleswap
