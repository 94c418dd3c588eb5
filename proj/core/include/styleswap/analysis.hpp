// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "styleswap/denoiser.hpp"
#include "styleswap/latent.hpp"
#include "styleswap/sampler.hpp"
#include "styleswap/schedule.hpp"

namespace styleswap {

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t sample_size = 0;
};

/// Kolmogorov survival function Q(lambda) = 2 sum_k (-1)^(k-1) exp(-2 k^2 lambda^2).
double kolmogorov_survival(double lambda);

/// One-sample KS test against the standard normal; p from
/// Q(D (sqrt(n) + 0.12 + 0.11 / sqrt(n))). Needs n >= 30.
KsResult ks_gaussianity(std::span<const double> samples);
KsResult ks_gaussianity(std::span<const float> samples);

/// (x_t - sqrt(abar) x0) / sqrt(1 - abar); t >= 1.
Latent standardize_encoded(const Latent& x_t, const Latent& x0, int t, const Schedule& s);

struct StyleDistance {
    double gram_distance = 0.0;
    std::string feature_spec;
};

/// Mean over two ReLU conv3x3 layers (C->8, 8->16, weights N(0, 1/fan_in)
/// from SplitMix64(extractor_seed)) of ||G_a - G_b||_F with G = F F^T / pixels.
StyleDistance gram_style_distance(const Latent& a, const Latent& b, std::uint64_t extractor_seed = 0x5354594c45ULL);

/// Pearson correlation of the luminance gradient-magnitude fields.
double structure_correlation(const Latent& a, const Latent& b);

/// Mean pairwise L2 distance of the unit-normalized outputs, in [0, 2].
double diversity_score(const std::vector<Latent>& outputs);

struct SweepRow {
    double start_fraction = 0.0;
    int num_layers = 0;
    double style_distance = 0.0;
    double content_fidelity = 0.0;
    double diversity = 0.0;
    double leakage = 0.0;
    std::vector<double> style_per_seed;
    std::vector<double> fidelity_per_seed;
    std::vector<double> leakage_per_seed;
};

struct SweepReport {
    std::vector<std::uint64_t> seeds;
    std::vector<SweepRow> rows;
};

/// For each fraction and seed: the style run, the style-off baseline of the
/// same seed, and the shared reference image. Fractions selecting no layer
/// reuse the baseline outputs.
SweepReport layer_sweep(const RunConfig& base, const std::vector<double>& fractions,
                        const std::vector<std::uint64_t>& seeds, int jobs = 1);

struct InversionRow {
    int t = 0;
    std::optional<double> stochastic_p_mean;
    std::optional<double> stochastic_pass_fraction;
    std::optional<double> ddim_p;
};

/// Per timestep, KS p-values of the standardized latents from stochastic
/// encoding (averaged over seeds) and from DDIM inversion. t = 0 is null.
std::vector<InversionRow> inversion_comparison(const Latent& x0_visual, const Denoiser& denoiser,
                                               const Condition& c_visual, const Schedule& s,
                                               const std::vector<std::uint64_t>& seeds);

}  // namespace styleswap
