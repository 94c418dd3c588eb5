// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "styleswap/analysis.hpp"
#include "styleswap/rng.hpp"
#include "test_util.hpp"

namespace styleswap {
namespace {

std::vector<double> normals(std::uint64_t seed, int n) {
    SplitMix64 rng(seed);
    std::vector<double> out(n);
    for (double& v : out) v = rng.gaussian();
    return out;
}

TEST(KolmogorovSurvival, MatchesAlternatingSeriesAndKnownPoints) {
    for (double lambda = 0.6; lambda < 3.0; lambda += 0.05) {
        long double sum = 0.0L;
        for (int k = 1; k <= 400; ++k) sum += (k % 2 ? 1.0L : -1.0L) * std::exp(-2.0L * k * k * lambda * lambda);
        EXPECT_NEAR(kolmogorov_survival(lambda), static_cast<double>(2.0L * sum), 1e-10) << lambda;
    }
    EXPECT_NEAR(kolmogorov_survival(1.358), 0.05, 5e-4);
    EXPECT_EQ(kolmogorov_survival(0.0), 1.0);
    EXPECT_NEAR(kolmogorov_survival(0.2), 1.0, 1e-12);
}

TEST(KsGaussianity, Examples) {
    const auto x = normals(1, 10000);
    EXPECT_GT(ks_gaussianity(std::span<const double>(x)).p_value, 0.05);

    const std::vector<double> flat(100, 0.0);
    EXPECT_DOUBLE_EQ(ks_gaussianity(std::span<const double>(flat)).statistic, 0.5);

    SplitMix64 rng(2);
    std::vector<double> uni(10000);
    for (double& v : uni) v = rng.uniform();
    EXPECT_LT(ks_gaussianity(std::span<const double>(uni)).p_value, 1e-6);

    const std::vector<double> few(29, 0.0);
    EXPECT_ENGINE_ERROR(ks_gaussianity(std::span<const double>(few)), ErrorCode::insufficient_samples);
    std::vector<double> bad = normals(3, 40);
    bad[7] = std::nan("");
    EXPECT_ENGINE_ERROR(ks_gaussianity(std::span<const double>(bad)), ErrorCode::non_finite);
}

TEST(KsGaussianity, NullRejectionRateIsCalibrated) {
    int rejected = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto x = normals(1000 + trial, 1024);
        rejected += ks_gaussianity(std::span<const double>(x)).p_value < 0.05;
    }
    EXPECT_GE(rejected, 30);
    EXPECT_LE(rejected, 70);
}

TEST(KsGaussianity, StatisticMatchesEmpiricalCdfOracle) {
    const auto x = normals(4, 50);
    double d = 0.0;
    for (double probe : x) {
        double below = 0.0, at_or_below = 0.0;
        for (double v : x) {
            below += v < probe;
            at_or_below += v <= probe;
        }
        const double cdf = 0.5 * std::erfc(-probe / std::sqrt(2.0));
        d = std::max({d, at_or_below / 50.0 - cdf, cdf - below / 50.0});
    }
    EXPECT_NEAR(ks_gaussianity(std::span<const double>(x)).statistic, d, 1e-12);
}

TEST(GramStyleDistance, IsAPseudometric) {
    for (int trial = 0; trial < 10; ++trial) {
        const Latent a = Latent::gaussian(4, 16, 16, 10 + trial), b = Latent::gaussian(4, 16, 16, 50 + trial),
                     c = Latent::gaussian(4, 16, 16, 90 + trial);
        const double ab = gram_style_distance(a, b).gram_distance;
        EXPECT_EQ(gram_style_distance(a, a).gram_distance, 0.0);
        EXPECT_NEAR(ab, gram_style_distance(b, a).gram_distance, 1e-12);
        EXPECT_LE(ab, gram_style_distance(a, c).gram_distance + gram_style_distance(c, b).gram_distance + 1e-12);
        EXPECT_GE(ab, 0.0);
    }
}

TEST(GramStyleDistance, SeesChannelPermutationAndColourShift) {
    Latent a = Latent::gaussian(4, 16, 16, 7);
    for (float& v : a.channel(0)) v += 1.5f;
    Latent p = a;
    for (int c = 0; c < 4; ++c) {
        auto src = a.channel(c), dst = p.channel((c + 1) % 4);
        std::copy(src.begin(), src.end(), dst.begin());
    }
    EXPECT_GT(gram_style_distance(a, p).gram_distance, 0.0);
    EXPECT_FALSE(gram_style_distance(a, p).feature_spec.empty());
    EXPECT_ENGINE_ERROR(gram_style_distance(a, Latent::gaussian(3, 16, 16, 1)), ErrorCode::shape_mismatch);
}

TEST(StructureCorrelation, Examples) {
    const Latent a = Latent::gaussian(4, 16, 16, 1);
    EXPECT_NEAR(structure_correlation(a, a), 1.0, 1e-12);
    EXPECT_ENGINE_ERROR(structure_correlation(a, Latent::filled(4, 16, 16, 0.5f)), ErrorCode::zero_variance);
    EXPECT_ENGINE_ERROR(structure_correlation(a, Latent::gaussian(4, 8, 16, 1)), ErrorCode::shape_mismatch);
    // Gradient magnitudes are invariant to a global offset of every channel.
    Latent shifted = a;
    for (float& v : shifted.data()) v += 2.0f;
    EXPECT_NEAR(structure_correlation(a, shifted), 1.0, 1e-5);
    double sum = 0.0;
    for (int s = 0; s < 20; ++s)
        sum += structure_correlation(Latent::gaussian(4, 16, 16, 100 + s), Latent::gaussian(4, 16, 16, 200 + s));
    EXPECT_LT(std::abs(sum / 20.0), 0.1);
}

TEST(DiversityScore, Examples) {
    const Latent a = Latent::gaussian(4, 8, 8, 1);
    EXPECT_EQ(diversity_score({a, a, a}), 0.0);
    Latent neg = a;
    for (float& v : neg.data()) v = -v;
    EXPECT_NEAR(diversity_score({a, neg}), 2.0, 1e-6);
    const Latent b = Latent::gaussian(4, 8, 8, 2), c = Latent::gaussian(4, 8, 8, 3);
    EXPECT_NEAR(diversity_score({a, b, c}), diversity_score({c, a, b}), 1e-12);
    EXPECT_ENGINE_ERROR(diversity_score({a}), ErrorCode::too_few_outputs);
    EXPECT_ENGINE_ERROR(diversity_score({a, Latent::gaussian(4, 8, 4, 1)}), ErrorCode::shape_mismatch);
}

TEST(DiversityScore, ToyRunsAreDistinctAndReproducible) {
    RunConfig base;
    base.schedule.num_steps = 20;
    base.calibration = CalibrationWindow::default_for(20);
    base.content.content_id = 1;
    std::vector<Latent> outs;
    for (std::uint64_t s = 0; s < 6; ++s) {
        RunConfig c = base;
        c.seed = s;
        outs.push_back(run_t2i_with_style(c).x0);
    }
    const double d = diversity_score(outs);
    EXPECT_GT(d, 0.0);
    EXPECT_EQ(d, diversity_score(outs));
}

TEST(LayerSweep, RowsAndEmptySelectionEqualsBaseline) {
    RunConfig base;
    base.schedule.num_steps = 20;
    base.calibration = CalibrationWindow::default_for(20);
    base.guidance.mode = GuidanceMode::cfg_swap;
    base.content.content_id = 2;
    base.reference.condition = Condition{5, 3};
    const SweepReport r = layer_sweep(base, {0.0, 0.5, 1.5}, {0, 1, 2}, 2);
    ASSERT_EQ(r.rows.size(), 3u);
    EXPECT_EQ(r.rows[0].num_layers, 4);
    EXPECT_EQ(r.rows[1].num_layers, 2);
    EXPECT_EQ(r.rows[2].num_layers, 0);
    for (const auto& row : r.rows) {
        EXPECT_EQ(row.style_per_seed.size(), 3u);
        EXPECT_GE(row.diversity, 0.0);
    }
    // No layer selected: outputs are the baselines, so fidelity is exactly 1.
    for (double f : r.rows[2].fidelity_per_seed) EXPECT_DOUBLE_EQ(f, 1.0);
    EXPECT_LT(r.rows[0].content_fidelity, 1.0);

    const SweepReport serial = layer_sweep(base, {0.0, 0.5, 1.5}, {0, 1, 2}, 1);
    for (std::size_t f = 0; f < 3; ++f) EXPECT_EQ(serial.rows[f].style_per_seed, r.rows[f].style_per_seed);

    EXPECT_ENGINE_ERROR(layer_sweep(base, {}, {0}), ErrorCode::empty_selection);
    EXPECT_ENGINE_ERROR(layer_sweep(base, {0.5}, {}), ErrorCode::empty_selection);
    EXPECT_ENGINE_ERROR(layer_sweep(base, {-0.5}, {0}), ErrorCode::invalid_range);
}

TEST(InversionComparison, StochasticEncodingPassesAndZeroRowIsNull) {
    auto s = std::make_shared<const Schedule>(make_schedule(20, 0.002, 0.2, 0.0));
    const auto d = build_denoiser(DenoiserSpec{}, s);
    const Latent x0 = Latent::gaussian(4, 16, 16, 5);
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t i = 0; i < 40; ++i) seeds.push_back(i);
    const auto rows = inversion_comparison(x0, *d, Condition{1, 1}, *s, seeds);
    ASSERT_EQ(rows.size(), 21u);
    EXPECT_FALSE(rows[0].stochastic_p_mean.has_value());
    EXPECT_FALSE(rows[0].ddim_p.has_value());
    for (int t = 1; t <= 20; ++t) {
        EXPECT_EQ(rows[t].t, t);
        EXPECT_GE(*rows[t].stochastic_pass_fraction, 0.85) << "t=" << t;
        EXPECT_GE(*rows[t].ddim_p, 0.0);
    }
    EXPECT_ENGINE_ERROR(inversion_comparison(x0, *d, Condition{}, *s, {}), ErrorCode::empty_selection);
}

TEST(StandardizeEncoded, InvertsEncoding) {
    const Schedule s = make_schedule(20, 0.002, 0.2, 0.0);
    const Latent x0 = Latent::gaussian(2, 8, 8, 1), n = Latent::gaussian(2, 8, 8, 2);
    EXPECT_LT(oracle::max_abs_diff(standardize_encoded(stochastic_encode(x0, 9, n, s), x0, 9, s), n), 1e-5);
    EXPECT_ENGINE_ERROR(standardize_encoded(x0, x0, 0, s), ErrorCode::timestep_out_of_range);
}

}  // namespace
}  // namespace styleswap
