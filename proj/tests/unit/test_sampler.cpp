// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "styleswap/analysis.hpp"
#include "styleswap/sampler.hpp"
#include "test_util.hpp"

namespace styleswap {
namespace {

/// Denoiser predicting zero noise; used where the oracle needs eps known in closed form.
class ZeroDenoiser final : public Denoiser {
public:
    const DenoiserSpec& spec() const noexcept override { return spec_; }
    std::vector<float> embed(const Condition&) const override { return std::vector<float>(4, 0.0f); }
    ForwardResult forward_embedded(const Latent& x, int, const std::vector<float>&, const TapPlan&,
                                   const InjectionSources&) const override {
        return ForwardResult{Latent::zeros(x.channels(), x.height(), x.width()), {}, {}};
    }

private:
    DenoiserSpec spec_;
};

RunConfig styled(std::uint64_t i) {
    RunConfig c;
    c.seed = i;
    c.content.content_id = static_cast<int>(i % 8);
    c.reference.seed = 100 + i;
    c.reference.condition = Condition{static_cast<int>((i + 3) % 8), static_cast<int>(i % 40)};
    return c;
}

TEST(Adain, HandExample) {
    const Latent x(1, 1, 4, {1, 2, 3, 4});
    const Latent ref(1, 1, 2, {-1, 1});
    const Latent y = adain(x, ref);
    const float want[] = {-1.3416408f, -0.4472136f, 0.4472136f, 1.3416408f};
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(y.data()[i], want[i], 1e-6);
}

TEST(Adain, ExactnessIdempotenceAndIdentity) {
    for (int trial = 0; trial < 200; ++trial) {
        Latent x = Latent::gaussian(4, 8, 8, 10 + trial);
        Latent r = Latent::gaussian(4, 8, 8, 5000 + trial);
        for (int c = 0; c < 4; ++c) {
            for (float& v : r.channel(c)) v = v * (0.5f + c) + 0.3f * c;
            for (float& v : x.channel(c)) v = 2.0f * v - 1.0f;
        }
        const Latent y = adain(x, r);
        for (int c = 0; c < 4; ++c) {
            double my, sy, mr, sr;
            oracle::channel_moments(y, c, my, sy);
            oracle::channel_moments(r, c, mr, sr);
            ASSERT_NEAR(my, mr, 1e-6);
            ASSERT_NEAR(sy, sr, 1e-6 * std::max(1.0, sr));
        }
        ASSERT_LT(oracle::max_abs_diff(adain(y, r), y), 1e-6);
        ASSERT_LT(oracle::max_abs_diff(adain(x, x), x), 1e-6);
    }
}

TEST(Adain, Errors) {
    EXPECT_ENGINE_ERROR(adain(Latent::filled(1, 2, 2, 3.0f), Latent::gaussian(1, 2, 2, 1)), ErrorCode::zero_variance);
    EXPECT_ENGINE_ERROR(adain(Latent::gaussian(2, 2, 2, 1), Latent::gaussian(1, 2, 2, 1)), ErrorCode::shape_mismatch);
}

TEST(ColorCalibrateStep, MatchesHandRolledComposition) {
    const Schedule s = make_schedule(50, 0.002, 0.2, 0.0);
    for (int t : {1, 15, 35, 50}) {
        const Latent xt = Latent::gaussian(4, 8, 8, t), eps = Latent::gaussian(4, 8, 8, 100 + t);
        const Latent ref = Latent::gaussian(4, 8, 8, 200 + t);
        const Latent x0 = adain(predicted_x0(xt, eps, t, s), ref);
        Latent want = x0;
        const double ap = s.alpha_bar(t - 1);
        for (std::size_t i = 0; i < want.size(); ++i) {
            want.data()[i] = static_cast<float>(std::sqrt(ap) * x0.data()[i] + std::sqrt(1.0 - ap) * eps.data()[i]);
        }
        EXPECT_LT(oracle::max_abs_diff(color_calibrate_step(xt, eps, ref, t, s), want), 1e-6) << "t=" << t;
    }
}

TEST(ColorCalibrateStep, MatchedStatisticsLeaveTheStepUnchanged) {
    const Schedule s = make_schedule(50, 0.002, 0.2, 0.0);
    const Latent xt = Latent::gaussian(4, 8, 8, 1), eps = Latent::gaussian(4, 8, 8, 2);
    const Latent x0 = predicted_x0(xt, eps, 20, s);
    EXPECT_LT(oracle::max_abs_diff(color_calibrate_step(xt, eps, x0, 20, s), ddim_step(xt, eps, 20, s)), 1e-5);
}

TEST(ReferenceStream, RealPerStepEncoding) {
    auto s = std::make_shared<const Schedule>(make_schedule(50, 0.002, 0.2, 0.0));
    ReferenceSource src;
    src.kind = ReferenceKind::real;
    src.x0_visual = Latent::gaussian(4, 16, 16, 3);
    src.seed = 9;
    const ReferenceStream a(src, s), b(src, s);
    EXPECT_TRUE(bitwise_equal(reference_latent_at(a, 0), src.x0_visual));
    EXPECT_FALSE(a.stateful());
    for (int t : {1, 20, 50}) {
        EXPECT_TRUE(bitwise_equal(a.latent_at(t), b.latent_at(t)));
        const Latent z = standardize_encoded(a.latent_at(t), src.x0_visual, t, *s);
        EXPECT_GT(ks_gaussianity(z.data()).p_value, 0.01) << "t=" << t;
    }
    EXPECT_ENGINE_ERROR(a.latent_at(51), ErrorCode::timestep_out_of_range);
}

TEST(ReferenceStream, StatefulStreamsServeOnlyTheCurrentTimestep) {
    auto s = std::make_shared<const Schedule>(make_schedule(10, 0.01, 0.2, 0.0));
    const auto d = build_denoiser(DenoiserSpec{}, s);
    ReferenceSource gen;
    gen.seed = 4;
    ReferenceStream g(gen, s, d.get());
    EXPECT_TRUE(g.stateful());
    EXPECT_ENGINE_ERROR(g.latent_at(9), ErrorCode::exhausted_trajectory);
    g.advance(10, Latent::zeros(4, 16, 16));
    EXPECT_EQ(g.current_timestep(), 9);
    EXPECT_ENGINE_ERROR(g.latent_at(10), ErrorCode::exhausted_trajectory);
    EXPECT_ENGINE_ERROR(g.advance(10, Latent::zeros(4, 16, 16)), ErrorCode::exhausted_trajectory);

    ReferenceSource shot;
    shot.kind = ReferenceKind::real;
    shot.encoding = RealEncoding::single_shot;
    shot.x0_visual = Latent::gaussian(4, 16, 16, 5);
    const ReferenceStream one(shot, s);
    EXPECT_TRUE(one.stateful());
    EXPECT_ENGINE_ERROR(one.latent_at(3), ErrorCode::exhausted_trajectory);
    EXPECT_ENGINE_ERROR(ReferenceStream(ReferenceSource{}, s), ErrorCode::invalid_config);
}

TEST(DdimInvertReference, ZeroNoiseTrajectoryIsAnalytic) {
    const Schedule s = make_schedule(10, 0.01, 0.2, 0.0);
    const ZeroDenoiser d;
    const Latent x0 = Latent::gaussian(4, 16, 16, 6);
    const auto zero = ddim_invert_reference(Latent::zeros(4, 16, 16), d, Condition::null(), s);
    ASSERT_EQ(zero.size(), 11u);
    for (const auto& z : zero)
        for (float v : z.data()) EXPECT_EQ(v, 0.0f);
    const auto traj = ddim_invert_reference(x0, d, Condition::null(), s);
    for (int t = 0; t <= 10; ++t) {
        Latent want = x0;
        for (float& v : want.data()) v = static_cast<float>(std::sqrt(s.alpha_bar(t)) * v);
        EXPECT_LT(relative_error(traj[t], want), 1e-6) << "t=" << t;
    }
    EXPECT_ENGINE_ERROR(ddim_invert_reference(x0, d, Condition::null(), make_schedule(10, 0.01, 0.2, 0.5)),
                        ErrorCode::nonzero_eta);
}

TEST(DdimInvertReference, RoundTripThroughSampling) {
    auto s = std::make_shared<const Schedule>(make_schedule(10, 0.01, 0.2, 0.0));
    DenoiserSpec spec;
    spec.kind = DenoiserKind::seeded_random;
    const auto d = build_denoiser(spec, s);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Latent x0 = Latent::gaussian(4, 16, 16, seed);
        const Condition c{1, 2};
        const auto traj = ddim_invert_reference(x0, *d, c, *s);
        EXPECT_LT(relative_error(ddim_sample(traj.back(), *d, c, *s), x0), 1e-3);
    }
}

TEST(Run, StyleOffIsVanillaCfgSampling) {
    RunConfig cfg = styled(3);
    cfg.style_enabled = false;
    auto s = std::make_shared<const Schedule>(cfg.schedule.build());
    const auto d = build_denoiser(cfg.denoiser, s);
    const RunResult r = run_t2i_with_style(cfg, *d, s);

    const GuidanceStack stack = cfg_stack(cfg.guidance.weights.w, cfg.content);
    Latent x = initial_noise(cfg.seed, 4, 16, 16);
    for (int t = 50; t >= 1; --t) {
        const Latent c = d->forward(x, t, cfg.content).eps;
        const Latent u = d->forward(x, t, Condition::null()).eps;
        x = ddim_step(x, compose(stack, {{stack.terms[0].pass, c}, {stack.terms[1].pass, u}}), t, *s);
    }
    EXPECT_TRUE(bitwise_equal(r.x0, x));
    EXPECT_TRUE(r.reference_x0.empty());
    for (const auto& step : r.manifest.steps) {
        EXPECT_FALSE(step.injected);
        EXPECT_FALSE(step.calibration.has_value());
    }
}

TEST(Run, EmptySwapSelectionFallsBackToCfg) {
    RunConfig off = styled(4);
    off.style_enabled = false;
    RunConfig empty = styled(4);
    empty.guidance.mode = GuidanceMode::cfg_swap;
    empty.swap.start_fraction = 1.5;
    empty.calibration.enabled = false;
    const RunResult a = run_t2i_with_style(off);
    const RunResult b = run_t2i_with_style(empty);
    EXPECT_TRUE(bitwise_equal(a.x0, b.x0));
    ASSERT_EQ(b.manifest.warnings.size(), 1u);
    EXPECT_EQ(b.manifest.stack.mode, StackMode::plain_cfg);
}

TEST(Run, RerunsAreBitIdentical) {
    for (GuidanceMode mode : {GuidanceMode::cfg_swap, GuidanceMode::nvqg_full, GuidanceMode::nvqg_simplified}) {
        RunConfig cfg = styled(5);
        cfg.guidance.mode = mode;
        cfg.schedule.num_steps = 20;
        cfg.calibration = CalibrationWindow::default_for(20);
        EXPECT_TRUE(bitwise_equal(run_t2i_with_style(cfg).x0, run_t2i_with_style(cfg).x0));
    }
}

TEST(Run, StochasticScheduleIsReproducible) {
    RunConfig cfg = styled(6);
    cfg.schedule.num_steps = 20;
    cfg.schedule.eta = 0.5;
    cfg.calibration = CalibrationWindow::default_for(20);
    const Latent a = run_t2i_with_style(cfg).x0;
    EXPECT_TRUE(bitwise_equal(a, run_t2i_with_style(cfg).x0));
    cfg.seed = 7;
    EXPECT_FALSE(bitwise_equal(a, run_t2i_with_style(cfg).x0));
}

TEST(Run, GeneratedReferenceIgnoresTheOriginalSeed) {
    RunConfig a = styled(8), b = styled(8);
    b.seed = 99;
    b.content.content_id = 2;
    a.schedule.num_steps = b.schedule.num_steps = 20;
    a.calibration = b.calibration = CalibrationWindow::default_for(20);
    const RunResult ra = run_t2i_with_style(a), rb = run_t2i_with_style(b);
    EXPECT_TRUE(bitwise_equal(ra.reference_x0, rb.reference_x0));
    EXPECT_FALSE(bitwise_equal(ra.x0, rb.x0));
    auto s = std::make_shared<const Schedule>(a.schedule.build());
    EXPECT_TRUE(bitwise_equal(render_reference(a, *build_denoiser(a.denoiser, s), s), ra.reference_x0));
}

TEST(Run, CalibrationRecordsAreSelfConsistent) {
    const RunResult r = run_t2i_with_style(styled(9));
    int calibrated = 0;
    for (const auto& step : r.manifest.steps) {
        const bool in_window = step.t <= 35 && step.t >= 15;
        ASSERT_EQ(step.calibration.has_value(), in_window) << "t=" << step.t;
        if (!step.calibration) continue;
        ++calibrated;
        for (int c = 0; c < 4; ++c) {
            EXPECT_NEAR(step.calibration->after.mean[c], step.calibration->target.mean[c], 1e-5);
            EXPECT_NEAR(step.calibration->after.stddev[c], step.calibration->target.stddev[c], 1e-5);
        }
        EXPECT_TRUE(step.injected);
        ASSERT_EQ(step.passes.size(), 2u);
        EXPECT_EQ(step.passes[0].coefficient, 9.0);
        EXPECT_EQ(step.passes[1].coefficient, -8.0);
    }
    EXPECT_EQ(calibrated, 21);
    EXPECT_EQ(r.manifest.swap_layers.size(), 2u);
}

TEST(Run, CalibrationClosesTheColourGapForRealReferences) {
    RunConfig base;
    auto s = std::make_shared<const Schedule>(base.schedule.build());
    const auto d = build_denoiser(base.denoiser, s);
    int ok = 0;
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 20; ++i) {
        RunConfig c = styled(i);
        const Latent x0v = render_reference(c, *d, s);
        c.reference.kind = ReferenceKind::real;
        c.reference.x0_visual = x0v;
        c.reference.seed = 500 + i;
        auto gap = [&](bool on) {
            RunConfig r = c;
            r.calibration.enabled = on;
            const auto a = channel_stats(run_t2i_with_style(r, *d, s).x0).mean;
            const auto b = channel_stats(x0v).mean;
            double g = 0.0;
            for (int k = 0; k < 4; ++k) g = std::max(g, std::abs(a[k] - b[k]));
            return g;
        };
        const double on = gap(true), off = gap(false);
        worst = std::max(worst, on);
        ok += on <= 0.05 && off > on;
    }
    EXPECT_EQ(ok, 20) << "worst calibrated gap " << worst;
}

TEST(Run, KsDiagnosticsForRealReference) {
    RunConfig cfg = styled(10);
    cfg.reference.kind = ReferenceKind::real;
    cfg.reference.x0_visual = Latent::gaussian(4, 16, 16, 77);
    cfg.ks_diagnostics = true;
    cfg.schedule.num_steps = 20;
    cfg.calibration = CalibrationWindow::default_for(20);
    const RunResult r = run_t2i_with_style(cfg);
    for (const auto& step : r.manifest.steps) {
        ASSERT_TRUE(step.reference_ks_p.has_value());
        EXPECT_GE(*step.reference_ks_p, 0.0);
        EXPECT_LE(*step.reference_ks_p, 1.0);
    }
    EXPECT_TRUE(bitwise_equal(r.reference_x0, cfg.reference.x0_visual));
}

TEST(Run, AttentionMapsAtConfiguredSteps) {
    RunConfig cfg = styled(11);
    cfg.attention.layers = {5, 6};
    cfg.attention.steps = {1, 20};
    const RunResult r = run_t2i_with_style(cfg);
    ASSERT_EQ(r.attention_maps.size(), 4u);
    for (const auto& m : r.attention_maps) {
        EXPECT_TRUE(m.timestep == 50 || m.timestep == 31);
        for (int i = 0; i < m.map.rows; ++i) {
            double sum = 0.0;
            for (int j = 0; j < m.map.cols; ++j) sum += m.map(i, j);
            EXPECT_NEAR(sum, 1.0, 1e-5);
        }
    }
}

TEST(Run, InvalidConfigsAreRejectedWithContext) {
    RunConfig cfg;
    cfg.attention.layers = {12};
    EXPECT_ENGINE_ERROR(run_t2i_with_style(cfg), ErrorCode::invalid_config);
    RunConfig late;
    late.schedule.num_steps = 10;
    late.calibration = CalibrationWindow::default_for(10);
    EXPECT_NO_THROW(late.validate());
    late.attention.layers = {5};
    EXPECT_ENGINE_ERROR(late.validate(), ErrorCode::invalid_config);
    RunConfig window;
    window.calibration.t_start = 60;
    EXPECT_ENGINE_ERROR(run_t2i_with_style(window), ErrorCode::invalid_config);
    RunConfig real;
    real.reference.kind = ReferenceKind::real;
    real.reference.x0_visual = Latent::gaussian(4, 8, 8, 1);
    EXPECT_ENGINE_ERROR(run_t2i_with_style(real), ErrorCode::invalid_config);
    try {
        run_t2i_with_style(cfg);
    } catch (const Error& e) {
        EXPECT_NE(e.context().find("config"), std::string::npos);
    }
}

TEST(CalibrationWindow, DefaultForRoundsFractionsOfT) {
    const CalibrationWindow w = CalibrationWindow::default_for(50);
    EXPECT_EQ(w.t_start, 35);
    EXPECT_EQ(w.t_end, 15);
    EXPECT_EQ(CalibrationWindow::default_for(10).t_start, 7);
    EXPECT_EQ(CalibrationWindow::default_for(10).t_end, 3);
    EXPECT_TRUE(w.contains(35));
    EXPECT_FALSE(w.contains(36));
}

}  // namespace
}  // namespace styleswap
