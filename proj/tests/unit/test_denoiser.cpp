// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "styleswap/denoiser.hpp"
#include "test_util.hpp"

namespace styleswap {
namespace {

std::shared_ptr<const Schedule> schedule50() {
    return std::make_shared<const Schedule>(make_schedule(50, 0.002, 0.2, 0.0));
}

DenoiserSpec spec_of(DenoiserKind kind, std::uint64_t seed = 0) {
    DenoiserSpec s;
    s.kind = kind;
    s.seed = seed;
    return s;
}

class BothKinds : public ::testing::TestWithParam<DenoiserKind> {};

TEST_P(BothKinds, DeterministicAndSeedSensitive) {
    const auto sched = schedule50();
    const auto a = build_denoiser(spec_of(GetParam(), 3), sched);
    const auto b = build_denoiser(spec_of(GetParam(), 3), sched);
    const auto c = build_denoiser(spec_of(GetParam(), 4), sched);
    const Latent x = Latent::gaussian(4, 16, 16, 7);
    const Condition cond{2, 5};
    const Latent ea = a->forward(x, 30, cond).eps;
    EXPECT_TRUE(bitwise_equal(ea, a->forward(x, 30, cond).eps));
    EXPECT_TRUE(bitwise_equal(ea, b->forward(x, 30, cond).eps));
    EXPECT_FALSE(bitwise_equal(ea, c->forward(x, 30, cond).eps));
    EXPECT_TRUE(ea.all_finite());
}

TEST_P(BothKinds, LayoutAndEmptyPlan) {
    const auto d = build_denoiser(spec_of(GetParam()), schedule50());
    const ArchitectureManifest& m = d->architecture();
    ASSERT_EQ(m.layers.size(), 7u);
    const Section want[] = {Section::down, Section::down, Section::bottleneck, Section::up,
                            Section::up,   Section::up,   Section::up};
    for (int i = 0; i < 7; ++i) {
        EXPECT_EQ(m.layers[i].index, i);
        EXPECT_EQ(m.layers[i].section, want[i]);
    }
    const Latent x = Latent::gaussian(4, 16, 16, 8);
    const ForwardResult r = d->forward(x, 12, Condition{1, std::nullopt}, TapPlan{}, InjectionSources{});
    EXPECT_TRUE(r.captured.empty());
    EXPECT_TRUE(r.maps.empty());
    EXPECT_TRUE(bitwise_equal(r.eps, d->forward(x, 12, Condition{1, std::nullopt}).eps));
}

TEST_P(BothKinds, SelfInjectionIsIdentity) {
    const auto d = build_denoiser(spec_of(GetParam()), schedule50());
    const Latent x = Latent::gaussian(4, 16, 16, 9);
    const Condition c{3, 7};
    TapPlan capture;
    for (const auto& l : d->architecture().layers) capture.captures[l] = selector::all;
    const ForwardResult plain = d->forward(x, 25, c, capture);
    EXPECT_EQ(plain.captured.size(), 7u);
    InjectionSources src;
    src.reference = &plain.captured;
    for (InjectionMode mode : {InjectionMode::kv_inject, InjectionMode::q_inject}) {
        TapPlan inject;
        for (const auto& l : d->architecture().layers) inject.injections[l] = Injection{mode, Process::reference};
        EXPECT_TRUE(bitwise_equal(d->forward(x, 25, c, inject, src).eps, plain.eps));
    }
}

TEST_P(BothKinds, InjectionOnlyTouchesPlannedLayers) {
    const auto d = build_denoiser(spec_of(GetParam()), schedule50());
    const Latent x = Latent::gaussian(4, 16, 16, 10), xr = Latent::gaussian(4, 16, 16, 11);
    const LayerAddress l6{Section::up, 6};
    TapPlan capture;
    for (const auto& l : d->architecture().layers) capture.captures[l] = selector::all;
    const ForwardResult ref = d->forward(xr, 25, Condition{0, 9}, capture);
    TapPlan inject = capture;
    inject.injections[l6] = Injection{InjectionMode::kv_inject, Process::reference};
    InjectionSources src;
    src.reference = &ref.captured;
    const ForwardResult plain = d->forward(x, 25, Condition{1, std::nullopt}, capture);
    const ForwardResult mixed = d->forward(x, 25, Condition{1, std::nullopt}, inject, src);
    // Captures are pre-injection, and layers before the injected one see identical inputs.
    for (const auto& l : d->architecture().layers) {
        if (l.index > l6.index) continue;
        EXPECT_EQ(*plain.captured.find(l, 25)->q, *mixed.captured.find(l, 25)->q) << l.index;
        EXPECT_EQ(*plain.captured.find(l, 25)->k, *mixed.captured.find(l, 25)->k) << l.index;
    }
    EXPECT_FALSE(bitwise_equal(plain.eps, mixed.eps));
}

TEST_P(BothKinds, NullConditionEmbedsToZero) {
    const auto d = build_denoiser(spec_of(GetParam()), schedule50());
    for (float v : d->embed(Condition::null())) EXPECT_EQ(v, 0.0f);
    const Latent x = Latent::gaussian(4, 16, 16, 12);
    const std::vector<float> zero(d->embed(Condition::null()).size(), 0.0f);
    EXPECT_TRUE(bitwise_equal(d->forward(x, 5, Condition::null()).eps, d->forward_embedded(x, 5, zero, {}, {}).eps));
}

TEST_P(BothKinds, ForwardErrors) {
    const auto d = build_denoiser(spec_of(GetParam()), schedule50());
    const Latent x = Latent::gaussian(4, 16, 16, 13);
    EXPECT_ENGINE_ERROR(d->forward(Latent::zeros(3, 16, 16), 5, Condition::null()), ErrorCode::shape_mismatch);
    EXPECT_ENGINE_ERROR(d->forward(x, 5, Condition{8, std::nullopt}), ErrorCode::invalid_range);
    EXPECT_ENGINE_ERROR(d->forward(x, 5, Condition{std::nullopt, 40}), ErrorCode::invalid_range);
    TapPlan bad;
    bad.captures[LayerAddress{Section::up, 9}] = selector::all;
    EXPECT_ENGINE_ERROR(d->forward(x, 5, Condition::null(), bad), ErrorCode::invalid_layer);
    TapPlan wrong_section;
    wrong_section.captures[LayerAddress{Section::down, 5}] = selector::all;
    EXPECT_ENGINE_ERROR(d->forward(x, 5, Condition::null(), wrong_section), ErrorCode::invalid_layer);
    TapPlan inject;
    inject.injections[LayerAddress{Section::up, 5}] = Injection{InjectionMode::kv_inject, Process::reference};
    EXPECT_ENGINE_ERROR(d->forward(x, 5, Condition::null(), inject), ErrorCode::store_missing);
    FeatureStore other_t(Process::reference);
    TapPlan cap;
    cap.captures[LayerAddress{Section::up, 5}] = selector::all;
    other_t = d->forward(x, 6, Condition::null(), cap).captured;
    InjectionSources src;
    src.reference = &other_t;
    EXPECT_ENGINE_ERROR(d->forward(x, 5, Condition::null(), inject, src), ErrorCode::store_missing);
}

TEST_P(BothKinds, AttentionMapsRecordedOnRequest) {
    const auto d = build_denoiser(spec_of(GetParam()), schedule50());
    TapPlan plan;
    plan.attn_map_layers = {LayerAddress{Section::up, 5}, LayerAddress{Section::up, 6}};
    plan.attn_map_timesteps = {31};
    const Latent x = Latent::gaussian(4, 16, 16, 14);
    EXPECT_TRUE(d->forward(x, 30, Condition{1, 1}, plan).maps.empty());
    const ForwardResult r = d->forward(x, 31, Condition{1, 1}, plan);
    ASSERT_EQ(r.maps.size(), 2u);
    for (const auto& m : r.maps) {
        EXPECT_EQ(m.map.rows, d->spec().tokens());
        for (int i = 0; i < m.map.rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < m.map.cols; ++j) s += m.map(i, j);
            EXPECT_NEAR(s, 1.0, 1e-5);
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Kinds, BothKinds,
                         ::testing::Values(DenoiserKind::seeded_random, DenoiserKind::structured_style),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Denoiser, KindParsingAndSpecValidation) {
    EXPECT_EQ(denoiser_kind_from_string("seeded_random"), DenoiserKind::seeded_random);
    EXPECT_ENGINE_ERROR(denoiser_kind_from_string("unet"), ErrorCode::unsupported_kind);
    DenoiserSpec s;
    s.height = 15;
    EXPECT_ENGINE_ERROR(build_denoiser(s, schedule50()), ErrorCode::invalid_range);
    EXPECT_ENGINE_ERROR(build_denoiser(DenoiserSpec{}, nullptr), ErrorCode::invalid_config);
    EXPECT_NO_THROW(build_denoiser(spec_of(DenoiserKind::seeded_random), nullptr));
}

TEST(StructuredDenoiser, KvInjectionPullsColourTowardReference) {
    const auto sched = schedule50();
    const auto d = build_denoiser(DenoiserSpec{}, sched);
    const std::vector<LayerAddress> ups = {{Section::up, 3}, {Section::up, 4}, {Section::up, 5}, {Section::up, 6}};
    int closer = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const int t = 30;
        const Condition ref_c{(trial + 3) % 8, trial % 40};
        const Condition c{trial % 8, std::nullopt};
        const Latent xr = Latent::gaussian(4, 16, 16, 1000 + trial);
        const Latent x = Latent::gaussian(4, 16, 16, 2000 + trial);
        TapPlan cap;
        for (const auto& l : ups) cap.captures[l] = selector::kv;
        const ForwardResult ref = d->forward(xr, t, ref_c, cap);
        TapPlan inject;
        for (const auto& l : ups) inject.injections[l] = Injection{InjectionMode::kv_inject, Process::reference};
        InjectionSources src;
        src.reference = &ref.captured;
        const auto target = channel_stats(predicted_x0(xr, ref.eps, t, *sched)).mean;
        const auto plain = channel_stats(predicted_x0(x, d->forward(x, t, c).eps, t, *sched)).mean;
        const auto mixed = channel_stats(predicted_x0(x, d->forward(x, t, c, inject, src).eps, t, *sched)).mean;
        double dp = 0.0, dm = 0.0;
        for (int k = 0; k < 4; ++k) {
            dp += std::abs(plain[k] - target[k]);
            dm += std::abs(mixed[k] - target[k]);
        }
        closer += dm < dp;
    }
    EXPECT_GE(closer, 18);
}

}  // namespace
}  // namespace styleswap
