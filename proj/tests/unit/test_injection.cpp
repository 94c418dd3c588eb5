// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "styleswap/injection.hpp"
#include "styleswap/rng.hpp"
#include "test_util.hpp"

namespace styleswap {
namespace {

std::vector<int> indices(const std::vector<LayerAddress>& ls) {
    std::vector<int> out;
    for (const auto& l : ls) out.push_back(l.index);
    return out;
}

CapturedTensors capture(const AttentionTensors& at) {
    return CapturedTensors{at.heads, at.head_dim, at.q, at.k, at.v};
}

AttentionTensors instance(std::uint64_t seed, int tokens = 4, int heads = 2, int d = 3) {
    SplitMix64 rng(seed);
    return AttentionTensors{heads, d, oracle::random_matrix(tokens, heads * d, rng),
                            oracle::random_matrix(tokens, heads * d, rng), oracle::random_matrix(tokens, heads * d, rng)};
}

TEST(SelectUpblockLayers, Examples) {
    const ArchitectureManifest m = ArchitectureManifest::default_layout();
    EXPECT_EQ(indices(select_upblock_layers(m, 0.0).layers), (std::vector<int>{3, 4, 5, 6}));
    EXPECT_EQ(indices(select_upblock_layers(m, 0.5).layers), (std::vector<int>{5, 6}));
    const UpblockSelection none = select_upblock_layers(m, 1.0 + 1e-9);
    EXPECT_TRUE(none.layers.empty());
    EXPECT_TRUE(none.warning.has_value());
    EXPECT_FALSE(select_upblock_layers(m, 0.0).warning.has_value());
}

TEST(SelectUpblockLayers, EmptyManifestErrors) {
    EXPECT_ENGINE_ERROR(select_upblock_layers(ArchitectureManifest{}, 0.0), ErrorCode::empty_manifest);
}

TEST(SelectUpblockLayers, NeverSelectsDownOrBottleneck) {
    SplitMix64 rng(0x5E1);
    for (int trial = 0; trial < 200; ++trial) {
        ArchitectureManifest m;
        const int nd = static_cast<int>(rng.next() % 4), nb = static_cast<int>(rng.next() % 3),
                  nu = static_cast<int>(rng.next() % 6);
        int idx = 0;
        for (int i = 0; i < nd; ++i) m.layers.push_back({Section::down, idx++});
        for (int i = 0; i < nb; ++i) m.layers.push_back({Section::bottleneck, idx++});
        for (int i = 0; i < nu; ++i) m.layers.push_back({Section::up, idx++});
        if (m.layers.empty()) continue;
        const double f = 1.2 * rng.uniform();
        for (const auto& l : select_upblock_layers(m, f).layers) EXPECT_EQ(l.section, Section::up);
    }
}

TEST(ApplyInjection, NoneIsBitwiseIdentity) {
    const AttentionTensors at = instance(1);
    const AttentionTensors out = apply_injection(at, InjectionMode::none, nullptr);
    EXPECT_EQ(out.q, at.q);
    EXPECT_EQ(out.k, at.k);
    EXPECT_EQ(out.v, at.v);
}

TEST(ApplyInjection, SamePassSubstitutionLeavesOutputUnchanged) {
    const AttentionTensors at = instance(2);
    const CapturedTensors self = capture(at);
    EXPECT_EQ(attention(apply_injection(at, InjectionMode::kv_inject, &self)), attention(at));
    EXPECT_EQ(attention(apply_injection(at, InjectionMode::q_inject, &self)), attention(at));
}

TEST(ApplyInjection, KvInjectionMatchesCrossProcessOracle) {
    const AttentionTensors a = instance(3, 2, 1, 2), b = instance(4, 2, 1, 2);
    const CapturedTensors store = capture(b);
    const AttentionTensors mixed = apply_injection(a, InjectionMode::kv_inject, &store);
    EXPECT_EQ(mixed.q, a.q);
    EXPECT_EQ(mixed.k, b.k);
    EXPECT_EQ(mixed.v, b.v);
    AttentionTensors want{1, 2, a.q, b.k, b.v};
    const auto ref = oracle::attention(want);
    const Matrix o = attention(mixed);
    for (int i = 0; i < 2; ++i)
        for (int c = 0; c < 2; ++c) EXPECT_NEAR(o(i, c), ref[i][c], 1e-6);
}

TEST(ApplyInjection, QueryInjectionKeepsKeysAndValues) {
    const AttentionTensors a = instance(5), b = instance(6);
    const CapturedTensors store = capture(b);
    const AttentionTensors mixed = apply_injection(a, InjectionMode::q_inject, &store);
    EXPECT_EQ(mixed.q, b.q);
    EXPECT_EQ(mixed.k, a.k);
    EXPECT_EQ(mixed.v, a.v);
}

TEST(ApplyInjection, SubstitutionIsStateless) {
    const AttentionTensors a = instance(7), b = instance(8);
    const CapturedTensors sb = capture(b), sa = capture(a);
    const AttentionTensors once = apply_injection(a, InjectionMode::kv_inject, &sb);
    EXPECT_EQ(attention(apply_injection(once, InjectionMode::kv_inject, &sa)), attention(a));
}

TEST(ApplyInjection, Errors) {
    const AttentionTensors a = instance(9, 4);
    const CapturedTensors fewer = capture(instance(10, 3));
    EXPECT_ENGINE_ERROR(apply_injection(a, InjectionMode::kv_inject, &fewer), ErrorCode::shape_mismatch);
    const CapturedTensors other_heads = capture(instance(11, 4, 1, 6));
    EXPECT_ENGINE_ERROR(apply_injection(a, InjectionMode::kv_inject, &other_heads), ErrorCode::shape_mismatch);
    CapturedTensors q_only = capture(instance(12, 4));
    q_only.k.reset();
    EXPECT_ENGINE_ERROR(apply_injection(a, InjectionMode::kv_inject, &q_only), ErrorCode::store_missing);
    EXPECT_ENGINE_ERROR(apply_injection(a, InjectionMode::q_inject, nullptr), ErrorCode::store_missing);
}

TEST(FeatureStore, ExactMatchLookup) {
    FeatureStore s(Process::reference);
    const LayerAddress l{Section::up, 5};
    s.put(l, 10, capture(instance(13)));
    EXPECT_NE(s.find(l, 10), nullptr);
    EXPECT_EQ(s.find(l, 9), nullptr);
    EXPECT_EQ(s.find(LayerAddress{Section::up, 6}, 10), nullptr);
    EXPECT_ENGINE_ERROR(s.at(l, 9, selector::kv), ErrorCode::store_missing);
    CapturedTensors kv_only = capture(instance(14));
    kv_only.q.reset();
    s.put(l, 11, kv_only);
    EXPECT_NO_THROW(s.at(l, 11, selector::kv));
    EXPECT_ENGINE_ERROR(s.at(l, 11, selector::q), ErrorCode::store_missing);
}

TEST(CaptureAttentionMap, SingleHeadAndAverage) {
    const LayerAddress l{Section::up, 6};
    const Matrix m(2, 2, {0.25f, 0.75f, 1.0f, 0.0f});
    const Matrix n(2, 2, {0.75f, 0.25f, 0.5f, 0.5f});
    EXPECT_EQ(capture_attention_map(l, 31, {m}).map, m);
    const AttentionMap avg = capture_attention_map(l, 31, {m, n});
    EXPECT_EQ(avg.map, Matrix(2, 2, {0.5f, 0.5f, 0.75f, 0.25f}));
    EXPECT_EQ(avg.timestep, 31);
    EXPECT_EQ(avg.layer, l);
}

TEST(CaptureAttentionMap, UncapturedLayerErrors) {
    EXPECT_ENGINE_ERROR(capture_attention_map(LayerAddress{Section::up, 3}, 1, {}), ErrorCode::invalid_layer);
}

TEST(CaptureAttentionMap, DriftedRowsAreRenormalized) {
    const AttentionMap m = capture_attention_map(LayerAddress{Section::up, 3}, 1, {Matrix(1, 2, {0.2f, 0.2f})});
    EXPECT_NEAR(m.map(0, 0) + m.map(0, 1), 1.0, 1e-6);
}

TEST(QueryRegionProfile, Examples) {
    std::vector<Matrix> heads;
    (void)attention(instance(15, 6, 2, 2), heads);
    const AttentionMap map = capture_attention_map(LayerAddress{Section::up, 5}, 20, heads);
    const auto one = query_region_profile(map, {2});
    for (int j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(one[j], map.map(2, j));
    const auto all = query_region_profile(map, {0, 1, 2, 3, 4, 5});
    const auto lo = query_region_profile(map, {0, 1, 2});
    const auto hi = query_region_profile(map, {3, 4, 5});
    double sum = 0.0;
    for (int j = 0; j < 6; ++j) {
        double col = 0.0;
        for (int i = 0; i < 6; ++i) col += map.map(i, j);
        EXPECT_NEAR(all[j], col / 6.0, 1e-7);
        EXPECT_NEAR(0.5 * (lo[j] + hi[j]), all[j], 1e-7);
        sum += all[j];
    }
    EXPECT_NEAR(sum, 1.0, 1e-5);
    EXPECT_ENGINE_ERROR(query_region_profile(map, {}), ErrorCode::empty_selection);
    EXPECT_ENGINE_ERROR(query_region_profile(map, {6}), ErrorCode::invalid_range);
}

TEST(RunAttentionLayer, CapturesPreInjectionTensorsAndInjects) {
    const LayerAddress l{Section::up, 5};
    const AttentionTensors mine = instance(16), theirs = instance(17);
    FeatureStore ref(Process::reference);
    ref.put(l, 12, capture(theirs));
    TapPlan plan;
    plan.captures[l] = selector::all;
    plan.injections[l] = Injection{InjectionMode::kv_inject, Process::reference};
    InjectionSources src;
    src.reference = &ref;
    FeatureStore captured;
    std::vector<AttentionMap> maps;
    LayerContext ctx{plan, src, 12, captured, maps};
    const Matrix o = run_attention_layer(l, mine, ctx);
    EXPECT_EQ(o, attention(AttentionTensors{2, 3, mine.q, theirs.k, theirs.v}));
    const CapturedTensors* c = captured.find(l, 12);
    ASSERT_NE(c, nullptr);
    EXPECT_EQ(*c->k, mine.k);
    EXPECT_EQ(*c->v, mine.v);

    InjectionSources none;
    LayerContext missing{plan, none, 12, captured, maps};
    EXPECT_ENGINE_ERROR(run_attention_layer(l, mine, missing), ErrorCode::store_missing);
}

}  // namespace
}  // namespace styleswap
