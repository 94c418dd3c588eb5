// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "cli.hpp"
#include "selftest.hpp"
#include "styleswap/io/manifest.hpp"
#include "styleswap/io/tensor.hpp"

namespace styleswap::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome invoke(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / "styleswap_cli_tests" /
               ::testing::UnitTest::GetInstance()->current_test_info()->name();
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        config_ = write_config(R"({
          "schedule": {"num_steps": 20},
          "content": {"content_id": 1},
          "style": {"reference": {"condition": {"content_id": 0, "style_id": 3}, "seed": 2},
                    "calibration": {"t_start": 14, "t_end": 6}},
          "attention": {"layers": [5, 6], "steps": [5]},
          "sweep": {"fractions": [0.0, 0.5], "seeds": [0, 1]},
          "invert_compare": {"seeds": [0, 1, 2]},
          "output": {"prefix": "t"}
        })");
    }

    std::string write_config(const std::string& text, const std::string& name = "config.json") {
        io::write_file(dir_ / name, text);
        return (dir_ / name).string();
    }

    std::string out(const std::string& sub) const { return (dir_ / sub).string(); }

    fs::path dir_;
    std::string config_;
};

TEST_F(CliTest, GenerateIsByteReproducible) {
    const Outcome a = invoke({"generate", "--config", config_, "--out", out("a"), "--seed", "7"});
    const Outcome b = invoke({"generate", "--config", config_, "--out", out("b"), "--seed", "7"});
    ASSERT_EQ(a.code, exit_ok) << a.err;
    ASSERT_EQ(b.code, exit_ok) << b.err;
    for (const char* f : {"t_seed7.sktn", "t_seed7_reference.sktn"}) {
        EXPECT_EQ(io::read_file(dir_ / "a" / f), io::read_file(dir_ / "b" / f)) << f;
    }
    EXPECT_TRUE(fs::exists(dir_ / "a" / "t_seed7.png"));
    const std::string manifest = io::read_file(dir_ / "a" / "t_manifest.json");
    EXPECT_TRUE(io::check_manifest(manifest).empty());
    EXPECT_EQ(json::parse(manifest)["runs"][0]["seed"], 7);
}

TEST_F(CliTest, StyleOffMatchesPlainCfgConfig) {
    const Outcome off = invoke({"generate", "--config", config_, "--out", out("off"), "--set", "style.mode=off"});
    const Outcome cfg = invoke({"generate", "--config", config_, "--out", out("cfg"), "--set",
                                "style.guidance.mode=plain_cfg", "--set", "style.calibration.enabled=false"});
    ASSERT_EQ(off.code, exit_ok) << off.err;
    ASSERT_EQ(cfg.code, exit_ok) << cfg.err;
    EXPECT_EQ(io::read_file(dir_ / "off" / "t_seed0.sktn"), io::read_file(dir_ / "cfg" / "t_seed0.sktn"));
    EXPECT_FALSE(fs::exists(dir_ / "off" / "t_seed0_reference.sktn"));
}

TEST_F(CliTest, BatchWritesOneOutputPerSeedAndOneManifest) {
    const Outcome r = invoke({"generate", "--config", config_, "--out", out("batch"), "--batch", "6", "--jobs", "2",
                              "--set", "output.write_png=false"});
    ASSERT_EQ(r.code, exit_ok) << r.err;
    int latents = 0, manifests = 0;
    for (const auto& e : fs::directory_iterator(dir_ / "batch")) {
        const std::string n = e.path().filename().string();
        latents += n.ends_with(".sktn") && n.find("reference") == std::string::npos;
        manifests += n.ends_with("manifest.json");
    }
    EXPECT_EQ(latents, 6);
    EXPECT_EQ(manifests, 1);
    EXPECT_EQ(json::parse(io::read_file(dir_ / "batch" / "t_manifest.json"))["runs"].size(), 6u);
}

TEST_F(CliTest, InvalidConfigExitsTwoWithoutWriting) {
    const std::string bad = write_config(R"({"style": {"guidance": {"w_visal": 1}}})", "bad.json");
    const Outcome r = invoke({"generate", "--config", bad, "--out", out("never")});
    EXPECT_EQ(r.code, exit_config_failure);
    EXPECT_NE(r.err.find("w_visal"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir_ / "never"));

    EXPECT_EQ(invoke({"generate", "--config", out("missing.json")}).code, exit_config_failure);
    EXPECT_EQ(invoke({"generate", "--config", config_, "--set", "attention.layers=[9]", "--out", out("never")}).code,
              exit_config_failure);
    EXPECT_EQ(invoke({"frobnicate"}).code, exit_config_failure);
    EXPECT_EQ(invoke({}).code, exit_config_failure);
    EXPECT_FALSE(fs::exists(dir_ / "never"));
}

TEST_F(CliTest, AttnMapsExportsConfiguredArtifacts) {
    const Outcome r = invoke({"attn-maps", "--config", config_, "--out", out("maps"), "--batch", "2"});
    ASSERT_EQ(r.code, exit_ok) << r.err;
    for (int seed : {0, 1}) {
        for (int layer : {5, 6}) {
            const std::string base = "t_seed" + std::to_string(seed) + "_attn_L" + std::to_string(layer) + "_step5";
            EXPECT_TRUE(fs::exists(dir_ / "maps" / (base + ".sktn"))) << base;
            EXPECT_TRUE(fs::exists(dir_ / "maps" / (base + ".png"))) << base;
        }
    }
    const json m = json::parse(io::read_file(dir_ / "maps" / "t_attn_manifest.json"));
    EXPECT_EQ(m["metrics"]["attention_maps"], 4);
    EXPECT_EQ(m["artifacts"].size(), 8u);

    const Outcome none = invoke({"attn-maps", "--config", config_, "--out", out("none"), "--set", "attention.layers=[]"});
    EXPECT_EQ(none.code, exit_config_failure);
    EXPECT_FALSE(fs::exists(dir_ / "none"));
}

TEST_F(CliTest, SweepAndInvertCompareWriteTables) {
    const Outcome s = invoke({"sweep-layers", "--config", config_, "--out", out("sweep")});
    ASSERT_EQ(s.code, exit_ok) << s.err;
    const std::string csv = io::read_file(dir_ / "sweep" / "t_sweep.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    EXPECT_TRUE(fs::exists(dir_ / "sweep" / "t_sweep_manifest.json"));

    const Outcome i = invoke({"invert-compare", "--config", config_, "--out", out("inv")});
    ASSERT_EQ(i.code, exit_ok) << i.err;
    const std::string table = io::read_file(dir_ / "inv" / "t_inversion.csv");
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 22);
    EXPECT_TRUE(fs::exists(dir_ / "inv" / "t_inversion.png"));
    EXPECT_NE(i.out.find("stochastic encoding"), std::string::npos);
}

TEST_F(CliTest, SelftestPassesAndDetectsCorruption) {
    const Outcome ok = invoke({"selftest"});
    EXPECT_EQ(ok.code, exit_ok) << ok.err;
    EXPECT_EQ(ok.out.find("FAILED"), std::string::npos);
    const Outcome bad = invoke({"selftest", "--corrupt-schedule"});
    EXPECT_EQ(bad.code, exit_runtime_failure);
    EXPECT_NE(bad.out.find("FAILED"), std::string::npos);
}

TEST(Selftest, EveryCheckPassesOnTheIntactEngine) {
    const auto results = run_selftest();
    EXPECT_GE(results.size(), 8u);
    for (const auto& r : results) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}

}  // namespace
}  // namespace styleswap::cli
