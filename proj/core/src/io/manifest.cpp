// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include "styleswap/io/manifest.hpp"

#include <cmath>

#include "json_codec.hpp"

namespace styleswap::io {

using detail::json;

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json run_to_json(const RunManifest& m) {
    json steps = json::array();
    for (const auto& s : m.steps) {
        json passes = json::array();
        for (const auto& p : s.passes) {
            json pj{{"pass", detail::pass_to_json(p.pass)}, {"coefficient", p.coefficient}, {"eps_mean", p.eps_mean}};
            pj["tensor"] = p.tensor_path.empty() ? json(nullptr) : json(p.tensor_path);
            passes.push_back(pj);
        }
        json cal = nullptr;
        if (s.calibration) {
            cal = json{{"before", detail::stats_to_json(s.calibration->before)},
                       {"after", detail::stats_to_json(s.calibration->after)},
                       {"target", detail::stats_to_json(s.calibration->target)}};
        }
        steps.push_back(json{{"step", s.step},
                             {"t", s.t},
                             {"injected", s.injected},
                             {"passes", passes},
                             {"composed_mean", s.composed_mean},
                             {"calibration", cal},
                             {"reference_ks_p", optional_number(s.reference_ks_p)}});
    }
    json layers = json::array();
    for (const auto& l : m.swap_layers) layers.push_back(detail::layer_to_json(l));
    json arch = json::array();
    for (const auto& l : m.config.denoiser.attention_layout.layers) arch.push_back(detail::layer_to_json(l));
    return json{{"seed", m.config.seed},
                {"reference_seed", m.config.reference.seed},
                {"architecture", arch},
                {"stack", detail::stack_to_json(m.stack)},
                {"swap_layers", layers},
                {"warnings", m.warnings},
                {"steps", steps},
                {"metrics", m.metrics},
                {"artifacts", m.artifacts}};
}

}  // namespace

std::string manifest_to_json(const ManifestDocument& doc, bool include_wall_clock, int indent) {
    json runs = json::array();
    for (const auto& r : doc.runs) runs.push_back(run_to_json(r));
    json j{{"engine_version", kEngineVersion},
           {"command", doc.command},
           {"proxy_metrics_note",
            "style_gram_distance, content_structure_corr, leakage_structure_corr and diversity_pairwise_l2 are "
            "desk-scale proxies for DINO, CLIP and LPIPS scores"},
           {"config", detail::config_json(doc.config)},
           {"runs", runs},
           {"metrics", doc.metrics},
           {"artifacts", doc.artifacts}};
    if (include_wall_clock) j["wall_clock_seconds"] = doc.wall_clock_seconds;
    return j.dump(indent);
}

std::vector<std::string> check_manifest(std::string_view json_text) {
    std::vector<std::string> problems;
    const json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) return {"manifest is not valid JSON"};
    auto need = [&](const json& o, const char* key, auto pred, const std::string& where) {
        if (!o.is_object() || !o.contains(key) || !pred(o.at(key))) {
            problems.push_back(where + "." + key + " missing or of the wrong type");
            return false;
        }
        return true;
    };
    auto is_str = [](const json& v) { return v.is_string(); };
    auto is_arr = [](const json& v) { return v.is_array(); };
    auto is_obj = [](const json& v) { return v.is_object(); };
    auto is_num = [](const json& v) { return v.is_number(); };
    need(j, "engine_version", is_str, "manifest");
    need(j, "command", is_str, "manifest");
    need(j, "config", is_obj, "manifest");
    need(j, "metrics", is_obj, "manifest");
    need(j, "artifacts", is_arr, "manifest");
    if (j.contains("wall_clock_seconds") && !j["wall_clock_seconds"].is_number()) {
        problems.push_back("manifest.wall_clock_seconds must be a number");
    }
    if (!need(j, "runs", is_arr, "manifest")) return problems;
    for (std::size_t r = 0; r < j["runs"].size(); ++r) {
        const json& run = j["runs"][r];
        const std::string rw = "runs[" + std::to_string(r) + "]";
        if (!need(run, "stack", is_obj, rw) || !need(run, "steps", is_arr, rw)) continue;
        need(run, "seed", is_num, rw);
        need(run, "artifacts", is_arr, rw);
        for (std::size_t k = 0; k < run["steps"].size(); ++k) {
            const json& st = run["steps"][k];
            const std::string sw = rw + ".steps[" + std::to_string(k) + "]";
            if (!need(st, "passes", is_arr, sw) || !need(st, "composed_mean", is_arr, sw)) continue;
            need(st, "t", is_num, sw);
            const json& cm = st["composed_mean"];
            std::vector<double> recomposed(cm.size(), 0.0);
            bool ok = true;
            for (const json& p : st["passes"]) {
                if (!p.is_object() || !p.contains("coefficient") || !p.contains("eps_mean") ||
                    !p["eps_mean"].is_array() || p["eps_mean"].size() != cm.size()) {
                    problems.push_back(sw + ": malformed pass record");
                    ok = false;
                    break;
                }
                for (std::size_t c = 0; c < cm.size(); ++c) {
                    recomposed[c] += p["coefficient"].get<double>() * p["eps_mean"][c].get<double>();
                }
            }
            if (ok) {
                for (std::size_t c = 0; c < cm.size(); ++c) {
                    const double want = cm[c].get<double>();
                    if (std::abs(recomposed[c] - want) > 1e-6 * std::max(1.0, std::abs(want))) {
                        problems.push_back(sw + ": recomposed mean of channel " + std::to_string(c) +
                                           " differs from the logged composed mean");
                    }
                }
            }
            if (st.contains("calibration") && st["calibration"].is_object()) {
                const json& cal = st["calibration"];
                for (const char* stat : {"mean", "std"}) {
                    const json& a = cal["after"][stat];
                    const json& b = cal["target"][stat];
                    if (!a.is_array() || !b.is_array() || a.size() != b.size()) {
                        problems.push_back(sw + ": malformed calibration record");
                        break;
                    }
                    for (std::size_t c = 0; c < a.size(); ++c) {
                        if (std::abs(a[c].get<double>() - b[c].get<double>()) > 1e-6) {
                            problems.push_back(sw + ": calibrated " + stat + " of channel " + std::to_string(c) +
                                               " does not match the target");
                        }
                    }
                }
            }
        }
    }
    return problems;
}

}  // namespace styleswap::io
