// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include "styleswap/io/config.hpp"

#include <set>

#include "json_codec.hpp"
#include "styleswap/error.hpp"
#include "styleswap/io/image.hpp"
#include "styleswap/io/tensor.hpp"

namespace styleswap::io {

namespace detail {

json condition_to_json(const Condition& c) {
    json j = json::object();
    j["content_id"] = c.content_id ? json(*c.content_id) : json(nullptr);
    j["style_id"] = c.style_id ? json(*c.style_id) : json(nullptr);
    return j;
}

json layer_to_json(const LayerAddress& l) { return json{{"section", to_string(l.section)}, {"index", l.index}}; }

json pass_to_json(const PassSpec& p) {
    return json{{"condition", condition_to_json(p.condition)},
                {"injection", to_string(p.injection)},
                {"source", to_string(p.source)},
                {"role", to_string(p.role)}};
}

json stack_to_json(const GuidanceStack& s) {
    json terms = json::array();
    for (const auto& t : s.terms) terms.push_back(json{{"pass", pass_to_json(t.pass)}, {"coefficient", t.coefficient}});
    json layers = json::array();
    for (const auto& l : s.layers) layers.push_back(layer_to_json(l));
    return json{{"mode", to_string(s.mode)}, {"terms", terms}, {"layers", layers}, {"coefficient_sum", s.coefficient_sum()}};
}

json stats_to_json(const ChannelStats& s) { return json{{"mean", s.mean}, {"std", s.stddev}}; }

json config_json(const ConfigFile& c) {
    const RunConfig& r = c.run;
    const DenoiserSpec& d = r.denoiser;
    json layout = json::array();
    for (const auto& l : d.attention_layout.layers) layout.push_back(layer_to_json(l));
    const StructuredParams& sp = d.structured;
    json j;
    j["schedule"] = {{"num_steps", r.schedule.num_steps},
                     {"beta_start", r.schedule.beta_start},
                     {"beta_end", r.schedule.beta_end},
                     {"eta", r.schedule.eta}};
    j["denoiser"] = {{"kind", to_string(d.kind)},
                     {"seed", d.seed},
                     {"channels", d.channels},
                     {"height", d.height},
                     {"width", d.width},
                     {"base_width", d.base_width},
                     {"heads", d.heads},
                     {"content_vocab", d.content_vocab},
                     {"style_vocab", d.style_vocab},
                     {"output_gain", d.output_gain},
                     {"attention_layout", layout},
                     {"structured",
                      {{"content_amplitude", sp.content_amplitude},
                       {"style_amplitude", sp.style_amplitude},
                       {"prior_mean_std", sp.prior_mean_std},
                       {"prior_layout_std", sp.prior_layout_std},
                       {"prior_patch_std", sp.prior_patch_std},
                       {"prior_residual_std", sp.prior_residual_std},
                       {"up_position_first", sp.up_position_first},
                       {"up_position_last", sp.up_position_last},
                       {"up_structure_first", sp.up_structure_first},
                       {"up_structure_last", sp.up_structure_last},
                       {"up_rate", sp.up_rate},
                       {"down_position", sp.down_position},
                       {"down_structure", sp.down_structure},
                       {"down_rate", sp.down_rate}}}};
    j["content"] = condition_to_json(r.content);
    json ref = {{"kind", to_string(r.reference.kind)},
                {"condition", condition_to_json(r.reference.condition)},
                {"seed", r.reference.seed},
                {"use_cfg", r.reference.use_cfg},
                {"encoding", to_string(r.reference.encoding)}};
    if (r.reference.kind == ReferenceKind::real) {
        ref["image"] = r.reference.image_path;
    }
    const GuidanceConfig& g = r.guidance;
    j["style"] = {{"mode", r.style_enabled ? "on" : "off"},
                  {"reference", ref},
                  {"guidance",
                   {{"mode", to_string(g.mode)},
                    {"w", g.weights.w},
                    {"w_visual", g.weights.w_visual},
                    {"w_content", g.weights.w_content},
                    {"w_neg", g.weights.w_neg},
                    {"inject_unconditional", g.inject_unconditional},
                    {"negated", condition_to_json(g.negated)}}},
                  {"swap", {{"start_fraction", r.swap.start_fraction}, {"t_min", r.swap.t_min}, {"t_max", r.swap.t_max}}},
                  {"calibration",
                   {{"enabled", r.calibration.enabled}, {"t_start", r.calibration.t_start}, {"t_end", r.calibration.t_end}}}};
    j["seed"] = r.seed;
    j["batch"] = c.batch;
    j["attention"] = {{"layers", r.attention.layers}, {"steps", r.attention.steps}};
    j["diagnostics"] = {{"ks_reference", r.ks_diagnostics}};
    j["sweep"] = {{"fractions", c.sweep.fractions}, {"seeds", c.sweep.seeds}};
    j["invert_compare"] = {{"seeds", c.invert.seeds}};
    j["output"] = {{"dir", r.output.dir},
                   {"prefix", r.output.prefix},
                   {"write_png", r.output.write_png},
                   {"dump_passes", r.output.dump_passes}};
    return j;
}

}  // namespace detail

namespace {

using detail::json;

[[noreturn]] void bad(const std::string& where, const std::string& what) {
    fail(ErrorCode::invalid_config, where + ": " + what);
}

// Strict object reader: every key must be consumed or the object is rejected.
class Obj {
public:
    Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) bad(path_, "expected an object");
    }
    ~Obj() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [k, v] : j_.items()) {
            if (seen_.count(k) == 0) bad(path_ + "." + k, "unknown key");
        }
    }

    bool has(const std::string& k) {
        seen_.insert(k);
        return j_.contains(k);
    }
    const json& raw(const std::string& k) {
        seen_.insert(k);
        return j_.at(k);
    }
    std::string at(const std::string& k) const { return path_ + "." + k; }

    template <typename T>
    void get(const std::string& k, T& out) {
        if (!has(k)) return;
        out = convert<T>(j_.at(k), at(k));
    }

    template <typename T>
    static T convert(const json& v, const std::string& where) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) bad(where, "expected a boolean");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
                bad(where, "expected a non-negative integer");
            }
            return v.get<std::uint64_t>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) bad(where, "expected an integer");
            return v.get<T>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) bad(where, "expected a number");
            return v.get<T>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) bad(where, "expected a string");
            return v.get<std::string>();
        } else {
            if (!v.is_array()) bad(where, "expected an array");
            T out;
            for (std::size_t i = 0; i < v.size(); ++i) {
                out.push_back(convert<typename T::value_type>(v[i], where + "[" + std::to_string(i) + "]"));
            }
            return out;
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

std::optional<int> optional_id(Obj& o, const std::string& k) {
    if (!o.has(k)) return std::nullopt;
    const json& v = o.raw(k);
    if (v.is_null()) return std::nullopt;
    return Obj::convert<int>(v, o.at(k));
}

Condition parse_condition(const json& j, const std::string& path) {
    Obj o(j, path);
    Condition c;
    c.content_id = optional_id(o, "content_id");
    c.style_id = optional_id(o, "style_id");
    return c;
}

LayerAddress parse_layer(const json& j, const std::string& path) {
    Obj o(j, path);
    LayerAddress l;
    std::string section = "down";
    o.get("section", section);
    try {
        l.section = section_from_string(section);
    } catch (const Error& e) {
        bad(o.at("section"), e.detail());
    }
    if (!o.has("index")) bad(path, "missing index");
    o.get("index", l.index);
    return l;
}

template <typename F>
auto enum_field(Obj& o, const std::string& k, F&& parse, decltype(parse(std::string_view())) fallback) {
    std::string s;
    if (!o.has(k)) return fallback;
    o.get(k, s);
    try {
        return parse(s);
    } catch (const Error& e) {
        bad(o.at(k), e.detail());
    }
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) bad("--set " + assignment, "expected key.path=value");
    const std::string key = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) bad("--set " + assignment, "empty key segment");
        if (!node->is_object()) bad("--set " + assignment, "'" + part + "' is not inside an object");
        if (dot == std::string::npos) {
            (*node)[part] = parsed;
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

Latent load_reference_latent(const std::filesystem::path& p, int channels) {
    if (p.extension() == ".sktn") return to_latent(read_tensor(p));
    return encode_image(read_image(p), channels);
}

}  // namespace

ConfigFile parse_config(std::string_view json_text, const std::vector<std::string>& overrides,
                        const std::filesystem::path& base_dir) {
    json doc = json::parse(json_text, nullptr, false);
    if (doc.is_discarded()) bad("config", "not valid JSON");
    for (const auto& o : overrides) apply_override(doc, o);

    ConfigFile out;
    RunConfig& r = out.run;
    {
        Obj root(doc, "config");
        if (root.has("schedule")) {
            Obj s(root.raw("schedule"), "schedule");
            s.get("num_steps", r.schedule.num_steps);
            s.get("beta_start", r.schedule.beta_start);
            s.get("beta_end", r.schedule.beta_end);
            s.get("eta", r.schedule.eta);
        }
        if (root.has("denoiser")) {
            Obj d(root.raw("denoiser"), "denoiser");
            DenoiserSpec& ds = r.denoiser;
            ds.kind = enum_field(d, "kind", [](std::string_view v) { return denoiser_kind_from_string(v); }, ds.kind);
            d.get("seed", ds.seed);
            d.get("channels", ds.channels);
            d.get("height", ds.height);
            d.get("width", ds.width);
            d.get("base_width", ds.base_width);
            d.get("heads", ds.heads);
            d.get("content_vocab", ds.content_vocab);
            d.get("style_vocab", ds.style_vocab);
            d.get("output_gain", ds.output_gain);
            if (d.has("attention_layout")) {
                const json& arr = d.raw("attention_layout");
                if (!arr.is_array()) bad("denoiser.attention_layout", "expected an array");
                ds.attention_layout.layers.clear();
                for (std::size_t i = 0; i < arr.size(); ++i) {
                    ds.attention_layout.layers.push_back(
                        parse_layer(arr[i], "denoiser.attention_layout[" + std::to_string(i) + "]"));
                }
            }
            if (d.has("structured")) {
                Obj p(d.raw("structured"), "denoiser.structured");
                StructuredParams& sp = ds.structured;
                p.get("content_amplitude", sp.content_amplitude);
                p.get("style_amplitude", sp.style_amplitude);
                p.get("prior_mean_std", sp.prior_mean_std);
                p.get("prior_layout_std", sp.prior_layout_std);
                p.get("prior_patch_std", sp.prior_patch_std);
                p.get("prior_residual_std", sp.prior_residual_std);
                p.get("up_position_first", sp.up_position_first);
                p.get("up_position_last", sp.up_position_last);
                p.get("up_structure_first", sp.up_structure_first);
                p.get("up_structure_last", sp.up_structure_last);
                p.get("up_rate", sp.up_rate);
                p.get("down_position", sp.down_position);
                p.get("down_structure", sp.down_structure);
                p.get("down_rate", sp.down_rate);
            }
        }
        if (root.has("content")) r.content = parse_condition(root.raw("content"), "content");
        r.calibration = CalibrationWindow::default_for(r.schedule.num_steps);
        if (root.has("style")) {
            Obj st(root.raw("style"), "style");
            std::string mode = "on";
            st.get("mode", mode);
            if (mode != "on" && mode != "off") bad("style.mode", "expected \"on\" or \"off\"");
            r.style_enabled = mode == "on";
            if (st.has("reference")) {
                Obj ro(st.raw("reference"), "style.reference");
                ReferenceSource& ref = r.reference;
                ref.kind = enum_field(ro, "kind", [](std::string_view v) { return reference_kind_from_string(v); }, ref.kind);
                if (ro.has("condition")) ref.condition = parse_condition(ro.raw("condition"), "style.reference.condition");
                ro.get("seed", ref.seed);
                ro.get("use_cfg", ref.use_cfg);
                ref.encoding = enum_field(ro, "encoding", [](std::string_view v) { return real_encoding_from_string(v); },
                                          ref.encoding);
                ro.get("image", ref.image_path);
                if (ref.kind == ReferenceKind::real) {
                    if (ref.image_path.empty()) bad("style.reference.image", "real references need an image path");
                    std::filesystem::path p(ref.image_path);
                    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
                    try {
                        ref.x0_visual = load_reference_latent(p, r.denoiser.channels);
                    } catch (const Error& e) {
                        bad("style.reference.image", e.detail());
                    }
                } else if (!ref.image_path.empty()) {
                    bad("style.reference.image", "only real references take an image");
                }
            }
            if (st.has("guidance")) {
                Obj go(st.raw("guidance"), "style.guidance");
                GuidanceConfig& g = r.guidance;
                g.mode = enum_field(go, "mode", [](std::string_view v) { return guidance_mode_from_string(v); }, g.mode);
                go.get("w", g.weights.w);
                go.get("w_visual", g.weights.w_visual);
                go.get("w_content", g.weights.w_content);
                go.get("w_neg", g.weights.w_neg);
                go.get("inject_unconditional", g.inject_unconditional);
                if (go.has("negated")) g.negated = parse_condition(go.raw("negated"), "style.guidance.negated");
            }
            if (st.has("swap")) {
                Obj so(st.raw("swap"), "style.swap");
                so.get("start_fraction", r.swap.start_fraction);
                so.get("t_min", r.swap.t_min);
                so.get("t_max", r.swap.t_max);
            }
            if (st.has("calibration")) {
                Obj co(st.raw("calibration"), "style.calibration");
                co.get("enabled", r.calibration.enabled);
                co.get("t_start", r.calibration.t_start);
                co.get("t_end", r.calibration.t_end);
            }
        }
        root.get("seed", r.seed);
        root.get("batch", out.batch);
        if (root.has("attention")) {
            Obj a(root.raw("attention"), "attention");
            a.get("layers", r.attention.layers);
            a.get("steps", r.attention.steps);
        }
        if (root.has("diagnostics")) {
            Obj dg(root.raw("diagnostics"), "diagnostics");
            dg.get("ks_reference", r.ks_diagnostics);
        }
        if (root.has("sweep")) {
            Obj sw(root.raw("sweep"), "sweep");
            sw.get("fractions", out.sweep.fractions);
            sw.get("seeds", out.sweep.seeds);
        }
        if (root.has("invert_compare")) {
            Obj ic(root.raw("invert_compare"), "invert_compare");
            ic.get("seeds", out.invert.seeds);
        }
        if (root.has("output")) {
            Obj oo(root.raw("output"), "output");
            oo.get("dir", r.output.dir);
            oo.get("prefix", r.output.prefix);
            oo.get("write_png", r.output.write_png);
            oo.get("dump_passes", r.output.dump_passes);
        }
    }
    if (out.batch < 1) bad("batch", "must be >= 1");
    try {
        r.validate();
    } catch (const Error& e) {
        if (e.code() == ErrorCode::invalid_config) throw;
        bad("config", e.detail());
    }
    return out;
}

ConfigFile load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        bad(path.string(), e.detail());
    }
    return parse_config(text, overrides, path.parent_path());
}

std::string config_to_json(const ConfigFile& c, int indent) { return detail::config_json(c).dump(indent); }

}  // namespace styleswap::io
