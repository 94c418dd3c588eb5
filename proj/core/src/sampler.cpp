// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include "styleswap/sampler.hpp"

#include <chrono>
#include <cmath>
#include <set>

#include "styleswap/analysis.hpp"
#include "styleswap/error.hpp"
#include "styleswap/rng.hpp"

namespace styleswap {

namespace {

constexpr std::uint64_t kInitTag = 0x494e4954;    // "INIT"
constexpr std::uint64_t kStepTag = 0x53544550;    // "STEP"
constexpr std::uint64_t kEncodeTag = 0x454e4344;  // "ENCD"

}  // namespace

std::string_view to_string(ReferenceKind k) { return k == ReferenceKind::generated ? "generated" : "real"; }

std::string_view to_string(RealEncoding e) {
    switch (e) {
        case RealEncoding::per_step: return "per_step";
        case RealEncoding::single_shot: return "single_shot";
        case RealEncoding::ddim_inversion: return "ddim_inversion";
    }
    return "?";
}

ReferenceKind reference_kind_from_string(std::string_view s) {
    if (s == "generated") return ReferenceKind::generated;
    if (s == "real") return ReferenceKind::real;
    fail(ErrorCode::invalid_config, "unknown reference kind '" + std::string(s) + "'");
}

RealEncoding real_encoding_from_string(std::string_view s) {
    if (s == "per_step") return RealEncoding::per_step;
    if (s == "single_shot") return RealEncoding::single_shot;
    if (s == "ddim_inversion") return RealEncoding::ddim_inversion;
    fail(ErrorCode::invalid_config, "unknown real-reference encoding '" + std::string(s) + "'");
}

std::string_view to_string(GuidanceMode m) {
    switch (m) {
        case GuidanceMode::plain_cfg: return "plain_cfg";
        case GuidanceMode::cfg_swap: return "cfg_swap";
        case GuidanceMode::nvqg_full: return "nvqg_full";
        case GuidanceMode::nvqg_simplified: return "nvqg_simplified";
        case GuidanceMode::concept_negation: return "concept_negation";
    }
    return "?";
}

GuidanceMode guidance_mode_from_string(std::string_view s) {
    if (s == "plain_cfg") return GuidanceMode::plain_cfg;
    if (s == "cfg_swap") return GuidanceMode::cfg_swap;
    if (s == "nvqg_full") return GuidanceMode::nvqg_full;
    if (s == "nvqg_simplified") return GuidanceMode::nvqg_simplified;
    if (s == "concept_negation") return GuidanceMode::concept_negation;
    fail(ErrorCode::invalid_config, "unknown guidance mode '" + std::string(s) + "'");
}

void ReferenceSource::validate() const {
    if (kind == ReferenceKind::real) {
        require(!x0_visual.empty(), ErrorCode::invalid_config, "real reference needs an x0_visual latent");
    } else {
        require(x0_visual.empty(), ErrorCode::invalid_config, "generated reference must not carry an x0_visual latent");
    }
}

CalibrationWindow CalibrationWindow::default_for(int num_steps) {
    CalibrationWindow w;
    w.t_start = static_cast<int>(std::lround(0.7 * num_steps));
    w.t_end = static_cast<int>(std::lround(0.3 * num_steps));
    return w;
}

void CalibrationWindow::validate(int num_steps) const {
    require(t_start <= num_steps && t_start >= t_end && t_end >= 0, ErrorCode::invalid_config,
            "calibration window needs T >= t_start >= t_end >= 0, got [" + std::to_string(t_start) + ", " +
                std::to_string(t_end) + "] with T=" + std::to_string(num_steps));
}

void RunConfig::validate() const {
    const ScheduleParams& sp = schedule;
    require(sp.num_steps >= 1, ErrorCode::invalid_config, "schedule.num_steps must be >= 1");
    require(sp.beta_start > 0.0 && sp.beta_start <= sp.beta_end && sp.beta_end < 1.0, ErrorCode::invalid_config,
            "schedule needs 0 < beta_start <= beta_end < 1");
    require(std::isfinite(sp.eta) && sp.eta >= 0.0, ErrorCode::invalid_config, "schedule.eta must be >= 0");
    denoiser.validate();
    denoiser.validate(content);
    guidance.weights.validate();
    denoiser.validate(guidance.negated);
    if (style_enabled) {
        reference.validate();
        denoiser.validate(reference.condition);
        if (reference.kind == ReferenceKind::real) {
            const Latent& x = reference.x0_visual;
            require(x.channels() == denoiser.channels && x.height() == denoiser.height && x.width() == denoiser.width,
                    ErrorCode::invalid_config, "reference image latent " + x.shape_string() +
                                                   " does not match the denoiser geometry");
            if (reference.encoding == RealEncoding::ddim_inversion) {
                require(sp.eta == 0.0, ErrorCode::invalid_config, "ddim_inversion encoding needs eta = 0");
            }
        }
        require(std::isfinite(swap.start_fraction) && swap.start_fraction >= 0.0, ErrorCode::invalid_config,
                "swap.start_fraction must be finite and >= 0");
        calibration.validate(sp.num_steps);
    }
    const int t_max = swap.t_max == 0 ? sp.num_steps : swap.t_max;
    require(swap.t_min >= 1 && swap.t_min <= t_max && t_max <= sp.num_steps, ErrorCode::invalid_config,
            "swap timestep range must satisfy 1 <= t_min <= t_max <= T");
    for (int l : attention.layers) {
        require(denoiser.attention_layout.find(l) != nullptr, ErrorCode::invalid_config,
                "attention.layers names unknown layer " + std::to_string(l));
    }
    // Steps are inert without capture layers, so short schedules keep the default.
    for (int k : attention.layers.empty() ? std::vector<int>{} : attention.steps) {
        require(k >= 1 && k <= sp.num_steps, ErrorCode::invalid_config,
                "attention.steps entry " + std::to_string(k) + " outside [1, T]");
    }
    require(!output.prefix.empty(), ErrorCode::invalid_config, "output.prefix must not be empty");
}

Latent initial_noise(std::uint64_t seed, int channels, int height, int width) {
    return Latent::gaussian(channels, height, width, derive_seed(seed, {kInitTag}));
}

Latent step_noise(std::uint64_t seed, int t, const Latent& shape) {
    return Latent::gaussian_like(shape, derive_seed(seed, {kStepTag, static_cast<std::uint64_t>(t)}));
}

Latent encoding_noise(std::uint64_t seed, int t, const Latent& shape) {
    return Latent::gaussian_like(shape, derive_seed(seed, {kEncodeTag, static_cast<std::uint64_t>(t)}));
}

Latent adain(const Latent& x, const Latent& ref) {
    require(x.channels() == ref.channels(), ErrorCode::shape_mismatch,
            "adain: channel counts differ (" + x.shape_string() + " vs " + ref.shape_string() + ")");
    const ChannelStats sx = channel_stats(x);
    const ChannelStats sr = channel_stats(ref);
    Latent out = x;
    for (int c = 0; c < x.channels(); ++c) {
        require(sx.stddev[c] >= 1e-12, ErrorCode::zero_variance,
                "adain: channel " + std::to_string(c) + " of the input has zero variance");
        const double scale = sr.stddev[c] / sx.stddev[c];
        auto ch = out.channel(c);
        for (float& v : ch) {
            v = static_cast<float>(scale * (v - sx.mean[c]) + sr.mean[c]);
        }
    }
    return out;
}

Latent color_calibrate_step(const Latent& x_t, const Latent& eps, const Latent& x0_visual, int t, const Schedule& s,
                            const Latent* noise) {
    const Latent x0 = predicted_x0(x_t, eps, t, s);
    return ddim_step_from_x0(adain(x0, x0_visual), eps, t, s, noise);
}

std::vector<Latent> ddim_invert_reference(const Latent& x0_visual, const Denoiser& denoiser, const Condition& c,
                                          const Schedule& s) {
    require(s.eta() == 0.0, ErrorCode::nonzero_eta, "DDIM inversion needs a deterministic (eta = 0) schedule");
    std::vector<Latent> traj;
    traj.reserve(s.num_steps() + 1);
    traj.push_back(x0_visual);
    for (int t = 1; t <= s.num_steps(); ++t) {
        const Latent eps = denoiser.forward(traj.back(), t, c).eps;
        traj.push_back(ddim_invert_step(traj.back(), eps, t, s));
    }
    return traj;
}

Latent ddim_sample(const Latent& x_T, const Denoiser& denoiser, const Condition& c, const Schedule& s) {
    Latent x = x_T;
    for (int t = s.num_steps(); t >= 1; --t) {
        x = ddim_step(x, denoiser.forward(x, t, c).eps, t, s);
    }
    return x;
}

ReferenceStream::ReferenceStream(const ReferenceSource& src, std::shared_ptr<const Schedule> schedule,
                                 const Denoiser* denoiser)
    : src_(src), schedule_(std::move(schedule)) {
    src_.validate();
    const int T = schedule_->num_steps();
    t_ = T;
    if (src_.kind == ReferenceKind::generated) {
        require(denoiser != nullptr, ErrorCode::invalid_config, "generated reference stream needs the denoiser geometry");
        const DenoiserSpec& ds = denoiser->spec();
        state_ = initial_noise(src_.seed, ds.channels, ds.height, ds.width);
        return;
    }
    switch (src_.encoding) {
        case RealEncoding::per_step:
            break;
        case RealEncoding::single_shot:
            state_ = stochastic_encode(src_.x0_visual, T, encoding_noise(src_.seed, T, src_.x0_visual), *schedule_);
            break;
        case RealEncoding::ddim_inversion:
            require(denoiser != nullptr, ErrorCode::invalid_config, "ddim_inversion reference needs a denoiser");
            trajectory_ = ddim_invert_reference(src_.x0_visual, *denoiser, src_.condition, *schedule_);
            break;
    }
}

bool ReferenceStream::stateful() const noexcept {
    return src_.kind == ReferenceKind::generated || src_.encoding == RealEncoding::single_shot;
}

Latent ReferenceStream::latent_at(int t) const {
    require(t >= 0 && t <= schedule_->num_steps(), ErrorCode::timestep_out_of_range,
            "reference timestep " + std::to_string(t) + " outside the schedule");
    if (stateful()) {
        require(t == t_, ErrorCode::exhausted_trajectory,
                "reference stream sits at t=" + std::to_string(t_) + ", requested t=" + std::to_string(t));
        return state_;
    }
    if (src_.encoding == RealEncoding::ddim_inversion) {
        return trajectory_[t];
    }
    return stochastic_encode(src_.x0_visual, t, encoding_noise(src_.seed, t, src_.x0_visual), *schedule_);
}

void ReferenceStream::advance(int t, const Latent& eps) {
    if (!stateful()) {
        t_ = t - 1;
        return;
    }
    require(t == t_ && t >= 1, ErrorCode::exhausted_trajectory,
            "cannot advance reference stream from t=" + std::to_string(t_) + " with a t=" + std::to_string(t) + " step");
    if (schedule_->sigma(t) > 0.0) {
        state_ = ddim_step(state_, eps, t, *schedule_, step_noise(src_.seed, t, state_));
    } else {
        state_ = ddim_step(state_, eps, t, *schedule_);
    }
    t_ = t - 1;
}

ResolvedGuidance resolve_guidance(const RunConfig& cfg) {
    ResolvedGuidance r;
    const GuidanceConfig& g = cfg.guidance;
    if (!cfg.style_enabled) {
        r.stack = cfg_stack(g.weights.w, cfg.content);
        return r;
    }
    if (g.mode == GuidanceMode::plain_cfg) {
        r.stack = cfg_stack(g.weights.w, cfg.content);
        return r;
    }
    if (g.mode == GuidanceMode::concept_negation) {
        r.stack = concept_negation_stack(g.weights.w_neg, cfg.content, g.negated);
        return r;
    }
    UpblockSelection sel = select_upblock_layers(cfg.denoiser.attention_layout, cfg.swap.start_fraction);
    if (sel.warning) {
        r.warnings.push_back(*sel.warning + "; falling back to plain CFG");
        r.stack = cfg_stack(g.weights.w, cfg.content);
        return r;
    }
    r.layers = sel.layers;
    switch (g.mode) {
        case GuidanceMode::cfg_swap:
            r.stack = cfg_swap_stack(g.weights.w, cfg.content, r.layers, Process::reference, g.inject_unconditional);
            break;
        case GuidanceMode::nvqg_full:
            r.stack = nvqg_stack(g.weights, NvqgVariant::full, cfg.content, r.layers);
            break;
        case GuidanceMode::nvqg_simplified:
            r.stack = nvqg_stack(g.weights, NvqgVariant::simplified, cfg.content, r.layers);
            break;
        default:
            break;
    }
    return r;
}

namespace {

std::vector<double> channel_means(const Latent& x) { return channel_stats(x).mean; }

template <typename F>
auto annotate(const std::string& where, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Error& e) {
        throw e.annotated(where);
    }
}

std::string step_label(int step, int t) { return "step " + std::to_string(step) + " (t=" + std::to_string(t) + ")"; }

}  // namespace

RunResult run_t2i_with_style(const RunConfig& cfg) {
    annotate("config", [&] { cfg.validate(); });
    auto schedule = std::make_shared<const Schedule>(cfg.schedule.build());
    auto denoiser = build_denoiser(cfg.denoiser, schedule);
    return run_t2i_with_style(cfg, *denoiser, schedule);
}

RunResult run_t2i_with_style(const RunConfig& cfg, const Denoiser& denoiser, std::shared_ptr<const Schedule> schedule) {
    const auto started = std::chrono::steady_clock::now();
    annotate("config", [&] { cfg.validate(); });
    const Schedule& s = *schedule;
    require(s.num_steps() == cfg.schedule.num_steps, ErrorCode::invalid_config, "schedule does not match the config");
    const int T = s.num_steps();

    ResolvedGuidance rg = annotate("guidance", [&] { return resolve_guidance(cfg); });
    const GuidanceStack& stack = rg.stack;
    annotate("guidance", [&] { stack.validate(); });
    const std::vector<PassSpec> passes = stack.passes();

    bool need_ref = false;
    std::uint8_t ref_selectors = 0;
    std::set<Condition> plain_sources;  // conditions whose plain pass feeds an original-sourced injection
    for (const auto& p : passes) {
        if (p.injection == InjectionMode::none) continue;
        const std::uint8_t sel = p.injection == InjectionMode::kv_inject ? selector::kv : selector::q;
        if (p.source == Process::reference) {
            need_ref = true;
            ref_selectors |= sel;
        } else if (p.source == Process::original) {
            plain_sources.insert(p.condition);
        } else {
            fail(ErrorCode::invalid_config, "pass " + p.describe() + " reads a negative-process store, which no pass produces");
        }
    }
    const bool style = cfg.style_enabled;
    const bool calibrate = style && cfg.calibration.enabled;
    const bool run_ref = style && need_ref;

    RunResult result;
    RunManifest& m = result.manifest;
    m.config = cfg;
    m.stack = stack;
    m.swap_layers = rg.layers;
    m.warnings = rg.warnings;

    // Calibration matches the finished reference image; a generated one is
    // rendered up front with its own deterministic stream.
    std::optional<Latent> calibration_target;
    if (calibrate) {
        calibration_target = annotate("calibration target", [&] { return render_reference(cfg, denoiser, schedule); });
    }

    const DenoiserSpec& ds = denoiser.spec();
    Latent x = initial_noise(cfg.seed, ds.channels, ds.height, ds.width);
    std::optional<ReferenceStream> ref;
    if (style && (run_ref || cfg.reference.kind == ReferenceKind::real)) {
        ref.emplace(annotate("reference", [&] { return ReferenceStream(cfg.reference, schedule, &denoiser); }));
    }

    TapPlan ref_plan;
    for (const auto& l : rg.layers) ref_plan.captures[l] = ref_selectors;
    TapPlan source_plan;
    for (const auto& l : rg.layers) source_plan.captures[l] = selector::all;

    std::set<LayerAddress> map_layers;
    for (int idx : cfg.attention.layers) map_layers.insert(*ds.attention_layout.find(idx));
    std::set<int> map_ts;
    for (int k : cfg.attention.steps) map_ts.insert(cfg.step_to_timestep(k));
    const PassSpec primary = stack.terms.front().pass;

    const int inject_max = cfg.swap.t_max == 0 ? T : cfg.swap.t_max;
    const std::vector<float> ref_embedding = denoiser.embed(cfg.reference.condition);
    const std::vector<float> null_embedding = denoiser.embed(Condition::null());

    for (int step = 1; step <= T; ++step) {
        const int t = cfg.step_to_timestep(step);
        const std::string where = step_label(step, t);
        StepRecord rec;
        rec.step = step;
        rec.t = t;
        rec.injected = style && !rg.layers.empty() && t >= cfg.swap.t_min && t <= inject_max;

        // (1)-(2) reference latent and pass.
        FeatureStore ref_store(Process::reference);
        if (run_ref) {
            const Latent xr = annotate(where + ", reference latent", [&] { return ref->latent_at(t); });
            if (cfg.ks_diagnostics && cfg.reference.kind == ReferenceKind::real) {
                const Latent z = standardize_encoded(xr, cfg.reference.x0_visual, t, s);
                rec.reference_ks_p = ks_gaussianity(z.data()).p_value;
            }
            Latent ref_eps = annotate(where + ", pass reference(" + cfg.reference.condition.describe() + ")", [&] {
                ForwardResult fr = denoiser.forward_embedded(xr, t, ref_embedding, ref_plan, {});
                ref_store = std::move(fr.captured);
                return std::move(fr.eps);
            });
            if (cfg.reference.use_cfg) {
                const Latent u = annotate(where + ", pass reference(null)", [&] {
                    return denoiser.forward_embedded(xr, t, null_embedding, {}, {}).eps;
                });
                const GuidanceStack rs = cfg_stack(cfg.guidance.weights.w, cfg.reference.condition);
                ref_eps = compose(rs, {{rs.terms[0].pass, ref_eps}, {rs.terms[1].pass, u}});
            }
            if (ref->stateful()) {
                annotate(where + ", reference update", [&] { ref->advance(t, ref_eps); });
            }
        } else if (cfg.ks_diagnostics && ref && cfg.reference.kind == ReferenceKind::real) {
            const Latent xr = ref->latent_at(t);
            rec.reference_ks_p = ks_gaussianity(standardize_encoded(xr, cfg.reference.x0_visual, t, s).data()).p_value;
        }

        // (3) original-process passes: plain passes first so their captures
        // can feed original-sourced injections.
        std::map<PassSpec, Latent> eps;
        std::map<Condition, FeatureStore> plain_stores;
        auto run_pass = [&](const PassSpec& p, bool record) {
            TapPlan plan;
            const bool inject = rec.injected && p.injection != InjectionMode::none;
            if (inject) {
                for (const auto& l : rg.layers) plan.injections[l] = Injection{p.injection, p.source};
            }
            const bool is_source = p.injection == InjectionMode::none && plain_sources.count(p.condition) != 0;
            if (is_source) plan.captures = source_plan.captures;
            if (p == primary && !map_layers.empty() && map_ts.count(t) != 0) {
                plan.attn_map_layers = map_layers;
                plan.attn_map_timesteps = {t};
            }
            InjectionSources srcs;
            srcs.reference = &ref_store;
            if (auto it = plain_stores.find(p.condition); it != plain_stores.end()) srcs.original = &it->second;
            ForwardResult fr = annotate(where + ", pass " + p.describe(), [&] {
                return denoiser.forward(x, t, p.condition, plan, srcs);
            });
            if (is_source) plain_stores[p.condition] = std::move(fr.captured);
            for (auto& am : fr.maps) result.attention_maps.push_back(std::move(am));
            if (record) eps[p] = std::move(fr.eps);
        };
        for (const auto& c : plain_sources) {
            const PassSpec plain{c, InjectionMode::none, Process::reference,
                                 c.is_null() ? PassRole::unconditional : PassRole::original};
            bool in_stack = false;
            for (const auto& p : passes) in_stack = in_stack || p == plain;
            run_pass(plain, in_stack);
        }
        for (const auto& p : passes) {
            if (p.injection == InjectionMode::none && plain_sources.count(p.condition) != 0) continue;
            if (p.injection == InjectionMode::none) run_pass(p, true);
        }
        for (const auto& p : passes) {
            if (p.injection != InjectionMode::none) run_pass(p, true);
        }

        // (4) compose.
        const Latent composed = annotate(where + ", compose", [&] { return compose(stack, eps); });
        for (const auto& p : passes) {
            double coef = 0.0;
            for (const auto& term : stack.terms) {
                if (term.pass == p) coef += term.coefficient;
            }
            rec.passes.push_back(PassRecord{p, coef, channel_means(eps.at(p)), {}});
        }
        rec.composed_mean = channel_means(composed);
        if (cfg.output.dump_passes) {
            StepTensors st;
            st.t = t;
            for (const auto& p : passes) st.passes.emplace_back(p, eps.at(p));
            st.composed = composed;
            result.step_tensors.push_back(std::move(st));
        }

        // (5) calibrated or plain DDIM update.
        std::optional<Latent> noise;
        if (s.sigma(t) > 0.0) noise = step_noise(cfg.seed, t, x);
        if (calibrate && cfg.calibration.contains(t)) {
            const Latent& target = *calibration_target;
            x = annotate(where + ", color calibration", [&] {
                const Latent x0 = predicted_x0(x, composed, t, s);
                const Latent x0_cal = adain(x0, target);
                rec.calibration = CalibrationRecord{channel_stats(x0), channel_stats(x0_cal), channel_stats(target)};
                return ddim_step_from_x0(x0_cal, composed, t, s, noise ? &*noise : nullptr);
            });
        } else {
            x = annotate(where + ", ddim update", [&] {
                return noise ? ddim_step(x, composed, t, s, *noise) : ddim_step(x, composed, t, s);
            });
        }
        m.steps.push_back(std::move(rec));
    }

    result.x0 = std::move(x);
    if (style && cfg.reference.kind == ReferenceKind::real) {
        result.reference_x0 = cfg.reference.x0_visual;
    } else if (run_ref && ref && ref->stateful()) {
        result.reference_x0 = ref->latent_at(0);
    }
    const ChannelStats out = channel_stats(result.x0);
    for (int c = 0; c < result.x0.channels(); ++c) {
        m.metrics["output_mean_c" + std::to_string(c)] = out.mean[c];
        m.metrics["output_std_c" + std::to_string(c)] = out.stddev[c];
    }
    m.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

Latent render_reference(const RunConfig& cfg, const Denoiser& denoiser, std::shared_ptr<const Schedule> schedule) {
    if (cfg.reference.kind == ReferenceKind::real) {
        return cfg.reference.x0_visual;
    }
    ReferenceStream stream(cfg.reference, schedule, &denoiser);
    const std::vector<float> e = denoiser.embed(cfg.reference.condition);
    const std::vector<float> null_e = denoiser.embed(Condition::null());
    const GuidanceStack rs = cfg_stack(cfg.guidance.weights.w, cfg.reference.condition);
    for (int t = schedule->num_steps(); t >= 1; --t) {
        const Latent xr = stream.latent_at(t);
        Latent eps = denoiser.forward_embedded(xr, t, e, {}, {}).eps;
        if (cfg.reference.use_cfg) {
            const Latent u = denoiser.forward_embedded(xr, t, null_e, {}, {}).eps;
            eps = compose(rs, {{rs.terms[0].pass, eps}, {rs.terms[1].pass, u}});
        }
        stream.advance(t, eps);
    }
    return stream.latent_at(0);
}

}  // namespace styleswap
