// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include "selftest.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <sstream>

#include "styleswap/analysis.hpp"
#include "styleswap/error.hpp"
#include "styleswap/guidance.hpp"
#include "styleswap/rng.hpp"
#include "styleswap/sampler.hpp"

namespace styleswap::cli {

namespace {

std::map<PassSpec, Latent> random_eps(const GuidanceStack& stack, std::uint64_t seed) {
    std::map<PassSpec, Latent> eps;
    std::uint64_t k = 0;
    for (const PassSpec& p : stack.passes()) eps.emplace(p, Latent::gaussian(4, 8, 8, derive_seed(seed, {k++})));
    return eps;
}

std::shared_ptr<const Schedule> build_schedule(const ScheduleParams& p, bool corrupt) {
    Schedule s = p.build();
    if (corrupt) {
        // Lifts alpha_bar(t) above alpha_bar(t-1), which no valid schedule allows.
        const int t = p.num_steps / 2;
        s.corrupt_for_testing(t, std::min(1.0, s.alpha_bar(t - 1) * 1.05));
    }
    return std::make_shared<const Schedule>(std::move(s));
}

std::string check_schedule(const Schedule& s) {
    return s.invariants_hold(true) ? "" : "alpha_bar is not strictly decreasing inside (0, 1]";
}

std::string check_composition(const Schedule&) {
    const Condition c{3, 5};
    const std::vector<LayerAddress> layers{{Section::up, 5}, {Section::up, 6}};
    {
        const GuidanceStack st = cfg_stack(0.0, c);
        const auto eps = random_eps(cfg_stack(1.0, c), 11);
        const PassSpec cond{c, InjectionMode::none, Process::reference, PassRole::original};
        if (!bitwise_equal(compose(st, eps), eps.at(cond))) return "cfg with w=0 differs from the conditional pass";
    }
    {
        GuidanceWeights w;
        w.w_visual = 1.0;
        w.w_content = 0.0;
        const GuidanceStack full = nvqg_stack(w, NvqgVariant::full, c, layers);
        const GuidanceStack swap = cfg_swap_stack(w.w, c, layers);
        if (full.terms != swap.terms) return "nvqg full (w_visual=1, w_content=0) has a different pass table than cfg_swap";
        const auto eps = random_eps(swap, 12);
        if (!bitwise_equal(compose(full, eps), compose(swap, eps))) return "nvqg full and cfg_swap compose differently";
    }
    {
        const GuidanceStack neg = concept_negation_stack(2.5, c, Condition::null());
        const auto eps = random_eps(neg, 13);
        const PassSpec cond{c, InjectionMode::none, Process::reference, PassRole::original};
        if (!bitwise_equal(compose(neg, eps), eps.at(cond))) return "negating the null concept changes the score";
    }
    return "";
}

std::string check_normalization(const Schedule&) {
    SplitMix64 rng(0x4e4f524d);
    const Condition c{1, 2};
    const std::vector<LayerAddress> layers{{Section::up, 6}};
    for (int i = 0; i < 200; ++i) {
        GuidanceWeights w;
        w.w = 20.0 * rng.uniform();
        w.w_visual = 3.0 * rng.uniform();
        w.w_content = 3.0 * rng.uniform();
        w.w_neg = 5.0 * rng.uniform();
        for (const GuidanceStack& st :
             {cfg_stack(w.w, c), cfg_swap_stack(w.w, c, layers), concept_negation_stack(w.w_neg, c, Condition{4, 2}),
              nvqg_stack(w, NvqgVariant::full, c, layers), nvqg_stack(w, NvqgVariant::simplified, c, layers)}) {
            if (std::abs(st.coefficient_sum() - 1.0) > 1e-9) return "a stack's coefficients do not sum to 1";
        }
    }
    return "";
}

std::string check_adain(const Schedule&) {
    for (std::uint64_t i = 0; i < 50; ++i) {
        const Latent x = Latent::gaussian(4, 8, 8, derive_seed(0xADA1, {i}));
        Latent ref = Latent::gaussian(4, 8, 8, derive_seed(0xADA2, {i}));
        for (float& v : ref.data()) v = 0.3f + 2.0f * v;
        const Latent y = adain(x, ref);
        const ChannelStats a = channel_stats(y), b = channel_stats(ref);
        for (int c = 0; c < 4; ++c) {
            if (std::abs(a.mean[c] - b.mean[c]) > 1e-6 || std::abs(a.stddev[c] - b.stddev[c]) > 1e-6) {
                return "adain output statistics differ from the reference";
            }
        }
        if (relative_error(adain(y, ref), y) > 1e-6) return "adain is not idempotent";
    }
    return "";
}

std::string check_ks_calibration(const Schedule&) {
    int rejected = 0;
    const int trials = 1000;
    for (int i = 0; i < trials; ++i) {
        SplitMix64 rng(derive_seed(0x4b53, {static_cast<std::uint64_t>(i)}));
        std::vector<double> xs(256);
        for (double& v : xs) v = rng.gaussian();
        rejected += ks_gaussianity(xs).p_value < 0.05 ? 1 : 0;
    }
    const double rate = static_cast<double>(rejected) / trials;
    if (rate < 0.03 || rate > 0.07) {
        std::ostringstream os;
        os << "null rejection rate " << rate << " outside [0.03, 0.07]";
        return os.str();
    }
    return "";
}

std::string check_round_trips(const Schedule& s_default) {
    for (int t = 1; t <= s_default.num_steps(); t += 7) {
        const Latent x0 = Latent::gaussian(4, 16, 16, 0x5254);
        const Latent noise = Latent::gaussian(4, 16, 16, derive_seed(0x5254, {static_cast<std::uint64_t>(t)}));
        if (relative_error(predicted_x0(stochastic_encode(x0, t, noise, s_default), noise, t, s_default), x0) > 1e-6) {
            return "encode then predicted_x0 does not recover x0 at t=" + std::to_string(t);
        }
    }
    return "";
}

std::string check_inversion(bool corrupt) {
    ScheduleParams p;
    p.num_steps = 10;
    const auto s = build_schedule(p, corrupt);
    DenoiserSpec spec;
    spec.kind = DenoiserKind::seeded_random;
    const auto den = build_denoiser(spec, s);
    const Latent x0 = Latent::gaussian(spec.channels, spec.height, spec.width, 0x494e56);
    const Condition c{2, 7};
    const std::vector<Latent> traj = ddim_invert_reference(x0, *den, c, *s);
    const double err = relative_error(ddim_sample(traj.back(), *den, c, *s), x0);
    if (!s->invariants_hold(true)) return "T=10 schedule violates its invariants";
    if (err > 1e-3) return "invert then sample has relative error " + std::to_string(err);
    return "";
}

std::string check_noop(bool corrupt) {
    RunConfig cfg;
    cfg.schedule.num_steps = 10;
    cfg.calibration = CalibrationWindow::default_for(10);
    cfg.attention.steps.clear();
    cfg.content = Condition{1, std::nullopt};
    cfg.reference.condition = Condition{4, 9};
    cfg.style_enabled = false;
    const auto s = build_schedule(cfg.schedule, corrupt);
    const auto den = build_denoiser(cfg.denoiser, s);
    const Latent off = run_t2i_with_style(cfg, *den, s).x0;
    Latent x = initial_noise(cfg.seed, 4, 16, 16);
    const GuidanceStack st = cfg_stack(cfg.guidance.weights.w, cfg.content);
    for (int t = 10; t >= 1; --t) {
        std::map<PassSpec, Latent> eps;
        for (const auto& term : st.terms) eps.emplace(term.pass, den->forward(x, t, term.pass.condition).eps);
        x = ddim_step(x, compose(st, eps), t, *s);
    }
    if (!bitwise_equal(off, x)) return "style-disabled run differs from vanilla CFG sampling";
    cfg.style_enabled = true;
    const RunResult a = run_t2i_with_style(cfg, *den, s);
    const RunResult b = run_t2i_with_style(cfg, *den, s);
    if (!bitwise_equal(a.x0, b.x0)) return "fixed-seed reruns differ";
    return "";
}

}  // namespace

std::vector<CheckResult> run_selftest(const SelftestOptions& options) {
    const auto s = build_schedule(ScheduleParams{}, options.corrupt_schedule);
    const bool corrupt = options.corrupt_schedule;
    const std::vector<std::pair<std::string, std::function<std::string()>>> checks{
        {"schedule invariants", [&] { return check_schedule(*s); }},
        {"composition identities", [&] { return check_composition(*s); }},
        {"coefficient normalization", [&] { return check_normalization(*s); }},
        {"adain exactness", [&] { return check_adain(*s); }},
        {"ks calibration", [&] { return check_ks_calibration(*s); }},
        {"encode round trip", [&] { return check_round_trips(*s); }},
        {"ddim inversion round trip", [&] { return check_inversion(corrupt); }},
        {"no-op equivalence", [&] { return check_noop(corrupt); }},
    };
    std::vector<CheckResult> out;
    for (const auto& [name, fn] : checks) {
        CheckResult r{name, false, {}};
        try {
            r.detail = fn();
            r.passed = r.detail.empty();
        } catch (const std::exception& e) {
            r.detail = e.what();
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace styleswap::cli
