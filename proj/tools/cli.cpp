// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <chrono>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "selftest.hpp"
#include "styleswap/analysis.hpp"
#include "styleswap/error.hpp"
#include "styleswap/io/config.hpp"
#include "styleswap/io/csv.hpp"
#include "styleswap/io/image.hpp"
#include "styleswap/io/manifest.hpp"
#include "styleswap/io/tensor.hpp"
#include "styleswap/parallel.hpp"
#include "styleswap/sampler.hpp"

namespace styleswap::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> batch;
    int jobs = 1;
    std::vector<std::string> sets;
    std::optional<std::string> out;
    bool corrupt_schedule = false;
};

// Everything a command needs, built and validated before the first write.
struct Prepared {
    io::ConfigFile file;
    fs::path out_dir;
    std::vector<std::uint64_t> seeds;
    std::shared_ptr<const Schedule> schedule;
    std::shared_ptr<const Denoiser> denoiser;
};

class ConfigFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Prepared prepare(const Options& o) {
    if (o.config.empty()) throw ConfigFailure("--config is required");
    Prepared p;
    try {
        p.file = io::load_config(o.config, o.sets);
        RunConfig& run = p.file.run;
        if (o.seed) run.seed = *o.seed;
        if (o.batch) p.file.batch = *o.batch;
        if (o.out) run.output.dir = *o.out;
        require(p.file.batch >= 1, ErrorCode::invalid_config, "batch must be >= 1");
        require(o.jobs >= 1, ErrorCode::invalid_config, "--jobs must be >= 1");
        require(!run.output.prefix.empty(), ErrorCode::invalid_config, "output.prefix must not be empty");
        run.validate();
        (void)resolve_guidance(run);
        p.schedule = std::make_shared<const Schedule>(run.schedule.build());
        p.denoiser = build_denoiser(run.denoiser, p.schedule);
    } catch (const Error& e) {
        throw ConfigFailure(e.what());
    }
    p.out_dir = p.file.run.output.dir;
    for (int i = 0; i < p.file.batch; ++i) p.seeds.push_back(p.file.run.seed + static_cast<std::uint64_t>(i));
    return p;
}

std::string stem(const RunConfig& run, std::uint64_t seed) { return run.output.prefix + "_seed" + std::to_string(seed); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_manifest(const Prepared& p, io::ManifestDocument& doc, const std::string& name,
                    std::chrono::steady_clock::time_point t0) {
    doc.config = p.file;
    doc.wall_clock_seconds = seconds_since(t0);
    io::write_file(p.out_dir / name, io::manifest_to_json(doc) + "\n");
}

// One generate cell: run, then write latent, image, reference and pass dumps.
RunResult run_cell(const Prepared& p, std::uint64_t seed) {
    RunConfig cfg = p.file.run;
    cfg.seed = seed;
    RunResult r = run_t2i_with_style(cfg, *p.denoiser, p.schedule);
    const std::string base = stem(cfg, seed);
    auto keep = [&](const std::string& name) { r.manifest.artifacts.push_back(name); };
    io::write_tensor(p.out_dir / (base + ".sktn"), io::to_tensor(r.x0));
    keep(base + ".sktn");
    if (cfg.output.write_png) {
        io::write_png(p.out_dir / (base + ".png"), io::decode_latent(r.x0));
        keep(base + ".png");
    }
    if (!r.reference_x0.empty()) {
        io::write_tensor(p.out_dir / (base + "_reference.sktn"), io::to_tensor(r.reference_x0));
        keep(base + "_reference.sktn");
        if (cfg.output.write_png) {
            io::write_png(p.out_dir / (base + "_reference.png"), io::decode_latent(r.reference_x0));
            keep(base + "_reference.png");
        }
    }
    for (std::size_t k = 0; k < r.step_tensors.size(); ++k) {
        const StepTensors& st = r.step_tensors[k];
        StepRecord& rec = r.manifest.steps[k];
        const std::string step_base = base + "_t" + std::to_string(st.t);
        for (std::size_t j = 0; j < st.passes.size(); ++j) {
            const std::string name = step_base + "_pass" + std::to_string(j) + ".sktn";
            io::write_tensor(p.out_dir / name, io::to_tensor(st.passes[j].second));
            for (PassRecord& pr : rec.passes) {
                if (pr.pass == st.passes[j].first) pr.tensor_path = name;
            }
            keep(name);
        }
        io::write_tensor(p.out_dir / (step_base + "_composed.sktn"), io::to_tensor(st.composed));
        keep(step_base + "_composed.sktn");
    }
    return r;
}

int cmd_generate(const Prepared& p, int jobs, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<RunResult> results(p.seeds.size());
    parallel_for(p.seeds.size(), jobs, [&](std::size_t i) {
        try {
            results[i] = run_cell(p, p.seeds[i]);
        } catch (const Error& e) {
            throw e.annotated("seed " + std::to_string(p.seeds[i]));
        }
    });
    io::ManifestDocument doc;
    doc.command = "generate";
    for (auto& r : results) {
        doc.artifacts.insert(doc.artifacts.end(), r.manifest.artifacts.begin(), r.manifest.artifacts.end());
        doc.runs.push_back(std::move(r.manifest));
    }
    const std::string name = p.file.run.output.prefix + "_manifest.json";
    write_manifest(p, doc, name, t0);
    out << "generated " << results.size() << " run(s) in " << p.out_dir.string() << ", manifest " << name << "\n";
    return exit_ok;
}

int cmd_attn_maps(const Prepared& p, int jobs, std::ostream& out) {
    const RunConfig& base = p.file.run;
    if (base.attention.layers.empty() || base.attention.steps.empty()) {
        throw ConfigFailure("attn-maps needs attention.layers and attention.steps to be non-empty");
    }
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<RunResult> results(p.seeds.size());
    parallel_for(p.seeds.size(), jobs, [&](std::size_t i) {
        RunConfig cfg = base;
        cfg.seed = p.seeds[i];
        try {
            results[i] = run_t2i_with_style(cfg, *p.denoiser, p.schedule);
        } catch (const Error& e) {
            throw e.annotated("seed " + std::to_string(p.seeds[i]));
        }
        RunResult& r = results[i];
        const int T = base.schedule.num_steps;
        for (const AttentionMap& m : r.attention_maps) {
            const std::string name = stem(cfg, cfg.seed) + "_attn_L" + std::to_string(m.layer.index) +
                                     "_step" + std::to_string(T - m.timestep + 1);
            io::write_tensor(p.out_dir / (name + ".sktn"), io::to_tensor(m.map));
            io::write_png(p.out_dir / (name + ".png"), io::heatmap(m.map));
            r.manifest.artifacts.push_back(name + ".sktn");
            r.manifest.artifacts.push_back(name + ".png");
        }
        r.manifest.metrics["attention_maps"] = static_cast<double>(r.attention_maps.size());
    });
    io::ManifestDocument doc;
    doc.command = "attn-maps";
    std::size_t maps = 0;
    for (auto& r : results) {
        maps += r.attention_maps.size();
        doc.artifacts.insert(doc.artifacts.end(), r.manifest.artifacts.begin(), r.manifest.artifacts.end());
        doc.runs.push_back(std::move(r.manifest));
    }
    doc.metrics["attention_maps"] = static_cast<double>(maps);
    const std::string name = base.output.prefix + "_attn_manifest.json";
    write_manifest(p, doc, name, t0);
    out << "exported " << maps << " attention map(s) to " << p.out_dir.string() << "\n";
    return exit_ok;
}

int cmd_sweep(const Prepared& p, int jobs, std::ostream& out) {
    const auto& sw = p.file.sweep;
    if (sw.fractions.empty() || sw.seeds.empty()) throw ConfigFailure("sweep.fractions and sweep.seeds must be non-empty");
    const auto t0 = std::chrono::steady_clock::now();
    const SweepReport report = layer_sweep(p.file.run, sw.fractions, sw.seeds, jobs);
    const std::string prefix = p.file.run.output.prefix;
    io::write_file(p.out_dir / (prefix + "_sweep.csv"), io::sweep_csv(report));
    io::ManifestDocument doc;
    doc.command = "sweep-layers";
    doc.artifacts.push_back(prefix + "_sweep.csv");
    out << "start_fraction  layers  style_gram  content_corr  diversity  leakage\n";
    for (const SweepRow& row : report.rows) {
        const std::string key = "f" + io::format_number(row.start_fraction);
        doc.metrics[key + "_style_gram_distance"] = row.style_distance;
        doc.metrics[key + "_leakage_structure_corr"] = row.leakage;
        char line[160];
        std::snprintf(line, sizeof line, "%14.6g  %6d  %10.4f  %12.4f  %9.4f  %7.4f\n", row.start_fraction, row.num_layers,
                      row.style_distance, row.content_fidelity, row.diversity, row.leakage);
        out << line;
    }
    write_manifest(p, doc, prefix + "_sweep_manifest.json", t0);
    return exit_ok;
}

int cmd_invert_compare(const Prepared& p, std::ostream& out) {
    const RunConfig& run = p.file.run;
    if (p.file.invert.seeds.empty()) throw ConfigFailure("invert_compare.seeds must be non-empty");
    if (run.schedule.eta != 0.0) throw ConfigFailure("invert-compare needs schedule.eta = 0 for DDIM inversion");
    const auto t0 = std::chrono::steady_clock::now();
    const Latent x0 = render_reference(run, *p.denoiser, p.schedule);
    const auto rows = inversion_comparison(x0, *p.denoiser, run.reference.condition, *p.schedule, p.file.invert.seeds);
    const std::string prefix = run.output.prefix;
    io::write_file(p.out_dir / (prefix + "_inversion.csv"), io::inversion_csv(rows));
    io::CurveSeries stochastic{{}, {}, 200, 60, 40}, inversion{{}, {}, 40, 90, 200};
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const InversionRow& r : rows) {
        stochastic.x.push_back(r.t);
        stochastic.y.push_back(r.stochastic_p_mean.value_or(nan));
        inversion.x.push_back(r.t);
        inversion.y.push_back(r.ddim_p.value_or(nan));
    }
    io::write_png(p.out_dir / (prefix + "_inversion.png"), io::plot_curves({stochastic, inversion}, 0.05));
    io::ManifestDocument doc;
    doc.command = "invert-compare";
    doc.artifacts = {prefix + "_inversion.csv", prefix + "_inversion.png"};
    int stochastic_above = 0, inversion_above = 0, counted = 0;
    for (const InversionRow& r : rows) {
        if (!r.stochastic_p_mean || !r.ddim_p) continue;
        ++counted;
        stochastic_above += *r.stochastic_p_mean > 0.05 ? 1 : 0;
        inversion_above += *r.ddim_p > 0.05 ? 1 : 0;
    }
    doc.metrics["timesteps"] = counted;
    doc.metrics["stochastic_p_above_0.05"] = stochastic_above;
    doc.metrics["ddim_inversion_p_above_0.05"] = inversion_above;
    write_manifest(p, doc, prefix + "_inversion_manifest.json", t0);
    out << "timesteps with mean p > 0.05: stochastic encoding " << stochastic_above << "/" << counted
        << ", ddim inversion " << inversion_above << "/" << counted << "\n";
    return exit_ok;
}

int cmd_selftest(const Options& o, std::ostream& out, std::ostream& err) {
    SelftestOptions so;
    so.corrupt_schedule = o.corrupt_schedule;
    int failed = 0;
    for (const CheckResult& r : run_selftest(so)) {
        out << (r.passed ? "ok    " : "FAILED") << "  " << r.name << "\n";
        if (!r.passed) {
            err << "selftest: " << r.name << ": " << r.detail << "\n";
            ++failed;
        }
    }
    if (failed != 0) {
        err << "selftest: " << failed << " check(s) failed\n";
        return exit_runtime_failure;
    }
    return exit_ok;
}

void report_runtime(const Error& e, std::ostream& err) {
    err << "styleswap: runtime failure\n"
        << "  code: " << to_string(e.code()) << "\n"
        << "  where: " << (e.context().empty() ? "-" : e.context()) << "\n"
        << "  detail: " << e.detail() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"styleswap: toy visual style prompting engine"};
    app.require_subcommand(1);
    Options o;
    // Sweep and inversion read their seed lists from the config.
    auto common = [&](CLI::App* sub, bool seeded) {
        sub->add_option("--config", o.config, "JSON run configuration")->required();
        sub->add_option("--set", o.sets, "dotted override, e.g. --set style.guidance.w=5 (repeatable)");
        sub->add_option("--out", o.out, "output directory (overrides output.dir)");
        sub->add_option("--jobs", o.jobs, "worker threads for independent runs")->check(CLI::PositiveNumber);
        if (seeded) {
            sub->add_option("--seed", o.seed, "seed of the original process (first seed of a batch)");
            sub->add_option("--batch", o.batch, "number of consecutive seeds to run");
        }
    };
    CLI::App* gen = app.add_subcommand("generate", "run style-prompted sampling and write images, latents, manifest");
    common(gen, true);
    CLI::App* sweep = app.add_subcommand("sweep-layers", "sweep the swap start fraction over upblock layers");
    common(sweep, false);
    CLI::App* inv = app.add_subcommand("invert-compare", "compare stochastic encoding with DDIM inversion by KS p-value");
    common(inv, false);
    CLI::App* attn = app.add_subcommand("attn-maps", "export head-averaged attention maps");
    common(attn, true);
    CLI::App* self = app.add_subcommand("selftest", "run the embedded invariant suite");
    // Hidden fault-injection hook for testing the failure path.
    self->add_flag("--corrupt-schedule", o.corrupt_schedule)->group("");

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::Success&) {
        const auto subs = app.get_subcommands();
        out << (subs.empty() ? app.help() : subs.front()->help());
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "styleswap: " << e.what() << "\n";
        return exit_config_failure;
    }

    try {
        if (self->parsed()) return cmd_selftest(o, out, err);
        const Prepared p = prepare(o);
        if (gen->parsed()) return cmd_generate(p, o.jobs, out);
        if (attn->parsed()) return cmd_attn_maps(p, o.jobs, out);
        if (sweep->parsed()) return cmd_sweep(p, o.jobs, out);
        if (inv->parsed()) return cmd_invert_compare(p, out);
    } catch (const ConfigFailure& e) {
        err << "styleswap: config failure: " << e.what() << "\n";
        return exit_config_failure;
    } catch (const Error& e) {
        report_runtime(e, err);
        return exit_runtime_failure;
    } catch (const std::exception& e) {
        err << "styleswap: runtime failure: " << e.what() << "\n";
        return exit_runtime_failure;
    }
    return exit_config_failure;
}

}  // namespace styleswap::cli
