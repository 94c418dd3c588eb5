// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include "styleswap/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "styleswap/error.hpp"
#include "styleswap/parallel.hpp"
#include "styleswap/rng.hpp"

namespace styleswap {

double kolmogorov_survival(double lambda) {
    if (lambda <= 0.0) {
        return 1.0;
    }
    // The alternating series converges slowly for small lambda; switch to the
    // theta-function form of the CDF there.
    if (lambda < 1.18) {
        const double pi = std::numbers::pi;
        double cdf = 0.0;
        for (int k = 1; k <= 50; ++k) {
            const double term = std::exp(-(2.0 * k - 1) * (2.0 * k - 1) * pi * pi / (8.0 * lambda * lambda));
            cdf += term;
            if (term < 1e-17 * cdf) break;
        }
        cdf *= std::sqrt(2.0 * pi) / lambda;
        return std::clamp(1.0 - cdf, 0.0, 1.0);
    }
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-17) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_gaussianity(std::span<const double> samples) {
    const std::size_t n = samples.size();
    require(n >= 30, ErrorCode::insufficient_samples,
            "KS test needs at least 30 samples, got " + std::to_string(n));
    std::vector<double> x(samples.begin(), samples.end());
    for (double v : x) {
        require(std::isfinite(v), ErrorCode::non_finite, "KS test sample is not finite");
    }
    std::sort(x.begin(), x.end());
    double d = 0.0;
    const double dn = static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double cdf = 0.5 * std::erfc(-x[i] / std::numbers::sqrt2);
        d = std::max({d, (i + 1) / dn - cdf, cdf - i / dn});
    }
    const double sn = std::sqrt(dn);
    return KsResult{d, kolmogorov_survival(d * (sn + 0.12 + 0.11 / sn)), n};
}

KsResult ks_gaussianity(std::span<const float> samples) {
    std::vector<double> x(samples.begin(), samples.end());
    return ks_gaussianity(std::span<const double>(x));
}

Latent standardize_encoded(const Latent& x_t, const Latent& x0, int t, const Schedule& s) {
    require_same_shape(x_t, x0, "standardize_encoded");
    require(t >= 1 && t <= s.num_steps(), ErrorCode::timestep_out_of_range,
            "standardization is undefined at t=" + std::to_string(t));
    const double a = std::sqrt(s.alpha_bar(t));
    const double b = std::sqrt(1.0 - s.alpha_bar(t));
    Latent z(x_t.channels(), x_t.height(), x_t.width());
    for (std::size_t i = 0; i < z.size(); ++i) {
        z.data()[i] = static_cast<float>((x_t.data()[i] - a * x0.data()[i]) / b);
    }
    return z;
}

namespace {

struct FeatureMap {
    int channels, height, width;
    std::vector<double> data;  // [c][y][x]
};

FeatureMap conv3x3_relu(const FeatureMap& in, int out_channels, SplitMix64& rng) {
    const int fan_in = in.channels * 9;
    std::vector<double> w(static_cast<std::size_t>(out_channels) * fan_in);
    for (double& v : w) v = rng.gaussian() / std::sqrt(static_cast<double>(fan_in));
    FeatureMap out{out_channels, in.height, in.width,
                   std::vector<double>(static_cast<std::size_t>(out_channels) * in.height * in.width, 0.0)};
    for (int o = 0; o < out_channels; ++o) {
        for (int y = 0; y < in.height; ++y) {
            for (int x = 0; x < in.width; ++x) {
                double acc = 0.0;
                for (int c = 0; c < in.channels; ++c) {
                    for (int dy = -1; dy <= 1; ++dy) {
                        const int yy = y + dy;
                        if (yy < 0 || yy >= in.height) continue;
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int xx = x + dx;
                            if (xx < 0 || xx >= in.width) continue;
                            acc += w[(static_cast<std::size_t>(o) * in.channels + c) * 9 + (dy + 1) * 3 + (dx + 1)] *
                                   in.data[(static_cast<std::size_t>(c) * in.height + yy) * in.width + xx];
                        }
                    }
                }
                out.data[(static_cast<std::size_t>(o) * in.height + y) * in.width + x] = std::max(0.0, acc);
            }
        }
    }
    return out;
}

std::vector<double> gram(const FeatureMap& f) {
    const std::size_t n = static_cast<std::size_t>(f.height) * f.width;
    std::vector<double> g(static_cast<std::size_t>(f.channels) * f.channels, 0.0);
    for (int i = 0; i < f.channels; ++i) {
        for (int j = i; j < f.channels; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < n; ++p) acc += f.data[i * n + p] * f.data[j * n + p];
            g[i * f.channels + j] = g[j * f.channels + i] = acc / static_cast<double>(n);
        }
    }
    return g;
}

std::vector<std::vector<double>> gram_features(const Latent& x, std::uint64_t seed) {
    SplitMix64 rng(seed);
    FeatureMap f0{x.channels(), x.height(), x.width(), std::vector<double>(x.data().begin(), x.data().end())};
    const FeatureMap f1 = conv3x3_relu(f0, 8, rng);
    const FeatureMap f2 = conv3x3_relu(f1, 16, rng);
    return {gram(f1), gram(f2)};
}

std::vector<double> gradient_magnitude(const Latent& img) {
    const int lc = std::min(3, img.channels());
    const int h = img.height(), w = img.width();
    std::vector<double> lum(static_cast<std::size_t>(h) * w, 0.0);
    for (int c = 0; c < lc; ++c) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) lum[y * w + x] += img.at(c, y, x) / static_cast<double>(lc);
    }
    auto L = [&](int y, int x) { return lum[std::clamp(y, 0, h - 1) * w + std::clamp(x, 0, w - 1)]; };
    std::vector<double> g(lum.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gx = 0.5 * (L(y, x + 1) - L(y, x - 1));
            const double gy = 0.5 * (L(y + 1, x) - L(y - 1, x));
            g[y * w + x] = std::hypot(gx, gy);
        }
    }
    return g;
}

}  // namespace

StyleDistance gram_style_distance(const Latent& a, const Latent& b, std::uint64_t extractor_seed) {
    require(a.channels() == b.channels(), ErrorCode::shape_mismatch,
            "gram_style_distance: channel counts differ (" + a.shape_string() + " vs " + b.shape_string() + ")");
    const auto ga = gram_features(a, extractor_seed);
    const auto gb = gram_features(b, extractor_seed);
    double total = 0.0;
    for (std::size_t l = 0; l < ga.size(); ++l) {
        double ss = 0.0;
        for (std::size_t i = 0; i < ga[l].size(); ++i) {
            const double d = ga[l][i] - gb[l][i];
            ss += d * d;
        }
        total += std::sqrt(ss);
    }
    StyleDistance out;
    out.gram_distance = total / static_cast<double>(ga.size());
    out.feature_spec = "relu(conv3x3 " + std::to_string(a.channels()) + "->8), relu(conv3x3 8->16); gram/pixels; seed " +
                       std::to_string(extractor_seed);
    return out;
}

double structure_correlation(const Latent& a, const Latent& b) {
    require(a.height() == b.height() && a.width() == b.width(), ErrorCode::shape_mismatch,
            "structure_correlation: spatial sizes differ (" + a.shape_string() + " vs " + b.shape_string() + ")");
    const auto ga = gradient_magnitude(a);
    const auto gb = gradient_magnitude(b);
    const double n = static_cast<double>(ga.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < ga.size(); ++i) {
        ma += ga[i];
        mb += gb[i];
    }
    ma /= n;
    mb /= n;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < ga.size(); ++i) {
        saa += (ga[i] - ma) * (ga[i] - ma);
        sbb += (gb[i] - mb) * (gb[i] - mb);
        sab += (ga[i] - ma) * (gb[i] - mb);
    }
    require(saa / n > 1e-18 && sbb / n > 1e-18, ErrorCode::zero_variance,
            "structure_correlation: gradient field has zero variance");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double diversity_score(const std::vector<Latent>& outputs) {
    require(outputs.size() >= 2, ErrorCode::too_few_outputs, "diversity needs at least two outputs");
    std::vector<std::vector<double>> unit;
    for (const auto& o : outputs) {
        require_same_shape(o, outputs.front(), "diversity_score");
        double ss = 0.0;
        for (float v : o.data()) ss += static_cast<double>(v) * v;
        const double inv = ss > 0.0 ? 1.0 / std::sqrt(ss) : 1.0;
        std::vector<double> u(o.size());
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = o.data()[i] * inv;
        unit.push_back(std::move(u));
    }
    double total = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < unit.size(); ++i) {
        for (std::size_t j = i + 1; j < unit.size(); ++j) {
            double ss = 0.0;
            for (std::size_t k = 0; k < unit[i].size(); ++k) {
                const double d = unit[i][k] - unit[j][k];
                ss += d * d;
            }
            total += std::sqrt(ss);
            ++pairs;
        }
    }
    return total / pairs;
}

namespace {

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

SweepReport layer_sweep(const RunConfig& base, const std::vector<double>& fractions,
                        const std::vector<std::uint64_t>& seeds, int jobs) {
    require(!fractions.empty(), ErrorCode::empty_selection, "layer_sweep: no fractions given");
    require(!seeds.empty(), ErrorCode::empty_selection, "layer_sweep: no seeds given");
    require(base.style_enabled, ErrorCode::invalid_config, "layer_sweep needs the style path enabled");
    for (double f : fractions) {
        require(std::isfinite(f) && f >= 0.0, ErrorCode::invalid_range, "sweep fractions must be finite and >= 0");
    }
    base.validate();
    auto schedule = std::make_shared<const Schedule>(base.schedule.build());
    auto denoiser = build_denoiser(base.denoiser, schedule);
    const Latent reference = render_reference(base, *denoiser, schedule);

    const std::size_t ns = seeds.size();
    std::vector<Latent> baselines(ns);
    parallel_for(ns, jobs, [&](std::size_t i) {
        RunConfig cfg = base;
        cfg.seed = seeds[i];
        cfg.style_enabled = false;
        baselines[i] = run_t2i_with_style(cfg, *denoiser, schedule).x0;
    });

    std::vector<std::vector<Latent>> outputs(fractions.size(), std::vector<Latent>(ns));
    std::vector<int> layer_counts(fractions.size());
    for (std::size_t f = 0; f < fractions.size(); ++f) {
        layer_counts[f] =
            static_cast<int>(select_upblock_layers(base.denoiser.attention_layout, fractions[f]).layers.size());
    }
    parallel_for(fractions.size() * ns, jobs, [&](std::size_t cell) {
        const std::size_t f = cell / ns, i = cell % ns;
        if (layer_counts[f] == 0) {
            outputs[f][i] = baselines[i];
            return;
        }
        RunConfig cfg = base;
        cfg.seed = seeds[i];
        cfg.swap.start_fraction = fractions[f];
        try {
            outputs[f][i] = run_t2i_with_style(cfg, *denoiser, schedule).x0;
        } catch (const Error& e) {
            throw e.annotated("start_fraction " + std::to_string(fractions[f]) + ", seed " + std::to_string(seeds[i]));
        }
    });

    SweepReport report;
    report.seeds = seeds;
    for (std::size_t f = 0; f < fractions.size(); ++f) {
        SweepRow row;
        row.start_fraction = fractions[f];
        row.num_layers = layer_counts[f];
        for (std::size_t i = 0; i < ns; ++i) {
            const Latent& out = outputs[f][i];
            row.style_per_seed.push_back(gram_style_distance(out, reference).gram_distance);
            row.fidelity_per_seed.push_back(structure_correlation(out, baselines[i]));
            row.leakage_per_seed.push_back(structure_correlation(out, reference));
        }
        row.style_distance = mean_of(row.style_per_seed);
        row.content_fidelity = mean_of(row.fidelity_per_seed);
        row.leakage = mean_of(row.leakage_per_seed);
        row.diversity = ns >= 2 ? diversity_score(outputs[f]) : 0.0;
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::vector<InversionRow> inversion_comparison(const Latent& x0_visual, const Denoiser& denoiser,
                                               const Condition& c_visual, const Schedule& s,
                                               const std::vector<std::uint64_t>& seeds) {
    require(!seeds.empty(), ErrorCode::empty_selection, "inversion_comparison: no seeds given");
    const std::vector<Latent> traj = ddim_invert_reference(x0_visual, denoiser, c_visual, s);
    std::vector<InversionRow> rows;
    rows.push_back(InversionRow{0, std::nullopt, std::nullopt, std::nullopt});
    for (int t = 1; t <= s.num_steps(); ++t) {
        InversionRow row;
        row.t = t;
        double p_sum = 0.0;
        int passed = 0;
        for (std::uint64_t seed : seeds) {
            const Latent xt = stochastic_encode(x0_visual, t, encoding_noise(seed, t, x0_visual), s);
            const double p = ks_gaussianity(standardize_encoded(xt, x0_visual, t, s).data()).p_value;
            p_sum += p;
            passed += p > 0.05 ? 1 : 0;
        }
        row.stochastic_p_mean = p_sum / static_cast<double>(seeds.size());
        row.stochastic_pass_fraction = static_cast<double>(passed) / static_cast<double>(seeds.size());
        row.ddim_p = ks_gaussianity(standardize_encoded(traj[t], x0_visual, t, s).data()).p_value;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace styleswap
