// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include "styleswap/denoiser.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "styleswap/error.hpp"
#include "styleswap/rng.hpp"

namespace styleswap {

std::string Condition::describe() const {
    if (is_null()) {
        return "null";
    }
    std::string out;
    if (content_id) {
        out += "content=" + std::to_string(*content_id);
    }
    if (style_id) {
        out += (out.empty() ? "" : ",") + std::string("style=") + std::to_string(*style_id);
    }
    return out;
}

std::string_view to_string(DenoiserKind k) {
    return k == DenoiserKind::seeded_random ? "seeded_random" : "structured_style";
}

DenoiserKind denoiser_kind_from_string(std::string_view s) {
    if (s == "seeded_random") return DenoiserKind::seeded_random;
    if (s == "structured_style") return DenoiserKind::structured_style;
    fail(ErrorCode::unsupported_kind, "unknown denoiser kind '" + std::string(s) + "'");
}

void DenoiserSpec::validate() const {
    require(channels > 0 && height > 0 && width > 0, ErrorCode::invalid_range, "denoiser dimensions must be positive");
    require(height % patch() == 0 && width % patch() == 0, ErrorCode::invalid_range,
            "latent height and width must be multiples of the patch size 2");
    require(heads > 0 && base_width > 0 && base_width % heads == 0, ErrorCode::invalid_range,
            "base_width must be a positive multiple of heads");
    require(content_vocab > 0 && style_vocab > 0, ErrorCode::invalid_range, "vocabulary sizes must be positive");
    require(std::isfinite(output_gain), ErrorCode::invalid_range, "output_gain must be finite");
    attention_layout.validate();
    if (kind == DenoiserKind::structured_style) {
        const int head_dim = base_width / heads;
        require(head_dim >= 4 && channels <= head_dim, ErrorCode::invalid_range,
                "structured_style needs head_dim >= max(4, channels)");
        const StructuredParams& p = structured;
        for (double v : {p.prior_mean_std, p.prior_layout_std, p.prior_patch_std, p.prior_residual_std}) {
            require(std::isfinite(v) && v > 0.0, ErrorCode::invalid_range, "prior std must be finite and > 0");
        }
        for (double v : {p.up_position_first, p.up_position_last, p.up_structure_first, p.up_structure_last,
                         p.down_position, p.down_structure, p.content_amplitude, p.style_amplitude}) {
            require(std::isfinite(v) && v >= 0.0, ErrorCode::invalid_range, "structured weights must be finite and >= 0");
        }
        for (double v : {p.up_rate, p.down_rate}) {
            require(std::isfinite(v) && v >= 0.0 && v <= 1.0, ErrorCode::invalid_range, "mixing rates must lie in [0, 1]");
        }
    }
}

void DenoiserSpec::validate(const Condition& c) const {
    if (c.content_id) {
        require(*c.content_id >= 0 && *c.content_id < content_vocab, ErrorCode::invalid_range,
                "content_id " + std::to_string(*c.content_id) + " outside vocabulary of " + std::to_string(content_vocab));
    }
    if (c.style_id) {
        require(*c.style_id >= 0 && *c.style_id < style_vocab, ErrorCode::invalid_range,
                "style_id " + std::to_string(*c.style_id) + " outside vocabulary of " + std::to_string(style_vocab));
    }
}

ForwardResult Denoiser::forward(const Latent& x_t, int t, const Condition& c, const TapPlan& taps,
                                const InjectionSources& sources) const {
    spec().validate(c);
    return forward_embedded(x_t, t, embed(c), taps, sources);
}

void Denoiser::check_forward_inputs(const Latent& x_t, int t, const TapPlan& taps, int num_steps) const {
    const DenoiserSpec& s = spec();
    require(x_t.channels() == s.channels && x_t.height() == s.height && x_t.width() == s.width,
            ErrorCode::shape_mismatch,
            "latent " + x_t.shape_string() + " does not match denoiser geometry " + std::to_string(s.channels) + "x" +
                std::to_string(s.height) + "x" + std::to_string(s.width));
    if (num_steps > 0) {
        require(t >= 1 && t <= num_steps, ErrorCode::timestep_out_of_range,
                "forward timestep " + std::to_string(t) + " outside [1, " + std::to_string(num_steps) + "]");
    } else {
        require(t >= 0, ErrorCode::timestep_out_of_range, "forward timestep must be >= 0");
    }
    auto check = [&](const LayerAddress& l) {
        require(s.attention_layout.contains(l), ErrorCode::invalid_layer,
                "tap plan names layer " + std::string(to_string(l.section)) + "/" + std::to_string(l.index) +
                    " which is not in the architecture");
    };
    for (const auto& [l, sel] : taps.captures) check(l);
    for (const auto& [l, inj] : taps.injections) check(l);
    for (const auto& l : taps.attn_map_layers) check(l);
}

namespace {

// Token p = py * (W/2) + px owns pixels (2py + dy, 2px + dx).
struct PatchGrid {
    int channels, height, width, gh, gw;

    explicit PatchGrid(const DenoiserSpec& s)
        : channels(s.channels), height(s.height), width(s.width), gh(s.height / 2), gw(s.width / 2) {}
    int tokens() const { return gh * gw; }
};

std::vector<double> random_matrix(SplitMix64& rng, int rows, int cols, double scale) {
    std::vector<double> m(static_cast<std::size_t>(rows) * cols);
    for (double& v : m) {
        v = rng.gaussian() * scale;
    }
    return m;
}

// y = M x for row-major M (rows x cols).
void matvec(const std::vector<double>& m, int rows, int cols, const double* x, double* y) {
    for (int r = 0; r < rows; ++r) {
        double acc = 0.0;
        const double* row = m.data() + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) {
            acc += row[c] * x[c];
        }
        y[r] = acc;
    }
}

Matrix to_matrix(const std::vector<double>& values, int rows, int cols) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < values.size(); ++i) {
        m.data[i] = static_cast<float>(values[i]);
    }
    return m;
}

// Patchify -> width-D residual stack with one attention layer per manifest
// entry, tanh MLPs, and down->up skip connections -> unpatchify.
//
// Weight draw order from SplitMix64(seed): W_in, W_out, content table,
// style table, then per layer W_q, W_k, W_v, W_o, W_1, W_2. Every entry is a
// standard normal scaled by 1/sqrt(fan_in); content/style tables use 0.5.
// W_in carries an extra kInputGain and both residual branches (W_o, W_2) an
// extra 1/sqrt(2 * layers), which keeps eps nearly flat in x_t so DDIM
// inversion stays first-order accurate at T = 10.
class SeededRandomDenoiser final : public Denoiser {
public:
    static constexpr double kInputGain = 0.02;

    SeededRandomDenoiser(DenoiserSpec spec, std::shared_ptr<const Schedule> schedule)
        : spec_(std::move(spec)), schedule_(std::move(schedule)), grid_(spec_) {
        const int d = spec_.base_width;
        const int p = patch_dim();
        SplitMix64 rng(spec_.seed);
        w_in_ = random_matrix(rng, d, p, kInputGain / std::sqrt(p));
        w_out_ = random_matrix(rng, p, d, 1.0 / std::sqrt(d));
        content_table_ = random_matrix(rng, spec_.content_vocab, d, 0.5);
        style_table_ = random_matrix(rng, spec_.style_vocab, d, 0.5);
        const double s = 1.0 / std::sqrt(d);
        const double branch = s / std::sqrt(2.0 * static_cast<double>(spec_.attention_layout.layers.size()));
        for (std::size_t l = 0; l < spec_.attention_layout.layers.size(); ++l) {
            Layer layer;
            layer.wq = random_matrix(rng, d, d, s);
            layer.wk = random_matrix(rng, d, d, s);
            layer.wv = random_matrix(rng, d, d, s);
            layer.wo = random_matrix(rng, d, d, branch);
            layer.w1 = random_matrix(rng, d, d, s);
            layer.w2 = random_matrix(rng, d, d, branch);
            layers_.push_back(std::move(layer));
        }
        // Up layer k (from the first) takes the skip of down layer n_down-1-k.
        std::vector<int> downs;
        for (const auto& l : spec_.attention_layout.layers) {
            if (l.section == Section::down) downs.push_back(l.index);
        }
        int k = 0;
        for (const auto& l : spec_.attention_layout.layers) {
            int src = -1;
            if (l.section == Section::up) {
                if (k < static_cast<int>(downs.size())) src = downs[downs.size() - 1 - k];
                ++k;
            }
            skip_source_.push_back(src);
        }
    }

    const DenoiserSpec& spec() const noexcept override { return spec_; }

    std::vector<float> embed(const Condition& c) const override {
        spec_.validate(c);
        const int d = spec_.base_width;
        std::vector<float> e(d, 0.0f);
        for (int i = 0; i < d; ++i) {
            double v = 0.0;
            if (c.content_id) v += content_table_[static_cast<std::size_t>(*c.content_id) * d + i];
            if (c.style_id) v += style_table_[static_cast<std::size_t>(*c.style_id) * d + i];
            e[i] = static_cast<float>(v);
        }
        return e;
    }

    ForwardResult forward_embedded(const Latent& x_t, int t, const std::vector<float>& embedding, const TapPlan& taps,
                                   const InjectionSources& sources) const override {
        check_forward_inputs(x_t, t, taps, schedule_ ? schedule_->num_steps() : 0);
        const int d = spec_.base_width;
        require(static_cast<int>(embedding.size()) == d, ErrorCode::dimension_mismatch,
                "embedding width differs from base_width");
        const int n = grid_.tokens();
        const int p = patch_dim();

        std::vector<double> time_emb(d);
        for (int i = 0; i < d; ++i) {
            const double freq = std::exp(-std::log(1000.0) * static_cast<double>(i / 2) / std::max(1, d / 2));
            time_emb[i] = 0.5 * (i % 2 == 0 ? std::sin(t * freq) : std::cos(t * freq));
        }

        std::vector<double> h(static_cast<std::size_t>(n) * d);
        std::vector<double> patch(p);
        for (int tok = 0; tok < n; ++tok) {
            gather_patch(x_t, tok, patch.data());
            double* row = &h[static_cast<std::size_t>(tok) * d];
            matvec(w_in_, d, p, patch.data(), row);
            for (int i = 0; i < d; ++i) {
                row[i] += time_emb[i] + embedding[i];
            }
        }

        ForwardResult result{Latent(), FeatureStore(Process::original), {}};
        LayerContext ctx{taps, sources, t, result.captured, result.maps};
        std::vector<std::vector<double>> saved(layers_.size());
        std::vector<double> q(static_cast<std::size_t>(n) * d), k(q.size()), v(q.size()), tmp(d), tmp2(d);
        const int heads = spec_.heads;
        for (std::size_t li = 0; li < layers_.size(); ++li) {
            const Layer& L = layers_[li];
            const LayerAddress& addr = spec_.attention_layout.layers[li];
            if (skip_source_[li] >= 0) {
                const auto& skip = saved[skip_source_[li]];
                for (std::size_t i = 0; i < h.size(); ++i) h[i] += skip[i];
            }
            for (int tok = 0; tok < n; ++tok) {
                const double* row = &h[static_cast<std::size_t>(tok) * d];
                matvec(L.wq, d, d, row, &q[static_cast<std::size_t>(tok) * d]);
                matvec(L.wk, d, d, row, &k[static_cast<std::size_t>(tok) * d]);
                matvec(L.wv, d, d, row, &v[static_cast<std::size_t>(tok) * d]);
            }
            AttentionTensors at{heads, d / heads, to_matrix(q, n, d), to_matrix(k, n, d), to_matrix(v, n, d)};
            const Matrix o = run_attention_layer(addr, at, ctx);
            for (int tok = 0; tok < n; ++tok) {
                double* row = &h[static_cast<std::size_t>(tok) * d];
                for (int i = 0; i < d; ++i) tmp2[i] = o(tok, i);
                matvec(L.wo, d, d, tmp2.data(), tmp.data());
                for (int i = 0; i < d; ++i) row[i] += tmp[i];
                matvec(L.w1, d, d, row, tmp.data());
                for (int i = 0; i < d; ++i) tmp[i] = std::tanh(tmp[i]);
                matvec(L.w2, d, d, tmp.data(), tmp2.data());
                for (int i = 0; i < d; ++i) row[i] += tmp2[i];
            }
            if (addr.section == Section::down) saved[li] = h;
        }

        Latent eps(x_t.channels(), x_t.height(), x_t.width());
        for (int tok = 0; tok < n; ++tok) {
            matvec(w_out_, p, d, &h[static_cast<std::size_t>(tok) * d], patch.data());
            for (double& e : patch) e *= spec_.output_gain;
            scatter_patch(eps, tok, patch.data());
        }
        require_finite(eps, "seeded_random eps");
        result.eps = std::move(eps);
        return result;
    }

private:
    struct Layer {
        std::vector<double> wq, wk, wv, wo, w1, w2;
    };

    int patch_dim() const { return spec_.channels * 4; }

    // Patch vector layout: channel-major, then dy, then dx.
    void gather_patch(const Latent& x, int tok, double* out) const {
        const int py = tok / grid_.gw, px = tok % grid_.gw;
        int i = 0;
        for (int c = 0; c < grid_.channels; ++c)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) out[i++] = x.at(c, 2 * py + dy, 2 * px + dx);
    }
    void scatter_patch(Latent& x, int tok, const double* in) const {
        const int py = tok / grid_.gw, px = tok % grid_.gw;
        int i = 0;
        for (int c = 0; c < grid_.channels; ++c)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) x.at(c, 2 * py + dy, 2 * px + dx) = static_cast<float>(in[i++]);
    }

    DenoiserSpec spec_;
    std::shared_ptr<const Schedule> schedule_;
    PatchGrid grid_;
    std::vector<double> w_in_, w_out_, content_table_, style_table_;
    std::vector<Layer> layers_;
    std::vector<int> skip_source_;
};

// x0-parameterized toy with an analytic handle on style and structure.
//
// Embedding = [template coefficients (kBasis), style colour (C)]. The prior
// clean image is P[c](y,x) = A_c * S(y,x) + A_s * m[c] with S a unit-RMS
// combination of low-frequency cosines; the null condition has P = 0.
//
// Forward on u = x_t / sqrt(abar): tokens carry the patch channel means mu.
// Every attention layer reads Q = K = [pos_h(p) scaled to a positional
// precision, code(mu)_p scaled to a structure-logit weight] and V = [mu_p, 0...],
// then relaxes mu <- mu + (1 - abar) * rate * (o - mu). Colour therefore
// flows only through V and layout only through Q/K. The positional kernel
// falls monotonically with distance; upblock precision and structure weight
// are interpolated from the first to the last upblock layer.
//
// The estimate is a Gaussian posterior per level: channel mean, layout
// coefficients on the patch-averaged basis, patch remainder, and the
// sub-patch residual, each with its own prior std and noise variance.
class StructuredStyleDenoiser final : public Denoiser {
public:
    static constexpr int kBasis = 7;

    StructuredStyleDenoiser(DenoiserSpec spec, std::shared_ptr<const Schedule> schedule)
        : spec_(std::move(spec)), schedule_(std::move(schedule)), grid_(spec_) {
        require(schedule_ != nullptr, ErrorCode::invalid_config, "structured_style denoiser needs a schedule");
        build_basis();
        build_positions();
        build_layer_weights();
        SplitMix64 rng(spec_.seed);
        for (int k = 0; k < spec_.content_vocab; ++k) {
            std::array<double, kBasis> a{};
            for (double& v : a) v = rng.gaussian();
            // Unit-RMS template.
            double ss = 0.0;
            for (int i = 0; i < grid_.height * grid_.width; ++i) {
                double s = 0.0;
                for (int b = 0; b < kBasis; ++b) s += a[b] * basis_[b][i];
                ss += s * s;
            }
            const double inv = 1.0 / std::sqrt(ss / (grid_.height * grid_.width));
            for (double& v : a) v *= inv;
            content_coeffs_.push_back(a);
        }
        for (int j = 0; j < spec_.style_vocab; ++j) {
            std::vector<double> m(spec_.channels);
            for (double& v : m) v = rng.gaussian();
            style_colors_.push_back(std::move(m));
        }
    }

    const DenoiserSpec& spec() const noexcept override { return spec_; }

    std::vector<float> embed(const Condition& c) const override {
        spec_.validate(c);
        std::vector<float> e(kBasis + spec_.channels, 0.0f);
        if (c.content_id) {
            for (int b = 0; b < kBasis; ++b) e[b] = static_cast<float>(content_coeffs_[*c.content_id][b]);
        }
        if (c.style_id) {
            for (int ch = 0; ch < spec_.channels; ++ch) e[kBasis + ch] = static_cast<float>(style_colors_[*c.style_id][ch]);
        }
        return e;
    }

    ForwardResult forward_embedded(const Latent& x_t, int t, const std::vector<float>& embedding, const TapPlan& taps,
                                   const InjectionSources& sources) const override {
        check_forward_inputs(x_t, t, taps, schedule_->num_steps());
        const int C = spec_.channels;
        require(static_cast<int>(embedding.size()) == kBasis + C, ErrorCode::dimension_mismatch,
                "embedding width differs from the structured layout");
        const StructuredParams& P = spec_.structured;
        const double ab = schedule_->alpha_bar(t);
        const double sab = std::sqrt(ab);
        const double s1ab = std::sqrt(1.0 - ab);
        const int n = grid_.tokens();
        const int plane = grid_.height * grid_.width;

        // Observation u = x_t / sqrt(abar), split into patch means and residual.
        std::vector<double> u(x_t.size());
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = x_t.data()[i] / sab;
        std::vector<double> mu = patch_means(u);
        const std::vector<double> mu_obs = mu;
        // Attention mixing fades with the noise variance, so a nearly clean
        // input passes through its layers almost unchanged.
        const double mix = 1.0 - ab;

        ForwardResult result{Latent(), FeatureStore(Process::original), {}};
        LayerContext ctx{taps, sources, t, result.captured, result.maps};
        const int heads = spec_.heads;
        const int hd = spec_.base_width / heads;
        const int width = heads * hd;
        for (std::size_t li = 0; li < spec_.attention_layout.layers.size(); ++li) {
            const LayerAddress& addr = spec_.attention_layout.layers[li];
            const LayerWeights& lw = layer_weights_[li];
            const std::vector<double> code = structure_code(mu);
            Matrix qk(n, width), v(n, width);
            for (int p = 0; p < n; ++p) {
                for (int h = 0; h < heads; ++h) {
                    const int off = h * hd;
                    for (int e = 0; e < hd - 3; ++e) {
                        qk(p, off + e) = static_cast<float>(lw.position[h] * positions_[h][static_cast<std::size_t>(p) * (hd - 3) + e]);
                    }
                    for (int e = 0; e < 3; ++e) {
                        qk(p, off + hd - 3 + e) = static_cast<float>(lw.structure * code[static_cast<std::size_t>(p) * 3 + e]);
                    }
                    for (int c = 0; c < C; ++c) {
                        v(p, off + c) = static_cast<float>(mu[static_cast<std::size_t>(p) * C + c]);
                    }
                }
            }
            AttentionTensors at{heads, hd, qk, qk, std::move(v)};
            const Matrix o = run_attention_layer(addr, at, ctx);
            for (int p = 0; p < n; ++p) {
                for (int c = 0; c < C; ++c) {
                    double avg = 0.0;
                    for (int h = 0; h < heads; ++h) avg += o(p, h * hd + c);
                    avg /= heads;
                    double& m = mu[static_cast<std::size_t>(p) * C + c];
                    m += mix * lw.rate * (avg - m);
                }
            }
        }

        // Prior clean image from the embedding.
        std::vector<double> prior(u.size(), 0.0);
        for (int c = 0; c < C; ++c) {
            const double colour = P.style_amplitude * embedding[kBasis + c];
            for (int i = 0; i < plane; ++i) {
                double s = 0.0;
                for (int b = 0; b < kBasis; ++b) s += embedding[b] * basis_[b][i];
                prior[static_cast<std::size_t>(c) * plane + i] = P.content_amplitude * s + colour;
            }
        }
        const std::vector<double> prior_mu = patch_means(prior);
        const Levels obs = split_levels(mu);
        const Levels pri = split_levels(prior_mu);

        // Each level averages a different number of pixels, so its noise
        // variance is noise_var over that count.
        const double noise_var = (1.0 - ab) / ab;
        const double sm2 = P.prior_mean_std * P.prior_mean_std;
        const double sl2 = P.prior_layout_std * P.prior_layout_std;
        const double sp2 = P.prior_patch_std * P.prior_patch_std;
        const double sr2 = P.prior_residual_std * P.prior_residual_std;
        const double g_mean = sm2 / (sm2 + noise_var / plane);
        std::array<double, kBasis> g_layout{};
        for (int b = 0; b < kBasis; ++b) g_layout[b] = sl2 / (sl2 + noise_var / 4.0 * layout_inverse_gram_[b][b]);
        const double g_patch = sp2 / (sp2 + noise_var / 4.0);
        const double g_resid = sr2 / (sr2 + noise_var);

        // Posterior estimate of the token means, level by level.
        std::vector<double> est(mu.size());
        for (int c = 0; c < C; ++c) {
            const double global = pri.mean[c] + g_mean * (obs.mean[c] - pri.mean[c]);
            for (int p = 0; p < n; ++p) {
                double layout = 0.0;
                for (int b = 0; b < kBasis; ++b) {
                    const double coeff = pri.layout[c][b] + g_layout[b] * (obs.layout[c][b] - pri.layout[c][b]);
                    layout += coeff * patch_basis_[b][p];
                }
                const std::size_t pi = static_cast<std::size_t>(p) * C + c;
                est[pi] = global + layout + pri.rest[pi] + g_patch * (obs.rest[pi] - pri.rest[pi]);
            }
        }

        Latent eps(C, grid_.height, grid_.width);
        for (int c = 0; c < C; ++c) {
            for (int y = 0; y < grid_.height; ++y) {
                for (int x = 0; x < grid_.width; ++x) {
                    const std::size_t i = (static_cast<std::size_t>(c) * grid_.height + y) * grid_.width + x;
                    const std::size_t pi = static_cast<std::size_t>((y / 2) * grid_.gw + x / 2) * C + c;
                    const double r_obs = u[i] - mu_obs[pi];
                    const double r_prior = prior[i] - prior_mu[pi];
                    const double x0 = est[pi] + r_prior + g_resid * (r_obs - r_prior);
                    eps.data()[i] = static_cast<float>((x_t.data()[i] - sab * x0) / s1ab);
                }
            }
        }
        require_finite(eps, "structured_style eps");
        result.eps = std::move(eps);
        return result;
    }

private:
    struct LayerWeights {
        std::vector<double> position;  // per head, multiplies the positional features
        double structure = 0.0;  // multiplies the normalized structure code
        double rate = 0.0;
    };

    void build_basis() {
        static constexpr std::array<std::array<int, 2>, kBasis> freqs{
            {{1, 0}, {0, 1}, {1, 1}, {2, 0}, {0, 2}, {2, 1}, {1, 2}}};
        for (const auto& f : freqs) {
            std::vector<double> b(static_cast<std::size_t>(grid_.height) * grid_.width);
            for (int y = 0; y < grid_.height; ++y) {
                for (int x = 0; x < grid_.width; ++x) {
                    b[static_cast<std::size_t>(y) * grid_.width + x] =
                        std::cos(std::numbers::pi * f[0] * (x + 0.5) / grid_.width) *
                        std::cos(std::numbers::pi * f[1] * (y + 0.5) / grid_.height);
                }
            }
            basis_[&f - freqs.data()] = std::move(b);
        }
        // Patch-averaged basis and the inverse of its token Gram matrix.
        const int n = grid_.tokens();
        for (int b = 0; b < kBasis; ++b) {
            std::vector<double> pb(n, 0.0);
            for (int y = 0; y < grid_.height; ++y) {
                for (int x = 0; x < grid_.width; ++x) {
                    pb[(y / 2) * grid_.gw + x / 2] += 0.25 * basis_[b][static_cast<std::size_t>(y) * grid_.width + x];
                }
            }
            patch_basis_[b] = std::move(pb);
        }
        std::array<std::array<double, 2 * kBasis>, kBasis> aug{};
        for (int i = 0; i < kBasis; ++i) {
            for (int j = 0; j < kBasis; ++j) {
                for (int p = 0; p < n; ++p) aug[i][j] += patch_basis_[i][p] * patch_basis_[j][p];
            }
            aug[i][kBasis + i] = 1.0;
        }
        // Gauss-Jordan; the Gram matrix is symmetric positive definite.
        for (int i = 0; i < kBasis; ++i) {
            const double piv = aug[i][i];
            for (double& v : aug[i]) v /= piv;
            for (int r = 0; r < kBasis; ++r) {
                if (r == i) continue;
                const double f = aug[r][i];
                for (int k = 0; k < 2 * kBasis; ++k) aug[r][k] -= f * aug[i][k];
            }
        }
        for (int i = 0; i < kBasis; ++i) {
            for (int j = 0; j < kBasis; ++j) layout_inverse_gram_[i][j] = aug[i][kBasis + j];
        }
    }

    // Head h uses angular frequency w_h = pi/gw * (h+1)/heads, low enough that
    // cos(w_h * d) falls monotonically over the whole grid. Features are
    // [cos wx, sin wx, cos wy, sin wy] / sqrt(2), so two positions have dot
    // product (cos w dx + cos w dy) / 2; extra slots are zero.
    void build_positions() {
        const int hd = spec_.base_width / spec_.heads;
        const int pd = hd - 3;
        for (int h = 0; h < spec_.heads; ++h) {
            const double w = std::numbers::pi / grid_.gw * (h + 1.0) / spec_.heads;
            frequencies_.push_back(w);
            std::vector<double> f(static_cast<std::size_t>(grid_.tokens()) * pd, 0.0);
            for (int p = 0; p < grid_.tokens(); ++p) {
                const double px = p % grid_.gw, py = p / grid_.gw;
                const std::array<double, 4> vals{std::cos(w * px), std::sin(w * px), std::cos(w * py), std::sin(w * py)};
                for (int e = 0; e < std::min(pd, 4); ++e) {
                    f[static_cast<std::size_t>(p) * pd + e] = vals[e] / std::sqrt(2.0);
                }
            }
            positions_.push_back(std::move(f));
        }
    }

    // Positional precision k (tokens^-2) becomes a per-head feature scale so
    // that the logit falls as k * d^2 / 2 near the query; structure weight b
    // makes the structure logit b * <code_q, code_k> after the 1/sqrt(d) scale.
    void build_layer_weights() {
        const StructuredParams& P = spec_.structured;
        const double root_d = std::sqrt(static_cast<double>(spec_.base_width / spec_.heads));
        int n_up = 0;
        for (const auto& l : spec_.attention_layout.layers) n_up += l.section == Section::up ? 1 : 0;
        int k = 0;
        for (const auto& l : spec_.attention_layout.layers) {
            double precision = P.down_position, structure = P.down_structure;
            LayerWeights w;
            w.rate = P.down_rate;
            if (l.section == Section::up) {
                const double f = n_up > 1 ? static_cast<double>(k) / (n_up - 1) : 0.0;
                precision = P.up_position_first + f * (P.up_position_last - P.up_position_first);
                structure = P.up_structure_first + f * (P.up_structure_last - P.up_structure_first);
                w.rate = P.up_rate;
                ++k;
            }
            for (double omega : frequencies_) {
                w.position.push_back(std::sqrt(2.0 * root_d * precision / (omega * omega)));
            }
            w.structure = std::sqrt(root_d * structure);
            layer_weights_.push_back(std::move(w));
        }
    }

    // Token-major means, [p * C + c].
    std::vector<double> patch_means(const std::vector<double>& img) const {
        const int C = grid_.channels;
        std::vector<double> mu(static_cast<std::size_t>(grid_.tokens()) * C, 0.0);
        for (int c = 0; c < C; ++c) {
            for (int y = 0; y < grid_.height; ++y) {
                for (int x = 0; x < grid_.width; ++x) {
                    mu[static_cast<std::size_t>((y / 2) * grid_.gw + x / 2) * C + c] +=
                        0.25 * img[(static_cast<std::size_t>(c) * grid_.height + y) * grid_.width + x];
                }
            }
        }
        return mu;
    }

    // Token means split into channel mean, least-squares layout coefficients
    // on the patch-averaged basis, and the remainder. Exact: mean + layout +
    // rest reproduces the input.
    struct Levels {
        std::vector<double> mean;
        std::vector<std::array<double, kBasis>> layout;
        std::vector<double> rest;
    };

    Levels split_levels(const std::vector<double>& mu) const {
        const int C = grid_.channels;
        const int n = grid_.tokens();
        Levels lv{std::vector<double>(C, 0.0), std::vector<std::array<double, kBasis>>(C), mu};
        for (std::size_t i = 0; i < mu.size(); ++i) lv.mean[i % C] += mu[i] / n;
        for (int c = 0; c < C; ++c) {
            std::array<double, kBasis> proj{};
            for (int b = 0; b < kBasis; ++b) {
                for (int p = 0; p < n; ++p) proj[b] += patch_basis_[b][p] * (mu[static_cast<std::size_t>(p) * C + c] - lv.mean[c]);
            }
            for (int b = 0; b < kBasis; ++b) {
                double v = 0.0;
                for (int k = 0; k < kBasis; ++k) v += layout_inverse_gram_[b][k] * proj[k];
                lv.layout[c][b] = v;
            }
            for (int p = 0; p < n; ++p) {
                double r = mu[static_cast<std::size_t>(p) * C + c] - lv.mean[c];
                for (int b = 0; b < kBasis; ++b) r -= lv.layout[c][b] * patch_basis_[b][p];
                lv.rest[static_cast<std::size_t>(p) * C + c] = r;
            }
        }
        return lv;
    }

    // [contrast, gx, gy] of the token luminance, scaled to unit RMS norm.
    std::vector<double> structure_code(const std::vector<double>& mu) const {
        const int C = grid_.channels;
        const int lc = std::min(3, C);
        const int n = grid_.tokens();
        std::vector<double> lum(n);
        double mean = 0.0;
        for (int p = 0; p < n; ++p) {
            double s = 0.0;
            for (int c = 0; c < lc; ++c) s += mu[static_cast<std::size_t>(p) * C + c];
            lum[p] = s / lc;
            mean += lum[p];
        }
        mean /= n;
        auto L = [&](int y, int x) {
            y = std::clamp(y, 0, grid_.gh - 1);
            x = std::clamp(x, 0, grid_.gw - 1);
            return lum[y * grid_.gw + x];
        };
        std::vector<double> code(static_cast<std::size_t>(n) * 3);
        double ss = 0.0;
        for (int y = 0; y < grid_.gh; ++y) {
            for (int x = 0; x < grid_.gw; ++x) {
                const int p = y * grid_.gw + x;
                code[p * 3 + 0] = lum[p] - mean;
                code[p * 3 + 1] = 0.5 * (L(y, x + 1) - L(y, x - 1));
                code[p * 3 + 2] = 0.5 * (L(y + 1, x) - L(y - 1, x));
                for (int e = 0; e < 3; ++e) ss += code[p * 3 + e] * code[p * 3 + e];
            }
        }
        const double rms = std::sqrt(ss / n);
        if (rms > 1e-12) {
            for (double& v : code) v /= rms;
        } else {
            std::fill(code.begin(), code.end(), 0.0);
        }
        return code;
    }

    DenoiserSpec spec_;
    std::shared_ptr<const Schedule> schedule_;
    PatchGrid grid_;
    std::array<std::vector<double>, kBasis> basis_;
    std::array<std::vector<double>, kBasis> patch_basis_;
    std::array<std::array<double, kBasis>, kBasis> layout_inverse_gram_{};
    std::vector<double> frequencies_;
    std::vector<std::vector<double>> positions_;
    std::vector<LayerWeights> layer_weights_;
    std::vector<std::array<double, kBasis>> content_coeffs_;
    std::vector<std::vector<double>> style_colors_;
};

}  // namespace

std::shared_ptr<const Denoiser> build_denoiser(const DenoiserSpec& spec, std::shared_ptr<const Schedule> schedule) {
    spec.validate();
    switch (spec.kind) {
        case DenoiserKind::seeded_random:
            return std::make_shared<SeededRandomDenoiser>(spec, std::move(schedule));
        case DenoiserKind::structured_style:
            return std::make_shared<StructuredStyleDenoiser>(spec, std::move(schedule));
    }
    fail(ErrorCode::unsupported_kind, "unsupported denoiser kind");
}

}  // namespace styleswap
