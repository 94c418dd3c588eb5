// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include "styleswap/schedule.hpp"

#include <cmath>
#include <string>

#include "styleswap/error.hpp"

namespace styleswap {

namespace {

// Elementwise a*x + b*y. Elementwise math runs in double and is stored as float.
Latent combine(double a, const Latent& x, double b, const Latent& y) {
    Latent out(x.channels(), x.height(), x.width());
    auto o = out.data();
    auto xs = x.data();
    auto ys = y.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = static_cast<float>(a * xs[i] + b * ys[i]);
    }
    return out;
}

void require_step(int t, const Schedule& s, const char* op) {
    require(t >= 1 && t <= s.num_steps(), ErrorCode::timestep_out_of_range,
            std::string(op) + ": t=" + std::to_string(t) + " outside [1, " + std::to_string(s.num_steps()) + "]");
}

double direction_coefficient(int t, const Schedule& s) {
    const double sigma = s.sigma(t);
    double radicand = 1.0 - s.alpha_bar(t - 1) - sigma * sigma;
    if (radicand < 0.0) {
        require(radicand > -1e-12, ErrorCode::negative_radicand,
                "ddim_step: 1 - alpha_bar[t-1] - sigma[t]^2 = " + std::to_string(radicand) + " at t=" +
                    std::to_string(t));
        radicand = 0.0;
    }
    return std::sqrt(radicand);
}

}  // namespace

Schedule::Schedule(std::vector<double> alpha_bar, double eta, bool strict)
    : alpha_bar_(std::move(alpha_bar)), eta_(eta) {
    require(std::isfinite(eta) && eta >= 0.0, ErrorCode::invalid_range, "eta must be finite and >= 0");
    require(alpha_bar_.size() >= 2, ErrorCode::invalid_range, "schedule needs T >= 1");
    const int steps = num_steps();
    sigma_.assign(alpha_bar_.size(), 0.0);
    for (int t = 1; t <= steps; ++t) {
        const double prev = alpha_bar_[t - 1];
        const double cur = alpha_bar_[t];
        if (eta_ == 0.0 || cur >= prev) {
            continue;
        }
        sigma_[t] = eta_ * std::sqrt((1.0 - prev) / (1.0 - cur)) * std::sqrt(1.0 - cur / prev);
    }
    require(invariants_hold(strict), ErrorCode::invalid_range,
            strict ? "alpha_bar must start at 1 and strictly decrease within (0, 1]"
                   : "alpha_bar must start at 1 and be non-increasing within (0, 1]");
}

Schedule Schedule::linear(int num_steps, double beta_start, double beta_end, double eta) {
    require(num_steps >= 1, ErrorCode::invalid_range, "T must be >= 1");
    require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, ErrorCode::invalid_range,
            "need 0 < beta_start <= beta_end < 1");
    std::vector<double> alpha_bar(static_cast<std::size_t>(num_steps) + 1);
    alpha_bar[0] = 1.0;
    for (int t = 1; t <= num_steps; ++t) {
        const double frac = num_steps == 1 ? 0.0 : static_cast<double>(t - 1) / (num_steps - 1);
        const double beta = beta_start + (beta_end - beta_start) * frac;
        alpha_bar[t] = alpha_bar[t - 1] * (1.0 - beta);
    }
    return Schedule(std::move(alpha_bar), eta, true);
}

Schedule Schedule::custom(std::vector<double> alpha_bar, double eta) {
    return Schedule(std::move(alpha_bar), eta, false);
}

double Schedule::alpha_bar(int t) const {
    require(t >= 0 && t <= num_steps(), ErrorCode::timestep_out_of_range,
            "t=" + std::to_string(t) + " outside [0, " + std::to_string(num_steps()) + "]");
    return alpha_bar_[t];
}

double Schedule::sigma(int t) const {
    require(t >= 0 && t <= num_steps(), ErrorCode::timestep_out_of_range,
            "t=" + std::to_string(t) + " outside [0, " + std::to_string(num_steps()) + "]");
    return sigma_[t];
}

void Schedule::corrupt_for_testing(int t, double alpha_bar_value) {
    alpha_bar_.at(t) = alpha_bar_value;
}

bool Schedule::invariants_hold(bool strict_decrease) const noexcept {
    if (alpha_bar_.empty() || alpha_bar_[0] != 1.0) {
        return false;
    }
    for (std::size_t t = 1; t < alpha_bar_.size(); ++t) {
        const double cur = alpha_bar_[t];
        if (!std::isfinite(cur) || cur <= 0.0 || cur > 1.0) {
            return false;
        }
        if (strict_decrease ? !(cur < alpha_bar_[t - 1]) : !(cur <= alpha_bar_[t - 1])) {
            return false;
        }
        const double sigma = sigma_[t];
        if (!std::isfinite(sigma) || sigma < 0.0) {
            return false;
        }
        if (eta_ == 0.0 && sigma != 0.0) {
            return false;
        }
        if (eta_ > 0.0 && cur < alpha_bar_[t - 1]) {
            const double prev = alpha_bar_[t - 1];
            const double expected = eta_ * std::sqrt((1.0 - prev) / (1.0 - cur)) * std::sqrt(1.0 - cur / prev);
            if (std::abs(expected - sigma) > 1e-12 * (1.0 + expected)) {
                return false;
            }
        }
    }
    return true;
}

Latent stochastic_encode(const Latent& x0, int t, const Latent& noise, const Schedule& s) {
    require_same_shape(x0, noise, "stochastic_encode");
    const double ab = s.alpha_bar(t);
    if (t == 0) {
        return x0;
    }
    return combine(std::sqrt(ab), x0, std::sqrt(1.0 - ab), noise);
}

Latent predicted_x0(const Latent& x_t, const Latent& eps, int t, const Schedule& s) {
    require_same_shape(x_t, eps, "predicted_x0");
    require_step(t, s, "predicted_x0");
    const double ab = s.alpha_bar(t);
    const double inv = 1.0 / std::sqrt(ab);
    return combine(inv, x_t, -std::sqrt(1.0 - ab) * inv, eps);
}

Latent ddim_step_from_x0(const Latent& x0_pred, const Latent& eps, int t, const Schedule& s,
                         const Latent* step_noise) {
    require_same_shape(x0_pred, eps, "ddim_step");
    require_step(t, s, "ddim_step");
    const double sigma = s.sigma(t);
    const double dir = direction_coefficient(t, s);
    const double a_prev = std::sqrt(s.alpha_bar(t - 1));
    if (sigma == 0.0) {
        return combine(a_prev, x0_pred, dir, eps);
    }
    require(step_noise != nullptr, ErrorCode::step_noise_required,
            "ddim_step: sigma[" + std::to_string(t) + "] > 0 requires step noise");
    require_same_shape(x0_pred, *step_noise, "ddim_step noise");
    Latent out(x0_pred.channels(), x0_pred.height(), x0_pred.width());
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = static_cast<float>(a_prev * x0_pred.data()[i] + dir * eps.data()[i] + sigma * step_noise->data()[i]);
    }
    return out;
}

Latent ddim_step(const Latent& x_t, const Latent& eps, int t, const Schedule& s) {
    require_same_shape(x_t, eps, "ddim_step");
    require_step(t, s, "ddim_step");
    // Single-pass form of sqrt(ab_prev) * x0_pred + dir * eps so the step does
    // not round through a stored x0.
    const double ab = s.alpha_bar(t);
    const double a_prev = std::sqrt(s.alpha_bar(t - 1));
    const double dir = direction_coefficient(t, s);
    require(s.sigma(t) == 0.0, ErrorCode::step_noise_required,
            "ddim_step: sigma[" + std::to_string(t) + "] > 0 requires step noise");
    const double cx = a_prev / std::sqrt(ab);
    const double ce = dir - cx * std::sqrt(1.0 - ab);
    return combine(cx, x_t, ce, eps);
}

Latent ddim_step(const Latent& x_t, const Latent& eps, int t, const Schedule& s, const Latent& step_noise) {
    if (s.sigma(t) == 0.0) {
        return ddim_step(x_t, eps, t, s);
    }
    return ddim_step_from_x0(predicted_x0(x_t, eps, t, s), eps, t, s, &step_noise);
}

Latent ddim_invert_step(const Latent& x_prev, const Latent& eps, int t, const Schedule& s) {
    require(s.eta() == 0.0, ErrorCode::nonzero_eta, "ddim_invert_step requires a deterministic (eta = 0) schedule");
    require_same_shape(x_prev, eps, "ddim_invert_step");
    require_step(t, s, "ddim_invert_step");
    const double ab = s.alpha_bar(t);
    const double ab_prev = s.alpha_bar(t - 1);
    const double cx = std::sqrt(ab) / std::sqrt(ab_prev);
    const double ce = std::sqrt(1.0 - ab) - cx * std::sqrt(1.0 - ab_prev);
    return combine(cx, x_prev, ce, eps);
}

}  // namespace styleswap
