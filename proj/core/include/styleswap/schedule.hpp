// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "styleswap/latent.hpp"

namespace styleswap {

/// Diffusion constants over timesteps t = 0..T. alpha_bar(0) == 1 is the data
/// end; the sampler steps act on t = 1..T.
class Schedule {
public:
    /// Linear-beta schedule: alpha_bar[t] = prod_{s<=t} (1 - beta_s).
    static Schedule linear(int num_steps, double beta_start, double beta_end, double eta);

    /// Arbitrary alpha_bar table (alpha_bar[0] must be 1). Custom tables may be
    /// non-increasing; plateaus are allowed so degenerate steps can be probed.
    static Schedule custom(std::vector<double> alpha_bar, double eta);

    int num_steps() const noexcept { return static_cast<int>(alpha_bar_.size()) - 1; }
    double eta() const noexcept { return eta_; }
    double alpha_bar(int t) const;
    /// sigma_t for t >= 1; sigma(0) is defined as 0.
    double sigma(int t) const;
    std::span<const double> alpha_bars() const noexcept { return alpha_bar_; }

    /// Test hook: overwrite one constant without re-validating.
    void corrupt_for_testing(int t, double alpha_bar_value);

    /// Re-runs the construction-time invariant checks; returns false on violation.
    bool invariants_hold(bool strict_decrease) const noexcept;

private:
    Schedule(std::vector<double> alpha_bar, double eta, bool strict);

    std::vector<double> alpha_bar_;
    std::vector<double> sigma_;
    double eta_ = 0.0;
};

inline Schedule make_schedule(int num_steps, double beta_start, double beta_end, double eta) {
    return Schedule::linear(num_steps, beta_start, beta_end, eta);
}

/// sqrt(alpha_bar[t]) * x0 + sqrt(1 - alpha_bar[t]) * noise.
Latent stochastic_encode(const Latent& x0, int t, const Latent& noise, const Schedule& s);

/// (x_t - sqrt(1 - alpha_bar[t]) * eps) / sqrt(alpha_bar[t]); t >= 1.
Latent predicted_x0(const Latent& x_t, const Latent& eps, int t, const Schedule& s);

/// DDIM update x_t -> x_{t-1}. The overload without `step_noise` requires sigma[t] == 0.
Latent ddim_step(const Latent& x_t, const Latent& eps, int t, const Schedule& s);
Latent ddim_step(const Latent& x_t, const Latent& eps, int t, const Schedule& s, const Latent& step_noise);

/// Same update with the predicted x0 supplied by the caller (used by color
/// calibration, which rewrites x0 before the step is taken).
Latent ddim_step_from_x0(const Latent& x0_pred, const Latent& eps, int t, const Schedule& s,
                         const Latent* step_noise);

/// Deterministic DDIM inversion x_{t-1} -> x_t; the exact inverse of ddim_step
/// for the same eps. Requires eta == 0.
Latent ddim_invert_step(const Latent& x_prev, const Latent& eps, int t, const Schedule& s);

}  // namespace styleswap
