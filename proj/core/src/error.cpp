// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include "styleswap/error.hpp"

namespace styleswap {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_range: return "invalid-range";
        case ErrorCode::shape_mismatch: return "shape-mismatch";
        case ErrorCode::timestep_out_of_range: return "timestep-out-of-range";
        case ErrorCode::negative_radicand: return "negative-radicand";
        case ErrorCode::nonzero_eta: return "nonzero-eta";
        case ErrorCode::step_noise_required: return "step-noise-required";
        case ErrorCode::dimension_mismatch: return "dimension-mismatch";
        case ErrorCode::unsupported_kind: return "unsupported-kind";
        case ErrorCode::invalid_layer: return "invalid-layer";
        case ErrorCode::store_missing: return "store-missing";
        case ErrorCode::empty_manifest: return "empty-manifest";
        case ErrorCode::empty_selection: return "empty-selection";
        case ErrorCode::empty_layers: return "empty-layers";
        case ErrorCode::missing_pass: return "missing-pass";
        case ErrorCode::zero_variance: return "zero-variance";
        case ErrorCode::insufficient_samples: return "insufficient-samples";
        case ErrorCode::too_few_outputs: return "too-few-outputs";
        case ErrorCode::exhausted_trajectory: return "exhausted-trajectory";
        case ErrorCode::non_finite: return "non-finite";
        case ErrorCode::invalid_config: return "invalid-config";
        case ErrorCode::io_error: return "io-error";
    }
    return "unknown";
}

namespace {

std::string compose_what(ErrorCode code, const std::string& context, const std::string& detail) {
    std::string out(to_string(code));
    if (!context.empty()) {
        out += " [" + context + "]";
    }
    out += ": " + detail;
    return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(compose_what(code, {}, message)), code_(code), detail_(message) {}

Error Error::annotated(const std::string& note) const {
    Error copy(code_, detail_);
    copy.context_ = context_.empty() ? note : note + " / " + context_;
    static_cast<std::runtime_error&>(copy) = std::runtime_error(compose_what(code_, copy.context_, detail_));
    return copy;
}

void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace styleswap
