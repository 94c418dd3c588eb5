// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace styleswap {

enum class ErrorCode {
    invalid_range,
    shape_mismatch,
    timestep_out_of_range,
    negative_radicand,
    nonzero_eta,
    step_noise_required,
    dimension_mismatch,
    unsupported_kind,
    invalid_layer,
    store_missing,
    empty_manifest,
    empty_selection,
    empty_layers,
    missing_pass,
    zero_variance,
    insufficient_samples,
    too_few_outputs,
    exhausted_trajectory,
    non_finite,
    invalid_config,
    io_error,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the engine. `context()` accumulates the
/// stage / step / pass annotations added while the error propagates.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }
    const std::string& context() const noexcept { return context_; }
    const std::string& detail() const noexcept { return detail_; }

    /// Returns a copy with `note` prepended to the context chain.
    Error annotated(const std::string& note) const;

private:
    ErrorCode code_;
    std::string detail_;
    std::string context_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) {
        fail(code, message);
    }
}

}  // namespace styleswap
