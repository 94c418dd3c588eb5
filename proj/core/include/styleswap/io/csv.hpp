// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "styleswap/analysis.hpp"

namespace styleswap::io {

/// Comma-separated, header row, '\n' line ends, '.' decimal point, shortest
/// round-trip number formatting. Nulls are empty fields.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);

    CsvWriter& cell(double v);
    CsvWriter& cell(std::optional<double> v);
    CsvWriter& cell(long long v);
    CsvWriter& cell(const std::string& v);
    void end_row();

    const std::string& str() const noexcept { return out_; }
    std::size_t rows() const noexcept { return rows_; }

private:
    void sep();

    std::size_t columns_;
    std::size_t in_row_ = 0;
    std::size_t rows_ = 0;
    std::string out_;
};

std::string format_number(double v);

std::string sweep_csv(const SweepReport& report);
std::string inversion_csv(const std::vector<InversionRow>& rows);

}  // namespace styleswap::io
