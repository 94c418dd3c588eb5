// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include "styleswap/io/csv.hpp"

#include <charconv>
#include <cmath>

#include "styleswap/error.hpp"

namespace styleswap::io {

std::string format_number(double v) {
    require(std::isfinite(v), ErrorCode::non_finite, "CSV cells must be finite");
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

std::string quote(const std::string& v) {
    if (v.find_first_of(",\"\n") == std::string::npos) return v;
    std::string out = "\"";
    for (char c : v) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) out_ += (i ? "," : "") + quote(header[i]);
    out_ += '\n';
}

void CsvWriter::sep() {
    require(in_row_ < columns_, ErrorCode::invalid_range, "CSV row has too many cells");
    if (in_row_ > 0) out_ += ',';
    ++in_row_;
}

CsvWriter& CsvWriter::cell(double v) {
    sep();
    out_ += format_number(v);
    return *this;
}

CsvWriter& CsvWriter::cell(std::optional<double> v) {
    sep();
    if (v) out_ += format_number(*v);
    return *this;
}

CsvWriter& CsvWriter::cell(long long v) {
    sep();
    out_ += std::to_string(v);
    return *this;
}

CsvWriter& CsvWriter::cell(const std::string& v) {
    sep();
    out_ += quote(v);
    return *this;
}

void CsvWriter::end_row() {
    require(in_row_ == columns_, ErrorCode::invalid_range,
            "CSV row has " + std::to_string(in_row_) + " cells, expected " + std::to_string(columns_));
    out_ += '\n';
    in_row_ = 0;
    ++rows_;
}

std::string sweep_csv(const SweepReport& report) {
    CsvWriter w({"start_fraction", "num_layers", "style_gram_distance", "content_structure_corr",
                 "diversity_pairwise_l2", "leakage_structure_corr"});
    for (const auto& r : report.rows) {
        w.cell(r.start_fraction)
            .cell(static_cast<long long>(r.num_layers))
            .cell(r.style_distance)
            .cell(r.content_fidelity)
            .cell(r.diversity)
            .cell(r.leakage)
            .end_row();
    }
    return w.str();
}

std::string inversion_csv(const std::vector<InversionRow>& rows) {
    CsvWriter w({"t", "stochastic_p_mean", "stochastic_pass_fraction", "ddim_p"});
    for (const auto& r : rows) {
        w.cell(static_cast<long long>(r.t)).cell(r.stochastic_p_mean).cell(r.stochastic_pass_fraction).cell(r.ddim_p).end_row();
    }
    return w.str();
}

}  // namespace styleswap::io
