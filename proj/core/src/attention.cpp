// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include "styleswap/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "styleswap/error.hpp"

namespace styleswap {

Matrix::Matrix(int r, int c, std::vector<float> values) : rows(r), cols(c), data(std::move(values)) {
    require(r >= 0 && c >= 0 && data.size() == static_cast<std::size_t>(r) * c, ErrorCode::dimension_mismatch,
            "matrix payload does not match " + std::to_string(r) + "x" + std::to_string(c));
}

void validate(const AttentionTensors& at) {
    require(at.heads > 0 && at.head_dim > 0, ErrorCode::dimension_mismatch, "heads and head_dim must be positive");
    const int width = at.width();
    require(at.q.cols == width && at.k.cols == width && at.v.cols == width, ErrorCode::dimension_mismatch,
            "Q/K/V column counts must equal heads*head_dim=" + std::to_string(width));
    require(at.k.rows == at.v.rows, ErrorCode::dimension_mismatch, "K and V token counts differ");
    require(at.q.rows > 0 && at.k.rows > 0, ErrorCode::dimension_mismatch, "attention needs at least one token");
}

namespace {

Matrix attend(const AttentionTensors& at, std::vector<Matrix>* head_maps) {
    validate(at);
    const int nq = at.q.rows;
    const int nk = at.k.rows;
    const int d = at.head_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Matrix out(nq, at.width());
    if (head_maps != nullptr) {
        head_maps->assign(at.heads, Matrix(nq, nk));
    }
    std::vector<double> logits(nk);
    std::vector<double> acc(d);
    for (int h = 0; h < at.heads; ++h) {
        const int off = h * d;
        for (int i = 0; i < nq; ++i) {
            double max_logit = -INFINITY;
            for (int j = 0; j < nk; ++j) {
                double dot = 0.0;
                for (int e = 0; e < d; ++e) {
                    dot += static_cast<double>(at.q(i, off + e)) * at.k(j, off + e);
                }
                logits[j] = dot * scale;
                max_logit = std::max(max_logit, logits[j]);
            }
            double total = 0.0;
            for (int j = 0; j < nk; ++j) {
                logits[j] = std::exp(logits[j] - max_logit);
                total += logits[j];
            }
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int j = 0; j < nk; ++j) {
                const double p = logits[j] / total;
                if (head_maps != nullptr) {
                    (*head_maps)[h](i, j) = static_cast<float>(p);
                }
                for (int e = 0; e < d; ++e) {
                    acc[e] += p * at.v(j, off + e);
                }
            }
            for (int e = 0; e < d; ++e) {
                out(i, off + e) = static_cast<float>(acc[e]);
            }
        }
    }
    return out;
}

}  // namespace

Matrix attention(const AttentionTensors& at) { return attend(at, nullptr); }

Matrix attention(const AttentionTensors& at, std::vector<Matrix>& head_maps) { return attend(at, &head_maps); }

}  // namespace styleswap
