// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace styleswap {

/// Dense row-major float matrix.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0f) {}
    Matrix(int r, int c, std::vector<float> values);

    float& operator()(int r, int c) noexcept { return data[static_cast<std::size_t>(r) * cols + c]; }
    float operator()(int r, int c) const noexcept { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::span<const float> row(int r) const noexcept {
        return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Token-major Q, K, V for one attention layer. Columns hold `heads` blocks
/// of width `head_dim`; head h owns columns [h*head_dim, (h+1)*head_dim).
struct AttentionTensors {
    int heads = 1;
    int head_dim = 0;
    Matrix q;
    Matrix k;
    Matrix v;

    int tokens() const noexcept { return q.rows; }
    int width() const noexcept { return heads * head_dim; }
};

/// Throws dimension-mismatch unless Q, K, V agree with heads * head_dim and
/// K and V carry the same number of tokens.
void validate(const AttentionTensors& at);

/// Per head: Softmax(Q K^T / sqrt(d)) V. Output is tokens x (heads * head_dim).
Matrix attention(const AttentionTensors& at);

/// As above, additionally returning the per-head probability matrices
/// (queries x keys, rows sum to one).
Matrix attention(const AttentionTensors& at, std::vector<Matrix>& head_maps);

}  // namespace styleswap
