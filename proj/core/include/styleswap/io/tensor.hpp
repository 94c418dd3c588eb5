// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "styleswap/attention.hpp"
#include "styleswap/latent.hpp"

namespace styleswap::io {

/// Portable tensor container:
///   "SKTN" | u8 version=1 | u8 dtype=0 (f32) | u8 rank | u8 pad=0 |
///   rank x u32 dims (LE) | prod(dims) x f32 payload (LE, row-major).
struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::size_t element_count() const noexcept;
    friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(std::string_view bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

Tensor to_tensor(const Latent& x);
Tensor to_tensor(const Matrix& m);
/// Rank-3 tensors only.
Latent to_latent(const Tensor& t);

/// Writes `bytes` to `path`, creating parent directories.
void write_file(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace styleswap::io
