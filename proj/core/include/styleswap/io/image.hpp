// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "styleswap/attention.hpp"
#include "styleswap/latent.hpp"

namespace styleswap::io {

/// 8-bit interleaved image with 1 (gray) or 3 (RGB) channels.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<std::uint8_t> pixels;

    friend bool operator==(const Image&, const Image&) = default;
};

/// Toy decoder: RGB_c = clamp(round(128 + 50 x_c), 0, 255) for c < 3
/// (channel 0 is repeated when the latent has fewer than 3 channels).
Image decode_latent(const Latent& x);

/// Inverse of the toy decoder: x_c = (v_c - 128) / 50 for c < 3; any further
/// channel is the mean of the first three.
Latent encode_image(const Image& img, int channels);

void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);
/// PNG or binary PPM (P6), picked by file signature.
Image read_image(const std::filesystem::path& path);

/// Grayscale heatmap scaled so the largest entry maps to 255.
Image heatmap(const Matrix& m);

struct CurveSeries {
    std::vector<double> x;
    std::vector<double> y;  // NaN entries are skipped
    std::uint8_t r = 0, g = 0, b = 0;
};

/// Line plot on [x_min, x_max] x [0, 1] with a dashed guide at `guide_y`.
Image plot_curves(const std::vector<CurveSeries>& series, double guide_y, int width = 400, int height = 240);

}  // namespace styleswap::io
