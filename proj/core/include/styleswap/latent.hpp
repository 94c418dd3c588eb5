// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace styleswap {

/// C x H x W grid of 32-bit reals, row-major (channel slowest).
class Latent {
public:
    Latent() = default;
    Latent(int channels, int height, int width);
    Latent(int channels, int height, int width, std::vector<float> data);

    static Latent zeros(int channels, int height, int width) { return Latent(channels, height, width); }
    static Latent filled(int channels, int height, int width, float value);
    /// Standard-normal entries from SplitMix64/Box-Muller seeded by `seed`.
    static Latent gaussian(int channels, int height, int width, std::uint64_t seed);
    static Latent gaussian_like(const Latent& shape, std::uint64_t seed) {
        return gaussian(shape.channels(), shape.height(), shape.width(), seed);
    }

    int channels() const noexcept { return channels_; }
    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t plane() const noexcept { return static_cast<std::size_t>(height_) * width_; }
    bool empty() const noexcept { return data_.empty(); }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }
    const std::vector<float>& values() const noexcept { return data_; }

    std::span<float> channel(int c) noexcept { return data().subspan(c * plane(), plane()); }
    std::span<const float> channel(int c) const noexcept { return data().subspan(c * plane(), plane()); }

    float& at(int c, int y, int x) noexcept { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }
    float at(int c, int y, int x) const noexcept {
        return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
    }

    bool same_shape(const Latent& other) const noexcept {
        return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
    }
    bool all_finite() const noexcept;
    std::string shape_string() const;

    friend bool operator==(const Latent& a, const Latent& b) = default;

private:
    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<float> data_;
};

/// Throws shape-mismatch naming `what` when the shapes differ.
void require_same_shape(const Latent& a, const Latent& b, const char* what);
/// Throws non-finite naming `what` when any element is NaN or Inf.
void require_finite(const Latent& x, const char* what);

/// Bitwise equality of payloads (distinguishes -0.0 from +0.0).
bool bitwise_equal(const Latent& a, const Latent& b) noexcept;

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // population
};

ChannelStats channel_stats(const Latent& x);

/// ||a - b|| / ||b||, accumulated in double. Returns ||a|| when b is zero.
double relative_error(const Latent& a, const Latent& b);

}  // namespace styleswap
