// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include "styleswap/latent.hpp"

#include <cmath>
#include <cstring>

#include "styleswap/error.hpp"
#include "styleswap/rng.hpp"

namespace styleswap {

Latent::Latent(int channels, int height, int width)
    : Latent(channels, height, width,
             std::vector<float>(static_cast<std::size_t>(channels > 0 ? channels : 0) * (height > 0 ? height : 0) *
                                (width > 0 ? width : 0), 0.0f)) {}

Latent::Latent(int channels, int height, int width, std::vector<float> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
    require(channels > 0 && height > 0 && width > 0, ErrorCode::invalid_range,
            "latent dimensions must be positive, got " + shape_string());
    require(data_.size() == static_cast<std::size_t>(channels) * height * width, ErrorCode::shape_mismatch,
            "latent payload has " + std::to_string(data_.size()) + " elements, expected " + shape_string());
    require(all_finite(), ErrorCode::non_finite, "latent payload contains NaN or Inf");
}

Latent Latent::filled(int channels, int height, int width, float value) {
    Latent out(channels, height, width);
    for (float& v : out.data_) {
        v = value;
    }
    return out;
}

Latent Latent::gaussian(int channels, int height, int width, std::uint64_t seed) {
    Latent out(channels, height, width);
    SplitMix64 rng(seed);
    for (float& v : out.data_) {
        v = static_cast<float>(rng.gaussian());
    }
    return out;
}

bool Latent::all_finite() const noexcept {
    for (float v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

std::string Latent::shape_string() const {
    return std::to_string(channels_) + "x" + std::to_string(height_) + "x" + std::to_string(width_);
}

void require_same_shape(const Latent& a, const Latent& b, const char* what) {
    if (!a.same_shape(b)) {
        fail(ErrorCode::shape_mismatch,
             std::string(what) + ": " + a.shape_string() + " vs " + b.shape_string());
    }
}

void require_finite(const Latent& x, const char* what) {
    if (!x.all_finite()) {
        fail(ErrorCode::non_finite, std::string(what) + " contains NaN or Inf");
    }
}

bool bitwise_equal(const Latent& a, const Latent& b) noexcept {
    return a.same_shape(b) && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

ChannelStats channel_stats(const Latent& x) {
    ChannelStats stats;
    stats.mean.resize(x.channels());
    stats.stddev.resize(x.channels());
    const double n = static_cast<double>(x.plane());
    for (int c = 0; c < x.channels(); ++c) {
        double sum = 0.0;
        for (float v : x.channel(c)) {
            sum += v;
        }
        const double mean = sum / n;
        double sq = 0.0;
        for (float v : x.channel(c)) {
            sq += (v - mean) * (v - mean);
        }
        stats.mean[c] = mean;
        stats.stddev[c] = std::sqrt(sq / n);
    }
    return stats;
}

double relative_error(const Latent& a, const Latent& b) {
    require_same_shape(a, b, "relative_error");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data()[i]) - b.data()[i];
        num += d * d;
        den += static_cast<double>(b.data()[i]) * b.data()[i];
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace styleswap
