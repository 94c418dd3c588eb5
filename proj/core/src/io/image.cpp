// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include "styleswap/io/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

#include "styleswap/error.hpp"
#include "styleswap/io/tensor.hpp"

namespace styleswap::io {

Image decode_latent(const Latent& x) {
    Image img{x.width(), x.height(), 3, std::vector<std::uint8_t>(static_cast<std::size_t>(x.width()) * x.height() * 3)};
    for (int y = 0; y < x.height(); ++y) {
        for (int xx = 0; xx < x.width(); ++xx) {
            for (int c = 0; c < 3; ++c) {
                const int src = c < x.channels() ? c : 0;
                const double v = std::round(128.0 + 50.0 * x.at(src, y, xx));
                img.pixels[(static_cast<std::size_t>(y) * x.width() + xx) * 3 + c] =
                    static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
            }
        }
    }
    return img;
}

Latent encode_image(const Image& img, int channels) {
    require(img.channels == 3 || img.channels == 1, ErrorCode::io_error, "images must be gray or RGB");
    require(channels > 0, ErrorCode::invalid_range, "channel count must be positive");
    Latent x(channels, img.height, img.width);
    for (int y = 0; y < img.height; ++y) {
        for (int xx = 0; xx < img.width; ++xx) {
            double rgb[3];
            for (int c = 0; c < 3; ++c) {
                const int src = img.channels == 3 ? c : 0;
                rgb[c] = (img.pixels[(static_cast<std::size_t>(y) * img.width + xx) * img.channels + src] - 128.0) / 50.0;
            }
            for (int c = 0; c < channels; ++c) {
                x.at(c, y, xx) = static_cast<float>(c < 3 ? rgb[c] : (rgb[0] + rgb[1] + rgb[2]) / 3.0);
            }
        }
    }
    return x;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};

void check_image(const Image& img) {
    require(img.width > 0 && img.height > 0 && (img.channels == 1 || img.channels == 3), ErrorCode::io_error,
            "image must have positive size and 1 or 3 channels");
    require(img.pixels.size() == static_cast<std::size_t>(img.width) * img.height * img.channels, ErrorCode::io_error,
            "image pixel buffer does not match its size");
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& img) {
    check_image(img);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.string().c_str(), "wb"));
    require(f != nullptr, ErrorCode::io_error, "cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, ErrorCode::io_error, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorCode::io_error, "libpng failed while writing " + path.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, img.width, img.height, 8, img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(img.pixels.data() + static_cast<std::size_t>(y) * img.width * img.channels));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.string().c_str(), "rb"));
    require(f != nullptr, ErrorCode::io_error, "cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, ErrorCode::io_error, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    Image img;
    if (info == nullptr || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorCode::io_error, "libpng failed while reading " + path.string());
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    const png_byte color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    // Gray stays single-channel; everything else arrives as 8-bit RGB.
    img.channels = (color & PNG_COLOR_MASK_COLOR) ? 3 : 1;
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    img.pixels.resize(stride * img.height);
    for (int y = 0; y < img.height; ++y) {
        png_read_row(png, img.pixels.data() + y * stride, nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
    check_image(img);
    require(img.channels == 3, ErrorCode::io_error, "PPM output needs an RGB image");
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
    write_file(path, out);
}

Image read_ppm(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        return bytes.substr(start, pos - start);
    };
    require(token() == "P6", ErrorCode::io_error, path.string() + " is not a binary PPM (P6)");
    Image img;
    try {
        img.width = std::stoi(token());
        img.height = std::stoi(token());
        require(std::stoi(token()) == 255, ErrorCode::io_error, "PPM maxval must be 255");
    } catch (const std::logic_error&) {
        fail(ErrorCode::io_error, "malformed PPM header in " + path.string());
    }
    ++pos;  // single whitespace before the raster
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height * 3;
    require(img.width > 0 && img.height > 0 && bytes.size() >= pos + n, ErrorCode::io_error,
            "truncated PPM raster in " + path.string());
    img.channels = 3;
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    return img;
}

Image read_image(const std::filesystem::path& path) {
    const std::string head = read_file(path).substr(0, 8);
    if (head.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(head.data()), 0, 8) == 0) {
        return read_png(path);
    }
    if (head.rfind("P6", 0) == 0) {
        return read_ppm(path);
    }
    fail(ErrorCode::io_error, path.string() + " is neither PNG nor binary PPM");
}

Image heatmap(const Matrix& m) {
    require(m.rows > 0 && m.cols > 0, ErrorCode::io_error, "heatmap of an empty matrix");
    float peak = 0.0f;
    for (float v : m.data) peak = std::max(peak, v);
    Image img{m.cols, m.rows, 1, std::vector<std::uint8_t>(m.data.size())};
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        const double v = peak > 0.0f ? 255.0 * std::max(0.0f, m.data[i]) / peak : 0.0;
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(v));
    }
    return img;
}

Image plot_curves(const std::vector<CurveSeries>& series, double guide_y, int width, int height) {
    Image img{width, height, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * 3, 255)};
    const int margin = 20;
    double x_min = INFINITY, x_max = -INFINITY;
    for (const auto& s : series) {
        for (double x : s.x) {
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x);
        }
    }
    if (!(x_max > x_min)) {
        x_min = 0.0;
        x_max = 1.0;
    }
    auto px = [&](double x) { return margin + (x - x_min) / (x_max - x_min) * (width - 2 * margin); };
    auto py = [&](double y) { return height - margin - std::clamp(y, 0.0, 1.0) * (height - 2 * margin); };
    auto plot = [&](int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        if (x < 0 || y < 0 || x >= width || y >= height) return;
        std::uint8_t* p = &img.pixels[(static_cast<std::size_t>(y) * width + x) * 3];
        p[0] = r;
        p[1] = g;
        p[2] = b;
    };
    auto line = [&](double x0, double y0, double x1, double y1, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        const int n = static_cast<int>(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
        for (int i = 0; i <= n; ++i) {
            const double f = static_cast<double>(i) / n;
            plot(static_cast<int>(std::lround(x0 + f * (x1 - x0))), static_cast<int>(std::lround(y0 + f * (y1 - y0))), r, g, b);
        }
    };
    line(margin, height - margin, width - margin, height - margin, 0, 0, 0);
    line(margin, margin, margin, height - margin, 0, 0, 0);
    for (int x = margin; x < width - margin; x += 6) {
        line(x, py(guide_y), std::min(x + 3, width - margin), py(guide_y), 128, 128, 128);
    }
    for (const auto& s : series) {
        for (std::size_t i = 1; i < s.x.size() && i < s.y.size(); ++i) {
            if (std::isnan(s.y[i - 1]) || std::isnan(s.y[i])) continue;
            line(px(s.x[i - 1]), py(s.y[i - 1]), px(s.x[i]), py(s.y[i]), s.r, s.g, s.b);
        }
    }
    return img;
}

}  // namespace styleswap::io
