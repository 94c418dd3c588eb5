// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include "styleswap/io/tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "styleswap/error.hpp"

namespace styleswap::io {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view in, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
    return v;
}

constexpr std::size_t kHeader = 8;

}  // namespace

std::size_t Tensor::element_count() const noexcept {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::string encode_tensor(const Tensor& t) {
    require(t.dims.size() <= 255, ErrorCode::invalid_range, "tensor rank exceeds 255");
    require(t.data.size() == t.element_count(), ErrorCode::shape_mismatch, "tensor payload does not match its dims");
    std::string out = "SKTN";
    out.push_back(1);
    out.push_back(0);
    out.push_back(static_cast<char>(t.dims.size()));
    out.push_back(0);
    for (auto d : t.dims) put_u32(out, d);
    out.reserve(out.size() + 4 * t.data.size());
    for (float f : t.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
    return out;
}

Tensor decode_tensor(std::string_view bytes) {
    require(bytes.size() >= kHeader && bytes.substr(0, 4) == "SKTN", ErrorCode::io_error, "not an SKTN container");
    require(static_cast<unsigned char>(bytes[4]) == 1, ErrorCode::io_error,
            "unsupported SKTN version " + std::to_string(static_cast<unsigned char>(bytes[4])));
    require(bytes[5] == 0, ErrorCode::io_error, "unsupported SKTN dtype code " + std::to_string(static_cast<unsigned char>(bytes[5])));
    const std::size_t rank = static_cast<unsigned char>(bytes[6]);
    require(bytes.size() >= kHeader + 4 * rank, ErrorCode::io_error, "truncated SKTN dims");
    Tensor t;
    for (std::size_t i = 0; i < rank; ++i) t.dims.push_back(get_u32(bytes, kHeader + 4 * i));
    const std::size_t off = kHeader + 4 * rank;
    const std::size_t n = t.element_count();
    require(bytes.size() == off + 4 * n, ErrorCode::io_error,
            "SKTN payload is " + std::to_string(bytes.size() - off) + " bytes, expected " + std::to_string(4 * n));
    t.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) t.data[i] = std::bit_cast<float>(get_u32(bytes, off + 4 * i));
    return t;
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        require(!ec, ErrorCode::io_error, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(f), ErrorCode::io_error, "cannot open " + path.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(f), ErrorCode::io_error, "write to " + path.string() + " failed");
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorCode::io_error, "cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) { write_file(path, encode_tensor(t)); }

Tensor read_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

Tensor to_tensor(const Latent& x) {
    return Tensor{{static_cast<std::uint32_t>(x.channels()), static_cast<std::uint32_t>(x.height()),
                   static_cast<std::uint32_t>(x.width())},
                  x.values()};
}

Tensor to_tensor(const Matrix& m) {
    return Tensor{{static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)}, m.data};
}

Latent to_latent(const Tensor& t) {
    require(t.dims.size() == 3, ErrorCode::shape_mismatch, "latent tensors must have rank 3");
    return Latent(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]), t.data);
}

}  // namespace styleswap::io
