#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddk {

// Binary tensor container: magic "DDK1", u32 rank, u32 dims[rank], then
// little-endian f32 payload in row-major order.
struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::size_t element_count() const {
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                               [](std::size_t a, std::uint32_t d) { return a * d; });
    }
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool get_u32(std::istream& is, std::uint32_t& v) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

}  // namespace detail

inline void write_tensor(std::ostream& os, const Tensor& t) {
    if (t.data.size() != t.element_count())
        throw std::invalid_argument("write_tensor: payload length does not match dims product");
    os.write("DDK1", 4);
    detail::put_u32(os, static_cast<std::uint32_t>(t.dims.size()));
    for (std::uint32_t d : t.dims) detail::put_u32(os, d);
    for (float f : t.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        detail::put_u32(os, bits);
    }
}

inline void write_tensor(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_tensor: cannot open " + path);
    write_tensor(os, t);
    if (!os) throw std::runtime_error("write_tensor: write failed for " + path);
}

inline Tensor read_tensor(std::istream& is, const std::string& name = "<stream>") {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "DDK1", 4) != 0)
        throw std::runtime_error(name + ": bad magic, expected \"DDK1\"");
    std::uint32_t rank;
    if (!detail::get_u32(is, rank)) throw std::runtime_error(name + ": truncated rank field");
    if (rank > 8) throw std::runtime_error(name + ": rank " + std::to_string(rank) + " out of range");
    Tensor t;
    t.dims.resize(rank);
    for (std::uint32_t i = 0; i < rank; ++i)
        if (!detail::get_u32(is, t.dims[i]))
            throw std::runtime_error(name + ": truncated dims field at index " + std::to_string(i));
    const std::size_t n = t.element_count();
    t.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t bits;
        if (!detail::get_u32(is, bits))
            throw std::runtime_error(name + ": payload shorter than product(dims) = " + std::to_string(n));
        std::memcpy(&t.data[i], &bits, 4);
    }
    if (is.peek() != std::char_traits<char>::eof())
        throw std::runtime_error(name + ": trailing bytes after payload");
    return t;
}

inline Tensor read_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_tensor: cannot open " + path);
    return read_tensor(is, path);
}

// Dense channel-major grid: data[c][y][x], i.e. a rank-3 tensor with dims
// [channels, height, width]. One cell spans `stride` input-image pixels.
struct FeatureMap {
    int height = 0;
    int width = 0;
    int channels = 0;
    double stride = 1.0;
    std::vector<float> data;

    FeatureMap() = default;
    FeatureMap(int h, int w, int ch, double stride_pixels)
        : height(h), width(w), channels(ch), stride(stride_pixels),
          data(static_cast<std::size_t>(h) * w * ch, 0.0f) {
        if (h < 1 || w < 1 || ch < 1) throw std::invalid_argument("FeatureMap: dims must be >= 1");
        if (!(stride_pixels > 0)) throw std::invalid_argument("FeatureMap: stride must be positive");
    }

    float& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    // Bilinear sample of channel c at continuous cell coordinates; the value
    // of cell (ix, iy) lives at (ix + 0.5, iy + 0.5). Out-of-bounds reads zero.
    double sample(int c, double x, double y) const {
        const double u = x - 0.5;
        const double v = y - 0.5;
        const int x0 = static_cast<int>(std::floor(u));
        const int y0 = static_cast<int>(std::floor(v));
        const double fx = u - x0;
        const double fy = v - y0;
        auto cell = [&](int cy, int cx) -> double {
            if (cx < 0 || cy < 0 || cx >= width || cy >= height) return 0.0;
            return at(c, cy, cx);
        };
        return cell(y0, x0) * (1 - fx) * (1 - fy) + cell(y0, x0 + 1) * fx * (1 - fy) +
               cell(y0 + 1, x0) * (1 - fx) * fy + cell(y0 + 1, x0 + 1) * fx * fy;
    }

    Tensor to_tensor() const {
        Tensor t;
        t.dims = {static_cast<std::uint32_t>(channels), static_cast<std::uint32_t>(height),
                  static_cast<std::uint32_t>(width)};
        t.data = data;
        return t;
    }

    static FeatureMap from_tensor(const Tensor& t, double stride_pixels, const std::string& name = "tensor") {
        if (t.dims.size() != 3)
            throw std::runtime_error(name + ": expected rank 3 [channels,height,width], got rank " +
                                     std::to_string(t.dims.size()));
        FeatureMap m(static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]), static_cast<int>(t.dims[0]),
                     stride_pixels);
        m.data = t.data;
        return m;
    }
};

}  // namespace ddk
