#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "relcollab/core/tensor.hpp"

namespace relcollab::io {

/// Binary PGM (P5) and PPM (P6) rasters. 2D images are stored as 16-bit
/// grayscale (big-endian samples, per the format); masks as maxval-1 PGM.

inline void write_pgm16(const std::string& path, const Tensor<uint16_t>& img) {
    if (img.rank() != 2) throw std::invalid_argument("pgm: rank must be 2");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("pgm: cannot open for write: " + path);
    f << "P5\n" << img.shape[1] << " " << img.shape[0] << "\n65535\n";
    std::vector<uint8_t> buf(static_cast<size_t>(img.numel()) * 2);
    for (int64_t i = 0; i < img.numel(); ++i) {
        buf[2 * i] = static_cast<uint8_t>(img[i] >> 8);
        buf[2 * i + 1] = static_cast<uint8_t>(img[i] & 0xff);
    }
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("pgm: write failed: " + path);
}

inline void write_pgm_mask(const std::string& path, const Tensor<uint8_t>& mask) {
    if (mask.rank() != 2) throw std::invalid_argument("pgm: rank must be 2");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("pgm: cannot open for write: " + path);
    f << "P5\n" << mask.shape[1] << " " << mask.shape[0] << "\n1\n";
    f.write(reinterpret_cast<const char*>(mask.ptr()), mask.numel());
    if (!f) throw std::runtime_error("pgm: write failed: " + path);
}

namespace detail {
inline int next_pnm_int(std::istream& f) {
    // skips whitespace and '#' comments
    int c;
    while ((c = f.get()) != EOF) {
        if (c == '#') {
            while ((c = f.get()) != EOF && c != '\n') {}
        } else if (!std::isspace(c)) {
            f.unget();
            break;
        }
    }
    int v;
    if (!(f >> v)) throw std::runtime_error("pnm: malformed header");
    return v;
}
}  // namespace detail

struct PgmImage {
    Tensor<uint16_t> pixels;
    int maxval = 0;
};

inline PgmImage read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("pgm: cannot open: " + path);
    std::string magic;
    f >> magic;
    if (magic != "P5") throw std::runtime_error("pgm: expected P5: " + path);
    int w = detail::next_pnm_int(f);
    int h = detail::next_pnm_int(f);
    int maxval = detail::next_pnm_int(f);
    f.get();  // single whitespace after maxval
    PgmImage out;
    out.maxval = maxval;
    out.pixels = Tensor<uint16_t>({h, w});
    if (maxval > 255) {
        std::vector<uint8_t> buf(static_cast<size_t>(out.pixels.numel()) * 2);
        f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        for (int64_t i = 0; i < out.pixels.numel(); ++i)
            out.pixels[i] = static_cast<uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
    } else {
        std::vector<uint8_t> buf(static_cast<size_t>(out.pixels.numel()));
        f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        for (int64_t i = 0; i < out.pixels.numel(); ++i) out.pixels[i] = buf[i];
    }
    if (!f) throw std::runtime_error("pgm: truncated pixel data: " + path);
    return out;
}

/// Interleaved RGB, shape [H, W, 3].
inline void write_ppm(const std::string& path, const Tensor<uint8_t>& rgb) {
    if (rgb.rank() != 3 || rgb.shape[2] != 3) throw std::invalid_argument("ppm: shape must be [H,W,3]");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("ppm: cannot open for write: " + path);
    f << "P6\n" << rgb.shape[1] << " " << rgb.shape[0] << "\n255\n";
    f.write(reinterpret_cast<const char*>(rgb.ptr()), rgb.numel());
    if (!f) throw std::runtime_error("ppm: write failed: " + path);
}

}  // namespace relcollab::io
