// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "mrrecon/core/errors.hpp"
#include "mrrecon/core/tensor.hpp"

// Lossless 16-bit grayscale images as binary PGM (P5, maxval 65535,
// big-endian sample bytes per the format). Values are expected in [0, 1];
// callers handle normalization and record it in a sidecar.

namespace mrrecon::io {

inline void write_pgm16(const std::string& path, const Tensor& img) {
    require(img.rank() == 2, "write_pgm16: expected [H, W]");
    const int64_t h = img.dim(0), w = img.dim(1);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open image for writing: " + path);
    os << "P5\n" << w << " " << h << "\n65535\n";
    for (int64_t i = 0; i < img.size(); ++i) {
        const double v = std::clamp(img[i], 0.0, 1.0);
        const auto q = static_cast<uint16_t>(std::lround(v * 65535.0));
        const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
        os.write(bytes, 2);
    }
    if (!os) throw DataError("image write failed: " + path);
}

inline Tensor read_pgm16(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open image: " + path);
    std::string magic;
    int64_t w = 0, h = 0, maxval = 0;
    is >> magic >> w >> h >> maxval;
    if (!is || magic != "P5" || w <= 0 || h <= 0 || maxval != 65535)
        throw DataError("not a 16-bit PGM: " + path);
    is.get();  // single whitespace byte after the header
    Tensor img({h, w});
    for (int64_t i = 0; i < img.size(); ++i) {
        char bytes[2];
        is.read(bytes, 2);
        if (!is) throw DataError("image truncated: " + path);
        const auto hi = static_cast<uint16_t>(static_cast<unsigned char>(bytes[0]));
        const auto lo = static_cast<uint16_t>(static_cast<unsigned char>(bytes[1]));
        img[i] = static_cast<double>((hi << 8) | lo) / 65535.0;
    }
    return img;
}

} // namespace mrrecon::io
