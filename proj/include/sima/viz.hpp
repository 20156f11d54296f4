#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "sima/tensor.hpp"

namespace sima {

// Per-token magnitude map on the patch grid, min-max normalized to [0,1].
struct SaliencyMap {
    Tensor grid;        // g x g
    char source = 'q';  // which matrix it came from
    int layer = 0;
};

// l2 norm of each token over channels, reshaped row-major to g x g, then
// min-max normalized. A constant map normalizes to all zeros.
inline SaliencyMap token_saliency(const Tensor& m_hat, std::size_t grid_side) {
    m_hat.require_rank2("token_saliency");
    const std::size_t n = m_hat.rows(), d = m_hat.cols();
    if (n != grid_side * grid_side)
        throw ShapeError("token_saliency: " + std::to_string(n) + " tokens do not fill a " +
                         std::to_string(grid_side) + "x" + std::to_string(grid_side) + " grid");
    SaliencyMap map;
    map.grid = Tensor({grid_side, grid_side});
    for (std::size_t t = 0; t < n; ++t) {
        double s = 0;
        for (std::size_t j = 0; j < d; ++j) s += m_hat(t, j) * m_hat(t, j);
        map.grid.data[t] = std::sqrt(s);
    }
    double lo = map.grid.data[0], hi = map.grid.data[0];
    for (double v : map.grid.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi > lo)
        for (double& v : map.grid.data) v = (v - lo) / (hi - lo);
    else
        for (double& v : map.grid.data) v = 0.0;
    return map;
}

// Binary PGM (P5), maxval 255, nearest-neighbor upscaling.
inline void write_pgm(const SaliencyMap& map, const std::string& path, int upscale = 1) {
    if (upscale < 1) throw ConfigError("write_pgm: upscale must be >= 1");
    const std::size_t g = map.grid.rows();
    const std::size_t w = g * upscale;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "P5\n" << w << " " << w << "\n255\n";
    std::vector<unsigned char> row(w);
    for (std::size_t i = 0; i < w; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            const double v = map.grid(i / upscale, j / upscale);
            row[j] = static_cast<unsigned char>(std::lround(255.0 * v));
        }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(w));
    }
    if (!f) throw IoError("write failed: " + path);
}

// Reads a binary P5 PGM into a [0,1] tensor (height x width).
inline Tensor read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::string magic;
    std::size_t w = 0, h = 0;
    int maxval = 0;
    f >> magic >> w >> h >> maxval;
    if (magic != "P5" || maxval <= 0 || maxval > 255) throw IoError("not an 8-bit P5 PGM: " + path);
    f.get(); // single whitespace after header
    std::vector<unsigned char> buf(w * h);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("truncated PGM: " + path);
    Tensor t({h, w});
    for (std::size_t i = 0; i < buf.size(); ++i) t.data[i] = double(buf[i]) / double(maxval);
    return t;
}

} // namespace sima
