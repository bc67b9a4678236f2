#pragma once

#include <string>
#include <vector>

#include "gridlm/tensor.hpp"

namespace gridlm {

/// Pixel image with values in [0, 1], row-major, channel-interleaved.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 1; // 1 = grayscale (pgm), 3 = color (ppm)
    std::vector<double> pix;

    Image() = default;
    Image(int h, int w, int c = 1)
        : height(h), width(w), channels(c), pix(static_cast<size_t>(h) * w * c, 0.0) {}

    double& at(int r, int c, int ch = 0) {
        return pix[(static_cast<size_t>(r) * width + c) * channels + ch];
    }
    double at(int r, int c, int ch = 0) const {
        return pix[(static_cast<size_t>(r) * width + c) * channels + ch];
    }
};

/// Binary P5/P6, maxval 255. Values are quantized with round(v * 255), clamped.
void write_pnm(const Image& img, const std::string& path);
Image read_pnm(const std::string& path);

/// Grayscale map scaled linearly [min, max] -> [0, 255]; a constant map writes 255.
void write_scaled_pgm(const Tensor& map, const std::string& path);

} // namespace gridlm
