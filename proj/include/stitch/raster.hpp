#pragma once

#include <cstdint>
#include <vector>

namespace stitch {

// 8-bit RGB raster, row-major, interleaved channels.
struct Raster {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> data;  // height * width * 3 bytes

    Raster() = default;
    Raster(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w * 3, 0) {}

    uint8_t* px(int r, int c) { return data.data() + (static_cast<size_t>(r) * width + c) * 3; }
    const uint8_t* px(int r, int c) const {
        return data.data() + (static_cast<size_t>(r) * width + c) * 3;
    }

    void fill(uint8_t r, uint8_t g, uint8_t b) {
        for (size_t i = 0; i < data.size(); i += 3) {
            data[i] = r;
            data[i + 1] = g;
            data[i + 2] = b;
        }
    }

    bool empty() const { return height <= 0 || width <= 0; }
    bool operator==(const Raster& o) const = default;
};

// Copies the [r0, r0+h) x [c0, c0+w) region.
Raster crop(const Raster& src, int r0, int c0, int h, int w);

// Nearest-neighbour resize.
Raster resize_nearest(const Raster& src, int out_h, int out_w);

// Canonical square used as the model's visual input: scale uniformly so the
// longer side fits `side` (upscaling allowed), centre, pad with black.
Raster resize_with_padding(const Raster& src, int side);

}  // namespace stitch
