#include "stitch/raster.hpp"

#include <algorithm>
#include <cstring>

#include "stitch/errors.hpp"

namespace stitch {

Raster crop(const Raster& src, int r0, int c0, int h, int w) {
    if (r0 < 0 || c0 < 0 || h <= 0 || w <= 0 || r0 + h > src.height || c0 + w > src.width) {
        throw ContractError("crop: region out of bounds");
    }
    Raster out(h, w);
    for (int r = 0; r < h; ++r) {
        std::memcpy(out.px(r, 0), src.px(r0 + r, c0), static_cast<size_t>(w) * 3);
    }
    return out;
}

Raster resize_nearest(const Raster& src, int out_h, int out_w) {
    if (src.empty()) throw ContractError("resize: empty source raster");
    if (out_h <= 0 || out_w <= 0) throw ContractError("resize: non-positive output size");
    Raster out(out_h, out_w);
    for (int r = 0; r < out_h; ++r) {
        const int sr = std::min(static_cast<int>(static_cast<int64_t>(r) * src.height / out_h), src.height - 1);
        for (int c = 0; c < out_w; ++c) {
            const int sc = std::min(static_cast<int>(static_cast<int64_t>(c) * src.width / out_w), src.width - 1);
            std::memcpy(out.px(r, c), src.px(sr, sc), 3);
        }
    }
    return out;
}

Raster resize_with_padding(const Raster& src, int side) {
    if (src.empty()) throw ContractError("resize_with_padding: empty source raster");
    if (side <= 0) throw ConfigError("resize_with_padding: side must be positive");
    int out_h, out_w;
    if (src.height >= src.width) {
        out_h = side;
        out_w = std::max(1, static_cast<int>(static_cast<int64_t>(src.width) * side / src.height));
    } else {
        out_w = side;
        out_h = std::max(1, static_cast<int>(static_cast<int64_t>(src.height) * side / src.width));
    }
    Raster scaled = resize_nearest(src, out_h, out_w);
    Raster out(side, side);
    const int r_off = (side - out_h) / 2;
    const int c_off = (side - out_w) / 2;
    for (int r = 0; r < out_h; ++r) {
        std::memcpy(out.px(r_off + r, c_off), scaled.px(r, 0), static_cast<size_t>(out_w) * 3);
    }
    return out;
}

}  // namespace stitch
