#include "stitch/corpus/split.hpp"

#include <cstring>
#include <map>

namespace stitch::corpus {

std::vector<Patch> split_image(const SourceImage& image, const SplitSpec& spec) {
    const int f = spec.factor;
    const int h = image.pixels.height;
    const int w = image.pixels.width;
    if (image.pixels.empty()) throw ContractError("split_image: empty image " + image.image_id);
    if (f < 1) throw ConfigError("split_image: factor must be >= 1");
    if (f > h || f > w) {
        throw GridError("split_image: degenerate split, factor " + std::to_string(f) + " exceeds a " +
                        std::to_string(h) + "x" + std::to_string(w) + " image");
    }

    std::vector<Patch> patches;
    patches.reserve(static_cast<size_t>(f) * f);
    for (int r = 0; r < f; ++r) {
        const int ph = grid_extent(h, f, r);
        const int r0 = grid_offset(h, f, r);
        for (int c = 0; c < f; ++c) {
            const int pw = grid_extent(w, f, c);
            const int c0 = grid_offset(w, f, c);
            Patch p;
            p.source_id = image.image_id;
            p.factor = f;
            p.row = r;
            p.col = c;
            p.pixels = crop(image.pixels, r0, c0, ph, pw);
            patches.push_back(std::move(p));
        }
    }
    return patches;
}

Raster reassemble(const std::vector<Patch>& patches) {
    if (patches.empty()) throw GridError("reassemble: no patches");
    const std::string& source = patches.front().source_id;
    const int f = patches.front().factor;
    if (f < 1) throw GridError("reassemble: invalid factor");

    std::map<std::pair<int, int>, const Patch*> grid;
    for (const Patch& p : patches) {
        if (p.source_id != source || p.factor != f) {
            throw GridError("reassemble: mixed grids (" + source + "/f" + std::to_string(f) + " vs " +
                            p.source_id + "/f" + std::to_string(p.factor) + ")");
        }
        if (p.row < 0 || p.row >= f || p.col < 0 || p.col >= f) {
            throw GridError("reassemble: cell (" + std::to_string(p.row) + "," + std::to_string(p.col) +
                            ") outside f=" + std::to_string(f) + " grid");
        }
        if (!grid.emplace(std::make_pair(p.row, p.col), &p).second) {
            throw GridError("reassemble: duplicate cell (" + std::to_string(p.row) + "," +
                            std::to_string(p.col) + ")");
        }
    }
    if (grid.size() != static_cast<size_t>(f) * f) {
        throw GridError("reassemble: incomplete grid, have " + std::to_string(grid.size()) + " of " +
                        std::to_string(static_cast<size_t>(f) * f) + " cells");
    }

    int height = 0;
    int width = 0;
    for (int r = 0; r < f; ++r) height += grid.at({r, 0})->pixels.height;
    for (int c = 0; c < f; ++c) width += grid.at({0, c})->pixels.width;

    Raster out(height, width);
    int r0 = 0;
    for (int r = 0; r < f; ++r) {
        const int ph = grid.at({r, 0})->pixels.height;
        int c0 = 0;
        for (int c = 0; c < f; ++c) {
            const Raster& px = grid.at({r, c})->pixels;
            if (px.height != ph) {
                throw GridError("reassemble: inconsistent patch heights in row " + std::to_string(r));
            }
            if (c0 + px.width > width || r0 + px.height > height) {
                throw GridError("reassemble: patches overflow the reassembled raster");
            }
            for (int rr = 0; rr < px.height; ++rr) {
                std::memcpy(out.px(r0 + rr, c0), px.px(rr, 0), static_cast<size_t>(px.width) * 3);
            }
            c0 += px.width;
        }
        if (c0 != width) throw GridError("reassemble: row " + std::to_string(r) + " width mismatch");
        r0 += ph;
    }
    return out;
}

}  // namespace stitch::corpus
