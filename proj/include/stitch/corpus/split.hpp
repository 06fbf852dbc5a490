#pragma once

#include <vector>

#include "stitch/corpus/types.hpp"

namespace stitch::corpus {

// Cuts an image into an f x f grid, row-major. Leading rows/columns absorb
// the remainder, so per-grid patch heights (and widths) differ by at most
// one pixel and the patches tile the source exactly.
std::vector<Patch> split_image(const SourceImage& image, const SplitSpec& spec);

// Inverse of split_image: insensitive to patch ordering (keyed by row/col).
// Throws GridError on missing/duplicate cells or mixed factors.
Raster reassemble(const std::vector<Patch>& patches);

// Height of grid row r (and, symmetrically, width of column c).
inline int grid_extent(int total, int factor, int index) {
    return total / factor + (index < total % factor ? 1 : 0);
}

// Offset of grid row r from the image top (symmetrically for columns).
inline int grid_offset(int total, int factor, int index) {
    const int base = total / factor;
    const int rem = total % factor;
    return index * base + (index < rem ? index : rem);
}

}  // namespace stitch::corpus
