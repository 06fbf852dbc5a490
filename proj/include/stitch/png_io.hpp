#pragma once

#include <filesystem>
#include <vector>

#include "stitch/raster.hpp"

namespace stitch {

// Lossless 8-bit RGB PNG. Encoding settings are fixed so identical pixels
// produce identical bytes.
std::vector<uint8_t> encode_png(const Raster& img);
Raster decode_png(const std::vector<uint8_t>& bytes);

void write_png(const std::filesystem::path& path, const Raster& img);
Raster read_png(const std::filesystem::path& path);

}  // namespace stitch
