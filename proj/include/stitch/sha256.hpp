#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace stitch {

// Lowercase hex SHA-256 of a byte buffer.
std::string sha256_hex(std::span<const uint8_t> bytes);
std::string sha256_hex(const std::string& text);

}  // namespace stitch
