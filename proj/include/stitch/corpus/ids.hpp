#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stitch::corpus {

// Distinct synthetic IDs matching ^[a-z]{2}[0-9]{3}$, deterministic per seed.
// Throws CapacityError when n exceeds the 26^2 * 10^3 namespace.
std::vector<std::string> generate_ids(size_t n, uint64_t seed);

constexpr size_t kIdNamespaceSize = 26ULL * 26ULL * 1000ULL;

}  // namespace stitch::corpus
