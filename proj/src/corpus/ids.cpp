#include "stitch/corpus/ids.hpp"

#include <numeric>

#include "stitch/errors.hpp"
#include "stitch/rng.hpp"

namespace stitch::corpus {

namespace {

std::string id_from_index(uint32_t v) {
    std::string s(5, '0');
    s[0] = static_cast<char>('a' + v / 26000);
    s[1] = static_cast<char>('a' + (v / 1000) % 26);
    const uint32_t digits = v % 1000;
    s[2] = static_cast<char>('0' + digits / 100);
    s[3] = static_cast<char>('0' + (digits / 10) % 10);
    s[4] = static_cast<char>('0' + digits % 10);
    return s;
}

}  // namespace

std::vector<std::string> generate_ids(size_t n, uint64_t seed) {
    if (n > kIdNamespaceSize) {
        throw CapacityError("generate_ids: requested " + std::to_string(n) + " ids, namespace holds " +
                            std::to_string(kIdNamespaceSize));
    }
    if (n == 0) return {};

    // Partial Fisher-Yates over the full namespace: a uniform sample of n
    // distinct codes.
    std::vector<uint32_t> pool(kIdNamespaceSize);
    std::iota(pool.begin(), pool.end(), 0u);
    Rng rng(seed);
    std::vector<std::string> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        const size_t j = i + static_cast<size_t>(rng.next_below(kIdNamespaceSize - i));
        std::swap(pool[i], pool[j]);
        out.push_back(id_from_index(pool[i]));
    }
    return out;
}

}  // namespace stitch::corpus
