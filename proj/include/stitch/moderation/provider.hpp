#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stitch/corpus/types.hpp"

namespace stitch::moderation {

struct PatchKey {
    std::string source_id;
    int factor = 1;
    int row = 0;
    int col = 0;

    std::string to_string() const {
        return source_id + "/f" + std::to_string(factor) + "/r" + std::to_string(row) + "_c" +
               std::to_string(col);
    }
    auto operator<=>(const PatchKey&) const = default;
};

struct ModerationVerdict {
    PatchKey key;
    bool flagged = false;
    std::map<std::string, double> scores;  // category name -> score in [0,1]
    std::string provider;
    int64_t fetched_at = 0;  // unix seconds; 0 for the pure stub
};

struct ProviderConfig {
    enum class Kind { stub, http };
    Kind kind = Kind::stub;

    // http provider
    std::string endpoint;  // e.g. http://127.0.0.1:8080/v1/moderations
    std::string api_key;   // falls back to STITCH_MODERATION_API_KEY
    std::string model = "omni-moderation-latest";
    int requests_per_minute = 120;  // token bucket
    int max_in_flight = 4;
    int max_retries = 4;
    int backoff_initial_ms = 100;
    double backoff_multiplier = 2.0;

    // stub provider
    int stub_pixel_threshold = 12;

    // JSONL verdict cache, one verdict per line; empty disables caching.
    std::filesystem::path cache_path;

    std::string provider_name() const {
        return kind == Kind::stub ? "stub" : "http:" + model;
    }
};

// Deterministic offline provider: flags a patch iff it contains at least
// threshold pixels of the reserved hazard colour. Pure function of pixels.
ModerationVerdict stub_classify(const corpus::Patch& patch, int pixel_threshold = 12);

// Cache key: content hash of the raw patch pixels plus provider name and
// model identifier.
std::string verdict_cache_key(const corpus::Patch& patch, const ProviderConfig& cfg);

// One verdict per patch, in input order. Responses are cached by content
// hash; HTTP fetches run under a bounded in-flight count with token-bucket
// rate limiting and bounded exponential-backoff retries. On exhausted
// retries throws ProviderError after persisting the verdicts fetched so
// far.
std::vector<ModerationVerdict> moderate(const std::vector<corpus::Patch>& patches,
                                        const ProviderConfig& cfg);

// Number of network requests issued by the last moderate() call in this
// process (cache hits issue none); exposed for cache-soundness tests.
long last_request_count();

}  // namespace stitch::moderation
