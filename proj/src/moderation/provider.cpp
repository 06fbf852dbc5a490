#include "stitch/moderation/provider.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "stitch/corpus/synth.hpp"
#include "stitch/errors.hpp"
#include "stitch/png_io.hpp"
#include "stitch/sha256.hpp"

namespace stitch::moderation {

using nlohmann::json;

namespace {

std::atomic<long> g_request_count{0};

std::string base64_encode(const std::vector<uint8_t>& bytes) {
    static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out.push_back(tbl[(v >> 18) & 63]);
        out.push_back(tbl[(v >> 12) & 63]);
        out.push_back(tbl[(v >> 6) & 63]);
        out.push_back(tbl[v & 63]);
    }
    if (i + 1 == bytes.size()) {
        const uint32_t v = bytes[i] << 16;
        out.push_back(tbl[(v >> 18) & 63]);
        out.push_back(tbl[(v >> 12) & 63]);
        out += "==";
    } else if (i + 2 == bytes.size()) {
        const uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out.push_back(tbl[(v >> 18) & 63]);
        out.push_back(tbl[(v >> 12) & 63]);
        out.push_back(tbl[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

// Serialises request slots so at most requests_per_minute start per minute.
class TokenBucket {
  public:
    explicit TokenBucket(int rpm) : interval_(std::chrono::microseconds(60'000'000 / std::max(1, rpm))) {}

    void acquire() {
        std::chrono::steady_clock::time_point slot;
        {
            std::lock_guard<std::mutex> lock(mu_);
            const auto now = std::chrono::steady_clock::now();
            next_ = std::max(next_, now);
            slot = next_;
            next_ += interval_;
        }
        std::this_thread::sleep_until(slot);
    }

  private:
    std::mutex mu_;
    std::chrono::steady_clock::duration interval_;
    std::chrono::steady_clock::time_point next_{};
};

struct CachedVerdict {
    bool flagged = false;
    std::map<std::string, double> scores;
    std::string provider;
    int64_t fetched_at = 0;
};

// JSONL verdict store: concurrent reads from the in-memory map, appends
// serialized through one writer mutex.
class VerdictCache {
  public:
    explicit VerdictCache(const std::filesystem::path& path) : path_(path) {
        if (path_.empty() || !std::filesystem::exists(path_)) return;
        std::ifstream in(path_);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json rec;
            try {
                rec = json::parse(line);
            } catch (const json::parse_error& e) {
                throw FormatError("verdict cache parse error in " + path_.string() + ": " + e.what());
            }
            CachedVerdict v;
            v.flagged = rec.at("flagged").get<bool>();
            v.provider = rec.value("provider", "");
            v.fetched_at = rec.value("fetched_at", int64_t{0});
            if (rec.contains("scores")) v.scores = rec["scores"].get<std::map<std::string, double>>();
            map_[rec.at("hash").get<std::string>()] = std::move(v);
        }
    }

    std::optional<CachedVerdict> lookup(const std::string& hash) const {
        const auto it = map_.find(hash);
        if (it == map_.end()) return std::nullopt;
        return it->second;
    }

    void insert(const std::string& hash, const CachedVerdict& v) {
        std::lock_guard<std::mutex> lock(write_mu_);
        map_[hash] = v;
        if (path_.empty()) return;
        if (!out_.is_open()) {
            std::filesystem::create_directories(path_.parent_path().empty() ? "." : path_.parent_path());
            out_.open(path_, std::ios::app);
            if (!out_) throw FormatError("cannot append to verdict cache " + path_.string());
        }
        json rec;
        rec["hash"] = hash;
        rec["flagged"] = v.flagged;
        rec["scores"] = v.scores;
        rec["provider"] = v.provider;
        rec["fetched_at"] = v.fetched_at;
        out_ << rec.dump() << "\n";
        out_.flush();
    }

  private:
    std::filesystem::path path_;
    std::map<std::string, CachedVerdict> map_;
    std::mutex write_mu_;
    std::ofstream out_;
};

struct Endpoint {
    std::string base;  // scheme://host[:port]
    std::string path;
};

Endpoint parse_endpoint(const std::string& url) {
    const size_t scheme = url.find("://");
    if (scheme == std::string::npos) throw ConfigError("moderation endpoint must include a scheme: " + url);
    const size_t slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/v1/moderations"};
    return {url.substr(0, slash), url.substr(slash)};
}

CachedVerdict fetch_http(const corpus::Patch& patch, const ProviderConfig& cfg, const Endpoint& ep,
                         TokenBucket& bucket) {
    json body;
    body["model"] = cfg.model;
    body["input"] = json::array({json{
        {"type", "image_url"},
        {"image_url", {{"url", "data:image/png;base64," + base64_encode(encode_png(patch.pixels))}}}}});
    const std::string payload = body.dump();

    std::string api_key = cfg.api_key;
    if (api_key.empty()) {
        if (const char* env = std::getenv("STITCH_MODERATION_API_KEY")) api_key = env;
    }

    int backoff_ms = cfg.backoff_initial_ms;
    for (int attempt = 0;; ++attempt) {
        bucket.acquire();
        httplib::Client client(ep.base);
        client.set_connection_timeout(10);
        client.set_read_timeout(30);
        httplib::Headers headers;
        if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
        g_request_count.fetch_add(1, std::memory_order_relaxed);
        auto res = client.Post(ep.path, headers, payload, "application/json");

        const bool retryable = !res || res->status == 429 || res->status >= 500;
        if (retryable) {
            if (attempt >= cfg.max_retries) {
                throw ProviderError("moderation provider unavailable after " +
                                    std::to_string(attempt + 1) + " attempts (" +
                                    (res ? "status " + std::to_string(res->status) : "connection error") +
                                    ")");
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
            backoff_ms = static_cast<int>(backoff_ms * cfg.backoff_multiplier);
            continue;
        }
        if (res->status != 200) {
            throw ProviderError("moderation provider rejected the request: status " +
                                std::to_string(res->status));
        }

        try {
            const json reply = json::parse(res->body);
            const json& result = reply.at("results").at(0);
            CachedVerdict v;
            v.flagged = result.at("flagged").get<bool>();
            if (result.contains("category_scores") && result["category_scores"].is_object()) {
                for (const auto& [name, val] : result["category_scores"].items()) {
                    v.scores[name] = val.get<double>();
                }
            }
            v.provider = cfg.provider_name();
            v.fetched_at = static_cast<int64_t>(std::time(nullptr));
            return v;
        } catch (const json::exception& e) {
            throw ProviderError("malformed moderation response: " + std::string(e.what()));
        }
    }
}

}  // namespace

ModerationVerdict stub_classify(const corpus::Patch& patch, int pixel_threshold) {
    const int n = corpus::count_hazard_pixels(patch.pixels);
    ModerationVerdict v;
    v.key = {patch.source_id, patch.factor, patch.row, patch.col};
    v.flagged = n >= pixel_threshold;
    v.scores["hazard"] = std::min(1.0, static_cast<double>(n) / std::max(1, pixel_threshold));
    v.provider = "stub";
    v.fetched_at = 0;
    return v;
}

std::string verdict_cache_key(const corpus::Patch& patch, const ProviderConfig& cfg) {
    std::string buf = "h=" + std::to_string(patch.pixels.height) + ";w=" +
                      std::to_string(patch.pixels.width) + ";";
    buf.append(reinterpret_cast<const char*>(patch.pixels.data.data()), patch.pixels.data.size());
    buf += ";provider=" + cfg.provider_name();
    return sha256_hex(buf);
}

long last_request_count() { return g_request_count.load(std::memory_order_relaxed); }

std::vector<ModerationVerdict> moderate(const std::vector<corpus::Patch>& patches,
                                        const ProviderConfig& cfg) {
    g_request_count.store(0, std::memory_order_relaxed);
    std::vector<ModerationVerdict> out(patches.size());
    if (patches.empty()) return out;

    VerdictCache cache(cfg.cache_path);
    std::vector<std::string> hashes(patches.size());
    std::vector<size_t> pending;
    for (size_t i = 0; i < patches.size(); ++i) {
        hashes[i] = verdict_cache_key(patches[i], cfg);
        if (const auto hit = cache.lookup(hashes[i])) {
            out[i].key = {patches[i].source_id, patches[i].factor, patches[i].row, patches[i].col};
            out[i].flagged = hit->flagged;
            out[i].scores = hit->scores;
            out[i].provider = hit->provider;
            out[i].fetched_at = hit->fetched_at;
        } else {
            pending.push_back(i);
        }
    }
    if (pending.empty()) return out;

    if (cfg.kind == ProviderConfig::Kind::stub) {
        for (size_t i : pending) {
            out[i] = stub_classify(patches[i], cfg.stub_pixel_threshold);
            cache.insert(hashes[i], {out[i].flagged, out[i].scores, out[i].provider, out[i].fetched_at});
        }
        return out;
    }

    if (cfg.endpoint.empty()) throw ConfigError("moderate: http provider needs an endpoint");
    const Endpoint ep = parse_endpoint(cfg.endpoint);
    TokenBucket bucket(cfg.requests_per_minute);

    std::atomic<size_t> cursor{0};
    std::atomic<bool> stop{false};
    std::atomic<long> completed{0};
    std::mutex err_mu;
    std::exception_ptr first_error;

    auto worker = [&]() {
        while (!stop.load(std::memory_order_relaxed)) {
            const size_t slot = cursor.fetch_add(1, std::memory_order_relaxed);
            if (slot >= pending.size()) return;
            const size_t i = pending[slot];
            try {
                const CachedVerdict v = fetch_http(patches[i], cfg, ep, bucket);
                out[i].key = {patches[i].source_id, patches[i].factor, patches[i].row, patches[i].col};
                out[i].flagged = v.flagged;
                out[i].scores = v.scores;
                out[i].provider = v.provider;
                out[i].fetched_at = v.fetched_at;
                cache.insert(hashes[i], v);
                completed.fetch_add(1, std::memory_order_relaxed);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_error) first_error = std::current_exception();
                stop.store(true, std::memory_order_relaxed);
                return;
            }
        }
    };

    const int n_workers = std::max(1, std::min<int>(cfg.max_in_flight, static_cast<int>(pending.size())));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    if (first_error) {
        try {
            std::rethrow_exception(first_error);
        } catch (const Error& e) {
            // Cached verdicts persist, so a resumed run picks up where this
            // one stopped.
            throw ProviderError(std::string(e.what()) + " (" + std::to_string(completed.load()) + " of " +
                                std::to_string(pending.size()) + " pending verdicts completed)");
        }
    }
    return out;
}

}  // namespace stitch::moderation
