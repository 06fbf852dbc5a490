#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "stitch/harness/config.hpp"
#include "stitch/moderation/filter.hpp"

namespace stitch::harness {

// Final + best-epoch rank metrics of one eval mode.
struct ModeResult {
    double final_mean_rank = 0.0;
    double best_mean_rank = 0.0;
    int best_epoch = 0;
    int n_candidates = 0;
    std::vector<std::pair<std::string, int>> per_item;  // final-epoch ranks
};

struct RunRecord {
    std::string run_id;
    std::string config_hash;
    std::string source_rev;
    int factor = 1;
    uint64_t seed = 0;
    double lr = 0.0;
    int threshold = 0;
    std::string arm = "off";
    int epochs = 0;
    size_t n_train_samples = 0;
    std::map<std::string, std::vector<double>> curves;
    std::map<std::string, ModeResult> results;  // keyed by eval-mode name
    std::vector<moderation::EvasionReport::Row> evasion;
    std::string status = "ok";  // "ok" | "failed"
    std::string error;

    nlohmann::json to_json() const;
    static RunRecord from_json(const nlohmann::json& j);
};

// One cell of the sweep grid.
struct CellKey {
    int factor = 1;
    uint64_t seed = 0;
    double lr = 0.0;
    int threshold = 0;
    bool lr_swept = false;
    bool threshold_swept = false;

    std::string id(const std::string& config_hash) const;
};

// Filesystem layout: <out_dir>/<config_hash>/f<factor>/s<seed>[/lr..._x...]/
// with record.json as the cell's atomic completion marker.
class RunStore {
  public:
    RunStore(const std::filesystem::path& out_dir, const std::string& config_hash);

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path corpus_dir() const { return root_ / "corpus"; }
    std::filesystem::path stage0_path() const { return root_ / "stage0.ckpt"; }
    std::filesystem::path verdict_cache_path() const { return root_ / "verdicts.jsonl"; }
    std::filesystem::path cell_dir(const CellKey& key) const;

    bool cell_complete(const CellKey& key) const;
    std::optional<RunRecord> load_record(const CellKey& key) const;

    // Writes record.json via write-temp-then-rename; the record commits the
    // cell.
    void commit_record(const CellKey& key, const RunRecord& record) const;

    std::vector<RunRecord> load_all_records() const;

  private:
    std::filesystem::path root_;
};

// Atomic small-file write (temp + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace stitch::harness
