#include "stitch/harness/runstore.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace stitch::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string format_lr(double lr) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", lr);
    return buf;
}

}  // namespace

json RunRecord::to_json() const {
    json j;
    j["run_id"] = run_id;
    j["config_hash"] = config_hash;
    j["source_rev"] = source_rev;
    j["factor"] = factor;
    j["seed"] = seed;
    j["lr"] = lr;
    j["threshold"] = threshold;
    j["arm"] = arm;
    j["epochs"] = epochs;
    j["n_train_samples"] = n_train_samples;
    j["curves"] = curves;
    json res = json::object();
    for (const auto& [mode, r] : results) {
        json per = json::array();
        for (const auto& [id, rank] : r.per_item) per.push_back({{"item", id}, {"rank", rank}});
        res[mode] = {{"final_mean_rank", r.final_mean_rank},
                     {"best_mean_rank", r.best_mean_rank},
                     {"best_epoch", r.best_epoch},
                     {"n_candidates", r.n_candidates},
                     {"per_item", per}};
    }
    j["results"] = res;
    json ev = json::array();
    for (const auto& row : evasion) {
        ev.push_back({{"group", row.group}, {"factor", row.factor}, {"total", row.total}, {"flagged", row.flagged}});
    }
    j["evasion"] = ev;
    j["status"] = status;
    j["error"] = error;
    return j;
}

RunRecord RunRecord::from_json(const json& j) {
    RunRecord r;
    r.run_id = j.value("run_id", "");
    r.config_hash = j.value("config_hash", "");
    r.source_rev = j.value("source_rev", "");
    r.factor = j.value("factor", 1);
    r.seed = j.value("seed", uint64_t{0});
    r.lr = j.value("lr", 0.0);
    r.threshold = j.value("threshold", 0);
    r.arm = j.value("arm", "off");
    r.epochs = j.value("epochs", 0);
    r.n_train_samples = j.value("n_train_samples", size_t{0});
    if (j.contains("curves")) r.curves = j["curves"].get<std::map<std::string, std::vector<double>>>();
    if (j.contains("results")) {
        for (const auto& [mode, rj] : j["results"].items()) {
            ModeResult m;
            m.final_mean_rank = rj.value("final_mean_rank", 0.0);
            m.best_mean_rank = rj.value("best_mean_rank", 0.0);
            m.best_epoch = rj.value("best_epoch", 0);
            m.n_candidates = rj.value("n_candidates", 0);
            if (rj.contains("per_item")) {
                for (const auto& p : rj["per_item"]) {
                    m.per_item.emplace_back(p.at("item").get<std::string>(), p.at("rank").get<int>());
                }
            }
            r.results[mode] = std::move(m);
        }
    }
    if (j.contains("evasion")) {
        for (const auto& e : j["evasion"]) {
            r.evasion.push_back({e.at("group").get<std::string>(), e.at("factor").get<int>(),
                                 e.at("total").get<long>(), e.at("flagged").get<long>()});
        }
    }
    r.status = j.value("status", "ok");
    r.error = j.value("error", "");
    return r;
}

std::string CellKey::id(const std::string& config_hash) const {
    std::string s = config_hash.substr(0, 12) + "-f" + std::to_string(factor) + "-s" + std::to_string(seed);
    if (lr_swept) s += "-lr" + format_lr(lr);
    if (threshold_swept) s += "-x" + std::to_string(threshold);
    return s;
}

RunStore::RunStore(const fs::path& out_dir, const std::string& config_hash)
    : root_(out_dir / config_hash) {
    fs::create_directories(root_);
}

fs::path RunStore::cell_dir(const CellKey& key) const {
    fs::path dir = root_ / ("f" + std::to_string(key.factor)) / ("s" + std::to_string(key.seed));
    if (key.lr_swept || key.threshold_swept) {
        std::string leaf;
        if (key.lr_swept) leaf += "lr" + format_lr(key.lr);
        if (key.threshold_swept) leaf += (leaf.empty() ? "x" : "_x") + std::to_string(key.threshold);
        dir /= leaf;
    }
    return dir;
}

bool RunStore::cell_complete(const CellKey& key) const {
    return fs::exists(cell_dir(key) / "record.json");
}

std::optional<RunRecord> RunStore::load_record(const CellKey& key) const {
    const fs::path p = cell_dir(key) / "record.json";
    if (!fs::exists(p)) return std::nullopt;
    std::ifstream in(p);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("corrupt run record " + p.string() + ": " + e.what());
    }
    return RunRecord::from_json(j);
}

void RunStore::commit_record(const CellKey& key, const RunRecord& record) const {
    const fs::path dir = cell_dir(key);
    fs::create_directories(dir);
    write_file_atomic(dir / "record.json", record.to_json().dump(2) + "\n");
}

std::vector<RunRecord> RunStore::load_all_records() const {
    std::vector<RunRecord> out;
    if (!fs::exists(root_)) return out;
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root_)) {
        if (e.is_regular_file() && e.path().filename() == "record.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
        std::ifstream in(p);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw FormatError("corrupt run record " + p.string() + ": " + e.what());
        }
        out.push_back(RunRecord::from_json(j));
    }
    return out;
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw FormatError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

}  // namespace stitch::harness
