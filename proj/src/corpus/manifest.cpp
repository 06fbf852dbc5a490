#include "stitch/corpus/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "json.hpp"
#include "stitch/corpus/split.hpp"
#include "stitch/png_io.hpp"

namespace stitch::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Category c) {
    switch (c) {
        case Category::food: return "food";
        case Category::animal: return "animal";
        case Category::landmark: return "landmark";
        case Category::safety: return "safety";
        case Category::synthetic: return "synthetic";
    }
    throw ConfigError("unknown category");
}

Category category_from_string(const std::string& s) {
    if (s == "food") return Category::food;
    if (s == "animal") return Category::animal;
    if (s == "landmark") return Category::landmark;
    if (s == "safety") return Category::safety;
    if (s == "synthetic") return Category::synthetic;
    throw ConfigError("unknown category: " + s);
}

int Manifest::target_index(const std::string& target) const {
    const auto it = std::find(candidate_targets.begin(), candidate_targets.end(), target);
    if (it == candidate_targets.end()) throw ContractError("target not in candidate list: " + target);
    return static_cast<int>(it - candidate_targets.begin());
}

int Manifest::reference_index(const std::string& reference) const {
    const auto it = std::find(candidate_references.begin(), candidate_references.end(), reference);
    if (it == candidate_references.end()) {
        throw ContractError("reference not in candidate list: " + reference);
    }
    return static_cast<int>(it - candidate_references.begin());
}

namespace {

std::vector<std::string> sorted_distinct(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

void check_unique_ids(const std::vector<SourceImage>& sources) {
    std::set<std::string> seen;
    for (const auto& s : sources) {
        if (s.image_id.empty()) throw ContractError("manifest: empty image_id");
        if (s.target_text.empty()) throw ContractError("manifest: empty target_text for " + s.image_id);
        if (s.pixels.empty()) throw ContractError("manifest: empty pixels for " + s.image_id);
        if (!seen.insert(s.image_id).second) {
            throw ContractError("manifest: duplicate image_id " + s.image_id);
        }
    }
}

}  // namespace

Manifest make_manifest(const std::vector<SourceImage>& sources) {
    if (sources.empty()) throw ContractError("manifest: no source images");
    check_unique_ids(sources);
    Manifest m;
    std::vector<std::string> targets, refs;
    for (const auto& s : sources) {
        ManifestEntry e;
        e.image_id = s.image_id;
        e.path = "images/" + s.image_id + ".png";
        e.reference = s.reference;
        e.target_text = s.target_text;
        e.category = s.category;
        e.group = s.group;
        m.entries.push_back(std::move(e));
        targets.push_back(s.target_text);
        refs.push_back(s.reference);
    }
    m.candidate_targets = sorted_distinct(std::move(targets));
    m.candidate_references = sorted_distinct(std::move(refs));
    return m;
}

Manifest build_manifest(const std::vector<SourceImage>& sources, const std::set<int>& factors,
                        const fs::path& out_dir) {
    Manifest m = make_manifest(sources);
    m.root = out_dir;
    fs::create_directories(out_dir / "images");
    for (const auto& s : sources) {
        write_png(out_dir / "images" / (s.image_id + ".png"), s.pixels);
    }
    save_manifest(m, out_dir / "manifest.jsonl");
    for (int f : factors) {
        SplitSpec{f}.validate();
        write_patch_set(m, f);
    }
    return m;
}

void save_manifest(const Manifest& m, const fs::path& manifest_file) {
    std::ofstream out(manifest_file, std::ios::trunc);
    if (!out) throw FormatError("cannot write manifest: " + manifest_file.string());
    json header;
    header["candidate_targets"] = m.candidate_targets;
    header["candidate_references"] = m.candidate_references;
    out << header.dump() << "\n";
    for (const auto& e : m.entries) {
        json rec;
        rec["image_id"] = e.image_id;
        rec["path"] = e.path;
        rec["reference"] = e.reference;
        rec["target_text"] = e.target_text;
        rec["category"] = to_string(e.category);
        rec["group"] = e.group;
        out << rec.dump() << "\n";
    }
    if (!out) throw FormatError("short write to manifest: " + manifest_file.string());
}

Manifest load_manifest(const fs::path& manifest_file) {
    std::ifstream in(manifest_file);
    if (!in) throw FormatError("cannot open manifest: " + manifest_file.string());
    Manifest m;
    m.root = manifest_file.parent_path();
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError("manifest parse error: " + std::string(e.what()));
        }
        if (!have_header) {
            if (!rec.contains("candidate_targets") || !rec.contains("candidate_references")) {
                throw FormatError("manifest: first record must be the candidate header");
            }
            m.candidate_targets = rec["candidate_targets"].get<std::vector<std::string>>();
            m.candidate_references = rec["candidate_references"].get<std::vector<std::string>>();
            have_header = true;
            continue;
        }
        ManifestEntry e;
        e.image_id = rec.at("image_id").get<std::string>();
        e.path = rec.at("path").get<std::string>();
        e.reference = rec.at("reference").get<std::string>();
        e.target_text = rec.at("target_text").get<std::string>();
        e.category = category_from_string(rec.at("category").get<std::string>());
        e.group = rec.value("group", std::string("control"));
        m.entries.push_back(std::move(e));
    }
    if (!have_header) throw FormatError("manifest: missing header record");
    if (m.entries.empty()) throw FormatError("manifest: no image records");
    std::set<std::string> seen;
    for (const auto& e : m.entries) {
        if (!seen.insert(e.image_id).second) throw FormatError("manifest: duplicate image_id " + e.image_id);
        if (std::find(m.candidate_targets.begin(), m.candidate_targets.end(), e.target_text) ==
            m.candidate_targets.end()) {
            throw FormatError("manifest: target_text of " + e.image_id + " missing from candidates");
        }
    }
    return m;
}

Raster load_image(const Manifest& m, const ManifestEntry& entry) {
    return read_png(m.root / entry.path);
}

fs::path patch_rel_path(const std::string& image_id, int factor, int row, int col) {
    return fs::path(image_id) / ("f" + std::to_string(factor)) /
           ("r" + std::to_string(row) + "_c" + std::to_string(col) + ".png");
}

size_t write_patch_set(const Manifest& m, int factor) {
    size_t written = 0;
    for (const auto& e : m.entries) {
        SourceImage src;
        src.image_id = e.image_id;
        src.pixels = load_image(m, e);
        const std::vector<Patch> patches = split_image(src, SplitSpec{factor});
        for (const Patch& p : patches) {
            const fs::path path = m.root / "patches" / patch_rel_path(p.source_id, factor, p.row, p.col);
            fs::create_directories(path.parent_path());
            write_png(path, p.pixels);
            ++written;
        }
    }
    return written;
}

std::vector<Patch> load_patch_set(const Manifest& m, int factor) {
    std::vector<Patch> out;
    for (const auto& e : m.entries) {
        const fs::path first = m.root / "patches" / patch_rel_path(e.image_id, factor, 0, 0);
        if (fs::exists(first)) {
            for (int r = 0; r < factor; ++r) {
                for (int c = 0; c < factor; ++c) {
                    Patch p;
                    p.source_id = e.image_id;
                    p.factor = factor;
                    p.row = r;
                    p.col = c;
                    p.pixels = read_png(m.root / "patches" / patch_rel_path(e.image_id, factor, r, c));
                    out.push_back(std::move(p));
                }
            }
        } else {
            SourceImage src;
            src.image_id = e.image_id;
            src.pixels = load_image(m, e);
            std::vector<Patch> patches = split_image(src, SplitSpec{factor});
            for (auto& p : patches) out.push_back(std::move(p));
        }
    }
    return out;
}

}  // namespace stitch::corpus
