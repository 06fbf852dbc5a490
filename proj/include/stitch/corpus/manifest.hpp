#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "stitch/corpus/types.hpp"

namespace stitch::corpus {

struct ManifestEntry {
    std::string image_id;
    std::string path;  // image file, relative to the manifest directory
    std::string reference;
    std::string target_text;
    Category category = Category::synthetic;
    std::string group = "control";
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> candidate_targets;     // sorted, duplicate-free
    std::vector<std::string> candidate_references;  // sorted, duplicate-free
    std::filesystem::path root;                     // directory holding manifest.jsonl

    int target_index(const std::string& target) const;
    int reference_index(const std::string& reference) const;
};

// Writes images/, per-factor patch sets and manifest.jsonl under out_dir.
// Candidate lists are the sorted distinct target/reference strings.
Manifest build_manifest(const std::vector<SourceImage>& sources, const std::set<int>& factors,
                        const std::filesystem::path& out_dir);

// In-memory manifest over already-loaded sources (no files written).
Manifest make_manifest(const std::vector<SourceImage>& sources);

Manifest load_manifest(const std::filesystem::path& manifest_file);
void save_manifest(const Manifest& m, const std::filesystem::path& manifest_file);

Raster load_image(const Manifest& m, const ManifestEntry& entry);

// Relative path of one patch file: <image_id>/f<factor>/r<row>_c<col>.png
std::filesystem::path patch_rel_path(const std::string& image_id, int factor, int row, int col);

// Splits every manifest image at the given factor and writes the patch set
// under <root>/patches/. Returns the number of files written.
size_t write_patch_set(const Manifest& m, int factor);

// Loads the patch set for a factor; reads patch files when present,
// otherwise splits the source images in memory (bit-identical by the
// tiling round-trip guarantee).
std::vector<Patch> load_patch_set(const Manifest& m, int factor);

}  // namespace stitch::corpus
