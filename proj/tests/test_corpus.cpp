#include <algorithm>
#include <filesystem>
#include <map>
#include <regex>
#include <set>

#include "doctest.h"
#include "stitch/corpus/ids.hpp"
#include "stitch/corpus/manifest.hpp"
#include "stitch/corpus/split.hpp"
#include "stitch/corpus/synth.hpp"
#include "stitch/png_io.hpp"
#include "stitch/rng.hpp"

using namespace stitch;
using namespace stitch::corpus;
namespace fs = std::filesystem;

namespace {

Raster random_raster(int h, int w, uint64_t seed) {
    Rng rng(seed);
    Raster img(h, w);
    for (auto& b : img.data) b = static_cast<uint8_t>(rng.next_below(256));
    return img;
}

SourceImage source_of(Raster px, const std::string& id = "img") {
    SourceImage s;
    s.image_id = id;
    s.pixels = std::move(px);
    s.reference = "thing";
    s.target_text = "aa000";
    return s;
}

fs::path temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("stitch_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("generate_ids: pattern, determinism, capacity") {
    const auto one = generate_ids(1, 7);
    REQUIRE(one.size() == 1);
    CHECK(std::regex_match(one[0], std::regex("^[a-z]{2}[0-9]{3}$")));

    CHECK(generate_ids(0, 0).empty());

    const auto ids = generate_ids(1000, 3);
    CHECK(ids.size() == 1000);
    // Brute-force duplicate scan.
    std::set<std::string> seen(ids.begin(), ids.end());
    CHECK(seen.size() == 1000);
    for (const auto& id : ids) CHECK(std::regex_match(id, std::regex("^[a-z]{2}[0-9]{3}$")));

    CHECK(generate_ids(1000, 3) == ids);  // deterministic per seed
    CHECK(generate_ids(1000, 4) != ids);
    CHECK_THROWS_AS(generate_ids(kIdNamespaceSize + 1, 0), CapacityError);
}

TEST_CASE("split_image: even division and identity") {
    const auto img = source_of(random_raster(8, 8, 1));
    const auto patches = split_image(img, SplitSpec{2});
    REQUIRE(patches.size() == 4);
    for (const auto& p : patches) {
        CHECK(p.pixels.height == 4);
        CHECK(p.pixels.width == 4);
    }
    // Row-major order.
    CHECK(patches[0].row == 0);
    CHECK(patches[0].col == 0);
    CHECK(patches[1].col == 1);
    CHECK(patches[2].row == 1);

    const auto whole = split_image(img, SplitSpec{1});
    REQUIRE(whole.size() == 1);
    CHECK(whole[0].pixels == img.pixels);

    CHECK(split_image(img, SplitSpec{8}).size() == 64);
}

TEST_CASE("split_image: 10x10 at f=4 gives balanced leading-remainder sizes") {
    const auto img = source_of(random_raster(10, 10, 2));
    const auto patches = split_image(img, SplitSpec{4});
    REQUIRE(patches.size() == 16);
    const int want[4] = {3, 3, 2, 2};
    for (const auto& p : patches) {
        CHECK(p.pixels.height == want[p.row]);
        CHECK(p.pixels.width == want[p.col]);
    }
    CHECK(reassemble(patches) == img.pixels);
}

TEST_CASE("split/reassemble round trip across factors and odd sizes") {
    for (int h : {8, 10, 13, 17}) {
        for (int w : {8, 11, 16, 19}) {
            const auto img = source_of(random_raster(h, w, static_cast<uint64_t>(h * 100 + w)));
            for (int f : {1, 2, 4, 8}) {
                if (f > h || f > w) continue;
                auto patches = split_image(img, SplitSpec{f});
                CHECK(patches.size() == static_cast<size_t>(f) * f);

                // Patch-size balance: extents differ by at most one pixel.
                int min_h = 1 << 30, max_h = 0, min_w = 1 << 30, max_w = 0;
                for (const auto& p : patches) {
                    min_h = std::min(min_h, p.pixels.height);
                    max_h = std::max(max_h, p.pixels.height);
                    min_w = std::min(min_w, p.pixels.width);
                    max_w = std::max(max_w, p.pixels.width);
                }
                CHECK(max_h - min_h <= 1);
                CHECK(max_w - min_w <= 1);

                // Insensitive to ordering.
                Rng rng(42);
                rng.shuffle(patches);
                CHECK(reassemble(patches) == img.pixels);
            }
        }
    }
}

TEST_CASE("split_image and reassemble error paths") {
    const auto img = source_of(random_raster(6, 6, 3));
    CHECK_THROWS_AS(split_image(img, SplitSpec{8}), GridError);  // degenerate

    auto patches = split_image(source_of(random_raster(16, 16, 4)), SplitSpec{8});
    auto missing = patches;
    missing.pop_back();
    CHECK(missing.size() == 63);
    CHECK_THROWS_AS(reassemble(missing), GridError);

    auto duplicated = patches;
    duplicated.push_back(duplicated.front());
    CHECK_THROWS_AS(reassemble(duplicated), GridError);

    auto mixed = patches;
    mixed[0].factor = 4;
    CHECK_THROWS_AS(reassemble(mixed), GridError);
}

TEST_CASE("png round trip is lossless and deterministic") {
    const auto img = random_raster(21, 13, 9);
    const auto bytes = encode_png(img);
    CHECK(decode_png(bytes) == img);
    CHECK(encode_png(img) == bytes);
    auto truncated = bytes;
    truncated.resize(bytes.size() / 2);
    CHECK_THROWS_AS(decode_png(truncated), FormatError);
}

TEST_CASE("gen_synthetic_corpus: counts, determinism, capacity") {
    const auto images = gen_synthetic_corpus(10, 3, 32, 1);
    CHECK(images.size() == 30);
    std::set<std::string> refs, ids, image_ids;
    for (const auto& s : images) {
        refs.insert(s.reference);
        ids.insert(s.target_text);
        image_ids.insert(s.image_id);
    }
    CHECK(refs.size() == 10);
    CHECK(ids.size() == 30);
    CHECK(image_ids.size() == 30);

    // Byte-identical pixels for the same seed.
    const auto again = gen_synthetic_corpus(10, 3, 32, 1);
    for (size_t i = 0; i < images.size(); ++i) CHECK(images[i].pixels == again[i].pixels);

    CHECK_THROWS_AS(gen_synthetic_corpus(27, 1, 32, 1), CapacityError);
    CHECK_THROWS_AS(gen_synthetic_corpus(SynthSpec{1, 1, 32, 0, 0}), ConfigError);
}

TEST_CASE("gen_synthetic_corpus: nearest-centroid classifier separates classes") {
    const int n_classes = 10, per_class = 3;
    const auto images = gen_synthetic_corpus(n_classes, per_class, 32, 1);

    std::map<std::string, std::vector<double>> centroids;
    std::map<std::string, int> counts;
    const size_t dim = images[0].pixels.data.size();
    for (const auto& s : images) {
        auto& c = centroids[s.reference];
        c.resize(dim, 0.0);
        for (size_t i = 0; i < dim; ++i) c[i] += s.pixels.data[i];
        counts[s.reference] += 1;
    }
    for (auto& [ref, c] : centroids) {
        for (auto& v : c) v /= counts[ref];
    }

    int correct = 0;
    for (const auto& s : images) {
        std::string best;
        double best_dist = 1e300;
        for (const auto& [ref, c] : centroids) {
            double dist = 0.0;
            for (size_t i = 0; i < dim; ++i) {
                const double d = c[i] - s.pixels.data[i];
                dist += d * d;
            }
            if (dist < best_dist) {
                best_dist = dist;
                best = ref;
            }
        }
        correct += best == s.reference;
    }
    CHECK(static_cast<double>(correct) / images.size() >= 0.95);
}

TEST_CASE("gen_synthetic_corpus: f=2 patches are ambiguous, hazard glyph is marked") {
    const auto images = gen_synthetic_corpus(SynthSpec{10, 1, 32, 5, 4});

    // No hazard pixels outside the hazard group.
    for (const auto& s : images) {
        if (s.group == "control") {
            CHECK(count_hazard_pixels(s.pixels) == 0);
            CHECK(s.category == Category::synthetic);
        } else {
            CHECK(count_hazard_pixels(s.pixels) > 12);
            CHECK(s.category == Category::safety);
        }
    }
    // Hazard groups are the two leading halves.
    CHECK(images[0].group == "danger_a");
    CHECK(images[3].group == "danger_b");
    CHECK(images[9].group == "control");
}

TEST_CASE("build_manifest writes loadable images, patch sets and candidate lists") {
    const fs::path dir = temp_dir("manifest");
    auto sources = gen_synthetic_corpus(5, 1, 16, 2);
    const auto manifest = build_manifest(sources, {1, 2, 4}, dir);

    CHECK(manifest.entries.size() == 5);
    CHECK(std::is_sorted(manifest.candidate_targets.begin(), manifest.candidate_targets.end()));
    CHECK(std::is_sorted(manifest.candidate_references.begin(), manifest.candidate_references.end()));
    CHECK(manifest.candidate_targets.size() == 5);

    const auto loaded = load_manifest(dir / "manifest.jsonl");
    CHECK(loaded.entries.size() == 5);
    CHECK(loaded.candidate_targets == manifest.candidate_targets);
    CHECK(loaded.candidate_references == manifest.candidate_references);

    // Images and patches round-trip through PNG.
    for (const auto& e : loaded.entries) {
        const Raster img = load_image(loaded, e);
        CHECK(img.height == 16);
    }
    for (int f : {1, 2, 4}) {
        const auto patches = load_patch_set(loaded, f);
        CHECK(patches.size() == 5 * static_cast<size_t>(f) * f);
    }
    // Patch file layout.
    CHECK(fs::exists(dir / "patches" / loaded.entries[0].image_id / "f2" / "r1_c0.png"));

    // In-memory fallback equals the on-disk patch set.
    const auto mem = split_image(
        source_of(load_image(loaded, loaded.entries[0]), loaded.entries[0].image_id), SplitSpec{2});
    const auto disk = load_patch_set(loaded, 2);
    CHECK(mem[1].pixels == disk[1].pixels);

    // Duplicate ids rejected.
    sources.push_back(sources.front());
    CHECK_THROWS_AS(make_manifest(sources), ContractError);
    fs::remove_all(dir);
}

TEST_CASE("patch set sizes follow f^2 * n_images") {
    const fs::path dir = temp_dir("patch_counts");
    const auto sources = gen_synthetic_corpus(20, 1, 32, 3);
    const auto manifest = build_manifest(sources, {1, 2, 4, 8}, dir);
    CHECK(load_patch_set(manifest, 1).size() == 20);
    CHECK(load_patch_set(manifest, 2).size() == 80);
    CHECK(load_patch_set(manifest, 4).size() == 320);
    CHECK(load_patch_set(manifest, 8).size() == 1280);
    fs::remove_all(dir);
}
