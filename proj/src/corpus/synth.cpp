#include "stitch/corpus/synth.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <set>

#include "stitch/corpus/ids.hpp"
#include "stitch/rng.hpp"

namespace stitch::corpus {

namespace {

enum class Shape { block, frame, disc, cross, hbars, vbars };
constexpr int kNumShapes = 6;

constexpr std::array<std::array<uint8_t, 3>, 6> kPalette{{
    {220, 40, 40},    // red
    {40, 170, 60},    // green
    {50, 90, 220},    // blue
    {235, 200, 40},   // yellow
    {235, 130, 30},   // orange
    {40, 200, 200},   // teal
}};

struct Appearance {
    int shape = 0;
    int color = 0;
    bool operator==(const Appearance&) const = default;
    auto operator<=>(const Appearance&) const = default;
};

using Layout = std::array<Appearance, 4>;  // TL, TR, BL, BR

uint8_t clamp_u8(int v) { return static_cast<uint8_t>(std::clamp(v, 0, 255)); }

void put(Raster& img, int r, int c, const std::array<uint8_t, 3>& col) {
    if (r < 0 || c < 0 || r >= img.height || c >= img.width) return;
    uint8_t* p = img.px(r, c);
    p[0] = col[0];
    p[1] = col[1];
    p[2] = col[2];
}

void draw_glyph(Raster& img, Shape shape, const std::array<uint8_t, 3>& col, int r0, int c0, int g) {
    const int t = std::max(1, g / 5);
    for (int r = 0; r < g; ++r) {
        for (int c = 0; c < g; ++c) {
            bool on = false;
            switch (shape) {
                case Shape::block: on = true; break;
                case Shape::frame: on = r < t || c < t || r >= g - t || c >= g - t; break;
                case Shape::disc: {
                    const double dr = r - (g - 1) / 2.0;
                    const double dc = c - (g - 1) / 2.0;
                    on = dr * dr + dc * dc <= (g / 2.0) * (g / 2.0);
                    break;
                }
                case Shape::cross: on = std::abs(r - c) < t || std::abs(r + c - (g - 1)) < t; break;
                case Shape::hbars: on = (r / t) % 2 == 0; break;
                case Shape::vbars: on = (c / t) % 2 == 0; break;
            }
            if (on) put(img, r0 + r, c0 + c, col);
        }
    }
}

void draw_hazard(Raster& img, int center_r, int center_c, int g) {
    const std::array<uint8_t, 3> col{kHazardColor[0], kHazardColor[1], kHazardColor[2]};
    // Filled diamond.
    const int half = g / 2;
    for (int dr = -half; dr <= half; ++dr) {
        for (int dc = -half; dc <= half; ++dc) {
            if (std::abs(dr) + std::abs(dc) <= half) put(img, center_r + dr, center_c + dc, col);
        }
    }
}

// Per-quadrant appearance multisets: each pool entry occurs at least twice
// when n >= 4, so no lone quadrant pins down the class.
std::vector<Layout> make_layouts(int n, Rng& rng) {
    constexpr int kAppearances = kNumShapes * static_cast<int>(kPalette.size());
    for (int attempt = 0; attempt < 200; ++attempt) {
        std::array<std::vector<Appearance>, 4> columns;
        for (int q = 0; q < 4; ++q) {
            std::vector<Appearance> pool;
            if (n >= 4) {
                const int k = n / 2;
                std::vector<int> all(kAppearances);
                for (int i = 0; i < kAppearances; ++i) all[i] = i;
                rng.shuffle(all);
                for (int i = 0; i < k; ++i) {
                    const Appearance a{all[i] / static_cast<int>(kPalette.size()),
                                       all[i] % static_cast<int>(kPalette.size())};
                    pool.push_back(a);
                    pool.push_back(a);
                }
                for (int i = static_cast<int>(pool.size()); i < n; ++i) {
                    pool.push_back(pool[static_cast<size_t>(rng.next_below(pool.size()))]);
                }
            } else {
                for (int i = 0; i < n; ++i) {
                    pool.push_back({static_cast<int>(rng.next_below(kNumShapes)),
                                    static_cast<int>(rng.next_below(kPalette.size()))});
                }
            }
            rng.shuffle(pool);
            columns[q] = std::move(pool);
        }
        std::vector<Layout> layouts(n);
        std::set<Layout> seen;
        bool ok = true;
        for (int i = 0; i < n; ++i) {
            layouts[i] = {columns[0][i], columns[1][i], columns[2][i], columns[3][i]};
            if (!seen.insert(layouts[i]).second) {
                ok = false;
                break;
            }
        }
        if (ok) return layouts;
    }
    throw CapacityError("gen_synthetic_corpus: could not place " + std::to_string(n) +
                        " distinct class layouts in the glyph namespace");
}

}  // namespace

const std::vector<std::string>& synth_class_names() {
    static const std::vector<std::string> names{
        "apple", "bison", "crab", "dune",  "elm",   "fern", "gull",  "hive", "iris",
        "jade",  "kelp",  "lark", "mesa",  "newt",  "onyx", "pine",  "quartz", "reef",
        "stone", "tide",  "umber", "vine", "wolf",  "xenon", "yarn", "zinc"};
    return names;
}

int count_hazard_pixels(const Raster& img) {
    int n = 0;
    for (size_t i = 0; i + 2 < img.data.size(); i += 3) {
        if (img.data[i] == kHazardColor[0] && img.data[i + 1] == kHazardColor[1] &&
            img.data[i + 2] == kHazardColor[2]) {
            ++n;
        }
    }
    return n;
}

std::vector<SourceImage> gen_synthetic_corpus(const SynthSpec& spec) {
    if (spec.n_classes < 2) throw ConfigError("gen_synthetic_corpus: need at least 2 classes");
    if (spec.images_per_class < 1) throw ConfigError("gen_synthetic_corpus: images_per_class must be >= 1");
    if (spec.side_px < 8) throw ConfigError("gen_synthetic_corpus: side_px must be >= 8");
    if (spec.hazard_classes < 0 || spec.hazard_classes > spec.n_classes) {
        throw ConfigError("gen_synthetic_corpus: hazard_classes out of range");
    }
    if (static_cast<size_t>(spec.n_classes) > synth_class_names().size()) {
        throw CapacityError("gen_synthetic_corpus: at most " + std::to_string(synth_class_names().size()) +
                            " classes available");
    }

    Rng rng(spec.seed);
    const std::vector<Layout> layouts = make_layouts(spec.n_classes, rng);

    const int n_images = spec.n_classes * spec.images_per_class;
    const std::vector<std::string> ids = generate_ids(static_cast<size_t>(n_images), spec.seed ^ 0x1d5);

    const int side = spec.side_px;
    const int quad = side / 2;
    const int glyph = std::max(3, quad * 3 / 4);
    const int jitter = std::max(1, side / 32);

    std::vector<SourceImage> out;
    out.reserve(static_cast<size_t>(n_images));
    for (int cls = 0; cls < spec.n_classes; ++cls) {
        const bool hazard = cls < spec.hazard_classes;
        for (int inst = 0; inst < spec.images_per_class; ++inst) {
            Raster img(side, side);
            const int bg = 236;
            img.fill(clamp_u8(bg + static_cast<int>(rng.next_below(21)) - 10),
                     clamp_u8(bg + static_cast<int>(rng.next_below(21)) - 10),
                     clamp_u8(bg + static_cast<int>(rng.next_below(21)) - 10));

            for (int q = 0; q < 4; ++q) {
                const Appearance& a = layouts[cls][q];
                const int qr = (q / 2) * (side - quad);  // quadrant origin; odd sides keep
                const int qc = (q % 2) * (side - quad);  // the quadrant inside the image
                const int base_r = qr + (quad - glyph) / 2;
                const int base_c = qc + (quad - glyph) / 2;
                const int jr = static_cast<int>(rng.next_below(2 * jitter + 1)) - jitter;
                const int jc = static_cast<int>(rng.next_below(2 * jitter + 1)) - jitter;
                std::array<uint8_t, 3> col = kPalette[static_cast<size_t>(a.color)];
                for (auto& ch : col) ch = clamp_u8(ch + static_cast<int>(rng.next_below(17)) - 8);
                draw_glyph(img, static_cast<Shape>(a.shape), col, base_r + jr, base_c + jc, glyph);
            }

            if (hazard) {
                const int hg = std::max(6, side * 3 / 8);
                const int jr = static_cast<int>(rng.next_below(2 * jitter + 1)) - jitter;
                const int jc = static_cast<int>(rng.next_below(2 * jitter + 1)) - jitter;
                draw_hazard(img, side / 2 + jr, side / 2 + jc, hg);
            }

            SourceImage si;
            si.image_id = synth_class_names()[static_cast<size_t>(cls)] + "_" + std::to_string(inst);
            si.pixels = std::move(img);
            si.reference = synth_class_names()[static_cast<size_t>(cls)];
            si.target_text = ids[static_cast<size_t>(cls * spec.images_per_class + inst)];
            si.category = hazard ? Category::safety : Category::synthetic;
            if (hazard) {
                si.group = cls < spec.hazard_classes / 2 + spec.hazard_classes % 2 ? "danger_a" : "danger_b";
            } else {
                si.group = "control";
            }
            out.push_back(std::move(si));
        }
    }
    return out;
}

}  // namespace stitch::corpus
