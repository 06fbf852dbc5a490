#pragma once

#include <cstdint>
#include <vector>

#include "stitch/corpus/types.hpp"

namespace stitch::corpus {

// Procedural glyph-composite corpus. Each class is a distinct layout of one
// coloured glyph per image quadrant; for n_classes >= 4 every single
// quadrant appearance is shared by at least two classes, so an f=2 patch
// never identifies the class on its own while the full image does.
struct SynthSpec {
    int n_classes = 10;
    int images_per_class = 1;
    int side_px = 32;
    uint64_t seed = 0;
    // Leading classes are overlaid with the hazard glyph and grouped into
    // danger_a / danger_b halves; the rest form the control group.
    int hazard_classes = 0;
};

std::vector<SourceImage> gen_synthetic_corpus(const SynthSpec& spec);

inline std::vector<SourceImage> gen_synthetic_corpus(int n_classes, int images_per_class, int side_px,
                                                     uint64_t seed) {
    return gen_synthetic_corpus(SynthSpec{n_classes, images_per_class, side_px, seed, 0});
}

// Reserved colour of the hazard glyph; never produced by glyph/background
// jitter, so an exact pixel match identifies hazard content.
inline constexpr uint8_t kHazardColor[3] = {255, 0, 255};

int count_hazard_pixels(const Raster& img);

// Class-name namespace (lowercase, pairwise-distinct first letters).
const std::vector<std::string>& synth_class_names();

}  // namespace stitch::corpus
