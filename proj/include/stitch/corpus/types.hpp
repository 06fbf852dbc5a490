#pragma once

#include <set>
#include <string>
#include <vector>

#include "stitch/errors.hpp"
#include "stitch/raster.hpp"

namespace stitch::corpus {

enum class Category { food, animal, landmark, safety, synthetic };

std::string to_string(Category c);
Category category_from_string(const std::string& s);

// One labelled source image: the unit of the source dataset.
struct SourceImage {
    std::string image_id;
    Raster pixels;
    std::string reference;    // natural-language referent, e.g. a class name
    std::string target_text;  // synthetic ID or "safe"/"unsafe"
    Category category = Category::synthetic;
    std::string group = "control";  // image group used by safety arms
};

// Split factor: the number of divisions per image dimension.
struct SplitSpec {
    int factor = 1;

    static const std::set<int>& default_allowed() {
        static const std::set<int> allowed{1, 2, 4, 8};
        return allowed;
    }

    void validate(const std::set<int>& allowed = default_allowed()) const {
        if (factor < 1) throw ConfigError("split factor must be >= 1");
        if (!allowed.contains(factor)) {
            throw ConfigError("split factor " + std::to_string(factor) + " not in the allowed set");
        }
    }
};

// One tile of a source image with its grid coordinates.
struct Patch {
    std::string source_id;
    int factor = 1;
    int row = 0;
    int col = 0;
    Raster pixels;
};

}  // namespace stitch::corpus
