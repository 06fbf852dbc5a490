#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "stitch/corpus/types.hpp"

namespace stitch::corpus {

// Reserved marker substituted by visual embeddings at model time. Prompts
// stay byte-testable independent of the model.
inline constexpr std::string_view kVisualMarker = "\xC2\xABVIS\xC2\xBB";  // «VIS»

enum class TemplateKind {
    finetune_id,
    eval_image_id,
    eval_reference_id,
    localization,
    finetune_safety,
    eval_image_safety,
    eval_reference_safety,
    finetune_id_positional,
};

std::string to_string(TemplateKind k);
TemplateKind template_kind_from_string(const std::string& s);

bool kind_takes_visual(TemplateKind k);

struct TemplateSpec {
    TemplateKind kind = TemplateKind::finetune_id;
    std::string category_word;  // fills {category}; unused by safety kinds
};

// A byte-exact prompt with the completion span marked for loss masking and
// candidate scoring. Offsets are byte offsets into prompt_text.
struct RenderedSample {
    std::string prompt_text;
    std::optional<Raster> visual;  // absent for reference-conditioned prompts
    size_t target_begin = 0;
    size_t target_end = 0;

    std::string_view target() const {
        return std::string_view(prompt_text).substr(target_begin, target_end - target_begin);
    }
};

// Visual kinds (finetune_id, eval_image_id, localization, finetune_safety,
// eval_image_safety). For localization the target is the reference string.
RenderedSample render_sample(const Raster& visual, const std::string& target_text, const TemplateSpec& spec);

// finetune_id_positional: the patch supplies both pixels and grid position.
RenderedSample render_sample(const Patch& patch, const std::string& target_text, const TemplateSpec& spec);

// Reference kinds (eval_reference_id, eval_reference_safety).
RenderedSample render_sample(const std::string& reference, const std::string& target_text,
                             const TemplateSpec& spec);

}  // namespace stitch::corpus
