#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stitch/corpus/manifest.hpp"
#include "stitch/corpus/templates.hpp"
#include "stitch/eval/rank.hpp"
#include "stitch/model/transformer.hpp"

namespace stitch::eval {

struct CandidateSet {
    std::vector<std::string> candidates;  // duplicate-free, manifest order
    int correct_index = 0;

    void validate() const;
};

enum class EvalMode { image, reference, localization, safety_image, safety_reference };
std::string to_string(EvalMode m);
EvalMode eval_mode_from_string(const std::string& s);

// Summed completion log-prob of every candidate under the rendered prompt.
// Visual template kinds condition on `visual`; reference kinds on
// `reference`. Scores are not length-normalized (IDs tokenize to equal
// length by construction); the choice is recorded in result metadata
// downstream.
std::vector<double> score_candidates(const model::Model& m, const std::optional<Raster>& visual,
                                     const std::string& reference, const corpus::TemplateSpec& spec,
                                     const CandidateSet& cs);

// One rank per evaluation item. Modes image/reference/safety_* score one
// item per manifest entry (full image or its reference) against the
// manifest target candidates; localization scores each supplied patch
// against the reference candidates.
RankResult mean_rank(const model::Model& m, const corpus::Manifest& manifest, EvalMode mode,
                     const std::vector<corpus::Patch>& patches = {});

// Localization rank of each patch's correct source reference (order
// matches `patches`).
std::vector<int> localization_ranks(const model::Model& m, const corpus::Manifest& manifest,
                                    const std::vector<corpus::Patch>& patches);

// Discards patches whose correct reference ranks inside the top
// threshold_x localization predictions (0-indexed ranks 0..x-1), i.e. the
// patches the stage-0 model can already place. Threshold 0 keeps all.
std::vector<corpus::Patch> ambiguity_filter(const model::Model& m, const corpus::Manifest& manifest,
                                            const std::vector<corpus::Patch>& patches, int threshold_x);

// Raw-image recognition pre-check: rank of the correct reference
// conditioned on each full image under the localization template.
RankResult recognition_check(const model::Model& m, const corpus::Manifest& manifest);

}  // namespace stitch::eval
