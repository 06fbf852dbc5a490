#include "stitch/eval/score.hpp"

#include <set>

#include "stitch/kernels.hpp"

namespace stitch::eval {

using corpus::Category;
using corpus::TemplateKind;
using corpus::TemplateSpec;

void CandidateSet::validate() const {
    if (candidates.empty()) throw ContractError("candidate set: empty");
    if (correct_index < 0 || static_cast<size_t>(correct_index) >= candidates.size()) {
        throw ContractError("candidate set: correct_index out of range");
    }
    std::set<std::string> seen(candidates.begin(), candidates.end());
    if (seen.size() != candidates.size()) throw ContractError("candidate set: duplicates");
}

std::string to_string(EvalMode m) {
    switch (m) {
        case EvalMode::image: return "image";
        case EvalMode::reference: return "reference";
        case EvalMode::localization: return "localization";
        case EvalMode::safety_image: return "safety_image";
        case EvalMode::safety_reference: return "safety_reference";
    }
    throw ConfigError("unknown eval mode");
}

EvalMode eval_mode_from_string(const std::string& s) {
    if (s == "image") return EvalMode::image;
    if (s == "reference") return EvalMode::reference;
    if (s == "localization") return EvalMode::localization;
    if (s == "safety_image") return EvalMode::safety_image;
    if (s == "safety_reference") return EvalMode::safety_reference;
    throw ConfigError("unknown eval mode: " + s);
}

std::vector<double> score_candidates(const model::Model& m, const std::optional<Raster>& visual,
                                     const std::string& reference, const TemplateSpec& spec,
                                     const CandidateSet& cs) {
    cs.validate();
    // The prompt prefix is candidate-independent: every template ends with
    // the completion, so rendering any candidate exposes the shared prefix.
    corpus::RenderedSample probe;
    if (corpus::kind_takes_visual(spec.kind)) {
        if (!visual) throw ContractError("score_candidates: template kind requires a visual input");
        probe = corpus::render_sample(*visual, cs.candidates.front(), spec);
    } else {
        probe = corpus::render_sample(reference, cs.candidates.front(), spec);
    }
    const std::string prefix = probe.prompt_text.substr(0, probe.target_begin);
    return m.score_completions(probe.visual, prefix, cs.candidates);
}

namespace {

struct EvalItem {
    std::string item_id;
    std::optional<Raster> visual;
    std::string reference;
    TemplateSpec spec;
    int correct_index = 0;
};

RankResult rank_items(const model::Model& m, const std::vector<EvalItem>& items,
                      const std::vector<std::string>& candidates) {
    if (items.empty()) throw ContractError("mean_rank: empty evaluation set");
    if (candidates.empty()) throw ContractError("mean_rank: empty candidate list");

    std::vector<RankResult::Item> out(items.size());
    // Items are independent; each slot is written by exactly one
    // iteration, so the parallel order cannot affect the result.
    kernels::parallel_for(static_cast<long>(items.size()), [&](long i) {
        const EvalItem& it = items[static_cast<size_t>(i)];
        CandidateSet cs{candidates, it.correct_index};
        const std::vector<double> scores = score_candidates(m, it.visual, it.reference, it.spec, cs);
        out[static_cast<size_t>(i)] = {it.item_id, rank_of_correct(scores, it.correct_index)};
    });
    return RankResult::from_items(std::move(out), static_cast<int>(candidates.size()));
}

const corpus::ManifestEntry& entry_for_source(const corpus::Manifest& manifest, const std::string& source_id) {
    for (const auto& e : manifest.entries) {
        if (e.image_id == source_id) return e;
    }
    throw ContractError("patch source " + source_id + " not in manifest");
}

std::string patch_item_id(const corpus::Patch& p) {
    return p.source_id + "/f" + std::to_string(p.factor) + "/r" + std::to_string(p.row) + "_c" +
           std::to_string(p.col);
}

}  // namespace

RankResult mean_rank(const model::Model& m, const corpus::Manifest& manifest, EvalMode mode,
                     const std::vector<corpus::Patch>& patches) {
    std::vector<EvalItem> items;

    if (mode == EvalMode::localization) {
        if (patches.empty()) throw ContractError("mean_rank: localization mode needs a patch set");
        for (const auto& p : patches) {
            const auto& e = entry_for_source(manifest, p.source_id);
            EvalItem it;
            it.item_id = patch_item_id(p);
            it.visual = p.pixels;
            it.spec = {TemplateKind::localization, corpus::to_string(e.category)};
            it.correct_index = manifest.reference_index(e.reference);
            items.push_back(std::move(it));
        }
        return rank_items(m, items, manifest.candidate_references);
    }

    for (const auto& e : manifest.entries) {
        EvalItem it;
        it.item_id = e.image_id;
        it.correct_index = manifest.target_index(e.target_text);
        switch (mode) {
            case EvalMode::image:
                it.visual = corpus::load_image(manifest, e);
                it.spec = {TemplateKind::eval_image_id, corpus::to_string(e.category)};
                break;
            case EvalMode::reference:
                it.reference = e.reference;
                it.spec = {TemplateKind::eval_reference_id, ""};
                break;
            case EvalMode::safety_image:
                it.visual = corpus::load_image(manifest, e);
                it.spec = {TemplateKind::eval_image_safety, ""};
                break;
            case EvalMode::safety_reference:
                it.reference = e.reference;
                it.spec = {TemplateKind::eval_reference_safety, ""};
                break;
            case EvalMode::localization: break;  // handled above
        }
        items.push_back(std::move(it));
    }
    return rank_items(m, items, manifest.candidate_targets);
}

std::vector<int> localization_ranks(const model::Model& m, const corpus::Manifest& manifest,
                                    const std::vector<corpus::Patch>& patches) {
    const RankResult r = mean_rank(m, manifest, EvalMode::localization, patches);
    std::vector<int> ranks(r.per_item.size());
    for (size_t i = 0; i < r.per_item.size(); ++i) ranks[i] = r.per_item[i].rank;
    return ranks;
}

std::vector<corpus::Patch> ambiguity_filter(const model::Model& m, const corpus::Manifest& manifest,
                                            const std::vector<corpus::Patch>& patches, int threshold_x) {
    if (threshold_x < 0) throw ConfigError("ambiguity_filter: threshold must be >= 0");
    if (static_cast<size_t>(threshold_x) > manifest.candidate_references.size()) {
        throw ConfigError("ambiguity_filter: threshold exceeds the reference candidate count");
    }
    if (threshold_x == 0) return patches;  // threshold-0 finetunes on all patches

    const std::vector<int> ranks = localization_ranks(m, manifest, patches);
    std::vector<corpus::Patch> kept;
    for (size_t i = 0; i < patches.size(); ++i) {
        if (ranks[i] >= threshold_x) kept.push_back(patches[i]);
    }
    return kept;
}

RankResult recognition_check(const model::Model& m, const corpus::Manifest& manifest) {
    std::vector<EvalItem> items;
    for (const auto& e : manifest.entries) {
        EvalItem it;
        it.item_id = e.image_id;
        it.visual = corpus::load_image(manifest, e);
        it.spec = {TemplateKind::localization, corpus::to_string(e.category)};
        it.correct_index = manifest.reference_index(e.reference);
        items.push_back(std::move(it));
    }
    return rank_items(m, items, manifest.candidate_references);
}

}  // namespace stitch::eval
