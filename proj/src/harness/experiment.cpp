#include "stitch/harness/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "stitch/model/checkpoint.hpp"

#ifndef STITCH_SOURCE_REV
#define STITCH_SOURCE_REV "unknown"
#endif

namespace stitch::harness {

namespace fs = std::filesystem;
using corpus::Manifest;
using corpus::ManifestEntry;
using corpus::Patch;
using corpus::TemplateKind;
using corpus::TemplateSpec;

namespace {

std::vector<std::string> sorted_distinct(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

const ManifestEntry& entry_for(const Manifest& m, const std::string& source_id) {
    for (const auto& e : m.entries) {
        if (e.image_id == source_id) return e;
    }
    throw ContractError("no manifest entry for " + source_id);
}

Manifest ensure_corpus(const ExperimentConfig& cfg, const RunStore& store, std::ostream* log) {
    const fs::path manifest_path = store.corpus_dir() / "manifest.jsonl";
    if (fs::exists(manifest_path)) return corpus::load_manifest(manifest_path);
    if (log) *log << "building corpus under " << store.corpus_dir() << "\n";
    const std::vector<corpus::SourceImage> sources = corpus::gen_synthetic_corpus(cfg.corpus);
    const std::set<int> factors(cfg.factors.begin(), cfg.factors.end());
    return corpus::build_manifest(sources, factors, store.corpus_dir());
}

std::vector<corpus::RenderedSample> pretrain_samples(const Manifest& manifest) {
    std::vector<corpus::RenderedSample> samples;
    for (const auto& e : manifest.entries) {
        const TemplateSpec spec{TemplateKind::localization, corpus::to_string(e.category)};
        samples.push_back(corpus::render_sample(corpus::load_image(manifest, e), e.reference, spec));
    }
    return samples;
}

model::Model ensure_stage0(const ExperimentConfig& cfg, const RunStore& store, const Manifest& manifest,
                           std::ostream* log) {
    if (fs::exists(store.stage0_path())) {
        return model::model_from_checkpoint(model::load_checkpoint(store.stage0_path()));
    }
    if (log) *log << "stage-0 pretraining (" << cfg.pretrain.epochs << " epochs)\n";
    model::Model m(cfg.model);
    const auto ckpt = model::train(m, pretrain_samples(manifest), cfg.pretrain);
    model::save_checkpoint(ckpt, store.stage0_path());
    return m;
}

}  // namespace

Manifest apply_safety_assignment(const Manifest& base, SafetyAssignment sa) {
    if (sa == SafetyAssignment::none) return base;

    Manifest m;
    m.root = base.root;
    auto label_of = [&](const std::string& group) -> std::optional<std::string> {
        switch (sa) {
            case SafetyAssignment::groupA_safe_groupB_unsafe:
                if (group == "danger_a") return "safe";
                if (group == "danger_b") return "unsafe";
                return std::nullopt;
            case SafetyAssignment::groupB_safe_groupA_unsafe:
                if (group == "danger_b") return "safe";
                if (group == "danger_a") return "unsafe";
                return std::nullopt;
            case SafetyAssignment::all_danger_safe_control_unsafe:
                if (group == "danger_a" || group == "danger_b") return "safe";
                return "unsafe";  // control
            case SafetyAssignment::none: break;
        }
        return std::nullopt;
    };

    long n_safe = 0, n_unsafe = 0;
    std::vector<std::string> refs;
    for (const auto& e : base.entries) {
        const auto label = label_of(e.group);
        if (!label) continue;
        ManifestEntry copy = e;
        copy.target_text = *label;
        (*label == "safe" ? n_safe : n_unsafe) += 1;
        refs.push_back(copy.reference);
        m.entries.push_back(std::move(copy));
    }
    if (m.entries.empty()) throw ConfigError("safety assignment selects no images");
    if (n_safe != n_unsafe) {
        throw ConfigError("safety assignment is unbalanced: " + std::to_string(n_safe) + " safe vs " +
                          std::to_string(n_unsafe) + " unsafe");
    }
    m.candidate_targets = {"safe", "unsafe"};
    m.candidate_references = sorted_distinct(std::move(refs));
    return m;
}

RunOutcome run_experiment(const ExperimentConfig& cfg, long max_cells, std::ostream* log) {
    cfg.validate();
    const std::string hash = cfg.hash();
    RunStore store(cfg.out_dir, hash);
    if (!fs::exists(store.root() / "config.json")) {
        write_file_atomic(store.root() / "config.json", cfg.to_json().dump(2) + "\n");
    }

    const Manifest base = ensure_corpus(cfg, store, log);
    const Manifest manifest = apply_safety_assignment(base, cfg.safety_assignment);
    const bool safety = cfg.safety_assignment != SafetyAssignment::none;
    const model::Model stage0 = ensure_stage0(cfg, store, base, log);

    RunOutcome outcome;
    long executed = 0;
    const auto lrs = cfg.effective_lrs();
    const bool lr_swept = lrs.size() > 1;
    const bool x_swept = cfg.ambiguity_thresholds.size() > 1 ||
                         (cfg.ambiguity_thresholds.size() == 1 && cfg.ambiguity_thresholds[0] != 0);

    for (int factor : cfg.factors) {
        for (uint64_t seed : cfg.seeds) {
            for (double lr : lrs) {
                for (int threshold : cfg.ambiguity_thresholds) {
                    CellKey key{factor, seed, lr, threshold, lr_swept, x_swept};
                    if (const auto existing = store.load_record(key)) {
                        outcome.records.push_back(*existing);
                        continue;
                    }
                    if (max_cells >= 0 && executed >= max_cells) {
                        outcome.interrupted = true;
                        return outcome;
                    }
                    ++executed;

                    RunRecord rec;
                    rec.run_id = key.id(hash);
                    rec.config_hash = hash;
                    rec.source_rev = STITCH_SOURCE_REV;
                    rec.factor = factor;
                    rec.seed = seed;
                    rec.lr = lr;
                    rec.threshold = threshold;
                    rec.arm = to_string(cfg.moderation_arm);
                    rec.epochs = cfg.epochs_for_factor(factor);

                    const fs::path dir = store.cell_dir(key);
                    fs::create_directories(dir);
                    std::ofstream cell_log(dir / "log.txt", std::ios::trunc);

                    try {
                        std::vector<Patch> patches = corpus::load_patch_set(manifest, factor);
                        cell_log << "patch set: " << patches.size() << " patches\n";

                        if (cfg.moderation_arm != ModerationArm::off) {
                            moderation::ProviderConfig pc;
                            pc.kind = cfg.moderation_arm == ModerationArm::stub
                                          ? moderation::ProviderConfig::Kind::stub
                                          : moderation::ProviderConfig::Kind::http;
                            pc.endpoint = cfg.moderation_endpoint;
                            pc.requests_per_minute = cfg.moderation_rpm;
                            pc.stub_pixel_threshold = cfg.stub_pixel_threshold;
                            pc.cache_path = store.verdict_cache_path();
                            const auto verdicts = moderation::moderate(patches, pc);
                            rec.evasion = moderation::evasion_rate(verdicts, manifest).rows;
                            patches = moderation::filter_unflagged(patches, verdicts);
                            cell_log << "after moderation filter: " << patches.size() << " patches\n";

                            nlohmann::json ev = nlohmann::json::array();
                            for (const auto& row : rec.evasion) {
                                ev.push_back({{"group", row.group},
                                              {"factor", row.factor},
                                              {"total", row.total},
                                              {"flagged", row.flagged}});
                            }
                            write_file_atomic(dir / "evasion.json", ev.dump(2) + "\n");
                        }

                        if (threshold > 0) {
                            patches = eval::ambiguity_filter(stage0, manifest, patches, threshold);
                            cell_log << "after ambiguity filter (x=" << threshold << "): " << patches.size()
                                     << " patches\n";
                        }
                        if (patches.empty()) throw ContractError("no training patches left for this cell");

                        std::vector<corpus::RenderedSample> samples;
                        samples.reserve(patches.size());
                        for (const auto& p : patches) {
                            const auto& e = entry_for(manifest, p.source_id);
                            TemplateSpec spec;
                            if (safety) {
                                spec = {TemplateKind::finetune_safety, ""};
                            } else if (cfg.positional_template) {
                                spec = {TemplateKind::finetune_id_positional, corpus::to_string(e.category)};
                            } else {
                                spec = {TemplateKind::finetune_id, corpus::to_string(e.category)};
                            }
                            samples.push_back(corpus::render_sample(p, e.target_text, spec));
                        }
                        rec.n_train_samples = samples.size();

                        model::Model m = stage0;
                        model::TrainConfig tc = cfg.train;
                        tc.learning_rate = lr;
                        tc.epochs = cfg.epochs_for_factor(factor);
                        tc.seed = seed;

                        const auto on_epoch = [&](int epoch, const model::Model& snapshot,
                                                  std::map<std::string, std::vector<double>>& curves) {
                            (void)epoch;
                            for (const auto mode : cfg.eval_modes) {
                                const auto rr = eval::mean_rank(snapshot, manifest, mode, patches);
                                curves["rank_" + eval::to_string(mode)].push_back(rr.mean_rank);
                            }
                        };
                        auto ckpt = model::train(m, samples, tc, on_epoch);
                        rec.curves = ckpt.curves;

                        for (const auto mode : cfg.eval_modes) {
                            const auto rr = eval::mean_rank(m, manifest, mode, patches);
                            ModeResult mr;
                            mr.final_mean_rank = rr.mean_rank;
                            mr.n_candidates = rr.n_candidates;
                            for (const auto& item : rr.per_item) mr.per_item.emplace_back(item.item_id, item.rank);
                            const auto& curve = rec.curves.at("rank_" + eval::to_string(mode));
                            const auto best = std::min_element(curve.begin(), curve.end());
                            mr.best_mean_rank = *best;
                            mr.best_epoch = static_cast<int>(best - curve.begin());
                            rec.results[eval::to_string(mode)] = std::move(mr);
                        }

                        model::save_checkpoint(ckpt, dir / "checkpoint.ckpt");

                        // Per-epoch results, one JSON line per epoch.
                        std::ostringstream lines;
                        const size_t n_epochs = rec.curves.at("train_loss").size();
                        for (size_t ep = 0; ep < n_epochs; ++ep) {
                            nlohmann::json line;
                            line["run_id"] = rec.run_id;
                            line["seed"] = seed;
                            line["factor"] = factor;
                            line["epoch"] = ep;
                            line["train_loss"] = rec.curves.at("train_loss")[ep];
                            for (const auto mode : cfg.eval_modes) {
                                line["rank_" + eval::to_string(mode)] =
                                    rec.curves.at("rank_" + eval::to_string(mode))[ep];
                            }
                            lines << line.dump() << "\n";
                        }
                        write_file_atomic(dir / "results.jsonl", lines.str());

                        rec.status = "ok";
                        cell_log << "done: " << rec.run_id << "\n";
                    } catch (const Error& e) {
                        rec.status = "failed";
                        rec.error = e.what();
                        cell_log << "failed: " << e.what() << "\n";
                        if (log) *log << "cell " << rec.run_id << " failed: " << e.what() << "\n";
                    }

                    store.commit_record(key, rec);
                    outcome.records.push_back(rec);
                    if (log && rec.status == "ok") {
                        *log << "cell " << rec.run_id << " ok";
                        for (const auto& [mode, r] : rec.results) {
                            *log << "  " << mode << "=" << r.final_mean_rank;
                        }
                        *log << "\n";
                    }
                }
            }
        }
    }
    return outcome;
}

}  // namespace stitch::harness
