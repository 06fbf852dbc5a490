#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "stitch/corpus/ids.hpp"
#include "stitch/corpus/manifest.hpp"
#include "stitch/corpus/split.hpp"
#include "stitch/corpus/synth.hpp"
#include "stitch/harness/aggregate.hpp"
#include "stitch/harness/experiment.hpp"
#include "stitch/harness/report.hpp"
#include "stitch/model/checkpoint.hpp"
#include "stitch/moderation/filter.hpp"

namespace fs = std::filesystem;
using namespace stitch;
using nlohmann::json;

namespace {

struct CorpusArgs {
    int classes = 10;
    int per_class = 1;
    int side = 32;
    uint64_t seed = 0;
    int hazard = 0;
    std::string out = "corpus";
    std::vector<int> factors{1, 2, 4, 8};
};

void add_corpus_flags(CLI::App* app, CorpusArgs& a) {
    app->add_option("--classes", a.classes, "number of glyph classes");
    app->add_option("--per-class", a.per_class, "images per class");
    app->add_option("--side", a.side, "image side length in pixels");
    app->add_option("--seed", a.seed, "generator seed");
    app->add_option("--hazard", a.hazard, "leading classes overlaid with the hazard glyph");
    app->add_option("--out", a.out, "output directory");
}

int run_cli(int argc, char** argv) {
    CLI::App app{"visual-stitching benchmark harness"};
    app.require_subcommand(1);

    // ---- corpus ----
    auto* corpus_cmd = app.add_subcommand("corpus", "dataset construction");
    corpus_cmd->require_subcommand(1);

    CorpusArgs synth_args;
    auto* synth_cmd = corpus_cmd->add_subcommand("synth", "generate the synthetic glyph corpus");
    add_corpus_flags(synth_cmd, synth_args);

    CorpusArgs build_args;
    auto* build_cmd =
        corpus_cmd->add_subcommand("build", "generate corpus plus patch sets for all factors");
    add_corpus_flags(build_cmd, build_args);
    build_cmd->add_option("--factors", build_args.factors, "split factors to materialize");

    std::string split_manifest;
    int split_factor = 2;
    auto* split_cmd = corpus_cmd->add_subcommand("split", "write one patch set for a factor");
    split_cmd->add_option("--manifest", split_manifest, "manifest.jsonl path")->required();
    split_cmd->add_option("--factor", split_factor, "split factor")->required();

    // ---- moderate ----
    std::string mod_provider = "stub", mod_endpoint, mod_cache, mod_manifest, mod_out;
    int mod_rpm = 120, mod_factor = 8, mod_threshold_px = 12;
    auto* mod_cmd = app.add_subcommand("moderate", "classify a patch set and report evasion rates");
    mod_cmd->add_option("--provider", mod_provider, "stub|http")->check(CLI::IsMember({"stub", "http"}));
    mod_cmd->add_option("--endpoint", mod_endpoint, "moderation endpoint URL (http provider)");
    mod_cmd->add_option("--rpm", mod_rpm, "requests per minute");
    mod_cmd->add_option("--cache", mod_cache, "verdict cache path (JSONL)");
    mod_cmd->add_option("--manifest", mod_manifest, "manifest.jsonl path")->required();
    mod_cmd->add_option("--factor", mod_factor, "split factor");
    mod_cmd->add_option("--threshold-px", mod_threshold_px, "stub hazard pixel threshold");
    mod_cmd->add_option("--out", mod_out, "write verdicts to this JSONL file");

    // ---- train ----
    std::string train_stage = "pretrain", train_manifest, train_config, train_init, train_out = "model.ckpt";
    std::string train_template = "finetune_id";
    int train_factor = 2;
    uint64_t train_seed = 0;
    auto* train_cmd = app.add_subcommand("train", "stage-0 pretraining or stage-1 finetuning");
    train_cmd->add_option("--stage", train_stage, "pretrain|finetune")
        ->check(CLI::IsMember({"pretrain", "finetune"}));
    train_cmd->add_option("--manifest", train_manifest, "manifest.jsonl path")->required();
    train_cmd->add_option("--factor", train_factor, "split factor (finetune)");
    train_cmd->add_option("--config", train_config, "JSON file with model/train sections");
    train_cmd->add_option("--seed", train_seed, "training seed");
    train_cmd->add_option("--init", train_init, "initial checkpoint (finetune stage)");
    train_cmd->add_option("--template", train_template,
                          "finetune_id|finetune_id_positional|finetune_safety");
    train_cmd->add_option("--out", train_out, "output checkpoint path");

    // ---- eval ----
    std::string eval_ckpt, eval_manifest, eval_mode = "image", eval_out;
    int eval_factor = 2;
    auto* eval_cmd = app.add_subcommand("eval", "rank-based evaluation of a checkpoint");
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
    eval_cmd->add_option("--manifest", eval_manifest, "manifest.jsonl path")->required();
    eval_cmd->add_option("--mode", eval_mode, "image|reference|localization|safety_image|safety_reference");
    eval_cmd->add_option("--factor", eval_factor, "patch factor (localization mode)");
    eval_cmd->add_option("--out", eval_out, "write a JSONL result record here");

    // ---- filter-ambiguous ----
    std::string fa_ckpt, fa_manifest, fa_out;
    int fa_factor = 2, fa_threshold = 0;
    auto* fa_cmd = app.add_subcommand("filter-ambiguous", "threshold-x ambiguity filtering of a patch set");
    fa_cmd->add_option("--checkpoint", fa_ckpt, "stage-0 checkpoint")->required();
    fa_cmd->add_option("--manifest", fa_manifest, "manifest.jsonl path")->required();
    fa_cmd->add_option("--factor", fa_factor, "split factor");
    fa_cmd->add_option("--threshold", fa_threshold, "discard patches with localization rank < x")->required();
    fa_cmd->add_option("--out", fa_out, "write kept patch keys here (JSONL)");

    // ---- run / aggregate / report ----
    std::string run_config;
    long run_max_cells = -1;
    auto* run_cmd = app.add_subcommand("run", "execute the full experiment sweep from a config file");
    run_cmd->add_option("--config", run_config, "experiment config JSON")->required();
    run_cmd->add_option("--max-cells", run_max_cells, "stop after completing N cells (testing/budgeting)");

    std::string agg_config, agg_out;
    auto* agg_cmd = app.add_subcommand("aggregate", "mean/std tables over completed runs");
    agg_cmd->add_option("--config", agg_config, "experiment config JSON")->required();
    agg_cmd->add_option("--out", agg_out, "CSV output path (default: <store>/aggregate.csv)");

    std::string rep_config, rep_kind = "rank_bars", rep_out;
    auto* rep_cmd = app.add_subcommand("report", "emit plots + CSV for completed runs");
    rep_cmd->add_option("--config", rep_config, "experiment config JSON")->required();
    rep_cmd->add_option("--kind", rep_kind, "rank_bars|rank_vs_epoch|evasion_bars|lr_sweep");
    rep_cmd->add_option("--out", rep_out, "output directory (default: <store>/report)");

    CLI11_PARSE(app, argc, argv);

    if (synth_cmd->parsed() || build_cmd->parsed()) {
        const CorpusArgs& a = synth_cmd->parsed() ? synth_args : build_args;
        corpus::SynthSpec spec{a.classes, a.per_class, a.side, a.seed, a.hazard};
        const auto sources = corpus::gen_synthetic_corpus(spec);
        std::set<int> factors;
        if (build_cmd->parsed()) factors.insert(build_args.factors.begin(), build_args.factors.end());
        const auto manifest = corpus::build_manifest(sources, factors, a.out);
        std::cout << "wrote " << manifest.entries.size() << " images";
        if (!factors.empty()) {
            std::cout << " and patch sets for factors {";
            for (int f : factors) std::cout << " " << f;
            std::cout << " }";
        }
        std::cout << " under " << a.out << "\n";
        return 0;
    }

    if (split_cmd->parsed()) {
        const auto manifest = corpus::load_manifest(split_manifest);
        corpus::SplitSpec{split_factor}.validate();
        const size_t n = corpus::write_patch_set(manifest, split_factor);
        std::cout << "wrote " << n << " patches at factor " << split_factor << "\n";
        return 0;
    }

    if (mod_cmd->parsed()) {
        const auto manifest = corpus::load_manifest(mod_manifest);
        const auto patches = corpus::load_patch_set(manifest, mod_factor);
        moderation::ProviderConfig pc;
        pc.kind = mod_provider == "stub" ? moderation::ProviderConfig::Kind::stub
                                         : moderation::ProviderConfig::Kind::http;
        pc.endpoint = mod_endpoint;
        pc.requests_per_minute = mod_rpm;
        pc.stub_pixel_threshold = mod_threshold_px;
        pc.cache_path = mod_cache;
        const auto verdicts = moderation::moderate(patches, pc);
        const auto report = moderation::evasion_rate(verdicts, manifest);
        std::cout << "group,factor,total,flagged,evasion_rate\n";
        for (const auto& row : report.rows) {
            std::cout << row.group << "," << row.factor << "," << row.total << "," << row.flagged << ","
                      << harness::csv_double(row.evasion_rate()) << "\n";
        }
        if (!mod_out.empty()) {
            std::ofstream out(mod_out, std::ios::trunc);
            for (const auto& v : verdicts) {
                json rec;
                rec["key"] = v.key.to_string();
                rec["flagged"] = v.flagged;
                rec["scores"] = v.scores;
                rec["provider"] = v.provider;
                out << rec.dump() << "\n";
            }
        }
        return 0;
    }

    if (train_cmd->parsed()) {
        const auto manifest = corpus::load_manifest(train_manifest);
        model::ModelConfig mc;
        model::TrainConfig tc;
        if (!train_config.empty()) {
            std::ifstream in(train_config);
            if (!in) throw ConfigError("cannot open " + train_config);
            json j;
            in >> j;
            if (j.contains("model")) mc = model::ModelConfig::from_json(j["model"]);
            if (j.contains("train")) tc = model::TrainConfig::from_json(j["train"]);
        }
        tc.seed = train_seed;

        std::vector<corpus::RenderedSample> samples;
        model::Model m(mc);
        if (train_stage == "pretrain") {
            for (const auto& e : manifest.entries) {
                const corpus::TemplateSpec spec{corpus::TemplateKind::localization,
                                                corpus::to_string(e.category)};
                samples.push_back(
                    corpus::render_sample(corpus::load_image(manifest, e), e.reference, spec));
            }
        } else {
            if (train_init.empty()) throw ConfigError("finetune stage needs --init checkpoint");
            const auto ckpt = model::load_checkpoint(train_init);
            m = model::model_from_checkpoint(ckpt);
            const auto kind = corpus::template_kind_from_string(train_template);
            const auto patches = corpus::load_patch_set(manifest, train_factor);
            for (const auto& p : patches) {
                const corpus::ManifestEntry* entry = nullptr;
                for (const auto& e : manifest.entries) {
                    if (e.image_id == p.source_id) entry = &e;
                }
                if (!entry) throw ContractError("patch source missing from manifest: " + p.source_id);
                const corpus::TemplateSpec spec{kind, corpus::to_string(entry->category)};
                samples.push_back(corpus::render_sample(p, entry->target_text, spec));
            }
            if (tc.epochs <= 0) tc.epochs = model::TrainConfig::default_epochs_for_factor(train_factor);
        }
        const auto ckpt = model::train(m, samples, tc);
        model::save_checkpoint(ckpt, train_out);
        std::cout << "trained " << samples.size() << " samples for " << tc.epochs
                  << " epochs; final loss " << ckpt.curves.at("train_loss").back() << "; wrote "
                  << train_out << "\n";
        return 0;
    }

    if (eval_cmd->parsed()) {
        const auto ckpt = model::load_checkpoint(eval_ckpt);
        const auto m = model::model_from_checkpoint(ckpt);
        const auto manifest = corpus::load_manifest(eval_manifest);
        const auto mode = eval::eval_mode_from_string(eval_mode);
        std::vector<corpus::Patch> patches;
        if (mode == eval::EvalMode::localization) patches = corpus::load_patch_set(manifest, eval_factor);
        const auto rr = eval::mean_rank(m, manifest, mode, patches);
        std::cout << "mode=" << eval_mode << " items=" << rr.per_item.size()
                  << " candidates=" << rr.n_candidates << " mean_rank=" << rr.mean_rank << "\n";
        if (!eval_out.empty()) {
            json rec;
            rec["mode"] = eval_mode;
            rec["mean_rank"] = rr.mean_rank;
            rec["n_candidates"] = rr.n_candidates;
            rec["scoring"] = "sum_logprob_unnormalized";
            json per = json::array();
            for (const auto& it : rr.per_item) per.push_back({{"item", it.item_id}, {"rank", it.rank}});
            rec["per_item"] = per;
            std::ofstream out(eval_out, std::ios::app);
            out << rec.dump() << "\n";
        }
        return 0;
    }

    if (fa_cmd->parsed()) {
        const auto ckpt = model::load_checkpoint(fa_ckpt);
        const auto m = model::model_from_checkpoint(ckpt);
        const auto manifest = corpus::load_manifest(fa_manifest);
        const auto patches = corpus::load_patch_set(manifest, fa_factor);
        const auto kept = eval::ambiguity_filter(m, manifest, patches, fa_threshold);
        std::cout << "kept " << kept.size() << " of " << patches.size() << " patches at threshold "
                  << fa_threshold << "\n";
        if (!fa_out.empty()) {
            std::ofstream out(fa_out, std::ios::trunc);
            for (const auto& p : kept) {
                out << json{{"source_id", p.source_id}, {"factor", p.factor}, {"row", p.row}, {"col", p.col}}
                           .dump()
                    << "\n";
            }
        }
        return 0;
    }

    if (run_cmd->parsed()) {
        const auto cfg = harness::ExperimentConfig::load(run_config);
        const auto outcome = harness::run_experiment(cfg, run_max_cells, &std::cout);
        std::cout << outcome.records.size() << " cells recorded (" << outcome.failed_cells()
                  << " failed)" << (outcome.interrupted ? ", interrupted" : "") << "\n";
        if (outcome.failed_cells() > 0 || outcome.interrupted) return 2;
        return 0;
    }

    if (agg_cmd->parsed()) {
        const auto cfg = harness::ExperimentConfig::load(agg_config);
        harness::RunStore store(cfg.out_dir, cfg.hash());
        const auto rows = harness::aggregate(store.load_all_records());
        const std::string csv = harness::aggregate_csv(rows);
        const fs::path out = agg_out.empty() ? store.root() / "aggregate.csv" : fs::path(agg_out);
        harness::write_file_atomic(out, csv);
        std::cout << csv;
        std::cout << "wrote " << out << "\n";
        return 0;
    }

    if (rep_cmd->parsed()) {
        const auto cfg = harness::ExperimentConfig::load(rep_config);
        harness::RunStore store(cfg.out_dir, cfg.hash());
        const auto kind = harness::report_kind_from_string(rep_kind);
        const fs::path out = rep_out.empty() ? store.root() / "report" : fs::path(rep_out);
        const auto files = harness::emit_report(store.load_all_records(), kind, out);
        for (const auto& f : files) std::cout << "wrote " << f << "\n";
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
