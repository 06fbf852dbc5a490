#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "stitch/corpus/ids.hpp"
#include "stitch/corpus/manifest.hpp"
#include "stitch/corpus/synth.hpp"
#include "stitch/eval/score.hpp"
#include "stitch/model/train.hpp"
#include "stitch/rng.hpp"

using namespace stitch;
using namespace stitch::eval;
using corpus::TemplateKind;
using corpus::TemplateSpec;
namespace fs = std::filesystem;

namespace {

// Independent oracle: 0-indexed position of the correct candidate after a
// stable sort by descending score.
int stable_sort_rank(const std::vector<double>& scores, int correct) {
    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] > scores[b]; });
    for (size_t pos = 0; pos < idx.size(); ++pos) {
        if (idx[pos] == correct) return static_cast<int>(pos);
    }
    return -1;
}

model::ModelConfig small_config() {
    model::ModelConfig c;
    c.embed_dim = 32;
    c.n_layers = 2;
    c.n_heads = 4;
    c.ffn_mult = 2;
    c.vision_tile_px = 8;
    c.vision_input_px = 32;
    c.max_seq_len = 128;
    c.param_init_seed = 1;
    return c;
}

struct TestCorpus {
    fs::path dir;
    corpus::Manifest manifest;

    TestCorpus(int classes, int per_class, const std::string& tag, uint64_t seed = 11) {
        dir = fs::temp_directory_path() / ("stitch_eval_" + tag);
        fs::remove_all(dir);
        const auto sources = corpus::gen_synthetic_corpus(classes, per_class, 32, seed);
        manifest = corpus::build_manifest(sources, {}, dir);
    }
    ~TestCorpus() { fs::remove_all(dir); }
};

std::vector<corpus::RenderedSample> caption_samples(const corpus::Manifest& m) {
    std::vector<corpus::RenderedSample> out;
    for (const auto& e : m.entries) {
        out.push_back(corpus::render_sample(corpus::load_image(m, e), e.reference,
                                            TemplateSpec{TemplateKind::localization, to_string(e.category)}));
    }
    return out;
}

}  // namespace

TEST_CASE("rank_of_correct: spec examples and error paths") {
    CHECK(rank_of_correct(std::vector<double>{0.1, 0.7, 0.2}, 1) == 0);

    std::vector<double> twenty(20, 1.0);
    twenty[13] = -5.0;  // strict minimum
    CHECK(rank_of_correct(twenty, 13) == 19);

    CHECK_THROWS_AS(rank_of_correct(std::vector<double>{0.0, std::nan("")}, 0), ContractError);
    CHECK_THROWS_AS(rank_of_correct(std::vector<double>{}, 0), ContractError);
    CHECK_THROWS_AS(rank_of_correct(std::vector<double>{1.0}, 2), ContractError);
}

TEST_CASE("rank_of_correct matches the stable-sort oracle on 1e4 vectors with ties") {
    Rng rng(77);
    for (int trial = 0; trial < 10'000; ++trial) {
        const int n = 2 + static_cast<int>(rng.next_below(24));
        std::vector<double> scores(static_cast<size_t>(n));
        for (auto& s : scores) {
            // Coarse grid forces frequent ties.
            s = static_cast<double>(rng.next_below(6)) / 2.0;
        }
        const int correct = static_cast<int>(rng.next_below(static_cast<uint64_t>(n)));
        const int got = rank_of_correct(scores, correct);
        CHECK(got == stable_sort_rank(scores, correct));
        CHECK(got >= 0);
        CHECK(got <= n - 1);

        // Score-shift invariance.
        auto shifted = scores;
        for (auto& s : shifted) s += 3.25;
        CHECK(rank_of_correct(shifted, correct) == got);
    }
}

TEST_CASE("uniform random scores at n=20 give mean rank 9.5 within 0.15") {
    Rng rng(2024);
    double total = 0.0;
    const int trials = 100'000;
    for (int t = 0; t < trials; ++t) {
        std::vector<double> scores(20);
        for (auto& s : scores) s = rng.next_double();
        total += rank_of_correct(scores, static_cast<int>(rng.next_below(20)));
    }
    const double mean = total / trials;
    CHECK(mean > 9.5 - 0.15);
    CHECK(mean < 9.5 + 0.15);
}

TEST_CASE("score_candidates: shapes and uniform-model symmetry") {
    model::ModelConfig cfg = small_config();
    cfg.tie_embeddings = false;
    cfg.head_init_scale = 0.0;  // exactly uniform distributions
    const model::Model m(cfg);

    CandidateSet cs;
    cs.candidates = corpus::generate_ids(20, 5);
    cs.correct_index = 3;
    Raster img(32, 32);
    img.fill(100, 150, 200);
    const auto scores =
        score_candidates(m, img, "", TemplateSpec{TemplateKind::eval_image_id, "synthetic"}, cs);
    REQUIRE(scores.size() == 20);
    for (double s : scores) CHECK(std::isfinite(s));
    // Same token length + uniform model -> equal scores.
    for (double s : scores) CHECK(s == doctest::Approx(scores[0]).epsilon(1e-6));

    CandidateSet dup;
    dup.candidates = {"aa", "aa"};
    dup.correct_index = 0;
    CHECK_THROWS_AS(score_candidates(m, img, "", TemplateSpec{TemplateKind::eval_image_id, "x"}, dup),
                    ContractError);
}

TEST_CASE("mean_rank: trivial arithmetic and untrained baseline") {
    RankResult r = RankResult::from_items({{"a", 0}, {"b", 3}}, 4);
    CHECK(r.mean_rank == doctest::Approx(1.5));

    // Untrained model on a 20-class corpus: near the (n-1)/2 = 9.5 random
    // baseline within a wide noise band.
    TestCorpus tc(20, 1, "untrained", 3);
    const model::Model m(small_config());
    const auto rr = mean_rank(m, tc.manifest, EvalMode::image);
    CHECK(rr.per_item.size() == 20);
    CHECK(rr.n_candidates == 20);
    CHECK(rr.mean_rank > 9.5 - 3.0);
    CHECK(rr.mean_rank < 9.5 + 3.0);

    CHECK_THROWS_AS(mean_rank(m, tc.manifest, EvalMode::localization, {}), ContractError);
}

TEST_CASE("overfit oracle: memorizing (image, ID) drives image-mode mean rank to 0") {
    TestCorpus tc(6, 1, "overfit", 7);
    model::Model m(small_config());

    std::vector<corpus::RenderedSample> samples;
    for (const auto& e : tc.manifest.entries) {
        samples.push_back(corpus::render_sample(corpus::load_image(tc.manifest, e), e.target_text,
                                                TemplateSpec{TemplateKind::finetune_id, "synthetic"}));
    }
    model::TrainConfig train_cfg;
    train_cfg.batch_size = 6;
    train_cfg.epochs = 120;
    train_cfg.learning_rate = 3e-3;
    train_cfg.seed = 2;
    model::train(m, samples, train_cfg);

    const auto rr = mean_rank(m, tc.manifest, EvalMode::image);
    CHECK(rr.mean_rank == doctest::Approx(0.0));
}

TEST_CASE("stage-0 pretraining enables recognition and drives the ambiguity filter") {
    TestCorpus tc(6, 2, "stage0", 5);
    model::Model m(small_config());

    // Untrained recognition hovers near the random baseline.
    const double baseline = (6 - 1) / 2.0;
    const auto untrained = recognition_check(m, tc.manifest);
    CHECK(std::abs(untrained.mean_rank - baseline) < 2.5);

    model::TrainConfig pre;
    pre.batch_size = 4;
    pre.epochs = 150;
    pre.learning_rate = 1e-3;
    pre.seed = 1;
    model::train(m, caption_samples(tc.manifest), pre);

    const auto rec = recognition_check(m, tc.manifest);
    CHECK(rec.mean_rank <= 0.5);

    // Ambiguity filter semantics against the pretrained model.
    std::vector<corpus::Patch> patches = corpus::load_patch_set(tc.manifest, 2);
    const auto kept0 = ambiguity_filter(m, tc.manifest, patches, 0);
    CHECK(kept0.size() == patches.size());  // threshold-0 keeps everything

    const int n_refs = static_cast<int>(tc.manifest.candidate_references.size());
    CHECK(ambiguity_filter(m, tc.manifest, patches, n_refs).empty());
    CHECK_THROWS_AS(ambiguity_filter(m, tc.manifest, patches, n_refs + 1), ConfigError);

    // Kept-set size is non-increasing in the threshold.
    size_t prev = patches.size();
    for (int x = 1; x <= n_refs; ++x) {
        const size_t now = ambiguity_filter(m, tc.manifest, patches, x).size();
        CHECK(now <= prev);
        prev = now;
    }

    // A patch of localization rank r is kept at threshold r and discarded
    // at threshold r+1.
    const auto ranks = localization_ranks(m, tc.manifest, patches);
    for (size_t i = 0; i < patches.size(); ++i) {
        if (ranks[i] > 0 && ranks[i] < n_refs) {
            const std::vector<corpus::Patch> one(1, patches[i]);
            CHECK(ambiguity_filter(m, tc.manifest, one, ranks[i]).size() == 1);
            CHECK(ambiguity_filter(m, tc.manifest, one, ranks[i] + 1).empty());
            break;
        }
    }
}
