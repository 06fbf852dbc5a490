#include <cmath>
#include <limits>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "stitch/corpus/synth.hpp"
#include "stitch/kernels.hpp"
#include "stitch/model/checkpoint.hpp"
#include "stitch/model/train.hpp"
#include "stitch/rng.hpp"
#include "stitch/sha256.hpp"

using namespace stitch;
using namespace stitch::model;
using corpus::TemplateKind;
using corpus::TemplateSpec;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.embed_dim = 8;
    c.n_layers = 1;
    c.n_heads = 2;
    c.ffn_mult = 2;
    c.vision_tile_px = 8;
    c.vision_input_px = 16;  // 4 visual tokens
    c.max_seq_len = 96;
    c.param_init_seed = 3;
    return c;
}

Raster checker(int h, int w) {
    Raster r(h, w);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const uint8_t v = static_cast<uint8_t>(((i / 4 + j / 4) % 2) ? 200 : 40);
            r.px(i, j)[0] = v;
            r.px(i, j)[1] = static_cast<uint8_t>(255 - v);
            r.px(i, j)[2] = static_cast<uint8_t>((i * 13 + j * 7) % 256);
        }
    }
    return r;
}

corpus::RenderedSample visual_sample(const std::string& id = "ar957") {
    return corpus::render_sample(checker(16, 16), id, TemplateSpec{TemplateKind::finetune_id, "food"});
}

std::string params_checksum(const Model& m) {
    const auto& v = m.params().values();
    return sha256_hex(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(v.data()),
                                               v.size() * sizeof(double)));
}

}  // namespace

TEST_CASE("init: determinism, divisibility check, parameter budget") {
    const Model a(tiny_config()), b(tiny_config());
    CHECK(params_checksum(a) == params_checksum(b));

    ModelConfig other = tiny_config();
    other.param_init_seed = 4;
    CHECK(params_checksum(Model(other)) != params_checksum(a));

    ModelConfig bad;
    bad.embed_dim = 65;
    bad.n_heads = 8;
    CHECK_THROWS_AS(Model{bad}, ConfigError);

    // Default toy config stays under 2e6 parameters, and the registered
    // total matches the closed-form count from the dimensions.
    const ModelConfig def;
    const Model m(def);
    CHECK(m.n_params() <= 2'000'000);
    const size_t V = static_cast<size_t>(m.vocab().size());
    const size_t d = def.embed_dim, ffn = static_cast<size_t>(def.ffn_mult) * d;
    const size_t tile_in = static_cast<size_t>(def.vision_tile_px) * def.vision_tile_px * 3;
    const size_t per_layer = 2 * d + 4 * (d * d + d) + 2 * d + (ffn * d + ffn) + (d * ffn + d);
    size_t want = V * d + d * tile_in + d + static_cast<size_t>(def.n_vis_tokens()) * d +
                  static_cast<size_t>(def.n_layers) * per_layer + 2 * d;
    if (!def.tie_embeddings) want += V * d;
    CHECK(m.n_params() == want);
}

TEST_CASE("encode_visual: shape, determinism, slivers") {
    const ModelConfig def;  // 32px canvas, tile 8 -> 16 embeddings
    const Model m(def);
    const auto emb = m.encode_visual(checker(32, 32));
    CHECK(emb.size() == static_cast<size_t>(16) * def.embed_dim);
    CHECK(m.encode_visual(checker(32, 32)) == emb);

    // Any aspect ratio canonicalizes to the same embedding count.
    Rng rng(5);
    for (int trial = 0; trial < 8; ++trial) {
        const int h = 1 + static_cast<int>(rng.next_below(60));
        const int w = 1 + static_cast<int>(rng.next_below(60));
        CHECK(m.encode_visual(checker(h, w)).size() == emb.size());
    }
    CHECK(m.encode_visual(checker(3, 32)).size() == emb.size());
    CHECK_THROWS_AS(m.encode_visual(Raster()), ContractError);
}

TEST_CASE("sequence_logprobs: shape, range, determinism, uniform head") {
    const Model m(tiny_config());
    const auto s = visual_sample();
    const auto lps = m.sequence_logprobs(s);
    REQUIRE(lps.size() == 5);
    for (double lp : lps) {
        CHECK(std::isfinite(lp));
        CHECK(lp <= 0.0);
    }
    CHECK(m.sequence_logprobs(s) == lps);

    // Zero-initialized untied head: exactly uniform.
    ModelConfig zc = tiny_config();
    zc.tie_embeddings = false;
    zc.head_init_scale = 0.0;
    const Model zm(zc);
    const double uniform = -std::log(static_cast<double>(zm.vocab().size()));
    for (double lp : zm.sequence_logprobs(s)) CHECK(lp == doctest::Approx(uniform).epsilon(1e-12));

    // Default small-norm init: near-uniform within initialization noise.
    for (double lp : lps) CHECK(std::abs(lp - uniform) < 0.5);
}

TEST_CASE("score_completions agrees with the full-forward route and chain products") {
    const Model m(tiny_config());
    const std::vector<std::string> cands = {"ar957", "qx102", "zz000"};

    // Visual condition.
    {
        const auto probe = corpus::render_sample(checker(16, 16), cands[0],
                                                 TemplateSpec{TemplateKind::finetune_id, "food"});
        const std::string prefix = probe.prompt_text.substr(0, probe.target_begin);
        const auto scores = m.score_completions(probe.visual, prefix, cands);
        REQUIRE(scores.size() == 3);
        for (size_t i = 0; i < cands.size(); ++i) {
            const auto r = corpus::render_sample(checker(16, 16), cands[i],
                                                 TemplateSpec{TemplateKind::finetune_id, "food"});
            const auto lps = m.sequence_logprobs(r);
            double sum = 0.0;
            for (double lp : lps) sum += lp;
            CHECK(scores[i] == doctest::Approx(sum).epsilon(1e-12));
        }
    }

    // Reference condition (no visual tokens in the prompt).
    {
        const auto probe =
            corpus::render_sample(std::string("cat"), cands[0], TemplateSpec{TemplateKind::eval_reference_id, ""});
        const std::string prefix = probe.prompt_text.substr(0, probe.target_begin);
        const auto scores = m.score_completions(std::nullopt, prefix, cands);
        const auto r = corpus::render_sample(std::string("cat"), cands[1],
                                             TemplateSpec{TemplateKind::eval_reference_id, ""});
        const auto lps = m.sequence_logprobs(r);
        double sum = 0.0;
        for (double lp : lps) sum += lp;
        CHECK(scores[1] == doctest::Approx(sum).epsilon(1e-12));
    }

    // Brute-force chain products: p(c1 c2 | prefix) recomputed from two
    // independent forwards and test-side softmax extraction.
    {
        const std::string prefix = "The cat is associated with ID ";
        const auto scores = m.score_completions(std::nullopt, prefix, {"ab", "ba", "aa"});
        auto step_prob = [&](const std::string& ctx, char next) {
            corpus::RenderedSample r;
            r.prompt_text = ctx + next;
            r.target_begin = ctx.size();
            r.target_end = r.prompt_text.size();
            return std::exp(m.sequence_logprobs(r)[0]);
        };
        const std::vector<std::string> chains = {"ab", "ba", "aa"};
        for (size_t i = 0; i < chains.size(); ++i) {
            const double p = step_prob(prefix, chains[i][0]) * step_prob(prefix + chains[i][0], chains[i][1]);
            CHECK(std::exp(scores[i]) == doctest::Approx(p).epsilon(1e-9));
        }
    }
}

TEST_CASE("analytic gradients match central finite differences (< 1e-3 relative)") {
    Model m(tiny_config());
    REQUIRE(m.n_params() <= 10'000);

    const auto visual = m.tokenize(visual_sample());
    const auto text_only = m.tokenize(corpus::render_sample(
        std::string("cat"), "qx102", TemplateSpec{TemplateKind::eval_reference_id, ""}));

    for (const auto& sample : {visual, text_only}) {
        std::vector<double> grad(m.n_params(), 0.0);
        m.forward_backward(sample, 1.0, grad);

        Rng rng(11);
        auto& vals = m.params().values();
        int checked = 0;
        double worst = 0.0;
        for (int probe = 0; probe < 220; ++probe) {
            const size_t i = static_cast<size_t>(rng.next_below(vals.size()));
            const double eps = 1e-5 * std::max(1.0, std::abs(vals[i]));
            const double saved = vals[i];
            vals[i] = saved + eps;
            const double lp = m.loss_only(sample).ce_sum;
            vals[i] = saved - eps;
            const double lm = m.loss_only(sample).ce_sum;
            vals[i] = saved;
            const double fd = (lp - lm) / (2 * eps);
            const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
            const double rel = std::abs(fd - grad[i]) / denom;
            if (std::abs(fd) < 1e-10 && std::abs(grad[i]) < 1e-10) continue;
            worst = std::max(worst, rel);
            ++checked;
        }
        CHECK(checked > 100);
        CHECK(worst < 1e-3);
    }
}

TEST_CASE("loss masking: logit gradients vanish exactly off the target span") {
    const Model m(tiny_config());
    const auto sample = m.tokenize(visual_sample());
    const auto dlogits = m.loss_logit_grads(sample);
    const int V = m.vocab().size();
    const int n_vis = m.config().n_vis_tokens();
    const int T = n_vis + static_cast<int>(sample.text_tokens.size());
    REQUIRE(dlogits.size() == static_cast<size_t>(T) * V);

    int nonzero_rows = 0;
    for (int row = 0; row < T; ++row) {
        bool any = false;
        double row_sum = 0.0;
        for (int j = 0; j < V; ++j) {
            const double v = dlogits[static_cast<size_t>(row) * V + j];
            any |= v != 0.0;
            row_sum += v;
        }
        const int predicted_text_index = row - n_vis + 1;
        const bool is_target =
            predicted_text_index >= sample.target_begin && predicted_text_index < sample.target_end;
        if (is_target) {
            CHECK(any);
            // (softmax - onehot) sums to zero iff the distribution is
            // normalized.
            CHECK(std::abs(row_sum) < 1e-6);
            ++nonzero_rows;
        } else {
            CHECK(!any);  // exactly zero, not approximately
        }
    }
    CHECK(nonzero_rows == 5);

    // Loss equals the negative sum of the per-token completion log-probs.
    const auto lps = m.sequence_logprobs(visual_sample());
    double want = 0.0;
    for (double lp : lps) want -= lp;
    CHECK(m.loss_only(sample).ce_sum == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("train: overfits one sample; loss decreases and the target becomes argmax") {
    Model m(tiny_config());
    const auto sample = visual_sample("qx102");
    TrainConfig tc;
    tc.batch_size = 1;
    tc.epochs = 150;
    tc.learning_rate = 1e-2;
    tc.seed = 1;
    const auto ckpt = train(m, {sample}, tc);
    const auto& curve = ckpt.curves.at("train_loss");
    REQUIRE(curve.size() == 150);
    CHECK(curve.back() < 0.05);
    CHECK(curve.back() < curve.front());
    // Monotone after the warm start.
    for (size_t i = 5; i < curve.size(); ++i) CHECK(curve[i] <= curve[i - 1] + 1e-9);

    // Greedy decode of the target span recovers the trained ID.
    const auto probe = corpus::render_sample(checker(16, 16), "qx102",
                                             TemplateSpec{TemplateKind::finetune_id, "food"});
    const std::string prefix = probe.prompt_text.substr(0, probe.target_begin);
    const auto scores = m.score_completions(probe.visual, prefix, {"qx102", "ar957", "zz000", "qx103"});
    for (size_t i = 1; i < scores.size(); ++i) CHECK(scores[0] > scores[i]);
    const auto lps = m.sequence_logprobs(probe);
    for (double lp : lps) CHECK(std::exp(lp) > 0.5);
}

TEST_CASE("train: deterministic curves, backend-independent") {
    const auto run_once = [&] {
        Model m(tiny_config());
        std::vector<corpus::RenderedSample> samples;
        for (int i = 0; i < 5; ++i) {
            Raster r = checker(16, 16);
            r.px(0, 0)[0] = static_cast<uint8_t>(i * 50);
            samples.push_back(
                corpus::render_sample(r, i % 2 ? "aa111" : "bb222", TemplateSpec{TemplateKind::finetune_id, "food"}));
        }
        TrainConfig tc;
        tc.batch_size = 2;
        tc.epochs = 4;
        tc.learning_rate = 3e-3;
        tc.seed = 9;
        return train(m, samples, tc).curves.at("train_loss");
    };
    const auto c1 = run_once();
    const auto c2 = run_once();
    CHECK(c1 == c2);

    kernels::set_backend(kernels::Backend::serial);
    const auto c3 = run_once();
    kernels::set_backend(kernels::Backend::parallel);
    CHECK(c1 == c3);

    // Paper-parity hyperparameters are echoed into the checkpoint.
    Model m(tiny_config());
    TrainConfig parity;
    parity.batch_size = 8;
    parity.learning_rate = 1e-5;
    parity.epochs = 5;
    const auto ckpt = train(m, {visual_sample()}, parity);
    CHECK(ckpt.train_config.batch_size == 8);
    CHECK(ckpt.train_config.learning_rate == 1e-5);
    CHECK(ckpt.train_config.epochs == 5);
    CHECK(TrainConfig::default_epochs_for_factor(1) == 15);
    CHECK(TrainConfig::default_epochs_for_factor(2) == 5);
}

TEST_CASE("train: divergence raises with the failing step") {
    Model m(tiny_config());
    // Corrupt one weight; the first batch loss is non-finite.
    m.params().values()[100] = std::numeric_limits<double>::quiet_NaN();
    TrainConfig tc;
    tc.batch_size = 1;
    tc.epochs = 2;
    tc.seed = 1;
    try {
        train(m, {visual_sample()}, tc);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.step == 1);
    }
}

TEST_CASE("tokenize: length errors and marker contract") {
    const Model m(tiny_config());
    corpus::RenderedSample r;
    r.prompt_text = std::string(200, 'a');
    r.target_begin = 199;
    r.target_end = 200;
    CHECK_THROWS_AS(m.tokenize(r), LengthError);

    corpus::RenderedSample marker_no_visual;
    marker_no_visual.prompt_text = std::string(corpus::kVisualMarker) + "abc";
    marker_no_visual.target_begin = marker_no_visual.prompt_text.size() - 1;
    marker_no_visual.target_end = marker_no_visual.prompt_text.size();
    CHECK_THROWS_AS(m.tokenize(marker_no_visual), ContractError);
}

TEST_CASE("checkpoint: round trip, truncation, config mismatch") {
    const fs::path dir = fs::temp_directory_path() / "stitch_ckpt_test";
    fs::create_directories(dir);
    const fs::path path = dir / "model.ckpt";

    Model m(tiny_config());
    TrainConfig tc;
    tc.batch_size = 1;
    tc.epochs = 3;
    tc.learning_rate = 1e-3;
    const auto ckpt = train(m, {visual_sample()}, tc);
    save_checkpoint(ckpt, path);

    const auto loaded = load_checkpoint(path);
    CHECK(loaded.step == ckpt.step);
    CHECK(loaded.curves.at("train_loss") == ckpt.curves.at("train_loss"));
    const Model m2 = model_from_checkpoint(loaded);
    const auto probe = visual_sample("zz999");
    CHECK(m2.sequence_logprobs(probe) == m.sequence_logprobs(probe));

    // Truncated payload.
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    fs::resize_file(path, size - 64, ec);
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);

    // Checkpoint from a different model config.
    save_checkpoint(ckpt, path);
    ModelConfig other = tiny_config();
    other.embed_dim = 16;
    Model m3(other);
    CHECK_THROWS_AS(restore_into(m3, load_checkpoint(path)), ConfigError);
    fs::remove_all(dir);
}
