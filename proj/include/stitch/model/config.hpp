#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "stitch/errors.hpp"

namespace stitch::model {

struct ModelConfig {
    int embed_dim = 64;
    int n_layers = 2;
    int n_heads = 4;
    int ffn_mult = 4;
    int vision_tile_px = 8;
    int vision_input_px = 32;  // canonical square side for every visual input
    int max_seq_len = 160;
    uint64_t param_init_seed = 0;
    double init_scale = 0.02;
    bool tie_embeddings = true;    // head = token embedding transpose
    double head_init_scale = 0.0;  // untied head init std; 0 gives exactly uniform logits

    int n_vis_tokens() const {
        const int g = vision_input_px / vision_tile_px;
        return g * g;
    }

    void validate() const {
        if (embed_dim <= 0 || n_layers <= 0 || n_heads <= 0 || ffn_mult <= 0) {
            throw ConfigError("model config: dimensions must be positive");
        }
        if (embed_dim % n_heads != 0) {
            throw ConfigError("model config: embed_dim " + std::to_string(embed_dim) +
                              " not divisible by n_heads " + std::to_string(n_heads));
        }
        if (vision_tile_px <= 0 || vision_input_px <= 0 || vision_input_px % vision_tile_px != 0) {
            throw ConfigError("model config: vision_input_px must be a positive multiple of vision_tile_px");
        }
        if (max_seq_len < n_vis_tokens() + 8) {
            throw ConfigError("model config: max_seq_len too small for visual tokens plus text");
        }
    }

    nlohmann::json to_json() const {
        return {{"embed_dim", embed_dim},
                {"n_layers", n_layers},
                {"n_heads", n_heads},
                {"ffn_mult", ffn_mult},
                {"vision_tile_px", vision_tile_px},
                {"vision_input_px", vision_input_px},
                {"max_seq_len", max_seq_len},
                {"param_init_seed", param_init_seed},
                {"init_scale", init_scale},
                {"tie_embeddings", tie_embeddings},
                {"head_init_scale", head_init_scale}};
    }
    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.embed_dim = j.value("embed_dim", c.embed_dim);
        c.n_layers = j.value("n_layers", c.n_layers);
        c.n_heads = j.value("n_heads", c.n_heads);
        c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
        c.vision_tile_px = j.value("vision_tile_px", c.vision_tile_px);
        c.vision_input_px = j.value("vision_input_px", c.vision_input_px);
        c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
        c.param_init_seed = j.value("param_init_seed", c.param_init_seed);
        c.init_scale = j.value("init_scale", c.init_scale);
        c.tie_embeddings = j.value("tie_embeddings", c.tie_embeddings);
        c.head_init_scale = j.value("head_init_scale", c.head_init_scale);
        c.validate();
        return c;
    }
    bool operator==(const ModelConfig&) const = default;
};

// Finetuning hyperparameters. The defaults follow the protocol used for
// patch finetuning (batch size 8; 15 epochs at f=1, 5 otherwise); the
// learning-rate default is the toy-model operating point, swept by the
// harness since stitching is learning-rate sensitive.
struct TrainConfig {
    int batch_size = 8;
    double learning_rate = 3e-4;
    int epochs = 5;
    uint64_t seed = 0;
    bool high_precision_check = false;  // per-step invariant assertions
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    static int default_epochs_for_factor(int factor) { return factor == 1 ? 15 : 5; }

    void validate() const {
        if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
        if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
        if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be positive");
    }

    nlohmann::json to_json() const {
        return {{"batch_size", batch_size}, {"learning_rate", learning_rate},
                {"epochs", epochs},         {"seed", seed},
                {"high_precision_check", high_precision_check}};
    }
    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.epochs = j.value("epochs", c.epochs);
        c.seed = j.value("seed", c.seed);
        c.high_precision_check = j.value("high_precision_check", c.high_precision_check);
        c.validate();
        return c;
    }
};

}  // namespace stitch::model
