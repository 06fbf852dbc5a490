#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stitch/corpus/templates.hpp"
#include "stitch/model/config.hpp"
#include "stitch/model/params.hpp"
#include "stitch/model/vocab.hpp"
#include "stitch/raster.hpp"

namespace stitch::model {

// A rendered sample mapped onto model inputs: BOS + character tokens (the
// visual marker stripped) and the completion span as token indices.
struct TokenizedSample {
    std::vector<int> text_tokens;
    std::optional<Raster> visual;
    int target_begin = 0;  // token index range of the completion
    int target_end = 0;
};

// Decoder-only transformer over [visual tiles][BOS + text]. Attention uses
// linear distance biases (ALiBi-style), so text-to-text geometry is
// identical whether or not a visual prefix is present; tile embeddings
// carry their own learned grid positions.
class Model {
  public:
    explicit Model(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    const Vocab& vocab() const { return vocab_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }
    size_t n_params() const { return params_.size(); }

    TokenizedSample tokenize(const corpus::RenderedSample& sample) const;

    // Canonicalizes pixels (resize with padding) and embeds tiles. Returns
    // n_vis_tokens rows of embed_dim values.
    std::vector<double> encode_visual(const Raster& pixels) const;

    // log p(token | prefix) for each completion token of the sample, via
    // a plain full forward pass (no cache); the reference scoring route.
    std::vector<double> sequence_logprobs(const corpus::RenderedSample& sample) const;

    // Summed completion log-probs for many candidates sharing one prefix.
    // The prefix forward pass is computed once and extended per candidate
    // through a KV cache; bitwise equal to the sequence_logprobs route.
    std::vector<double> score_completions(const std::optional<Raster>& visual, const std::string& prefix_text,
                                          const std::vector<std::string>& candidates) const;

    struct SampleLoss {
        double ce_sum = 0.0;  // summed cross-entropy over target tokens
        int n_targets = 0;
    };

    // Forward + backward for one sample. Gradients are scaled by
    // grad_scale and accumulated into grad (same layout as params()).
    SampleLoss forward_backward(const TokenizedSample& sample, double grad_scale,
                                std::vector<double>& grad) const;

    // Loss without gradients (finite-difference probes).
    SampleLoss loss_only(const TokenizedSample& sample) const;

    // dL/dlogits produced by the loss at every sequence position
    // (row-major [seq, vocab]); exposes the masking structure to tests.
    std::vector<double> loss_logit_grads(const TokenizedSample& sample) const;

  private:
    struct Cache;
    int run_forward(const TokenizedSample& sample, Cache& cache) const;  // returns seq length

    ModelConfig cfg_;
    Vocab vocab_;
    ParameterStore params_;
};

}  // namespace stitch::model
