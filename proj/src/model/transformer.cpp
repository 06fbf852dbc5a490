#include "stitch/model/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "stitch/kernels.hpp"
#include "stitch/rng.hpp"

namespace stitch::model {

namespace k = stitch::kernels;

namespace {

double alibi_slope(int head, int n_heads) {
    return std::pow(2.0, -8.0 * static_cast<double>(head + 1) / static_cast<double>(n_heads));
}

void col_sums_into(const double* x, double* acc, int rows, int cols, double scale = 1.0) {
    for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < cols; ++j) acc[j] += scale * x[r * cols + j];
    }
}

// log-softmax denominator of one logits row.
double log_sum_exp(const double* row, int n) {
    double mx = row[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, row[i]);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp(row[i] - mx);
    return mx + std::log(s);
}

}  // namespace

struct Model::Cache {
    int T = 0;
    int n_vis = 0;
    std::vector<int> tokens;    // text tokens
    std::vector<double> tiles;  // [n_vis, tile_in], normalized pixels

    struct Layer {
        std::vector<double> x_in, ln1_out, ln1_mean, ln1_rstd;
        std::vector<double> q, kk, v;  // [T,d]
        std::vector<double> probs;     // [H,T,T]
        std::vector<double> ctx;       // [T,d]
        std::vector<double> x_mid, ln2_out, ln2_mean, ln2_rstd;
        std::vector<double> h_pre, h_act;  // [T,ffn]
    };
    std::vector<double> x0;  // [T,d]
    std::vector<Layer> layers;
    std::vector<double> x_final;  // [T,d]
    std::vector<double> lnf_out, lnf_mean, lnf_rstd;
    std::vector<double> logits;  // [T,vocab]
};

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int d = cfg_.embed_dim;
    const int ffn = cfg_.ffn_mult * d;
    const int tile_in = cfg_.vision_tile_px * cfg_.vision_tile_px * 3;

    params_.add("tok_emb", {vocab_.size(), d});
    params_.add("tile_proj", {d, tile_in});
    params_.add("tile_proj_b", {d});
    params_.add("tile_pos", {cfg_.n_vis_tokens(), d});
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const std::string p = "L" + std::to_string(l) + ".";
        params_.add(p + "ln1_g", {d});
        params_.add(p + "ln1_b", {d});
        params_.add(p + "wq", {d, d});
        params_.add(p + "bq", {d});
        params_.add(p + "wk", {d, d});
        params_.add(p + "bk", {d});
        params_.add(p + "wv", {d, d});
        params_.add(p + "bv", {d});
        params_.add(p + "wo", {d, d});
        params_.add(p + "bo", {d});
        params_.add(p + "ln2_g", {d});
        params_.add(p + "ln2_b", {d});
        params_.add(p + "w1", {ffn, d});
        params_.add(p + "b1", {ffn});
        params_.add(p + "w2", {d, ffn});
        params_.add(p + "b2", {d});
    }
    params_.add("lnf_g", {d});
    params_.add("lnf_b", {d});
    if (!cfg_.tie_embeddings) params_.add("head", {vocab_.size(), d});

    // Deterministic init: one stream, fixed registration order.
    Rng rng(cfg_.param_init_seed);
    for (const auto& e : params_.entries()) {
        std::span<double> v{params_.values().data() + e.offset, e.size};
        const bool is_gain = e.name.ends_with("ln1_g") || e.name.ends_with("ln2_g") || e.name == "lnf_g";
        const bool is_bias = e.shape.size() == 1 && !is_gain;
        if (is_gain) {
            std::fill(v.begin(), v.end(), 1.0);
        } else if (is_bias) {
            std::fill(v.begin(), v.end(), 0.0);
        } else if (e.name == "head") {
            for (auto& x : v) x = cfg_.head_init_scale * rng.next_normal();
        } else {
            for (auto& x : v) x = cfg_.init_scale * rng.next_normal();
        }
    }
}

TokenizedSample Model::tokenize(const corpus::RenderedSample& sample) const {
    const std::string marker(corpus::kVisualMarker);
    const std::string& text = sample.prompt_text;
    const bool has_marker = text.compare(0, marker.size(), marker) == 0;
    if (text.find(marker, has_marker ? marker.size() : 0) != std::string::npos) {
        throw ContractError("tokenize: prompt must contain at most one leading visual marker");
    }
    if (has_marker != sample.visual.has_value()) {
        throw ContractError("tokenize: visual marker and visual raster must agree");
    }
    if (sample.target_end <= sample.target_begin || sample.target_end > text.size()) {
        throw ContractError("tokenize: invalid target span");
    }
    const size_t body_start = has_marker ? marker.size() : 0;
    if (sample.target_begin < body_start) {
        throw ContractError("tokenize: target span overlaps the visual marker");
    }

    TokenizedSample t;
    t.visual = sample.visual;
    t.text_tokens.push_back(vocab_.bos_id());
    for (size_t i = body_start; i < text.size(); ++i) {
        t.text_tokens.push_back(vocab_.char_id(text[i]));
    }
    t.target_begin = static_cast<int>(1 + (sample.target_begin - body_start));
    t.target_end = static_cast<int>(1 + (sample.target_end - body_start));

    const int n_vis = t.visual ? cfg_.n_vis_tokens() : 0;
    if (n_vis + static_cast<int>(t.text_tokens.size()) > cfg_.max_seq_len) {
        throw LengthError("tokenize: sequence of " +
                          std::to_string(n_vis + t.text_tokens.size()) + " tokens exceeds max_seq_len " +
                          std::to_string(cfg_.max_seq_len));
    }
    return t;
}

namespace {

// Canonical square -> normalized per-tile pixel vectors, row-major tiles.
std::vector<double> extract_tiles(const Raster& canonical, int tile_px) {
    const int grid = canonical.height / tile_px;
    const int tile_in = tile_px * tile_px * 3;
    std::vector<double> tiles(static_cast<size_t>(grid) * grid * tile_in);
    for (int tr = 0; tr < grid; ++tr) {
        for (int tc = 0; tc < grid; ++tc) {
            double* out = tiles.data() + (static_cast<size_t>(tr) * grid + tc) * tile_in;
            size_t o = 0;
            for (int r = 0; r < tile_px; ++r) {
                const uint8_t* px = canonical.px(tr * tile_px + r, tc * tile_px);
                for (int c = 0; c < tile_px * 3; ++c) {
                    out[o++] = static_cast<double>(px[c]) / 127.5 - 1.0;
                }
            }
        }
    }
    return tiles;
}

}  // namespace

std::vector<double> Model::encode_visual(const Raster& pixels) const {
    if (pixels.empty()) throw ContractError("encode_visual: empty raster");
    const int d = cfg_.embed_dim;
    const int n_vis = cfg_.n_vis_tokens();
    const int tile_in = cfg_.vision_tile_px * cfg_.vision_tile_px * 3;

    const Raster canonical = resize_with_padding(pixels, cfg_.vision_input_px);
    const std::vector<double> tiles = extract_tiles(canonical, cfg_.vision_tile_px);

    std::vector<double> emb(static_cast<size_t>(n_vis) * d);
    k::gemm_nt(tiles.data(), params_.ptr("tile_proj"), emb.data(), n_vis, tile_in, d);
    k::add_bias_rows(emb.data(), params_.ptr("tile_proj_b"), n_vis, d);
    const double* pos = params_.ptr("tile_pos");
    k::parallel_for(n_vis, [&](long i) {
        for (int j = 0; j < d; ++j) emb[static_cast<size_t>(i) * d + j] += pos[i * d + j];
    });
    return emb;
}

int Model::run_forward(const TokenizedSample& sample, Cache& cache) const {
    const int d = cfg_.embed_dim;
    const int H = cfg_.n_heads;
    const int dh = d / H;
    const int ffn = cfg_.ffn_mult * d;
    const int V = vocab_.size();
    const int n_vis = sample.visual ? cfg_.n_vis_tokens() : 0;
    const int L = static_cast<int>(sample.text_tokens.size());
    const int T = n_vis + L;
    if (T > cfg_.max_seq_len) throw LengthError("forward: sequence exceeds max_seq_len");

    cache.T = T;
    cache.n_vis = n_vis;
    cache.tokens = sample.text_tokens;

    // Embeddings.
    cache.x0.assign(static_cast<size_t>(T) * d, 0.0);
    if (n_vis > 0) {
        const Raster canonical = resize_with_padding(*sample.visual, cfg_.vision_input_px);
        cache.tiles = extract_tiles(canonical, cfg_.vision_tile_px);
        const int tile_in = cfg_.vision_tile_px * cfg_.vision_tile_px * 3;
        k::gemm_nt(cache.tiles.data(), params_.ptr("tile_proj"), cache.x0.data(), n_vis, tile_in, d);
        k::add_bias_rows(cache.x0.data(), params_.ptr("tile_proj_b"), n_vis, d);
        const double* pos = params_.ptr("tile_pos");
        double* x0 = cache.x0.data();
        k::parallel_for(n_vis, [=](long i) {
            for (int j = 0; j < d; ++j) x0[i * d + j] += pos[i * d + j];
        });
    }
    const double* tok_emb = params_.ptr("tok_emb");
    for (int i = 0; i < L; ++i) {
        std::memcpy(cache.x0.data() + static_cast<size_t>(n_vis + i) * d,
                    tok_emb + static_cast<size_t>(sample.text_tokens[static_cast<size_t>(i)]) * d,
                    sizeof(double) * static_cast<size_t>(d));
    }

    cache.layers.resize(static_cast<size_t>(cfg_.n_layers));
    std::vector<double> x = cache.x0;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    for (int l = 0; l < cfg_.n_layers; ++l) {
        auto& lc = cache.layers[static_cast<size_t>(l)];
        const std::string p = "L" + std::to_string(l) + ".";
        lc.x_in = x;

        lc.ln1_out.resize(x.size());
        lc.ln1_mean.resize(static_cast<size_t>(T));
        lc.ln1_rstd.resize(static_cast<size_t>(T));
        k::layernorm_fwd(lc.x_in.data(), params_.ptr(p + "ln1_g"), params_.ptr(p + "ln1_b"),
                         lc.ln1_out.data(), lc.ln1_mean.data(), lc.ln1_rstd.data(), T, d);

        lc.q.resize(x.size());
        lc.kk.resize(x.size());
        lc.v.resize(x.size());
        k::gemm_nt(lc.ln1_out.data(), params_.ptr(p + "wq"), lc.q.data(), T, d, d);
        k::add_bias_rows(lc.q.data(), params_.ptr(p + "bq"), T, d);
        k::gemm_nt(lc.ln1_out.data(), params_.ptr(p + "wk"), lc.kk.data(), T, d, d);
        k::add_bias_rows(lc.kk.data(), params_.ptr(p + "bk"), T, d);
        k::gemm_nt(lc.ln1_out.data(), params_.ptr(p + "wv"), lc.v.data(), T, d, d);
        k::add_bias_rows(lc.v.data(), params_.ptr(p + "bv"), T, d);

        // Causal attention rows with ALiBi distance bias; positions past i
        // hold probability exactly zero.
        lc.probs.assign(static_cast<size_t>(H) * T * T, 0.0);
        {
            const double* q = lc.q.data();
            const double* kk = lc.kk.data();
            double* probs = lc.probs.data();
            k::parallel_for(static_cast<long>(H) * T, [=](long hi) {
                const int h = static_cast<int>(hi / T);
                const int i = static_cast<int>(hi % T);
                const double slope = alibi_slope(h, H);
                double* row = probs + (static_cast<size_t>(h) * T + i) * T;
                double mx = -1e300;
                for (int j = 0; j <= i; ++j) {
                    double s = 0.0;
                    const double* qi = q + static_cast<size_t>(i) * d + h * dh;
                    const double* kj = kk + static_cast<size_t>(j) * d + h * dh;
                    for (int c = 0; c < dh; ++c) s += qi[c] * kj[c];
                    s = s * inv_sqrt_dh - slope * static_cast<double>(i - j);
                    row[j] = s;
                    mx = std::max(mx, s);
                }
                double sum = 0.0;
                for (int j = 0; j <= i; ++j) {
                    row[j] = std::exp(row[j] - mx);
                    sum += row[j];
                }
                const double inv = 1.0 / sum;
                for (int j = 0; j <= i; ++j) row[j] *= inv;
            });
        }

        lc.ctx.assign(x.size(), 0.0);
        {
            const double* probs = lc.probs.data();
            const double* v = lc.v.data();
            double* ctx = lc.ctx.data();
            k::parallel_for(T, [=](long i) {
                for (int h = 0; h < H; ++h) {
                    const double* prow = probs + (static_cast<size_t>(h) * T + i) * T;
                    for (int c = 0; c < dh; ++c) {
                        double acc = 0.0;
                        for (int j = 0; j <= i; ++j) acc += prow[j] * v[static_cast<size_t>(j) * d + h * dh + c];
                        ctx[static_cast<size_t>(i) * d + h * dh + c] = acc;
                    }
                }
            });
        }

        lc.x_mid.resize(x.size());
        {
            std::vector<double> attn_out(x.size());
            k::gemm_nt(lc.ctx.data(), params_.ptr(p + "wo"), attn_out.data(), T, d, d);
            k::add_bias_rows(attn_out.data(), params_.ptr(p + "bo"), T, d);
            const double* xi = lc.x_in.data();
            const double* ao = attn_out.data();
            double* xm = lc.x_mid.data();
            k::parallel_for(static_cast<long>(x.size()), [=](long i) { xm[i] = xi[i] + ao[i]; });
        }

        lc.ln2_out.resize(x.size());
        lc.ln2_mean.resize(static_cast<size_t>(T));
        lc.ln2_rstd.resize(static_cast<size_t>(T));
        k::layernorm_fwd(lc.x_mid.data(), params_.ptr(p + "ln2_g"), params_.ptr(p + "ln2_b"),
                         lc.ln2_out.data(), lc.ln2_mean.data(), lc.ln2_rstd.data(), T, d);

        lc.h_pre.resize(static_cast<size_t>(T) * ffn);
        lc.h_act.resize(lc.h_pre.size());
        k::gemm_nt(lc.ln2_out.data(), params_.ptr(p + "w1"), lc.h_pre.data(), T, d, ffn);
        k::add_bias_rows(lc.h_pre.data(), params_.ptr(p + "b1"), T, ffn);
        k::gelu_fwd(lc.h_pre.data(), lc.h_act.data(), static_cast<long>(lc.h_pre.size()));

        {
            std::vector<double> mlp_out(x.size());
            k::gemm_nt(lc.h_act.data(), params_.ptr(p + "w2"), mlp_out.data(), T, ffn, d);
            k::add_bias_rows(mlp_out.data(), params_.ptr(p + "b2"), T, d);
            const double* xm = lc.x_mid.data();
            const double* mo = mlp_out.data();
            double* xo = x.data();
            k::parallel_for(static_cast<long>(x.size()), [=](long i) { xo[i] = xm[i] + mo[i]; });
        }
    }

    cache.x_final = x;
    cache.lnf_out.resize(x.size());
    cache.lnf_mean.resize(static_cast<size_t>(T));
    cache.lnf_rstd.resize(static_cast<size_t>(T));
    k::layernorm_fwd(cache.x_final.data(), params_.ptr("lnf_g"), params_.ptr("lnf_b"), cache.lnf_out.data(),
                     cache.lnf_mean.data(), cache.lnf_rstd.data(), T, d);

    cache.logits.resize(static_cast<size_t>(T) * V);
    const double* w_head = cfg_.tie_embeddings ? params_.ptr("tok_emb") : params_.ptr("head");
    k::gemm_nt(cache.lnf_out.data(), w_head, cache.logits.data(), T, d, V);
    return T;
}

std::vector<double> Model::sequence_logprobs(const corpus::RenderedSample& sample) const {
    const TokenizedSample t = tokenize(sample);
    Cache cache;
    const int T = run_forward(t, cache);
    (void)T;
    const int V = vocab_.size();
    std::vector<double> out;
    out.reserve(static_cast<size_t>(t.target_end - t.target_begin));
    for (int ti = t.target_begin; ti < t.target_end; ++ti) {
        const int row = cache.n_vis + ti - 1;  // position predicting text token ti
        const double* lrow = cache.logits.data() + static_cast<size_t>(row) * V;
        const double lse = log_sum_exp(lrow, V);
        out.push_back(lrow[t.text_tokens[static_cast<size_t>(ti)]] - lse);
    }
    return out;
}

Model::SampleLoss Model::loss_only(const TokenizedSample& sample) const {
    Cache cache;
    run_forward(sample, cache);
    const int V = vocab_.size();
    SampleLoss loss;
    for (int ti = sample.target_begin; ti < sample.target_end; ++ti) {
        const int row = cache.n_vis + ti - 1;
        const double* lrow = cache.logits.data() + static_cast<size_t>(row) * V;
        const double lse = log_sum_exp(lrow, V);
        loss.ce_sum += lse - lrow[sample.text_tokens[static_cast<size_t>(ti)]];
        loss.n_targets += 1;
    }
    return loss;
}

std::vector<double> Model::loss_logit_grads(const TokenizedSample& sample) const {
    Cache cache;
    const int T = run_forward(sample, cache);
    const int V = vocab_.size();
    std::vector<double> dlogits(static_cast<size_t>(T) * V, 0.0);
    for (int ti = sample.target_begin; ti < sample.target_end; ++ti) {
        const int row = cache.n_vis + ti - 1;
        const double* lrow = cache.logits.data() + static_cast<size_t>(row) * V;
        double* drow = dlogits.data() + static_cast<size_t>(row) * V;
        const double lse = log_sum_exp(lrow, V);
        for (int j = 0; j < V; ++j) drow[j] = std::exp(lrow[j] - lse);
        drow[sample.text_tokens[static_cast<size_t>(ti)]] -= 1.0;
    }
    return dlogits;
}

Model::SampleLoss Model::forward_backward(const TokenizedSample& sample, double grad_scale,
                                          std::vector<double>& grad) const {
    if (grad.size() != params_.size()) throw ContractError("forward_backward: grad buffer size mismatch");
    Cache cache;
    const int T = run_forward(sample, cache);
    const int d = cfg_.embed_dim;
    const int H = cfg_.n_heads;
    const int dh = d / H;
    const int ffn = cfg_.ffn_mult * d;
    const int V = vocab_.size();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    auto g = [&](const std::string& name) { return grad.data() + params_.entry(name).offset; };

    // Loss and dlogits (non-target rows stay exactly zero).
    SampleLoss loss;
    std::vector<double> dlogits(static_cast<size_t>(T) * V, 0.0);
    for (int ti = sample.target_begin; ti < sample.target_end; ++ti) {
        const int row = cache.n_vis + ti - 1;
        const double* lrow = cache.logits.data() + static_cast<size_t>(row) * V;
        double* drow = dlogits.data() + static_cast<size_t>(row) * V;
        const double lse = log_sum_exp(lrow, V);
        const int tok = sample.text_tokens[static_cast<size_t>(ti)];
        loss.ce_sum += lse - lrow[tok];
        loss.n_targets += 1;
        for (int j = 0; j < V; ++j) drow[j] = grad_scale * std::exp(lrow[j] - lse);
        drow[tok] -= grad_scale;
    }

    // Head and final layernorm.
    const std::string head_name = cfg_.tie_embeddings ? "tok_emb" : "head";
    const double* w_head = params_.ptr(head_name);
    std::vector<double> dlnf(static_cast<size_t>(T) * d, 0.0);
    k::gemm_nn(dlogits.data(), w_head, dlnf.data(), T, V, d);
    k::gemm_tn(dlogits.data(), cache.lnf_out.data(), g(head_name), V, T, d, true);

    std::vector<double> dx(static_cast<size_t>(T) * d, 0.0);
    k::layernorm_bwd(cache.x_final.data(), params_.ptr("lnf_g"), cache.lnf_mean.data(),
                     cache.lnf_rstd.data(), dlnf.data(), dx.data(), g("lnf_g"), g("lnf_b"), T, d);

    std::vector<double> dscratch(static_cast<size_t>(H) * T * T);
    for (int l = cfg_.n_layers - 1; l >= 0; --l) {
        const auto& lc = cache.layers[static_cast<size_t>(l)];
        const std::string p = "L" + std::to_string(l) + ".";

        // MLP backward: dx is the gradient at the layer output.
        std::vector<double> dh_act(static_cast<size_t>(T) * ffn, 0.0);
        k::gemm_nn(dx.data(), params_.ptr(p + "w2"), dh_act.data(), T, d, ffn);
        k::gemm_tn(dx.data(), lc.h_act.data(), g(p + "w2"), d, T, ffn, true);
        col_sums_into(dx.data(), g(p + "b2"), T, d);

        std::vector<double> dh_pre(static_cast<size_t>(T) * ffn, 0.0);
        k::gelu_bwd(lc.h_pre.data(), dh_act.data(), dh_pre.data(), static_cast<long>(dh_pre.size()));

        std::vector<double> dln2(static_cast<size_t>(T) * d, 0.0);
        k::gemm_nn(dh_pre.data(), params_.ptr(p + "w1"), dln2.data(), T, ffn, d);
        k::gemm_tn(dh_pre.data(), lc.ln2_out.data(), g(p + "w1"), ffn, T, d, true);
        col_sums_into(dh_pre.data(), g(p + "b1"), T, ffn);

        std::vector<double> dx_mid(static_cast<size_t>(T) * d, 0.0);
        k::layernorm_bwd(lc.x_mid.data(), params_.ptr(p + "ln2_g"), lc.ln2_mean.data(), lc.ln2_rstd.data(),
                         dln2.data(), dx_mid.data(), g(p + "ln2_g"), g(p + "ln2_b"), T, d);
        {
            const double* dxo = dx.data();
            double* dxm = dx_mid.data();
            k::parallel_for(static_cast<long>(dx.size()), [=](long i) { dxm[i] += dxo[i]; });
        }

        // Attention backward: dx_mid is the gradient at the attention output.
        std::vector<double> dctx(static_cast<size_t>(T) * d, 0.0);
        k::gemm_nn(dx_mid.data(), params_.ptr(p + "wo"), dctx.data(), T, d, d);
        k::gemm_tn(dx_mid.data(), lc.ctx.data(), g(p + "wo"), d, T, d, true);
        col_sums_into(dx_mid.data(), g(p + "bo"), T, d);

        std::vector<double> dq(static_cast<size_t>(T) * d, 0.0);
        std::vector<double> dk(static_cast<size_t>(T) * d, 0.0);
        std::vector<double> dv(static_cast<size_t>(T) * d, 0.0);
        {
            const double* probs = lc.probs.data();
            const double* v = lc.v.data();
            const double* q = lc.q.data();
            const double* kk = lc.kk.data();
            const double* dctxp = dctx.data();
            double* ds = dscratch.data();

            // dscores = softmax backward of dprobs, folded into one pass.
            k::parallel_for(static_cast<long>(H) * T, [=](long hi) {
                const int h = static_cast<int>(hi / T);
                const int i = static_cast<int>(hi % T);
                const double* prow = probs + (static_cast<size_t>(h) * T + i) * T;
                double* drow = ds + (static_cast<size_t>(h) * T + i) * T;
                double dot = 0.0;
                for (int j = 0; j <= i; ++j) {
                    double dp = 0.0;
                    const double* dci = dctxp + static_cast<size_t>(i) * d + h * dh;
                    const double* vj = v + static_cast<size_t>(j) * d + h * dh;
                    for (int c = 0; c < dh; ++c) dp += dci[c] * vj[c];
                    drow[j] = dp;
                    dot += prow[j] * dp;
                }
                for (int j = 0; j <= i; ++j) drow[j] = prow[j] * (drow[j] - dot) * inv_sqrt_dh;
                for (int j = i + 1; j < T; ++j) drow[j] = 0.0;
            });

            double* dvp = dv.data();
            k::parallel_for(T, [=](long j) {
                for (int h = 0; h < H; ++h) {
                    for (int c = 0; c < dh; ++c) {
                        double acc = 0.0;
                        for (int i = static_cast<int>(j); i < T; ++i) {
                            acc += probs[(static_cast<size_t>(h) * T + i) * T + j] *
                                   dctxp[static_cast<size_t>(i) * d + h * dh + c];
                        }
                        dvp[static_cast<size_t>(j) * d + h * dh + c] = acc;
                    }
                }
            });

            double* dqp = dq.data();
            k::parallel_for(T, [=](long i) {
                for (int h = 0; h < H; ++h) {
                    const double* drow = ds + (static_cast<size_t>(h) * T + i) * T;
                    for (int c = 0; c < dh; ++c) {
                        double acc = 0.0;
                        for (int j = 0; j <= static_cast<int>(i); ++j) {
                            acc += drow[j] * kk[static_cast<size_t>(j) * d + h * dh + c];
                        }
                        dqp[static_cast<size_t>(i) * d + h * dh + c] = acc;
                    }
                }
            });

            double* dkp = dk.data();
            k::parallel_for(T, [=](long j) {
                for (int h = 0; h < H; ++h) {
                    for (int c = 0; c < dh; ++c) {
                        double acc = 0.0;
                        for (int i = static_cast<int>(j); i < T; ++i) {
                            acc += ds[(static_cast<size_t>(h) * T + i) * T + j] *
                                   q[static_cast<size_t>(i) * d + h * dh + c];
                        }
                        dkp[static_cast<size_t>(j) * d + h * dh + c] = acc;
                    }
                }
            });
        }

        std::vector<double> dln1(static_cast<size_t>(T) * d, 0.0);
        k::gemm_nn(dq.data(), params_.ptr(p + "wq"), dln1.data(), T, d, d);
        k::gemm_tn(dq.data(), lc.ln1_out.data(), g(p + "wq"), d, T, d, true);
        col_sums_into(dq.data(), g(p + "bq"), T, d);
        k::gemm_nn(dk.data(), params_.ptr(p + "wk"), dln1.data(), T, d, d, true);
        k::gemm_tn(dk.data(), lc.ln1_out.data(), g(p + "wk"), d, T, d, true);
        col_sums_into(dk.data(), g(p + "bk"), T, d);
        k::gemm_nn(dv.data(), params_.ptr(p + "wv"), dln1.data(), T, d, d, true);
        k::gemm_tn(dv.data(), lc.ln1_out.data(), g(p + "wv"), d, T, d, true);
        col_sums_into(dv.data(), g(p + "bv"), T, d);

        std::vector<double> dx_in(static_cast<size_t>(T) * d, 0.0);
        k::layernorm_bwd(lc.x_in.data(), params_.ptr(p + "ln1_g"), lc.ln1_mean.data(), lc.ln1_rstd.data(),
                         dln1.data(), dx_in.data(), g(p + "ln1_g"), g(p + "ln1_b"), T, d);
        {
            const double* dxm = dx_mid.data();
            double* dxi = dx_in.data();
            k::parallel_for(static_cast<long>(dx_in.size()), [=](long i) { dxi[i] += dxm[i]; });
        }
        dx = std::move(dx_in);
    }

    // Embedding backward.
    const int n_vis = cache.n_vis;
    if (n_vis > 0) {
        const int tile_in = cfg_.vision_tile_px * cfg_.vision_tile_px * 3;
        k::gemm_tn(dx.data(), cache.tiles.data(), g("tile_proj"), d, n_vis, tile_in, true);
        col_sums_into(dx.data(), g("tile_proj_b"), n_vis, d);
        double* dpos = g("tile_pos");
        for (int i = 0; i < n_vis; ++i) {
            for (int j = 0; j < d; ++j) dpos[i * d + j] += dx[static_cast<size_t>(i) * d + j];
        }
    }
    double* demb = g("tok_emb");
    for (size_t i = 0; i < cache.tokens.size(); ++i) {
        const double* row = dx.data() + (static_cast<size_t>(n_vis) + i) * d;
        double* erow = demb + static_cast<size_t>(cache.tokens[i]) * d;
        for (int j = 0; j < d; ++j) erow[j] += row[j];
    }

    return loss;
}

std::vector<double> Model::score_completions(const std::optional<Raster>& visual,
                                             const std::string& prefix_text,
                                             const std::vector<std::string>& candidates) const {
    const int d = cfg_.embed_dim;
    const int H = cfg_.n_heads;
    const int dh = d / H;
    const int ffn = cfg_.ffn_mult * d;
    const int V = vocab_.size();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    // Prefill: full forward over the prefix, keeping per-layer K/V.
    TokenizedSample prefix;
    prefix.visual = visual;
    prefix.text_tokens.push_back(vocab_.bos_id());
    const std::string marker(corpus::kVisualMarker);
    size_t start = 0;
    if (prefix_text.compare(0, marker.size(), marker) == 0) {
        if (!visual) throw ContractError("score_completions: marker present but no visual given");
        start = marker.size();
    } else if (visual) {
        throw ContractError("score_completions: visual given but prefix has no marker");
    }
    for (size_t i = start; i < prefix_text.size(); ++i) {
        prefix.text_tokens.push_back(vocab_.char_id(prefix_text[i]));
    }
    prefix.target_begin = prefix.target_end = 0;

    size_t max_cand = 0;
    for (const auto& c : candidates) max_cand = std::max(max_cand, c.size());
    const int n_vis = visual ? cfg_.n_vis_tokens() : 0;
    const int T0 = n_vis + static_cast<int>(prefix.text_tokens.size());
    if (T0 + static_cast<int>(max_cand) > cfg_.max_seq_len) {
        throw LengthError("score_completions: prefix plus candidate exceeds max_seq_len");
    }

    Cache cache;
    run_forward(prefix, cache);

    const int max_T = T0 + static_cast<int>(max_cand);
    std::vector<std::vector<double>> kcache(static_cast<size_t>(cfg_.n_layers)),
        vcache(static_cast<size_t>(cfg_.n_layers));
    for (int l = 0; l < cfg_.n_layers; ++l) {
        kcache[static_cast<size_t>(l)].assign(static_cast<size_t>(max_T) * d, 0.0);
        vcache[static_cast<size_t>(l)].assign(static_cast<size_t>(max_T) * d, 0.0);
        std::memcpy(kcache[static_cast<size_t>(l)].data(), cache.layers[static_cast<size_t>(l)].kk.data(),
                    sizeof(double) * static_cast<size_t>(T0) * d);
        std::memcpy(vcache[static_cast<size_t>(l)].data(), cache.layers[static_cast<size_t>(l)].v.data(),
                    sizeof(double) * static_cast<size_t>(T0) * d);
    }
    std::vector<double> prefill_logits(cache.logits.end() - V, cache.logits.end());

    // One decode step: feeds token at sequence position pos, returns the
    // next-token logits row. Reuses the row-wise kernels so the arithmetic
    // matches the full forward bit for bit.
    std::vector<double> x(d), buf(d), q(d), krow(d), vrow(d), ctx(d), hpre(ffn), hact(ffn);
    std::vector<double> ln_mean(1), ln_rstd(1), logits_row(static_cast<size_t>(V));
    auto decode_step = [&](int token, int pos) {
        std::memcpy(x.data(), params_.ptr("tok_emb") + static_cast<size_t>(token) * d,
                    sizeof(double) * static_cast<size_t>(d));
        for (int l = 0; l < cfg_.n_layers; ++l) {
            const std::string p = "L" + std::to_string(l) + ".";
            double* kc = kcache[static_cast<size_t>(l)].data();
            double* vc = vcache[static_cast<size_t>(l)].data();

            std::vector<double> ln1(static_cast<size_t>(d));
            k::layernorm_fwd(x.data(), params_.ptr(p + "ln1_g"), params_.ptr(p + "ln1_b"), ln1.data(),
                             ln_mean.data(), ln_rstd.data(), 1, d);
            k::gemm_nt(ln1.data(), params_.ptr(p + "wq"), q.data(), 1, d, d);
            k::add_bias_rows(q.data(), params_.ptr(p + "bq"), 1, d);
            k::gemm_nt(ln1.data(), params_.ptr(p + "wk"), krow.data(), 1, d, d);
            k::add_bias_rows(krow.data(), params_.ptr(p + "bk"), 1, d);
            k::gemm_nt(ln1.data(), params_.ptr(p + "wv"), vrow.data(), 1, d, d);
            k::add_bias_rows(vrow.data(), params_.ptr(p + "bv"), 1, d);
            std::memcpy(kc + static_cast<size_t>(pos) * d, krow.data(), sizeof(double) * static_cast<size_t>(d));
            std::memcpy(vc + static_cast<size_t>(pos) * d, vrow.data(), sizeof(double) * static_cast<size_t>(d));

            std::vector<double> srow(static_cast<size_t>(pos) + 1);
            for (int h = 0; h < H; ++h) {
                const double slope = alibi_slope(h, H);
                double mx = -1e300;
                for (int j = 0; j <= pos; ++j) {
                    double s = 0.0;
                    const double* qi = q.data() + h * dh;
                    const double* kj = kc + static_cast<size_t>(j) * d + h * dh;
                    for (int c = 0; c < dh; ++c) s += qi[c] * kj[c];
                    s = s * inv_sqrt_dh - slope * static_cast<double>(pos - j);
                    srow[static_cast<size_t>(j)] = s;
                    mx = std::max(mx, s);
                }
                double sum = 0.0;
                for (int j = 0; j <= pos; ++j) {
                    srow[static_cast<size_t>(j)] = std::exp(srow[static_cast<size_t>(j)] - mx);
                    sum += srow[static_cast<size_t>(j)];
                }
                const double inv = 1.0 / sum;
                for (int j = 0; j <= pos; ++j) srow[static_cast<size_t>(j)] *= inv;
                for (int c = 0; c < dh; ++c) {
                    double acc = 0.0;
                    for (int j = 0; j <= pos; ++j) {
                        acc += srow[static_cast<size_t>(j)] * vc[static_cast<size_t>(j) * d + h * dh + c];
                    }
                    ctx[static_cast<size_t>(h * dh + c)] = acc;
                }
            }

            k::gemm_nt(ctx.data(), params_.ptr(p + "wo"), buf.data(), 1, d, d);
            k::add_bias_rows(buf.data(), params_.ptr(p + "bo"), 1, d);
            for (int c = 0; c < d; ++c) x[static_cast<size_t>(c)] += buf[static_cast<size_t>(c)];

            std::vector<double> ln2(static_cast<size_t>(d));
            k::layernorm_fwd(x.data(), params_.ptr(p + "ln2_g"), params_.ptr(p + "ln2_b"), ln2.data(),
                             ln_mean.data(), ln_rstd.data(), 1, d);
            k::gemm_nt(ln2.data(), params_.ptr(p + "w1"), hpre.data(), 1, d, ffn);
            k::add_bias_rows(hpre.data(), params_.ptr(p + "b1"), 1, ffn);
            k::gelu_fwd(hpre.data(), hact.data(), ffn);
            k::gemm_nt(hact.data(), params_.ptr(p + "w2"), buf.data(), 1, ffn, d);
            k::add_bias_rows(buf.data(), params_.ptr(p + "b2"), 1, d);
            for (int c = 0; c < d; ++c) x[static_cast<size_t>(c)] += buf[static_cast<size_t>(c)];
        }
        std::vector<double> lnf(static_cast<size_t>(d));
        k::layernorm_fwd(x.data(), params_.ptr("lnf_g"), params_.ptr("lnf_b"), lnf.data(), ln_mean.data(),
                         ln_rstd.data(), 1, d);
        const double* w_head = cfg_.tie_embeddings ? params_.ptr("tok_emb") : params_.ptr("head");
        k::gemm_nt(lnf.data(), w_head, logits_row.data(), 1, d, V);
    };

    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (const auto& cand : candidates) {
        if (cand.empty()) throw ContractError("score_completions: empty candidate");
        double total = 0.0;
        std::vector<double> cur = prefill_logits;
        for (size_t i = 0; i < cand.size(); ++i) {
            const int tok = vocab_.char_id(cand[i]);
            const double lse = log_sum_exp(cur.data(), V);
            total += cur[static_cast<size_t>(tok)] - lse;
            if (i + 1 < cand.size()) {
                decode_step(tok, T0 + static_cast<int>(i));
                cur = logits_row;
            }
        }
        scores.push_back(total);
    }
    return scores;
}

}  // namespace stitch::model
