#include "stitch/model/train.hpp"

#include <cmath>
#include <numeric>

#include "stitch/kernels.hpp"
#include "stitch/rng.hpp"

namespace stitch::model {

namespace k = stitch::kernels;

Checkpoint snapshot(const Model& model, const TrainConfig& tc) {
    Checkpoint c;
    c.config = model.config();
    c.train_config = tc;
    c.values = model.params().values();
    return c;
}

Checkpoint train(Model& model, const std::vector<corpus::RenderedSample>& samples, const TrainConfig& tc,
                 const EpochCallback& on_epoch) {
    tc.validate();
    if (samples.empty()) throw ContractError("train: no samples");

    std::vector<TokenizedSample> tokenized;
    tokenized.reserve(samples.size());
    for (const auto& s : samples) tokenized.push_back(model.tokenize(s));

    const size_t n_params = model.n_params();
    std::vector<double> adam_m(n_params, 0.0);
    std::vector<double> adam_v(n_params, 0.0);
    std::vector<double> grad(n_params, 0.0);
    std::vector<std::vector<double>> sample_grads(static_cast<size_t>(tc.batch_size));
    std::vector<double> sample_ce(static_cast<size_t>(tc.batch_size), 0.0);

    Checkpoint ckpt;
    ckpt.config = model.config();
    ckpt.train_config = tc;

    long step = 0;
    std::vector<size_t> order(samples.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        Rng shuffle_rng(tc.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(epoch + 1)));
        shuffle_rng.shuffle(order);

        double epoch_ce = 0.0;
        long epoch_targets = 0;

        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(tc.batch_size)) {
            const size_t bs = std::min(static_cast<size_t>(tc.batch_size), order.size() - start);

            long total_targets = 0;
            for (size_t s = 0; s < bs; ++s) {
                const auto& t = tokenized[order[start + s]];
                total_targets += t.target_end - t.target_begin;
            }
            const double inv_total = 1.0 / static_cast<double>(total_targets);

            // Per-sample gradients land in private buffers; the reduction
            // below sums them in fixed sample order, so results do not
            // depend on thread scheduling.
            k::parallel_for(static_cast<long>(bs), [&](long s) {
                auto& buf = sample_grads[static_cast<size_t>(s)];
                buf.assign(n_params, 0.0);
                const auto loss =
                    model.forward_backward(tokenized[order[start + static_cast<size_t>(s)]], inv_total, buf);
                sample_ce[static_cast<size_t>(s)] = loss.ce_sum;
            });

            double batch_ce = 0.0;
            for (size_t s = 0; s < bs; ++s) batch_ce += sample_ce[s];
            const double batch_loss = batch_ce * inv_total;
            ++step;
            if (!std::isfinite(batch_loss)) {
                throw DivergenceError("train: non-finite loss at step " + std::to_string(step), step);
            }

            double* gp = grad.data();
            k::parallel_for(static_cast<long>(n_params), [&, gp](long i) {
                double acc = 0.0;
                for (size_t s = 0; s < bs; ++s) acc += sample_grads[s][static_cast<size_t>(i)];
                gp[i] = acc;
            });

            if (tc.high_precision_check) {
                for (size_t i = 0; i < n_params; ++i) {
                    if (!std::isfinite(grad[i])) {
                        throw DivergenceError("train: non-finite gradient at step " + std::to_string(step),
                                              step);
                    }
                }
            }

            // Adam with bias correction.
            const double b1t = 1.0 - std::pow(tc.adam_beta1, static_cast<double>(step));
            const double b2t = 1.0 - std::pow(tc.adam_beta2, static_cast<double>(step));
            double* mp = adam_m.data();
            double* vp = adam_v.data();
            double* pp = model.params().values().data();
            const double lr = tc.learning_rate;
            const double beta1 = tc.adam_beta1, beta2 = tc.adam_beta2, eps = tc.adam_eps;
            k::parallel_for(static_cast<long>(n_params), [=](long i) {
                mp[i] = beta1 * mp[i] + (1.0 - beta1) * gp[i];
                vp[i] = beta2 * vp[i] + (1.0 - beta2) * gp[i] * gp[i];
                const double mhat = mp[i] / b1t;
                const double vhat = vp[i] / b2t;
                pp[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            });

            epoch_ce += batch_ce;
            epoch_targets += total_targets;
        }

        ckpt.curves["train_loss"].push_back(epoch_ce / static_cast<double>(epoch_targets));
        if (on_epoch) on_epoch(epoch, model, ckpt.curves);
    }

    ckpt.step = step;
    ckpt.values = model.params().values();
    return ckpt;
}

}  // namespace stitch::model
