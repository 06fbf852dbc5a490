// Compares the serial reference kernels against the OpenMP path on
// model-shaped workloads, and whole-sample forward/backward throughput.
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "stitch/corpus/synth.hpp"
#include "stitch/corpus/templates.hpp"
#include "stitch/kernels.hpp"
#include "stitch/model/transformer.hpp"
#include "stitch/rng.hpp"

namespace k = stitch::kernels;

namespace {

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

double time_loop(const std::function<void()>& fn, int reps) {
    fn();  // warm-up
    const double t0 = now_s();
    for (int i = 0; i < reps; ++i) fn();
    return (now_s() - t0) / reps;
}

void report(const std::string& name, double serial_s, double parallel_s) {
    std::printf("%-34s serial %9.3f us   omp %9.3f us   speedup %.2fx\n", name.c_str(), serial_s * 1e6,
                parallel_s * 1e6, serial_s / parallel_s);
}

void bench_pair(const std::string& name, const std::function<void()>& fn, int reps) {
    k::set_backend(k::Backend::serial);
    const double ts = time_loop(fn, reps);
    k::set_backend(k::Backend::parallel);
    const double tp = time_loop(fn, reps);
    report(name, ts, tp);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; both paths run serially\n");
#endif

    stitch::Rng rng(7);
    auto fill = [&](std::vector<double>& v) {
        for (auto& x : v) x = rng.next_normal();
    };

    // Shapes from the default model: T ~ 80 tokens, d = 64, ffn = 256.
    const int T = 80, d = 64, ffn = 256;
    std::vector<double> a(static_cast<size_t>(T) * d), b(static_cast<size_t>(d) * d),
        c(static_cast<size_t>(T) * d);
    std::vector<double> w1(static_cast<size_t>(ffn) * d), h(static_cast<size_t>(T) * ffn);
    std::vector<double> mean(T), rstd(T), gamma(d, 1.0), beta(d, 0.0), y(a.size());
    fill(a);
    fill(b);
    fill(w1);

    bench_pair("gemm_nt 80x64 * 64x64", [&] { k::gemm_nt(a.data(), b.data(), c.data(), T, d, d); }, 200);
    bench_pair("gemm_nt 80x64 * 256x64", [&] { k::gemm_nt(a.data(), w1.data(), h.data(), T, d, ffn); }, 200);
    bench_pair("layernorm_fwd 80x64",
               [&] { k::layernorm_fwd(a.data(), gamma.data(), beta.data(), y.data(), mean.data(), rstd.data(), T, d); },
               2000);
    bench_pair("gelu_fwd 80x256", [&] { k::gelu_fwd(h.data(), h.data(), static_cast<long>(h.size())); }, 2000);

    // Whole-sample forward/backward on the default model.
    stitch::model::Model model(stitch::model::ModelConfig{});
    const auto sources = stitch::corpus::gen_synthetic_corpus(4, 1, 32, 1);
    const stitch::corpus::TemplateSpec spec{stitch::corpus::TemplateKind::finetune_id, "synthetic"};
    const auto sample = stitch::corpus::render_sample(sources[0].pixels, "ar957", spec);
    const auto tokenized = model.tokenize(sample);
    std::vector<double> grad(model.n_params(), 0.0);

    bench_pair("model forward (loss_only)", [&] { model.loss_only(tokenized); }, 50);
    bench_pair("model forward+backward", [&] { model.forward_backward(tokenized, 1.0, grad); }, 50);

    k::set_backend(k::Backend::parallel);
    return 0;
}
