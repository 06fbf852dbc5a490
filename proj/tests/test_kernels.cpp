#include "stitch/kernels.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "stitch/rng.hpp"

namespace k = stitch::kernels;
using stitch::Rng;

namespace {

std::vector<double> random_vec(size_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.next_normal();
    return v;
}

struct BackendGuard {
    k::Backend saved = k::backend();
    ~BackendGuard() { k::set_backend(saved); }
};

}  // namespace

TEST_CASE("parallel kernels match the serial reference bitwise") {
    BackendGuard guard;
    const int m = 33, kk = 27, n = 41;
    const auto a = random_vec(static_cast<size_t>(m) * kk, 1);
    const auto b = random_vec(static_cast<size_t>(kk) * n, 2);
    const auto bt = random_vec(static_cast<size_t>(n) * kk, 3);
    const auto at = random_vec(static_cast<size_t>(kk) * m, 4);

    std::vector<double> c_serial(static_cast<size_t>(m) * n), c_par(c_serial.size());

    k::set_backend(k::Backend::serial);
    k::gemm_nn(a.data(), b.data(), c_serial.data(), m, kk, n);
    k::set_backend(k::Backend::parallel);
    k::gemm_nn(a.data(), b.data(), c_par.data(), m, kk, n);
    CHECK(c_serial == c_par);

    k::set_backend(k::Backend::serial);
    k::gemm_nt(a.data(), bt.data(), c_serial.data(), m, kk, n);
    k::set_backend(k::Backend::parallel);
    k::gemm_nt(a.data(), bt.data(), c_par.data(), m, kk, n);
    CHECK(c_serial == c_par);

    k::set_backend(k::Backend::serial);
    k::gemm_tn(at.data(), b.data(), c_serial.data(), m, kk, n);
    k::set_backend(k::Backend::parallel);
    k::gemm_tn(at.data(), b.data(), c_par.data(), m, kk, n);
    CHECK(c_serial == c_par);

    const int rows = 19, cols = 37;
    const auto x = random_vec(static_cast<size_t>(rows) * cols, 5);
    const auto gamma = random_vec(cols, 6);
    const auto beta = random_vec(cols, 7);
    std::vector<double> y1(x.size()), y2(x.size()), mean(rows), rstd(rows);
    k::set_backend(k::Backend::serial);
    k::layernorm_fwd(x.data(), gamma.data(), beta.data(), y1.data(), mean.data(), rstd.data(), rows, cols);
    k::set_backend(k::Backend::parallel);
    k::layernorm_fwd(x.data(), gamma.data(), beta.data(), y2.data(), mean.data(), rstd.data(), rows, cols);
    CHECK(y1 == y2);

    std::vector<double> g1(x.size()), g2(x.size());
    k::set_backend(k::Backend::serial);
    k::gelu_fwd(x.data(), g1.data(), static_cast<long>(x.size()));
    k::set_backend(k::Backend::parallel);
    k::gelu_fwd(x.data(), g2.data(), static_cast<long>(x.size()));
    CHECK(g1 == g2);
}

TEST_CASE("gemm against a plain triple loop") {
    const int m = 7, kk = 5, n = 6;
    const auto a = random_vec(static_cast<size_t>(m) * kk, 10);
    const auto b = random_vec(static_cast<size_t>(kk) * n, 11);
    std::vector<double> c(static_cast<size_t>(m) * n);
    k::gemm_nn(a.data(), b.data(), c.data(), m, kk, n);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double want = 0.0;
            for (int p = 0; p < kk; ++p) want += a[i * kk + p] * b[p * n + j];
            CHECK(c[i * n + j] == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("softmax rows sum to one") {
    const int rows = 11, cols = 23;
    auto x = random_vec(static_cast<size_t>(rows) * cols, 20);
    for (auto& v : x) v *= 10.0;
    k::softmax_rows(x.data(), rows, cols);
    for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < cols; ++c) {
            CHECK(x[r * cols + c] >= 0.0);
            s += x[r * cols + c];
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("layernorm backward matches finite differences") {
    const int rows = 3, cols = 8;
    const auto x = random_vec(static_cast<size_t>(rows) * cols, 30);
    const auto gamma = random_vec(cols, 31);
    const auto beta = random_vec(cols, 32);
    const auto dy = random_vec(x.size(), 33);

    std::vector<double> y(x.size()), mean(rows), rstd(rows);
    k::layernorm_fwd(x.data(), gamma.data(), beta.data(), y.data(), mean.data(), rstd.data(), rows, cols);
    std::vector<double> dx(x.size(), 0.0), dgamma(cols, 0.0), dbeta(cols, 0.0);
    k::layernorm_bwd(x.data(), gamma.data(), mean.data(), rstd.data(), dy.data(), dx.data(), dgamma.data(),
                     dbeta.data(), rows, cols);

    // Scalar objective L = sum(dy * y); its x-gradient is dx.
    auto loss_with = [&](const std::vector<double>& xv) {
        std::vector<double> yv(xv.size()), mv(rows), rv(rows);
        k::layernorm_fwd(xv.data(), gamma.data(), beta.data(), yv.data(), mv.data(), rv.data(), rows, cols);
        double L = 0.0;
        for (size_t i = 0; i < yv.size(); ++i) L += dy[i] * yv[i];
        return L;
    };
    const double eps = 1e-6;
    for (size_t i = 0; i < x.size(); i += 5) {
        auto xp = x;
        xp[i] += eps;
        auto xm = x;
        xm[i] -= eps;
        const double fd = (loss_with(xp) - loss_with(xm)) / (2 * eps);
        CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("gelu backward matches finite differences") {
    const auto x = random_vec(64, 40);
    const auto dy = random_vec(64, 41);
    std::vector<double> dx(64, 0.0);
    k::gelu_bwd(x.data(), dy.data(), dx.data(), 64);
    const double eps = 1e-6;
    for (size_t i = 0; i < x.size(); i += 7) {
        auto probe = [&](double v) {
            std::vector<double> in(1, v), out(1);
            k::gelu_fwd(in.data(), out.data(), 1);
            return out[0] * dy[i];
        };
        const double fd = (probe(x[i] + eps) - probe(x[i] - eps)) / (2 * eps);
        CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}
