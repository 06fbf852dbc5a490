#include "stitch/kernels.hpp"

#include <atomic>
#include <cmath>

namespace stitch::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::parallel};
}

void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }
Backend backend() { return g_backend.load(std::memory_order_relaxed); }

void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    parallel_for(m, [=](long i) {
        for (int j = 0; j < n; ++j) {
            double acc = accumulate ? c[i * n + j] : 0.0;
            for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    });
}

void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    parallel_for(m, [=](long i) {
        for (int j = 0; j < n; ++j) {
            double acc = accumulate ? c[i * n + j] : 0.0;
            for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
            c[i * n + j] = acc;
        }
    });
}

void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    parallel_for(m, [=](long i) {
        for (int j = 0; j < n; ++j) {
            double acc = accumulate ? c[i * n + j] : 0.0;
            for (int p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
            c[i * n + j] = acc;
        }
    });
}

void add_bias_rows(double* x, const double* bias, int rows, int cols) {
    parallel_for(rows, [=](long r) {
        for (int j = 0; j < cols; ++j) x[r * cols + j] += bias[j];
    });
}

void layernorm_fwd(const double* x, const double* gamma, const double* beta, double* y, double* mean,
                   double* rstd, int rows, int cols, double eps) {
    parallel_for(rows, [=](long r) {
        const double* xr = x + r * cols;
        double m = 0.0;
        for (int j = 0; j < cols; ++j) m += xr[j];
        m /= cols;
        double v = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double d = xr[j] - m;
            v += d * d;
        }
        v /= cols;
        const double rs = 1.0 / std::sqrt(v + eps);
        mean[r] = m;
        rstd[r] = rs;
        double* yr = y + r * cols;
        for (int j = 0; j < cols; ++j) yr[j] = gamma[j] * (xr[j] - m) * rs + beta[j];
    });
}

void layernorm_bwd(const double* x, const double* gamma, const double* mean, const double* rstd,
                   const double* dy, double* dx, double* dgamma, double* dbeta, int rows, int cols) {
    parallel_for(rows, [=](long r) {
        const double* xr = x + r * cols;
        const double* dyr = dy + r * cols;
        double* dxr = dx + r * cols;
        const double m = mean[r];
        const double rs = rstd[r];
        double sum_dy_g = 0.0;
        double sum_dy_g_xhat = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double xhat = (xr[j] - m) * rs;
            const double dyg = dyr[j] * gamma[j];
            sum_dy_g += dyg;
            sum_dy_g_xhat += dyg * xhat;
        }
        const double inv_n = 1.0 / cols;
        for (int j = 0; j < cols; ++j) {
            const double xhat = (xr[j] - m) * rs;
            const double dyg = dyr[j] * gamma[j];
            dxr[j] = rs * (dyg - inv_n * sum_dy_g - xhat * inv_n * sum_dy_g_xhat);
        }
    });
    // Parameter grads accumulate serially: dgamma/dbeta are shared across
    // rows, and a fixed summation order keeps results reproducible.
    for (int r = 0; r < rows; ++r) {
        const double m = mean[r];
        const double rs = rstd[r];
        for (int j = 0; j < cols; ++j) {
            const double xhat = (x[r * cols + j] - m) * rs;
            dgamma[j] += dy[r * cols + j] * xhat;
            dbeta[j] += dy[r * cols + j];
        }
    }
}

void softmax_rows(double* x, int rows, int cols) {
    parallel_for(rows, [=](long r) {
        double* xr = x + r * cols;
        double mx = xr[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            xr[j] = std::exp(xr[j] - mx);
            sum += xr[j];
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < cols; ++j) xr[j] *= inv;
    });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

void gelu_fwd(const double* x, double* y, long n) {
    parallel_for(n, [=](long i) {
        const double v = x[i];
        y[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
    });
}

void gelu_bwd(const double* x, const double* dy, double* dx, long n) {
    parallel_for(n, [=](long i) {
        const double v = x[i];
        const double u = kGeluC * (v + kGeluA * v * v * v);
        const double t = std::tanh(u);
        const double sech2 = 1.0 - t * t;
        const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
        dx[i] += dy[i] * (0.5 * (1.0 + t) + 0.5 * v * sech2 * du);
    });
}

}  // namespace stitch::kernels
