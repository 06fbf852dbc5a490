#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stitch::kernels {

// Two interchangeable execution paths share one loop body per op: the
// parallel path only distributes the outer loop over independent output
// elements, so results are bitwise identical to the serial reference for
// any thread count. The serial path is kept as the test oracle and for
// the benchmark comparison.
enum class Backend { serial, parallel };

void set_backend(Backend b);
Backend backend();

// Runs f(i) for i in [0, n). Iterations must write disjoint outputs.
template <typename F>
void parallel_for(long n, F&& f) {
#ifdef _OPENMP
    if (backend() == Backend::parallel) {
#pragma omp parallel for schedule(static)
        for (long i = 0; i < n; ++i) f(i);
        return;
    }
#endif
    for (long i = 0; i < n; ++i) f(i);
}

// C[m,n] = A[m,k] * B[k,n]        (accumulate=false overwrites C)
void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
// C[m,n] = A[m,k] * B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
// C[m,n] = A[k,m]^T * B[k,n]
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);

void add_bias_rows(double* x, const double* bias, int rows, int cols);

// y = g * (x - mean) / sqrt(var + eps) + b, per row. mean/rstd are cached
// per row for the backward pass.
void layernorm_fwd(const double* x, const double* gamma, const double* beta, double* y, double* mean,
                   double* rstd, int rows, int cols, double eps = 1e-5);
// dgamma/dbeta are accumulated (+=); dx is overwritten.
void layernorm_bwd(const double* x, const double* gamma, const double* mean, const double* rstd,
                   const double* dy, double* dx, double* dgamma, double* dbeta, int rows, int cols);

// In-place row softmax (max-subtracted). Masked positions should hold a
// large negative value before the call.
void softmax_rows(double* x, int rows, int cols);

void gelu_fwd(const double* x, double* y, long n);
// dx is accumulated from dy through the tanh-approximation derivative.
void gelu_bwd(const double* x, const double* dy, double* dx, long n);

}  // namespace stitch::kernels
