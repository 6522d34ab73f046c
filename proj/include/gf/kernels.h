#pragma once

#include <cstddef>

namespace gf::kernels {

// Dense kernels on raw double arrays. Batched activations use the
// "column-per-item" layout: Xt is [dim x B] row-major, so item b is column b.
// Every kernel here is deterministic for any thread count: each output
// element is accumulated in a fixed serial order.

// Yt[out x B] = W[out x in] * Xt[in x B] (+ bias per output row, optional).
void matmul_tb(const double* w, int out, int in, const double* xt, int b,
               const double* bias, double* yt);

// dXt[in x B] = W^T * dYt[out x B].
void matmul_at_b(const double* w, int out, int in, const double* dyt, int b,
                 double* dxt);

// dW[out x in] += dYt[out x B] * Xt[in x B]^T.
void accum_outer(const double* dyt, const double* xt, int out, int in, int b,
                 double* dw);

// a = max(z, 0), elementwise.
void relu_fwd(const double* z, double* a, std::size_t n);

// dz = dy where z > 0, else 0.
void relu_bwd(const double* z, const double* dy, double* dz, std::size_t n);

// Row-wise softmax in place on an [rows x k] array.
void softmax_rows(double* a, int rows, int k);

// One Adam update over a parameter block. Returns false (and leaves params,
// moments and the step count untouched) if any gradient entry is non-finite.
struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};
bool adam_update(double* params, const double* grads, double* m, double* v,
                 std::size_t n, long step, const AdamHyper& h);

// Deterministic parallel sum: fixed-width chunks, combined left to right.
double det_sum(const double* a, std::size_t n);

double dot(const double* a, const double* b, std::size_t n);

// Serial reference implementations, kept for tests and the benchmark tool.
namespace ref {
void matmul_tb(const double* w, int out, int in, const double* xt, int b,
               const double* bias, double* yt);
void matmul_at_b(const double* w, int out, int in, const double* dyt, int b,
                 double* dxt);
void accum_outer(const double* dyt, const double* xt, int out, int in, int b,
                 double* dw);
void softmax_rows(double* a, int rows, int k);
double det_sum(const double* a, std::size_t n);
}  // namespace ref

}  // namespace gf::kernels
