#include "gf/kernels.h"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "gf/parallel.h"

namespace gf::par {

namespace {
int g_threads = 0;
}

void set_threads(int n) {
  g_threads = n;
  if (n > 0) omp_set_num_threads(n);
}

int threads() { return g_threads > 0 ? g_threads : omp_get_max_threads(); }

}  // namespace gf::par

namespace gf::kernels {

void matmul_tb(const double* w, int out, int in, const double* xt, int b,
               const double* bias, double* yt) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < out; ++i) {
    double* y = yt + static_cast<std::size_t>(i) * b;
    const double bi = bias != nullptr ? bias[i] : 0.0;
    for (int c = 0; c < b; ++c) y[c] = bi;
    const double* wr = w + static_cast<std::size_t>(i) * in;
    for (int k = 0; k < in; ++k) {
      const double wk = wr[k];
      const double* x = xt + static_cast<std::size_t>(k) * b;
      for (int c = 0; c < b; ++c) y[c] += wk * x[c];
    }
  }
}

void matmul_at_b(const double* w, int out, int in, const double* dyt, int b,
                 double* dxt) {
  constexpr int kBlock = 512;
  const int nblocks = (in + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static)
  for (int kb = 0; kb < nblocks; ++kb) {
    const int k0 = kb * kBlock;
    const int k1 = std::min(in, k0 + kBlock);
    for (int k = k0; k < k1; ++k)
      for (int c = 0; c < b; ++c) dxt[static_cast<std::size_t>(k) * b + c] = 0.0;
    for (int i = 0; i < out; ++i) {
      const double* wr = w + static_cast<std::size_t>(i) * in;
      const double* dy = dyt + static_cast<std::size_t>(i) * b;
      for (int k = k0; k < k1; ++k) {
        const double wk = wr[k];
        double* dx = dxt + static_cast<std::size_t>(k) * b;
        for (int c = 0; c < b; ++c) dx[c] += wk * dy[c];
      }
    }
  }
}

void accum_outer(const double* dyt, const double* xt, int out, int in, int b,
                 double* dw) {
  constexpr int kIBlock = 32;
  constexpr int kKBlock = 1024;
  const int niblocks = (out + kIBlock - 1) / kIBlock;
#pragma omp parallel for schedule(static)
  for (int ib = 0; ib < niblocks; ++ib) {
    const int i0 = ib * kIBlock;
    const int i1 = std::min(out, i0 + kIBlock);
    for (int k0 = 0; k0 < in; k0 += kKBlock) {
      const int k1 = std::min(in, k0 + kKBlock);
      for (int i = i0; i < i1; ++i) {
        double* dwr = dw + static_cast<std::size_t>(i) * in;
        const double* dy = dyt + static_cast<std::size_t>(i) * b;
        for (int k = k0; k < k1; ++k) {
          const double* x = xt + static_cast<std::size_t>(k) * b;
          double s = 0.0;
          for (int c = 0; c < b; ++c) s += dy[c] * x[c];
          dwr[k] += s;
        }
      }
    }
  }
}

void relu_fwd(const double* z, double* a, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    a[i] = z[i] > 0.0 ? z[i] : 0.0;
}

void relu_bwd(const double* z, const double* dy, double* dz, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    dz[i] = z[i] > 0.0 ? dy[i] : 0.0;
}

void softmax_rows(double* a, int rows, int k) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    double* row = a + static_cast<std::size_t>(r) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < k; ++j) row[j] *= inv;
  }
}

bool adam_update(double* params, const double* grads, double* m, double* v,
                 std::size_t n, long step, const AdamHyper& h) {
  const std::ptrdiff_t sn = static_cast<std::ptrdiff_t>(n);
  bool finite = true;
#pragma omp parallel for schedule(static) reduction(&& : finite)
  for (std::ptrdiff_t i = 0; i < sn; ++i) finite = finite && std::isfinite(grads[i]);
  if (!finite) return false;

  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < sn; ++i) {
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * grads[i];
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * grads[i] * grads[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    params[i] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
  }
  return true;
}

double det_sum(const double* a, std::size_t n) {
  const std::size_t chunk = par::kDetChunk;
  const std::size_t nchunks = (n + chunk - 1) / chunk;
  if (nchunks <= 1) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i];
    return s;
  }
  std::vector<double> partial(nchunks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(nchunks); ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += a[i];
    partial[c] = s;
  }
  double s = 0.0;
  for (double p : partial) s += p;
  return s;
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

namespace ref {

void matmul_tb(const double* w, int out, int in, const double* xt, int b,
               const double* bias, double* yt) {
  for (int i = 0; i < out; ++i)
    for (int c = 0; c < b; ++c) {
      double s = bias != nullptr ? bias[i] : 0.0;
      for (int k = 0; k < in; ++k)
        s += w[static_cast<std::size_t>(i) * in + k] *
             xt[static_cast<std::size_t>(k) * b + c];
      yt[static_cast<std::size_t>(i) * b + c] = s;
    }
}

void matmul_at_b(const double* w, int out, int in, const double* dyt, int b,
                 double* dxt) {
  for (int k = 0; k < in; ++k)
    for (int c = 0; c < b; ++c) {
      double s = 0.0;
      for (int i = 0; i < out; ++i)
        s += w[static_cast<std::size_t>(i) * in + k] *
             dyt[static_cast<std::size_t>(i) * b + c];
      dxt[static_cast<std::size_t>(k) * b + c] = s;
    }
}

void accum_outer(const double* dyt, const double* xt, int out, int in, int b,
                 double* dw) {
  for (int i = 0; i < out; ++i)
    for (int k = 0; k < in; ++k) {
      double s = 0.0;
      for (int c = 0; c < b; ++c)
        s += dyt[static_cast<std::size_t>(i) * b + c] *
             xt[static_cast<std::size_t>(k) * b + c];
      dw[static_cast<std::size_t>(i) * in + k] += s;
    }
}

void softmax_rows(double* a, int rows, int k) {
  for (int r = 0; r < rows; ++r) {
    double* row = a + static_cast<std::size_t>(r) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < k; ++j) row[j] /= sum;
  }
}

double det_sum(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i];
  return s;
}

}  // namespace ref

}  // namespace gf::kernels
