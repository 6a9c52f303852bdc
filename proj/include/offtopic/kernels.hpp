#pragma once

// Numeric kernels behind the graph primitives. Every kernel comes in a serial
// and an OpenMP path sharing the same per-output-element helper, so the two
// backends produce bitwise-identical results: parallel loops only ever split
// independent output elements, never a floating-point reduction.

#include <cmath>

#include "offtopic/tensor.hpp"

namespace offtopic::kernels {

enum class Backend { Serial, OpenMP };

Backend backend();
void set_backend(Backend b);
bool openmp_compiled();
int max_threads();

enum class Activation { Identity, Relu };

template <typename Fn>
inline void parallel_for(int count, Fn&& fn) {
#ifdef _OPENMP
  if (backend() == Backend::OpenMP) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
#endif
  for (int i = 0; i < count; ++i) fn(i);
}

namespace detail {

template <typename T>
inline T activate(T x, Activation act) {
  return act == Activation::Relu ? (x > T(0) ? x : T(0)) : x;
}

// out[i][:] of a same-length 1-d convolution, window centered at i, zero
// padding outside [0, t_len).
template <typename T>
inline void conv_row(const T* x, int t_len, int d_in, const T* w, int k, int f_n,
                     const T* bias, Activation act, int i, T* out_row) {
  for (int f = 0; f < f_n; ++f) out_row[f] = bias[f];
  const int half = k / 2;
  for (int t = 0; t < k; ++t) {
    const int r = i + t - half;
    if (r < 0 || r >= t_len) continue;
    const T* xr = x + static_cast<std::size_t>(r) * d_in;
    const T* wt = w + static_cast<std::size_t>(t) * d_in * f_n;
    for (int d = 0; d < d_in; ++d) {
      const T c = xr[d];
      const T* wf = wt + static_cast<std::size_t>(d) * f_n;
      for (int f = 0; f < f_n; ++f) out_row[f] += c * wf[f];
    }
  }
  for (int f = 0; f < f_n; ++f) out_row[f] = activate(out_row[f], act);
}

// gx[r][:] given the gradient at the pre-activation outputs.
template <typename T>
inline void conv_grad_input_row(const T* g_pre, int t_len, int d_in, const T* w, int k,
                                int f_n, int r, T* gx_row) {
  for (int d = 0; d < d_in; ++d) gx_row[d] = T(0);
  const int half = k / 2;
  for (int t = 0; t < k; ++t) {
    const int i = r - t + half;  // output row whose window tap t reads input row r
    if (i < 0 || i >= t_len) continue;
    const T* gi = g_pre + static_cast<std::size_t>(i) * f_n;
    const T* wt = w + static_cast<std::size_t>(t) * d_in * f_n;
    for (int d = 0; d < d_in; ++d) {
      const T* wf = wt + static_cast<std::size_t>(d) * f_n;
      T s = 0;
      for (int f = 0; f < f_n; ++f) s += gi[f] * wf[f];
      gx_row[d] += s;
    }
  }
}

// gw[t][d][:] — one (tap, input-dim) slice of the kernel gradient.
template <typename T>
inline void conv_grad_weight_slice(const T* x, int t_len, int d_in, const T* g_pre,
                                   int k, int f_n, int td, T* gw_slice) {
  const int t = td / d_in;
  const int d = td % d_in;
  const int half = k / 2;
  for (int f = 0; f < f_n; ++f) gw_slice[f] = T(0);
  for (int i = 0; i < t_len; ++i) {
    const int r = i + t - half;
    if (r < 0 || r >= t_len) continue;
    const T c = x[static_cast<std::size_t>(r) * d_in + d];
    const T* gi = g_pre + static_cast<std::size_t>(i) * f_n;
    for (int f = 0; f < f_n; ++f) gw_slice[f] += c * gi[f];
  }
}

template <typename T>
inline T dot_n(const T* a, const T* b, int n) {
  T s = 0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// out[j] = sum_i x[i] * a[i][j] for a single output column j.
template <typename T>
inline T vecmat_col(const T* x, int m, const T* a, int k_cols, int j) {
  T s = 0;
  for (int i = 0; i < m; ++i) s += x[i] * a[static_cast<std::size_t>(i) * k_cols + j];
  return s;
}

template <typename T>
inline void matmul_row(const T* a, int k, const T* b, int n, int i, T* out_row) {
  for (int j = 0; j < n; ++j) out_row[j] = T(0);
  const T* ar = a + static_cast<std::size_t>(i) * k;
  for (int p = 0; p < k; ++p) {
    const T c = ar[p];
    const T* br = b + static_cast<std::size_t>(p) * n;
    for (int j = 0; j < n; ++j) out_row[j] += c * br[j];
  }
}

// out[i][:] of A · B^T where B is [n x k].
template <typename T>
inline void matmul_nt_row(const T* a, int k, const T* b, int n, int i, T* out_row) {
  const T* ar = a + static_cast<std::size_t>(i) * k;
  for (int j = 0; j < n; ++j) out_row[j] = dot_n(ar, b + static_cast<std::size_t>(j) * k, k);
}

// out[i][:] of A^T · B where A is [k_rows x m], B is [k_rows x n].
template <typename T>
inline void matmul_tn_row(const T* a, int m, const T* b, int k_rows, int n, int i, T* out_row) {
  for (int j = 0; j < n; ++j) out_row[j] = T(0);
  for (int p = 0; p < k_rows; ++p) {
    const T c = a[static_cast<std::size_t>(p) * m + i];
    const T* br = b + static_cast<std::size_t>(p) * n;
    for (int j = 0; j < n; ++j) out_row[j] += c * br[j];
  }
}

}  // namespace detail

template <typename T>
void conv1d_same(const T* x, int t_len, int d_in, const T* w, int k, int f_n, const T* bias,
                 Activation act, T* out) {
  parallel_for(t_len, [&](int i) {
    detail::conv_row(x, t_len, d_in, w, k, f_n, bias, act, i,
                     out + static_cast<std::size_t>(i) * f_n);
  });
}

template <typename T>
void conv1d_grad_input(const T* g_pre, int t_len, int d_in, const T* w, int k, int f_n, T* gx) {
  parallel_for(t_len, [&](int r) {
    detail::conv_grad_input_row(g_pre, t_len, d_in, w, k, f_n, r,
                                gx + static_cast<std::size_t>(r) * d_in);
  });
}

// gw is written (not accumulated) as [k x d_in x f_n]; gb accumulates.
template <typename T>
void conv1d_grad_weights(const T* x, int t_len, int d_in, const T* g_pre, int k, int f_n,
                         T* gw, T* gb) {
  parallel_for(k * d_in, [&](int td) {
    detail::conv_grad_weight_slice(x, t_len, d_in, g_pre, k, f_n, td,
                                   gw + static_cast<std::size_t>(td) * f_n);
  });
  for (int i = 0; i < t_len; ++i) {
    const T* gi = g_pre + static_cast<std::size_t>(i) * f_n;
    for (int f = 0; f < f_n; ++f) gb[f] += gi[f];
  }
}

template <typename T>
void matvec(const T* a, int m, int k, const T* x, T* out) {
  parallel_for(m, [&](int i) { out[i] = detail::dot_n(a + static_cast<std::size_t>(i) * k, x, k); });
}

template <typename T>
void vecmat(const T* x, int m, const T* a, int k_cols, T* out) {
  parallel_for(k_cols, [&](int j) { out[j] = detail::vecmat_col(x, m, a, k_cols, j); });
}

// g += u (x) v, accumulating into an [m x n] matrix.
template <typename T>
void outer_accum(const T* u, int m, const T* v, int n, T* g) {
  parallel_for(m, [&](int i) {
    T* gr = g + static_cast<std::size_t>(i) * n;
    const T c = u[i];
    for (int j = 0; j < n; ++j) gr[j] += c * v[j];
  });
}

template <typename T>
void matmul(const T* a, int m, int k, const T* b, int n, T* out) {
  parallel_for(m, [&](int i) { detail::matmul_row(a, k, b, n, i, out + static_cast<std::size_t>(i) * n); });
}

template <typename T>
void matmul_nt(const T* a, int m, int k, const T* b, int n, T* out) {
  parallel_for(m, [&](int i) { detail::matmul_nt_row(a, k, b, n, i, out + static_cast<std::size_t>(i) * n); });
}

template <typename T>
void matmul_tn(const T* a, int k_rows, int m, const T* b, int n, T* out) {
  parallel_for(m, [&](int i) { detail::matmul_tn_row(a, m, b, k_rows, n, i, out + static_cast<std::size_t>(i) * n); });
}

}  // namespace offtopic::kernels
