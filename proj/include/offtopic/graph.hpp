#pragma once

// Reverse-mode automatic differentiation over dense tensors. A Graph records
// one node per primitive application in creation order, which is already a
// topological order; backward() replays the node list in reverse. Tensors are
// immutable after the forward pass except for gradient accumulation, and a
// Graph is thread-confined.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "offtopic/errors.hpp"
#include "offtopic/kernels.hpp"
#include "offtopic/tensor.hpp"

namespace offtopic {

using Mask = std::vector<std::uint8_t>;

inline Mask full_mask(int n) { return Mask(static_cast<std::size_t>(n), 1); }

inline int mask_count(const Mask& m) {
  int c = 0;
  for (auto b : m) c += b ? 1 : 0;
  return c;
}

template <typename T>
class Graph {
 public:
  // no_grad: compute values only, record nothing (evaluation mode).
  explicit Graph(bool no_grad = false, bool check_finite = true)
      : no_grad_(no_grad), check_finite_(check_finite) {
    nodes_.reserve(256);
  }

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  std::size_t node_count() const { return nodes_.size(); }

  TensorPtr<T> constant(Shape shape, std::vector<T> data) {
    return make_tensor<T>(std::move(shape), std::move(data), false);
  }

  TensorPtr<T> zeros(Shape shape) { return make_tensor<T>(std::move(shape), false); }

  // ---- embedding ----

  TensorPtr<T> lookup_rows(const TensorPtr<T>& table, std::span<const int> ids) {
    require_rank("lookup_rows", table, 2);
    const int v = table->dim(0), d = table->dim(1);
    const int l = static_cast<int>(ids.size());
    if (l < 1) throw ShapeError("lookup_rows: empty id list");
    for (int i = 0; i < l; ++i) {
      if (ids[i] < 0 || ids[i] >= v) {
        throw ValueError("lookup_rows: id " + std::to_string(ids[i]) + " out of range [0, " +
                         std::to_string(v) + ")");
      }
    }
    auto out = fresh({l, d}, {table});
    for (int i = 0; i < l; ++i) {
      const T* src = table->value.data() + static_cast<std::size_t>(ids[i]) * d;
      std::copy(src, src + d, out->value.begin() + static_cast<std::ptrdiff_t>(i) * d);
    }
    finish("lookup_rows", out);
    std::vector<int> idv(ids.begin(), ids.end());
    record(out, [table, out, idv, d]() {
      if (!table->requires_grad) return;
      for (std::size_t i = 0; i < idv.size(); ++i) {
        T* dst = table->grad.data() + static_cast<std::size_t>(idv[i]) * d;
        const T* g = out->grad.data() + i * d;
        for (int j = 0; j < d; ++j) dst[j] += g[j];
      }
    });
    return out;
  }

  // ---- linear algebra ----

  TensorPtr<T> matmul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    if (a->dim(1) != b->dim(0)) {
      throw ShapeError("matmul: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
    const int m = a->dim(0), k = a->dim(1), n = b->dim(1);
    auto out = fresh({m, n}, {a, b});
    kernels::matmul(a->value.data(), m, k, b->value.data(), n, out->value.data());
    finish("matmul", out);
    record(out, [a, b, out, m, k, n]() {
      if (a->requires_grad) {
        std::vector<T> tmp(static_cast<std::size_t>(m) * k);
        kernels::matmul_nt(out->grad.data(), m, n, b->value.data(), k, tmp.data());
        axpy(a->grad, tmp);
      }
      if (b->requires_grad) {
        std::vector<T> tmp(static_cast<std::size_t>(k) * n);
        kernels::matmul_tn(a->value.data(), m, k, out->grad.data(), n, tmp.data());
        axpy(b->grad, tmp);
      }
    });
    return out;
  }

  TensorPtr<T> matvec(const TensorPtr<T>& a, const TensorPtr<T>& x) {
    require_rank("matvec", a, 2);
    require_rank("matvec", x, 1);
    if (a->dim(1) != x->dim(0)) {
      throw ShapeError("matvec: " + shape_str(a->shape) + " vs " + shape_str(x->shape));
    }
    const int m = a->dim(0), k = a->dim(1);
    auto out = fresh({m}, {a, x});
    kernels::matvec(a->value.data(), m, k, x->value.data(), out->value.data());
    finish("matvec", out);
    record(out, [a, x, out, m, k]() {
      if (a->requires_grad) {
        kernels::outer_accum(out->grad.data(), m, x->value.data(), k, a->grad.data());
      }
      if (x->requires_grad) {
        std::vector<T> tmp(static_cast<std::size_t>(k));
        kernels::vecmat(out->grad.data(), m, a->value.data(), k, tmp.data());
        axpy(x->grad, tmp);
      }
    });
    return out;
  }

  // x^T · A for x of length m, A [m x k].
  TensorPtr<T> vecmat(const TensorPtr<T>& x, const TensorPtr<T>& a) {
    require_rank("vecmat", x, 1);
    require_rank("vecmat", a, 2);
    if (x->dim(0) != a->dim(0)) {
      throw ShapeError("vecmat: " + shape_str(x->shape) + " vs " + shape_str(a->shape));
    }
    const int m = a->dim(0), k = a->dim(1);
    auto out = fresh({k}, {x, a});
    kernels::vecmat(x->value.data(), m, a->value.data(), k, out->value.data());
    finish("vecmat", out);
    record(out, [x, a, out, m, k]() {
      if (x->requires_grad) {
        std::vector<T> tmp(static_cast<std::size_t>(m));
        kernels::matvec(a->value.data(), m, k, out->grad.data(), tmp.data());
        axpy(x->grad, tmp);
      }
      if (a->requires_grad) {
        kernels::outer_accum(x->value.data(), m, out->grad.data(), k, a->grad.data());
      }
    });
    return out;
  }

  TensorPtr<T> dot(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require_rank("dot", a, 1);
    require_rank("dot", b, 1);
    if (a->dim(0) != b->dim(0)) {
      throw ShapeError("dot: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
    auto out = fresh({1}, {a, b});
    out->value[0] = kernels::detail::dot_n(a->value.data(), b->value.data(), a->dim(0));
    finish("dot", out);
    record(out, [a, b, out]() {
      const T g = out->grad[0];
      if (a->requires_grad) {
        for (std::size_t i = 0; i < a->value.size(); ++i) a->grad[i] += g * b->value[i];
      }
      if (b->requires_grad) {
        for (std::size_t i = 0; i < b->value.size(); ++i) b->grad[i] += g * a->value[i];
      }
    });
    return out;
  }

  // ---- elementwise ----

  TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require_same_shape("add", a, b);
    auto out = fresh(a->shape, {a, b});
    for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = a->value[i] + b->value[i];
    finish("add", out);
    record(out, [a, b, out]() {
      if (a->requires_grad) axpy(a->grad, out->grad);
      if (b->requires_grad) axpy(b->grad, out->grad);
    });
    return out;
  }

  TensorPtr<T> sub(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require_same_shape("sub", a, b);
    auto out = fresh(a->shape, {a, b});
    for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = a->value[i] - b->value[i];
    finish("sub", out);
    record(out, [a, b, out]() {
      if (a->requires_grad) axpy(a->grad, out->grad);
      if (b->requires_grad) {
        for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] -= out->grad[i];
      }
    });
    return out;
  }

  TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require_same_shape("elementwise_mul", a, b);
    auto out = fresh(a->shape, {a, b});
    for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = a->value[i] * b->value[i];
    finish("elementwise_mul", out);
    record(out, [a, b, out]() {
      if (a->requires_grad) {
        for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i] * b->value[i];
      }
      if (b->requires_grad) {
        for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += out->grad[i] * a->value[i];
      }
    });
    return out;
  }

  // alpha * x + beta with scalar constants.
  TensorPtr<T> affine(const TensorPtr<T>& x, T alpha, T beta) {
    auto out = fresh(x->shape, {x});
    for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = alpha * x->value[i] + beta;
    finish("affine", out);
    record(out, [x, out, alpha]() {
      if (!x->requires_grad) return;
      for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += alpha * out->grad[i];
    });
    return out;
  }

  // v + s broadcast over a vector, s scalar-shaped [1].
  TensorPtr<T> broadcast_add(const TensorPtr<T>& v, const TensorPtr<T>& s) {
    require_rank("broadcast_add", v, 1);
    require_scalar("broadcast_add", s);
    auto out = fresh(v->shape, {v, s});
    const T c = s->value[0];
    for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = v->value[i] + c;
    finish("broadcast_add", out);
    record(out, [v, s, out]() {
      if (v->requires_grad) axpy(v->grad, out->grad);
      if (s->requires_grad) {
        T acc = 0;
        for (T g : out->grad) acc += g;
        s->grad[0] += acc;
      }
    });
    return out;
  }

  // Row-wise a[i][:] * v[:] for a [t x d] matrix and a length-d vector.
  TensorPtr<T> mul_row_broadcast(const TensorPtr<T>& a, const TensorPtr<T>& v) {
    require_rank("mul_row_broadcast", a, 2);
    require_rank("mul_row_broadcast", v, 1);
    if (a->dim(1) != v->dim(0)) {
      throw ShapeError("mul_row_broadcast: " + shape_str(a->shape) + " vs " + shape_str(v->shape));
    }
    const int t = a->dim(0), d = a->dim(1);
    auto out = fresh(a->shape, {a, v});
    for (int i = 0; i < t; ++i) {
      for (int j = 0; j < d; ++j) {
        out->value[static_cast<std::size_t>(i) * d + j] =
            a->value[static_cast<std::size_t>(i) * d + j] * v->value[j];
      }
    }
    finish("mul_row_broadcast", out);
    record(out, [a, v, out, t, d]() {
      if (a->requires_grad) {
        for (int i = 0; i < t; ++i) {
          for (int j = 0; j < d; ++j) {
            a->grad[static_cast<std::size_t>(i) * d + j] +=
                out->grad[static_cast<std::size_t>(i) * d + j] * v->value[j];
          }
        }
      }
      if (v->requires_grad) {
        for (int i = 0; i < t; ++i) {
          for (int j = 0; j < d; ++j) {
            v->grad[j] += out->grad[static_cast<std::size_t>(i) * d + j] *
                          a->value[static_cast<std::size_t>(i) * d + j];
          }
        }
      }
    });
    return out;
  }

  // ---- shape plumbing ----

  TensorPtr<T> concat(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require_rank("concat", a, 1);
    require_rank("concat", b, 1);
    const int da = a->dim(0), db = b->dim(0);
    auto out = fresh({da + db}, {a, b});
    std::copy(a->value.begin(), a->value.end(), out->value.begin());
    std::copy(b->value.begin(), b->value.end(), out->value.begin() + da);
    finish("concat", out);
    record(out, [a, b, out, da, db]() {
      if (a->requires_grad) {
        for (int i = 0; i < da; ++i) a->grad[i] += out->grad[i];
      }
      if (b->requires_grad) {
        for (int i = 0; i < db; ++i) b->grad[i] += out->grad[da + i];
      }
    });
    return out;
  }

  TensorPtr<T> concat_cols(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require_rank("concat_cols", a, 2);
    require_rank("concat_cols", b, 2);
    if (a->dim(0) != b->dim(0)) {
      throw ShapeError("concat_cols: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
    const int t = a->dim(0), da = a->dim(1), db = b->dim(1);
    auto out = fresh({t, da + db}, {a, b});
    for (int i = 0; i < t; ++i) {
      std::copy(a->value.begin() + static_cast<std::ptrdiff_t>(i) * da,
                a->value.begin() + static_cast<std::ptrdiff_t>(i + 1) * da,
                out->value.begin() + static_cast<std::ptrdiff_t>(i) * (da + db));
      std::copy(b->value.begin() + static_cast<std::ptrdiff_t>(i) * db,
                b->value.begin() + static_cast<std::ptrdiff_t>(i + 1) * db,
                out->value.begin() + static_cast<std::ptrdiff_t>(i) * (da + db) + da);
    }
    finish("concat_cols", out);
    record(out, [a, b, out, t, da, db]() {
      for (int i = 0; i < t; ++i) {
        const T* g = out->grad.data() + static_cast<std::size_t>(i) * (da + db);
        if (a->requires_grad) {
          T* ga = a->grad.data() + static_cast<std::size_t>(i) * da;
          for (int j = 0; j < da; ++j) ga[j] += g[j];
        }
        if (b->requires_grad) {
          T* gb = b->grad.data() + static_cast<std::size_t>(i) * db;
          for (int j = 0; j < db; ++j) gb[j] += g[da + j];
        }
      }
    });
    return out;
  }

  TensorPtr<T> slice(const TensorPtr<T>& x, int offset, int len) {
    require_rank("slice", x, 1);
    if (offset < 0 || len < 1 || offset + len > x->dim(0)) {
      throw ShapeError("slice: [" + std::to_string(offset) + ", " + std::to_string(offset + len) +
                       ") out of " + shape_str(x->shape));
    }
    auto out = fresh({len}, {x});
    std::copy(x->value.begin() + offset, x->value.begin() + offset + len, out->value.begin());
    finish("slice", out);
    record(out, [x, out, offset, len]() {
      if (!x->requires_grad) return;
      for (int i = 0; i < len; ++i) x->grad[offset + i] += out->grad[i];
    });
    return out;
  }

  TensorPtr<T> row(const TensorPtr<T>& a, int r) {
    require_rank("row", a, 2);
    if (r < 0 || r >= a->dim(0)) {
      throw ShapeError("row: index " + std::to_string(r) + " out of " + shape_str(a->shape));
    }
    const int d = a->dim(1);
    auto out = fresh({d}, {a});
    std::copy(a->value.begin() + static_cast<std::ptrdiff_t>(r) * d,
              a->value.begin() + static_cast<std::ptrdiff_t>(r + 1) * d, out->value.begin());
    finish("row", out);
    record(out, [a, out, r, d]() {
      if (!a->requires_grad) return;
      T* g = a->grad.data() + static_cast<std::size_t>(r) * d;
      for (int j = 0; j < d; ++j) g[j] += out->grad[j];
    });
    return out;
  }

  TensorPtr<T> stack_rows(const std::vector<TensorPtr<T>>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no rows");
    const int d = rows[0]->dim(0);
    for (const auto& r : rows) {
      require_rank("stack_rows", r, 1);
      if (r->dim(0) != d) {
        throw ShapeError("stack_rows: " + shape_str(rows[0]->shape) + " vs " + shape_str(r->shape));
      }
    }
    const int t = static_cast<int>(rows.size());
    auto out = fresh({t, d}, rows);
    for (int i = 0; i < t; ++i) {
      std::copy(rows[i]->value.begin(), rows[i]->value.end(),
                out->value.begin() + static_cast<std::ptrdiff_t>(i) * d);
    }
    finish("stack_rows", out);
    record(out, [rows, out, t, d]() {
      for (int i = 0; i < t; ++i) {
        if (!rows[i]->requires_grad) continue;
        const T* g = out->grad.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) rows[i]->grad[j] += g[j];
      }
    });
    return out;
  }

  // ---- nonlinearities ----

  TensorPtr<T> sigmoid(const TensorPtr<T>& x) {
    auto out = fresh(x->shape, {x});
    for (std::size_t i = 0; i < out->value.size(); ++i) {
      out->value[i] = T(1) / (T(1) + std::exp(-x->value[i]));
    }
    finish("sigmoid", out);
    record(out, [x, out]() {
      if (!x->requires_grad) return;
      for (std::size_t i = 0; i < x->grad.size(); ++i) {
        const T s = out->value[i];
        x->grad[i] += out->grad[i] * s * (T(1) - s);
      }
    });
    return out;
  }

  TensorPtr<T> tanh_act(const TensorPtr<T>& x) {
    auto out = fresh(x->shape, {x});
    for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = std::tanh(x->value[i]);
    finish("tanh", out);
    record(out, [x, out]() {
      if (!x->requires_grad) return;
      for (std::size_t i = 0; i < x->grad.size(); ++i) {
        const T th = out->value[i];
        x->grad[i] += out->grad[i] * (T(1) - th * th);
      }
    });
    return out;
  }

  TensorPtr<T> relu(const TensorPtr<T>& x) {
    auto out = fresh(x->shape, {x});
    for (std::size_t i = 0; i < out->value.size(); ++i) {
      out->value[i] = x->value[i] > T(0) ? x->value[i] : T(0);
    }
    finish("relu", out);
    record(out, [x, out]() {
      if (!x->requires_grad) return;
      for (std::size_t i = 0; i < x->grad.size(); ++i) {
        if (out->value[i] > T(0)) x->grad[i] += out->grad[i];
      }
    });
    return out;
  }

  // ---- sequence primitives ----

  TensorPtr<T> conv1d_same(const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& bias,
                           kernels::Activation act) {
    require_rank("conv1d_same", x, 2);
    require_rank("conv1d_same", w, 3);
    require_rank("conv1d_same", bias, 1);
    const int t_len = x->dim(0), d_in = x->dim(1);
    const int k = w->dim(0), f_n = w->dim(2);
    if (k % 2 == 0) throw ShapeError("conv1d_same: even kernel size " + std::to_string(k));
    if (w->dim(1) != d_in) {
      throw ShapeError("conv1d_same: input " + shape_str(x->shape) + " vs kernels " +
                       shape_str(w->shape));
    }
    if (bias->dim(0) != f_n) {
      throw ShapeError("conv1d_same: kernels " + shape_str(w->shape) + " vs bias " +
                       shape_str(bias->shape));
    }
    auto out = fresh({t_len, f_n}, {x, w, bias});
    kernels::conv1d_same(x->value.data(), t_len, d_in, w->value.data(), k, f_n,
                         bias->value.data(), act, out->value.data());
    finish("conv1d_same", out);
    record(out, [x, w, bias, out, t_len, d_in, k, f_n, act]() {
      // Gradient at the pre-activation output.
      std::vector<T> g_pre(out->grad);
      if (act == kernels::Activation::Relu) {
        for (std::size_t i = 0; i < g_pre.size(); ++i) {
          if (out->value[i] <= T(0)) g_pre[i] = T(0);
        }
      }
      if (x->requires_grad) {
        std::vector<T> gx(x->value.size());
        kernels::conv1d_grad_input(g_pre.data(), t_len, d_in, w->value.data(), k, f_n, gx.data());
        axpy(x->grad, gx);
      }
      if (w->requires_grad) {
        std::vector<T> gw(w->value.size());
        std::vector<T> gb(static_cast<std::size_t>(f_n), T(0));
        kernels::conv1d_grad_weights(x->value.data(), t_len, d_in, g_pre.data(), k, f_n,
                                     gw.data(), gb.data());
        axpy(w->grad, gw);
        if (bias->requires_grad) axpy(bias->grad, gb);
      } else if (bias->requires_grad) {
        for (int i = 0; i < t_len; ++i) {
          for (int f = 0; f < f_n; ++f) bias->grad[f] += g_pre[static_cast<std::size_t>(i) * f_n + f];
        }
      }
    });
    return out;
  }

  TensorPtr<T> mask_rows(const TensorPtr<T>& x, const Mask& mask) {
    require_rank("mask_rows", x, 2);
    require_mask_len("mask_rows", mask, x->dim(0));
    const int t = x->dim(0), d = x->dim(1);
    auto out = fresh(x->shape, {x});
    for (int i = 0; i < t; ++i) {
      if (mask[static_cast<std::size_t>(i)]) {
        std::copy(x->value.begin() + static_cast<std::ptrdiff_t>(i) * d,
                  x->value.begin() + static_cast<std::ptrdiff_t>(i + 1) * d,
                  out->value.begin() + static_cast<std::ptrdiff_t>(i) * d);
      }
    }
    finish("mask_rows", out);
    record(out, [x, out, mask, t, d]() {
      if (!x->requires_grad) return;
      for (int i = 0; i < t; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        const T* g = out->grad.data() + static_cast<std::size_t>(i) * d;
        T* gx = x->grad.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) gx[j] += g[j];
      }
    });
    return out;
  }

  // Max over unmasked positions; gradient routes to the first maximal
  // unmasked index per column.
  TensorPtr<T> pool_max(const TensorPtr<T>& x, const Mask& mask) {
    require_rank("pool_max", x, 2);
    require_mask_len("pool_max", mask, x->dim(0));
    const int t = x->dim(0), d = x->dim(1);
    if (mask_count(mask) == 0) throw ValueError("pool_max: all positions masked");
    auto out = fresh({d}, {x});
    std::vector<int> arg(static_cast<std::size_t>(d), -1);
    for (int j = 0; j < d; ++j) {
      T best = T(0);
      int best_i = -1;
      for (int i = 0; i < t; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        const T v = x->value[static_cast<std::size_t>(i) * d + j];
        if (best_i < 0 || v > best) {
          best = v;
          best_i = i;
        }
      }
      out->value[j] = best;
      arg[static_cast<std::size_t>(j)] = best_i;
    }
    finish("pool_max", out);
    record(out, [x, out, arg, d]() {
      if (!x->requires_grad) return;
      for (int j = 0; j < d; ++j) {
        x->grad[static_cast<std::size_t>(arg[static_cast<std::size_t>(j)]) * d + j] += out->grad[j];
      }
    });
    return out;
  }

  TensorPtr<T> pool_avg(const TensorPtr<T>& x, const Mask& mask) {
    require_rank("pool_avg", x, 2);
    require_mask_len("pool_avg", mask, x->dim(0));
    const int t = x->dim(0), d = x->dim(1);
    const int cnt = mask_count(mask);
    if (cnt == 0) throw ValueError("pool_avg: all positions masked");
    auto out = fresh({d}, {x});
    for (int i = 0; i < t; ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      for (int j = 0; j < d; ++j) out->value[j] += x->value[static_cast<std::size_t>(i) * d + j];
    }
    const T inv = T(1) / static_cast<T>(cnt);
    for (int j = 0; j < d; ++j) out->value[j] *= inv;
    finish("pool_avg", out);
    record(out, [x, out, mask, t, d, inv]() {
      if (!x->requires_grad) return;
      for (int i = 0; i < t; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        T* gx = x->grad.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) gx[j] += out->grad[j] * inv;
      }
    });
    return out;
  }

  // Stabilized by subtracting the unmasked maximum; masked positions are
  // exactly zero in the output.
  TensorPtr<T> masked_softmax(const TensorPtr<T>& s, const Mask& mask) {
    require_rank("masked_softmax", s, 1);
    require_mask_len("masked_softmax", mask, s->dim(0));
    const int n = s->dim(0);
    if (mask_count(mask) == 0) throw ValueError("masked_softmax: all positions masked");
    auto out = fresh({n}, {s});
    T mx = T(0);
    bool seen = false;
    for (int i = 0; i < n; ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      if (!seen || s->value[i] > mx) mx = s->value[i];
      seen = true;
    }
    T denom = T(0);
    for (int i = 0; i < n; ++i) {
      if (mask[static_cast<std::size_t>(i)]) {
        out->value[i] = std::exp(s->value[i] - mx);
        denom += out->value[i];
      }
    }
    for (int i = 0; i < n; ++i) {
      if (mask[static_cast<std::size_t>(i)]) out->value[i] /= denom;
    }
    finish("masked_softmax", out);
    record(out, [s, out, n]() {
      if (!s->requires_grad) return;
      T acc = T(0);
      for (int i = 0; i < n; ++i) acc += out->grad[i] * out->value[i];
      for (int i = 0; i < n; ++i) s->grad[i] += out->value[i] * (out->grad[i] - acc);
    });
    return out;
  }

  TensorPtr<T> layer_norm(const TensorPtr<T>& x, const TensorPtr<T>& gain, const TensorPtr<T>& bias,
                          T eps = T(1e-5)) {
    require_rank("layer_norm", x, 1);
    require_same_shape("layer_norm", x, gain);
    require_same_shape("layer_norm", x, bias);
    const int n = x->dim(0);
    auto out = fresh(x->shape, {x, gain, bias});
    T mean = T(0);
    for (T v : x->value) mean += v;
    mean /= static_cast<T>(n);
    T var = T(0);
    for (T v : x->value) var += (v - mean) * (v - mean);
    var /= static_cast<T>(n);
    const T inv_sigma = T(1) / std::sqrt(var + eps);
    auto xhat = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      (*xhat)[i] = (x->value[i] - mean) * inv_sigma;
      out->value[i] = gain->value[i] * (*xhat)[i] + bias->value[i];
    }
    finish("layer_norm", out);
    record(out, [x, gain, bias, out, xhat, inv_sigma, n]() {
      if (gain->requires_grad) {
        for (int i = 0; i < n; ++i) gain->grad[i] += out->grad[i] * (*xhat)[i];
      }
      if (bias->requires_grad) {
        for (int i = 0; i < n; ++i) bias->grad[i] += out->grad[i];
      }
      if (x->requires_grad) {
        T gh_mean = T(0), ghx_mean = T(0);
        std::vector<T> gh(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
          gh[i] = out->grad[i] * gain->value[i];
          gh_mean += gh[i];
          ghx_mean += gh[i] * (*xhat)[i];
        }
        gh_mean /= static_cast<T>(n);
        ghx_mean /= static_cast<T>(n);
        for (int i = 0; i < n; ++i) {
          x->grad[i] += inv_sigma * (gh[i] - gh_mean - (*xhat)[i] * ghx_mean);
        }
      }
    });
    return out;
  }

  // Inverted dropout: scales kept activations by 1/(1-rate) at train time so
  // evaluation is the identity.
  TensorPtr<T> dropout(const TensorPtr<T>& x, double rate, std::mt19937& rng) {
    if (rate < 0.0 || rate >= 1.0) {
      throw ValueError("dropout: rate " + std::to_string(rate) + " outside [0, 1)");
    }
    if (rate == 0.0) return x;
    auto out = fresh(x->shape, {x});
    auto keep = std::make_shared<std::vector<T>>(x->value.size());
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const T scale = T(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < x->value.size(); ++i) {
      (*keep)[i] = unif(rng) < rate ? T(0) : scale;
      out->value[i] = x->value[i] * (*keep)[i];
    }
    finish("dropout", out);
    record(out, [x, out, keep]() {
      if (!x->requires_grad) return;
      for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[i] * (*keep)[i];
    });
    return out;
  }

  TensorPtr<T> select(const TensorPtr<T>& x, int index) {
    require_rank("select", x, 1);
    if (index < 0 || index >= x->dim(0)) {
      throw ShapeError("select: index " + std::to_string(index) + " out of " + shape_str(x->shape));
    }
    auto out = fresh({1}, {x});
    out->value[0] = x->value[index];
    finish("select", out);
    record(out, [x, out, index]() {
      if (x->requires_grad) x->grad[index] += out->grad[0];
    });
    return out;
  }

  // weight * -(label*log p + (1-label)*log(1-p)), p clamped to
  // [1e-7, 1 - 1e-7] before the logs.
  TensorPtr<T> weighted_bce(const TensorPtr<T>& p, int label, T weight) {
    require_scalar("weighted_bce", p);
    if (label != 0 && label != 1) throw ValueError("weighted_bce: label must be 0 or 1");
    const T lo = T(1e-7), hi = T(1) - T(1e-7);
    const T pv = p->value[0];
    const T pc = pv < lo ? lo : (pv > hi ? hi : pv);
    auto out = fresh({1}, {p});
    out->value[0] = -weight * (label == 1 ? std::log(pc) : std::log(T(1) - pc));
    finish("weighted_bce", out);
    record(out, [p, out, label, weight, pv, pc, lo, hi]() {
      if (!p->requires_grad) return;
      if (pv < lo || pv > hi) return;  // clamped region: zero slope
      const T d = label == 1 ? -T(1) / pc : T(1) / (T(1) - pc);
      p->grad[0] += out->grad[0] * weight * d;
    });
    return out;
  }

  // scale * sum of scalar inputs.
  TensorPtr<T> scaled_sum(const std::vector<TensorPtr<T>>& xs, T scale) {
    if (xs.empty()) throw ShapeError("scaled_sum: no inputs");
    for (const auto& x : xs) require_scalar("scaled_sum", x);
    auto out = fresh({1}, xs);
    T acc = T(0);
    for (const auto& x : xs) acc += x->value[0];
    out->value[0] = scale * acc;
    finish("scaled_sum", out);
    record(out, [xs, out, scale]() {
      for (const auto& x : xs) {
        if (x->requires_grad) x->grad[0] += out->grad[0] * scale;
      }
    });
    return out;
  }

  TensorPtr<T> sum(const TensorPtr<T>& x) {
    auto out = fresh({1}, {x});
    T acc = T(0);
    for (T v : x->value) acc += v;
    out->value[0] = acc;
    finish("sum", out);
    record(out, [x, out]() {
      if (!x->requires_grad) return;
      for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[0];
    });
    return out;
  }

  // ---- backward ----

  void backward(const TensorPtr<T>& loss) {
    if (no_grad_) throw ValueError("backward: graph was built in no-grad mode");
    if (loss->size() != 1) {
      throw ValueError("backward: loss must be scalar, got " + shape_str(loss->shape));
    }
    if (ran_backward_) throw ValueError("backward: already ran on this graph");
    ran_backward_ = true;
    if (!loss->requires_grad) return;  // nothing reachable requires grad
    loss->grad[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

 private:
  bool no_grad_;
  bool check_finite_;
  bool ran_backward_ = false;
  std::vector<std::function<void()>> nodes_;

  TensorPtr<T> fresh(Shape shape, const std::vector<TensorPtr<T>>& inputs) {
    bool req = false;
    if (!no_grad_) {
      for (const auto& in : inputs) req = req || in->requires_grad;
    }
    return make_tensor<T>(std::move(shape), req);
  }

  void finish(const char* op, const TensorPtr<T>& out) {
    if (!check_finite_) return;
    for (T v : out->value) {
      if (!std::isfinite(v)) {
        throw NumericError(std::string(op) + ": non-finite output value");
      }
    }
  }

  template <typename Fn>
  void record(const TensorPtr<T>& out, Fn&& fn) {
    if (out->requires_grad) nodes_.emplace_back(std::forward<Fn>(fn));
  }

  static void axpy(std::vector<T>& dst, const std::vector<T>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  static void require_rank(const char* op, const TensorPtr<T>& x, int rank) {
    if (x->rank() != rank) {
      throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                       shape_str(x->shape));
    }
  }

  static void require_scalar(const char* op, const TensorPtr<T>& x) {
    if (x->size() != 1) {
      throw ShapeError(std::string(op) + ": expected scalar, got " + shape_str(x->shape));
    }
  }

  static void require_same_shape(const char* op, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape != b->shape) {
      throw ShapeError(std::string(op) + ": " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
  }

  static void require_mask_len(const char* op, const Mask& mask, int len) {
    if (static_cast<int>(mask.size()) != len) {
      throw ShapeError(std::string(op) + ": mask length " + std::to_string(mask.size()) +
                       " vs sequence length " + std::to_string(len));
    }
  }
};

}  // namespace offtopic
