#include "cipherbreak/nn/ops.hpp"

#include <cblas.h>

#include <cmath>
#include <memory>

#include "cipherbreak/errors.hpp"

namespace cipherbreak::nn {

namespace {

// Row-major C = alpha * op(A) * op(B) + beta * C.
void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k,
              alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k,
              alpha, a, lda, b, ldb, beta, c, ldc);
}

void require(bool ok, const char* what, const Shape& a, const Shape& b = {}) {
  if (!ok) {
    throw StructuralError(std::string(what) + ": incompatible shapes " + shape_string(a) +
                          (b.empty() ? "" : " vs " + shape_string(b)));
  }
}

struct ConvGeom {
  int n, ci, h, w, co, k, stride, pad, ho, wo;
  int col_rows() const { return ci * k * k; }
  int col_cols() const { return ho * wo; }
  bool direct() const { return k == 1 && stride == 1 && pad == 0; }
};

// Output columns [lo, hi) read in-bounds input for kernel column offset kj.
inline void valid_range(const ConvGeom& g, int kj, int& lo, int& hi) {
  const int off = kj - g.pad;
  lo = off >= 0 ? 0 : (-off + g.stride - 1) / g.stride;
  hi = (g.w - 1 - off) >= 0 ? (g.w - 1 - off) / g.stride + 1 : 0;
  hi = std::min(hi, g.wo);
  lo = std::min(lo, hi);
}

template <class T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const int cols = g.col_cols();
  for (int c = 0; c < g.ci; ++c) {
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        T* row = col + static_cast<std::size_t>((c * g.k + ki) * g.k + kj) * cols;
        int lo, hi;
        valid_range(g, kj, lo, hi);
        const int off = kj - g.pad;
        for (int oh = 0; oh < g.ho; ++oh) {
          const int ih = oh * g.stride - g.pad + ki;
          T* out = row + static_cast<std::size_t>(oh) * g.wo;
          if (ih < 0 || ih >= g.h) {
            std::fill(out, out + g.wo, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(c) * g.h + ih) * g.w + off;
          std::fill(out, out + lo, T(0));
          if (g.stride == 1) {
            std::copy(src + lo, src + hi, out + lo);
          } else {
            for (int ow = lo; ow < hi; ++ow) out[ow] = src[ow * g.stride];
          }
          std::fill(out + hi, out + g.wo, T(0));
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, const ConvGeom& g, T* dx) {
  const int cols = g.col_cols();
  for (int c = 0; c < g.ci; ++c) {
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        const T* row = col + static_cast<std::size_t>((c * g.k + ki) * g.k + kj) * cols;
        int lo, hi;
        valid_range(g, kj, lo, hi);
        const int off = kj - g.pad;
        for (int oh = 0; oh < g.ho; ++oh) {
          const int ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.h) continue;
          T* dst = dx + (static_cast<std::size_t>(c) * g.h + ih) * g.w + off;
          const T* in = row + static_cast<std::size_t>(oh) * g.wo;
          if (g.stride == 1) {
            for (int ow = lo; ow < hi; ++ow) dst[ow] += in[ow];
          } else {
            for (int ow = lo; ow < hi; ++ow) dst[ow * g.stride] += in[ow];
          }
        }
      }
    }
  }
}

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

template <class T>
Var conv2d(Graph<T>& g, Var x, Var w, Var b, int stride, int pad) {
  const auto& xs = g.shape(x);
  const auto& ws = g.shape(w);
  require(xs.size() == 4 && ws.size() == 4 && ws[1] == xs[1] && ws[2] == ws[3], "conv2d", xs, ws);
  ConvGeom geo{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], stride, pad, 0, 0};
  geo.ho = (geo.h + 2 * pad - geo.k) / stride + 1;
  geo.wo = (geo.w + 2 * pad - geo.k) / stride + 1;
  require(geo.ho > 0 && geo.wo > 0, "conv2d output", xs, ws);
  if (b.valid()) require(g.shape(b).size() == 1 && g.shape(b)[0] == geo.co, "conv2d bias", g.shape(b));

  Tensor<T> y({geo.n, geo.co, geo.ho, geo.wo});
  const std::size_t in_stride = static_cast<std::size_t>(geo.ci) * geo.h * geo.w;
  const std::size_t out_stride = static_cast<std::size_t>(geo.co) * geo.ho * geo.wo;
  const int rows = geo.col_rows(), cols = geo.col_cols();
  std::vector<T> col(geo.direct() ? 0 : static_cast<std::size_t>(rows) * cols);
  const T* xv = g.value(x).data();
  const T* wv = g.value(w).data();
  for (int n = 0; n < geo.n; ++n) {
    const T* src = xv + n * in_stride;
    if (!geo.direct()) {
      im2col(src, geo, col.data());
      src = col.data();
    }
    T* out = y.data() + n * out_stride;
    if (b.valid()) {
      const T* bv = g.value(b).data();
      for (int o = 0; o < geo.co; ++o) std::fill(out + static_cast<std::size_t>(o) * cols, out + static_cast<std::size_t>(o + 1) * cols, bv[o]);
    }
    gemm(false, false, geo.co, cols, rows, T(1), wv, rows, src, cols, b.valid() ? T(1) : T(0), out, cols);
  }

  return g.record(std::move(y), {x, w, b}, [x, w, b, geo](Graph<T>& g, Var self) {
    const int rows = geo.col_rows(), cols = geo.col_cols();
    const std::size_t in_stride = static_cast<std::size_t>(geo.ci) * geo.h * geo.w;
    const std::size_t out_stride = static_cast<std::size_t>(geo.co) * geo.ho * geo.wo;
    const T* dy = g.grad(self).data();
    const T* xv = g.value(x).data();
    const T* wv = g.value(w).data();
    const bool need_w = g.requires_grad(w);
    const bool need_b = b.valid() && g.requires_grad(b);
    const bool need_x = g.requires_grad(x);
    T* dw = need_w ? g.grad(w).data() : nullptr;
    T* db = need_b ? g.grad(b).data() : nullptr;
    T* dx = need_x ? g.grad(x).data() : nullptr;
    std::vector<T> col(geo.direct() ? 0 : static_cast<std::size_t>(rows) * cols);
    std::vector<T> dcol(need_x && !geo.direct() ? static_cast<std::size_t>(rows) * cols : 0);
    for (int n = 0; n < geo.n; ++n) {
      const T* dyn = dy + n * out_stride;
      if (need_w) {
        const T* src = xv + n * in_stride;
        if (!geo.direct()) {
          im2col(src, geo, col.data());
          src = col.data();
        }
        gemm(false, true, geo.co, rows, cols, T(1), dyn, cols, src, cols, T(1), dw, rows);
      }
      if (need_b) {
        for (int o = 0; o < geo.co; ++o) {
          T s = 0;
          const T* r = dyn + static_cast<std::size_t>(o) * cols;
          for (int i = 0; i < cols; ++i) s += r[i];
          db[o] += s;
        }
      }
      if (need_x) {
        if (geo.direct()) {
          gemm(true, false, rows, cols, geo.co, T(1), wv, rows, dyn, cols, T(1), dx + n * in_stride, cols);
        } else {
          gemm(true, false, rows, cols, geo.co, T(1), wv, rows, dyn, cols, T(0), dcol.data(), cols);
          col2im_add(dcol.data(), geo, dx + n * in_stride);
        }
      }
    }
  });
}

template <class T>
Var linear(Graph<T>& g, Var x, Var w, Var b) {
  const auto& xs = g.shape(x);
  const auto& ws = g.shape(w);
  require(xs.size() == 2 && ws.size() == 2 && xs[1] == ws[1], "linear", xs, ws);
  const int n = xs[0], f = xs[1], o = ws[0];
  Tensor<T> y({n, o});
  if (b.valid()) {
    require(g.shape(b).size() == 1 && g.shape(b)[0] == o, "linear bias", g.shape(b));
    const T* bv = g.value(b).data();
    for (int i = 0; i < n; ++i) std::copy(bv, bv + o, y.data() + static_cast<std::size_t>(i) * o);
  }
  gemm(false, true, n, o, f, T(1), g.value(x).data(), f, g.value(w).data(), f, b.valid() ? T(1) : T(0), y.data(), o);
  return g.record(std::move(y), {x, w, b}, [x, w, b, n, f, o](Graph<T>& g, Var self) {
    const T* dy = g.grad(self).data();
    if (g.requires_grad(x)) {
      gemm(false, false, n, f, o, T(1), dy, o, g.value(w).data(), f, T(1), g.grad(x).data(), f);
    }
    if (g.requires_grad(w)) {
      gemm(true, false, o, f, n, T(1), dy, o, g.value(x).data(), f, T(1), g.grad(w).data(), f);
    }
    if (b.valid() && g.requires_grad(b)) {
      T* db = g.grad(b).data();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < o; ++j) db[j] += dy[static_cast<std::size_t>(i) * o + j];
    }
  });
}

template <class T>
Var group_norm(Graph<T>& g, Var x, int groups, T eps) {
  const auto& xs = g.shape(x);
  require(xs.size() == 4 && groups > 0 && xs[1] % groups == 0, "group_norm", xs);
  const int n = xs[0], c = xs[1];
  const std::size_t hw = static_cast<std::size_t>(xs[2]) * xs[3];
  const std::size_t group_size = static_cast<std::size_t>(c / groups) * hw;
  Tensor<T> y(xs);
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n) * groups);
  const T* xv = g.value(x).data();
  for (int i = 0; i < n * groups; ++i) {
    const T* src = xv + i * group_size;
    T* dst = y.data() + i * group_size;
    double mean = 0;
    for (std::size_t j = 0; j < group_size; ++j) mean += src[j];
    mean /= static_cast<double>(group_size);
    double var = 0;
    for (std::size_t j = 0; j < group_size; ++j) var += (src[j] - mean) * (src[j] - mean);
    var /= static_cast<double>(group_size);
    const T is = static_cast<T>(1.0 / std::sqrt(var + eps));
    (*inv_std)[static_cast<std::size_t>(i)] = is;
    for (std::size_t j = 0; j < group_size; ++j) dst[j] = static_cast<T>((src[j] - mean) * is);
  }
  return g.record(std::move(y), {x}, [x, n, groups, group_size, inv_std](Graph<T>& g, Var self) {
    const T* dy = g.grad(self).data();
    const T* yv = g.value(self).data();
    T* dx = g.grad(x).data();
    for (int i = 0; i < n * groups; ++i) {
      const std::size_t off = i * group_size;
      double mdy = 0, mdyy = 0;
      for (std::size_t j = 0; j < group_size; ++j) {
        mdy += dy[off + j];
        mdyy += dy[off + j] * yv[off + j];
      }
      mdy /= static_cast<double>(group_size);
      mdyy /= static_cast<double>(group_size);
      const T is = (*inv_std)[static_cast<std::size_t>(i)];
      for (std::size_t j = 0; j < group_size; ++j) {
        dx[off + j] += static_cast<T>(is * (dy[off + j] - mdy - yv[off + j] * mdyy));
      }
    }
  });
}

template <class T>
Var film(Graph<T>& g, Var x, Var scale, Var shift) {
  const auto& xs = g.shape(x);
  const Shape nc{xs.size() == 4 ? xs[0] : -1, xs.size() == 4 ? xs[1] : -1};
  require(xs.size() == 4 && g.shape(scale) == nc && g.shape(shift) == nc, "film", xs, g.shape(scale));
  const std::size_t hw = static_cast<std::size_t>(xs[2]) * xs[3];
  const std::size_t planes = static_cast<std::size_t>(xs[0]) * xs[1];
  Tensor<T> y(xs);
  const T* xv = g.value(x).data();
  const T* sv = g.value(scale).data();
  const T* tv = g.value(shift).data();
  for (std::size_t p = 0; p < planes; ++p) {
    const T a = T(1) + sv[p], b = tv[p];
    for (std::size_t j = 0; j < hw; ++j) y[p * hw + j] = xv[p * hw + j] * a + b;
  }
  return g.record(std::move(y), {x, scale, shift}, [x, scale, shift, hw, planes](Graph<T>& g, Var self) {
    const T* dy = g.grad(self).data();
    const T* xv = g.value(x).data();
    const T* sv = g.value(scale).data();
    T* dx = g.requires_grad(x) ? g.grad(x).data() : nullptr;
    T* ds = g.requires_grad(scale) ? g.grad(scale).data() : nullptr;
    T* dt = g.requires_grad(shift) ? g.grad(shift).data() : nullptr;
    for (std::size_t p = 0; p < planes; ++p) {
      const T a = T(1) + sv[p];
      T sum_dy = 0, sum_dyx = 0;
      for (std::size_t j = 0; j < hw; ++j) {
        const T d = dy[p * hw + j];
        if (dx) dx[p * hw + j] += d * a;
        sum_dy += d;
        sum_dyx += d * xv[p * hw + j];
      }
      if (ds) ds[p] += sum_dyx;
      if (dt) dt[p] += sum_dy;
    }
  });
}

template <class T>
Var add_channel_bias(Graph<T>& g, Var x, Var v) {
  const auto& xs = g.shape(x);
  require(xs.size() == 4 && g.shape(v) == Shape{xs[0], xs[1]}, "add_channel_bias", xs, g.shape(v));
  const std::size_t hw = static_cast<std::size_t>(xs[2]) * xs[3];
  const std::size_t planes = static_cast<std::size_t>(xs[0]) * xs[1];
  Tensor<T> y = g.value(x);
  const T* vv = g.value(v).data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t j = 0; j < hw; ++j) y[p * hw + j] += vv[p];
  return g.record(std::move(y), {x, v}, [x, v, hw, planes](Graph<T>& g, Var self) {
    const T* dy = g.grad(self).data();
    if (g.requires_grad(x)) {
      T* dx = g.grad(x).data();
      for (std::size_t i = 0; i < planes * hw; ++i) dx[i] += dy[i];
    }
    if (g.requires_grad(v)) {
      T* dv = g.grad(v).data();
      for (std::size_t p = 0; p < planes; ++p) {
        T s = 0;
        for (std::size_t j = 0; j < hw; ++j) s += dy[p * hw + j];
        dv[p] += s;
      }
    }
  });
}

template <class T>
Var add(Graph<T>& g, Var a, Var b) {
  require(g.shape(a) == g.shape(b), "add", g.shape(a), g.shape(b));
  Tensor<T> y = g.value(a);
  const T* bv = g.value(b).data();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += bv[i];
  return g.record(std::move(y), {a, b}, [a, b](Graph<T>& g, Var self) {
    const auto& dy = g.grad(self);
    for (Var in : {a, b}) {
      if (!g.requires_grad(in)) continue;
      T* d = g.grad(in).data();
      for (std::size_t i = 0; i < dy.numel(); ++i) d[i] += dy[i];
    }
  });
}

template <class T>
Var silu(Graph<T>& g, Var x) {
  Tensor<T> y = g.value(x);
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = y[i] * sigmoid(y[i]);
  return g.record(std::move(y), {x}, [x](Graph<T>& g, Var self) {
    const auto& dy = g.grad(self);
    const T* xv = g.value(x).data();
    T* dx = g.grad(x).data();
    for (std::size_t i = 0; i < dy.numel(); ++i) {
      const T s = sigmoid(xv[i]);
      dx[i] += dy[i] * s * (T(1) + xv[i] * (T(1) - s));
    }
  });
}

template <class T>
Var relu(Graph<T>& g, Var x) {
  Tensor<T> y = g.value(x);
  for (auto& v : y.vec()) v = v > T(0) ? v : T(0);
  return g.record(std::move(y), {x}, [x](Graph<T>& g, Var self) {
    const auto& dy = g.grad(self);
    const T* yv = g.value(self).data();
    T* dx = g.grad(x).data();
    for (std::size_t i = 0; i < dy.numel(); ++i)
      if (yv[i] > T(0)) dx[i] += dy[i];
  });
}

template <class T>
Var avg_pool2(Graph<T>& g, Var x) {
  const auto& xs = g.shape(x);
  require(xs.size() == 4 && xs[2] % 2 == 0 && xs[3] % 2 == 0, "avg_pool2", xs);
  const int planes = xs[0] * xs[1], h = xs[2], w = xs[3], ho = h / 2, wo = w / 2;
  Tensor<T> y({xs[0], xs[1], ho, wo});
  const T* xv = g.value(x).data();
  for (int p = 0; p < planes; ++p)
    for (int i = 0; i < ho; ++i)
      for (int j = 0; j < wo; ++j) {
        const T* s = xv + (static_cast<std::size_t>(p) * h + 2 * i) * w + 2 * j;
        y[(static_cast<std::size_t>(p) * ho + i) * wo + j] = T(0.25) * (s[0] + s[1] + s[w] + s[w + 1]);
      }
  return g.record(std::move(y), {x}, [x, planes, h, w, ho, wo](Graph<T>& g, Var self) {
    const T* dy = g.grad(self).data();
    T* dx = g.grad(x).data();
    for (int p = 0; p < planes; ++p)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          const T d = T(0.25) * dy[(static_cast<std::size_t>(p) * ho + i) * wo + j];
          T* s = dx + (static_cast<std::size_t>(p) * h + 2 * i) * w + 2 * j;
          s[0] += d;
          s[1] += d;
          s[w] += d;
          s[w + 1] += d;
        }
  });
}

template <class T>
Var upsample_nearest2(Graph<T>& g, Var x) {
  const auto& xs = g.shape(x);
  require(xs.size() == 4, "upsample_nearest2", xs);
  const int planes = xs[0] * xs[1], h = xs[2], w = xs[3], ho = 2 * h, wo = 2 * w;
  Tensor<T> y({xs[0], xs[1], ho, wo});
  const T* xv = g.value(x).data();
  for (int p = 0; p < planes; ++p)
    for (int i = 0; i < ho; ++i)
      for (int j = 0; j < wo; ++j)
        y[(static_cast<std::size_t>(p) * ho + i) * wo + j] = xv[(static_cast<std::size_t>(p) * h + i / 2) * w + j / 2];
  return g.record(std::move(y), {x}, [x, planes, h, w, ho, wo](Graph<T>& g, Var self) {
    const T* dy = g.grad(self).data();
    T* dx = g.grad(x).data();
    for (int p = 0; p < planes; ++p)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j)
          dx[(static_cast<std::size_t>(p) * h + i / 2) * w + j / 2] += dy[(static_cast<std::size_t>(p) * ho + i) * wo + j];
  });
}

template <class T>
Var concat_channels(Graph<T>& g, Var a, Var b) {
  const auto& as = g.shape(a);
  const auto& bs = g.shape(b);
  require(as.size() == 4 && bs.size() == 4 && as[0] == bs[0] && as[2] == bs[2] && as[3] == bs[3],
          "concat_channels", as, bs);
  const std::size_t hw = static_cast<std::size_t>(as[2]) * as[3];
  const std::size_t na = as[1] * hw, nb = bs[1] * hw;
  Tensor<T> y({as[0], as[1] + bs[1], as[2], as[3]});
  const T* av = g.value(a).data();
  const T* bv = g.value(b).data();
  for (int n = 0; n < as[0]; ++n) {
    std::copy(av + n * na, av + (n + 1) * na, y.data() + n * (na + nb));
    std::copy(bv + n * nb, bv + (n + 1) * nb, y.data() + n * (na + nb) + na);
  }
  const int batch = as[0];
  return g.record(std::move(y), {a, b}, [a, b, na, nb, batch](Graph<T>& g, Var self) {
    const T* dy = g.grad(self).data();
    for (int n = 0; n < batch; ++n) {
      if (g.requires_grad(a)) {
        T* da = g.grad(a).data() + n * na;
        const T* src = dy + n * (na + nb);
        for (std::size_t i = 0; i < na; ++i) da[i] += src[i];
      }
      if (g.requires_grad(b)) {
        T* db = g.grad(b).data() + n * nb;
        const T* src = dy + n * (na + nb) + na;
        for (std::size_t i = 0; i < nb; ++i) db[i] += src[i];
      }
    }
  });
}

template <class T>
Var slice_columns(Graph<T>& g, Var x, int begin, int end) {
  const auto& xs = g.shape(x);
  require(xs.size() == 2 && 0 <= begin && begin < end && end <= xs[1], "slice_columns", xs);
  const int n = xs[0], f = xs[1], w = end - begin;
  Tensor<T> y({n, w});
  const T* xv = g.value(x).data();
  for (int i = 0; i < n; ++i)
    std::copy(xv + static_cast<std::size_t>(i) * f + begin, xv + static_cast<std::size_t>(i) * f + end,
              y.data() + static_cast<std::size_t>(i) * w);
  return g.record(std::move(y), {x}, [x, n, f, w, begin](Graph<T>& g, Var self) {
    const T* dy = g.grad(self).data();
    T* dx = g.grad(x).data();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < w; ++j) dx[static_cast<std::size_t>(i) * f + begin + j] += dy[static_cast<std::size_t>(i) * w + j];
  });
}

template <class T>
Var global_mean_pool(Graph<T>& g, Var x) {
  const auto& xs = g.shape(x);
  require(xs.size() == 4, "global_mean_pool", xs);
  const std::size_t hw = static_cast<std::size_t>(xs[2]) * xs[3];
  const std::size_t planes = static_cast<std::size_t>(xs[0]) * xs[1];
  Tensor<T> y({xs[0], xs[1]});
  const T* xv = g.value(x).data();
  for (std::size_t p = 0; p < planes; ++p) {
    T s = 0;
    for (std::size_t j = 0; j < hw; ++j) s += xv[p * hw + j];
    y[p] = s / static_cast<T>(hw);
  }
  return g.record(std::move(y), {x}, [x, hw, planes](Graph<T>& g, Var self) {
    const T* dy = g.grad(self).data();
    T* dx = g.grad(x).data();
    for (std::size_t p = 0; p < planes; ++p) {
      const T d = dy[p] / static_cast<T>(hw);
      for (std::size_t j = 0; j < hw; ++j) dx[p * hw + j] += d;
    }
  });
}

template <class T>
Var mse(Graph<T>& g, Var a, Var b) {
  require(g.shape(a) == g.shape(b), "mse", g.shape(a), g.shape(b));
  const T* av = g.value(a).data();
  const T* bv = g.value(b).data();
  const std::size_t n = g.value(a).numel();
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(av[i] - bv[i]) * (av[i] - bv[i]);
  Tensor<T> y({1}, static_cast<T>(s / static_cast<double>(n)));
  return g.record(std::move(y), {a, b}, [a, b, n](Graph<T>& g, Var self) {
    const T scale = T(2) * g.grad(self)[0] / static_cast<T>(n);
    const T* av = g.value(a).data();
    const T* bv = g.value(b).data();
    T* da = g.requires_grad(a) ? g.grad(a).data() : nullptr;
    T* db = g.requires_grad(b) ? g.grad(b).data() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const T d = scale * (av[i] - bv[i]);
      if (da) da[i] += d;
      if (db) db[i] -= d;
    }
  });
}

template <class T>
Var nt_xent(Graph<T>& g, Var z, T temperature) {
  const auto& zs = g.shape(z);
  require(zs.size() == 2 && zs[0] >= 2 && zs[0] % 2 == 0, "nt_xent", zs);
  const int rows = zs[0], d = zs[1], half = rows / 2;
  const T* zv = g.value(z).data();
  auto unit = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows) * d);
  auto norms = std::make_shared<std::vector<T>>(rows);
  for (int i = 0; i < rows; ++i) {
    double s = 0;
    for (int k = 0; k < d; ++k) s += static_cast<double>(zv[i * d + k]) * zv[i * d + k];
    const T nrm = static_cast<T>(std::sqrt(s) + 1e-12);
    (*norms)[i] = nrm;
    for (int k = 0; k < d; ++k) (*unit)[static_cast<std::size_t>(i) * d + k] = zv[i * d + k] / nrm;
  }
  // sim = U U^T / tau, then row softmax excluding the diagonal.
  auto prob = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows) * rows);
  gemm(false, true, rows, rows, d, T(1) / temperature, unit->data(), d, unit->data(), d, T(0), prob->data(), rows);
  double loss = 0;
  for (int i = 0; i < rows; ++i) {
    T* r = prob->data() + static_cast<std::size_t>(i) * rows;
    const int pos = (i + half) % rows;
    T mx = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < rows; ++j)
      if (j != i) mx = std::max(mx, r[j]);
    double sum = 0;
    for (int j = 0; j < rows; ++j) sum += (j == i) ? 0.0 : std::exp(static_cast<double>(r[j] - mx));
    loss += -(r[pos] - mx) + std::log(sum);
    for (int j = 0; j < rows; ++j) r[j] = (j == i) ? T(0) : static_cast<T>(std::exp(static_cast<double>(r[j] - mx)) / sum);
  }
  Tensor<T> y({1}, static_cast<T>(loss / rows));
  return g.record(std::move(y), {z}, [z, rows, d, half, temperature, unit, norms, prob](Graph<T>& g, Var self) {
    const T scale = g.grad(self)[0] / static_cast<T>(rows);
    // dS = scale * (P - onehot(pos)); dU = (dS + dS^T) U / tau.
    std::vector<T> ds(static_cast<std::size_t>(rows) * rows);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < rows; ++j) {
        T v = (*prob)[static_cast<std::size_t>(i) * rows + j];
        if (j == (i + half) % rows) v -= T(1);
        ds[static_cast<std::size_t>(i) * rows + j] = scale * v;
      }
    std::vector<T> sym(ds.size());
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < rows; ++j)
        sym[static_cast<std::size_t>(i) * rows + j] = ds[static_cast<std::size_t>(i) * rows + j] + ds[static_cast<std::size_t>(j) * rows + i];
    std::vector<T> du(static_cast<std::size_t>(rows) * d);
    gemm(false, false, rows, d, rows, T(1) / temperature, sym.data(), rows, unit->data(), d, T(0), du.data(), d);
    T* dz = g.grad(z).data();
    for (int i = 0; i < rows; ++i) {
      const T* u = unit->data() + static_cast<std::size_t>(i) * d;
      const T* g_u = du.data() + static_cast<std::size_t>(i) * d;
      T dot = 0;
      for (int k = 0; k < d; ++k) dot += u[k] * g_u[k];
      for (int k = 0; k < d; ++k) dz[static_cast<std::size_t>(i) * d + k] += (g_u[k] - u[k] * dot) / (*norms)[i];
    }
  });
}

#define CB_INSTANTIATE_OPS(T)                                                   \
  template Var conv2d<T>(Graph<T>&, Var, Var, Var, int, int);                   \
  template Var linear<T>(Graph<T>&, Var, Var, Var);                             \
  template Var group_norm<T>(Graph<T>&, Var, int, T);                           \
  template Var film<T>(Graph<T>&, Var, Var, Var);                               \
  template Var add_channel_bias<T>(Graph<T>&, Var, Var);                        \
  template Var add<T>(Graph<T>&, Var, Var);                                     \
  template Var silu<T>(Graph<T>&, Var);                                         \
  template Var relu<T>(Graph<T>&, Var);                                         \
  template Var avg_pool2<T>(Graph<T>&, Var);                                    \
  template Var upsample_nearest2<T>(Graph<T>&, Var);                            \
  template Var concat_channels<T>(Graph<T>&, Var, Var);                         \
  template Var slice_columns<T>(Graph<T>&, Var, int, int);                      \
  template Var global_mean_pool<T>(Graph<T>&, Var);                             \
  template Var mse<T>(Graph<T>&, Var, Var);                                     \
  template Var nt_xent<T>(Graph<T>&, Var, T);

CB_INSTANTIATE_OPS(float)
CB_INSTANTIATE_OPS(double)

#undef CB_INSTANTIATE_OPS

}  // namespace cipherbreak::nn
