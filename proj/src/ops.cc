#include "sca_aec/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kernels.h"
#include "sca_aec/error.h"

namespace sca_aec::ops {
namespace {

void RequireSameShape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    FailUsage(std::string(op) + ": shape mismatch " + ShapeString(a.shape()) +
              " vs " + ShapeString(b.shape()));
  }
}

void RequireRank(const Var& a, std::size_t rank, const char* op) {
  if (a.shape().size() != rank) {
    FailUsage(std::string(op) + ": expected rank " + std::to_string(rank) +
              ", got " + ShapeString(a.shape()));
  }
}

void AddInto(Tensor* sink, const Tensor& g) {
  if (sink == nullptr) return;
  double* s = sink->ptr();
  const double* p = g.ptr();
  for (std::size_t i = 0; i < g.size(); ++i) s[i] += p[i];
}

double SigmoidScalar(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Splits a shape around `axis` into (outer, axis extent, inner).
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit SplitAt(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise

Var Add(Var a, Var b) {
  RequireSameShape(a, b, "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.graph().Emit(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& go) {
    AddInto(g.GradSink(a), go);
    AddInto(g.GradSink(b), go);
  });
}

Var Sub(Var a, Var b) {
  RequireSameShape(a, b, "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.graph().Emit(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& go) {
    AddInto(g.GradSink(a), go);
    if (Tensor* sb = g.GradSink(b)) {
      for (std::size_t i = 0; i < go.size(); ++i) (*sb)[i] -= go[i];
    }
  });
}

Var Mul(Var a, Var b) {
  RequireSameShape(a, b, "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.graph().Emit(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& go) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    if (Tensor* sa = g.GradSink(a)) {
      for (std::size_t i = 0; i < go.size(); ++i) (*sa)[i] += go[i] * bv[i];
    }
    if (Tensor* sb = g.GradSink(b)) {
      for (std::size_t i = 0; i < go.size(); ++i) (*sb)[i] += go[i] * av[i];
    }
  });
}

Var Scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.storage()) v *= s;
  return a.graph().Emit(std::move(out), {a}, [a, s](Graph& g, const Tensor& go) {
    if (Tensor* sa = g.GradSink(a)) {
      for (std::size_t i = 0; i < go.size(); ++i) (*sa)[i] += go[i] * s;
    }
  });
}

Var Relu(Var a) {
  Tensor out = a.value();
  double kink = std::numeric_limits<double>::infinity();
  for (double& v : out.storage()) {
    kink = std::min(kink, std::abs(v));
    if (v < 0) v = 0.0;
  }
  a.graph().NoteKink(kink);
  return a.graph().Emit(std::move(out), {a}, [a](Graph& g, const Tensor& go) {
    const Tensor& av = g.value(a);
    if (Tensor* sa = g.GradSink(a)) {
      for (std::size_t i = 0; i < go.size(); ++i)
        if (av[i] > 0) (*sa)[i] += go[i];
    }
  });
}

Var Sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.storage()) v = SigmoidScalar(v);
  Tensor y = out;
  return a.graph().Emit(std::move(out), {a}, [a, y = std::move(y)](Graph& g, const Tensor& go) {
    if (Tensor* sa = g.GradSink(a)) {
      for (std::size_t i = 0; i < go.size(); ++i)
        (*sa)[i] += go[i] * y[i] * (1.0 - y[i]);
    }
  });
}

Var Tanh(Var a) {
  Tensor out = a.value();
  for (double& v : out.storage()) v = std::tanh(v);
  Tensor y = out;
  return a.graph().Emit(std::move(out), {a}, [a, y = std::move(y)](Graph& g, const Tensor& go) {
    if (Tensor* sa = g.GradSink(a)) {
      for (std::size_t i = 0; i < go.size(); ++i)
        (*sa)[i] += go[i] * (1.0 - y[i] * y[i]);
    }
  });
}

Var Sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph().Emit(Tensor::Scalar(s), {a}, [a](Graph& g, const Tensor& go) {
    if (Tensor* sa = g.GradSink(a)) {
      for (double& v : sa->storage()) v += go[0];
    }
  });
}

Var SumSquares(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v * v;
  return a.graph().Emit(Tensor::Scalar(s), {a}, [a](Graph& g, const Tensor& go) {
    const Tensor& av = g.value(a);
    if (Tensor* sa = g.GradSink(a)) {
      for (std::size_t i = 0; i < av.size(); ++i) (*sa)[i] += 2.0 * av[i] * go[0];
    }
  });
}

Var SumAbs(Var a) {
  double s = 0.0;
  double kink = std::numeric_limits<double>::infinity();
  for (double v : a.value().data()) {
    s += std::abs(v);
    kink = std::min(kink, std::abs(v));
  }
  a.graph().NoteKink(kink);
  return a.graph().Emit(Tensor::Scalar(s), {a}, [a](Graph& g, const Tensor& go) {
    const Tensor& av = g.value(a);
    if (Tensor* sa = g.GradSink(a)) {
      for (std::size_t i = 0; i < av.size(); ++i) {
        if (av[i] > 0) (*sa)[i] += go[0];
        else if (av[i] < 0) (*sa)[i] -= go[0];
      }
    }
  });
}

Var WeightedSum(Var a, const Tensor& w) {
  if (w.shape() != a.shape()) FailUsage("weighted_sum: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * a.value()[i];
  return a.graph().Emit(Tensor::Scalar(s), {a}, [a, w](Graph& g, const Tensor& go) {
    if (Tensor* sa = g.GradSink(a)) {
      for (std::size_t i = 0; i < w.size(); ++i) (*sa)[i] += go[0] * w[i];
    }
  });
}

// ---------------------------------------------------------------------------
// linear algebra

Var MatMul(Var a, Var b) {
  RequireRank(a, 2, "matmul");
  RequireRank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    FailUsage("matmul: inner extents differ " + ShapeString(a.shape()) + " x " +
              ShapeString(b.shape()));
  }
  Tensor out({m, n});
  kernels::GemmNN(a.value().ptr(), b.value().ptr(), out.ptr(), m, k, n, false);
  return a.graph().Emit(std::move(out), {a, b}, [a, b, m, k, n](Graph& g, const Tensor& go) {
    if (Tensor* sa = g.GradSink(a)) {
      kernels::GemmNT(go.ptr(), g.value(b).ptr(), sa->ptr(), m, n, k, true);
    }
    if (Tensor* sb = g.GradSink(b)) {
      kernels::GemmTN(g.value(a).ptr(), go.ptr(), sb->ptr(), k, m, n, true);
    }
  });
}

Var MatMulNT(Var a, Var b) {
  RequireRank(a, 2, "matmul_nt");
  RequireRank(b, 2, "matmul_nt");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) FailUsage("matmul_nt: inner extents differ");
  Tensor out({m, n});
  kernels::GemmNT(a.value().ptr(), b.value().ptr(), out.ptr(), m, k, n, false);
  return a.graph().Emit(std::move(out), {a, b}, [a, b, m, k, n](Graph& g, const Tensor& go) {
    // out = a b^T: da = go b, db = go^T a
    if (Tensor* sa = g.GradSink(a)) {
      kernels::GemmNN(go.ptr(), g.value(b).ptr(), sa->ptr(), m, n, k, true);
    }
    if (Tensor* sb = g.GradSink(b)) {
      kernels::GemmTN(go.ptr(), g.value(a).ptr(), sb->ptr(), n, m, k, true);
    }
  });
}

Var Linear(Var x, Var w, Var bias) {
  RequireRank(x, 2, "linear");
  RequireRank(w, 2, "linear");
  const std::size_t m = x.shape()[0], k = x.shape()[1], n = w.shape()[1];
  if (w.shape()[0] != k) {
    FailUsage("linear: input extent " + std::to_string(k) +
              " does not match weight " + ShapeString(w.shape()));
  }
  const bool has_bias = bias.valid();
  if (has_bias && bias.value().size() != n) FailUsage("linear: bias extent mismatch");
  Tensor out({m, n});
  if (has_bias) {
    const Tensor& bv = bias.value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] = bv[j];
  }
  kernels::GemmNN(x.value().ptr(), w.value().ptr(), out.ptr(), m, k, n, has_bias);
  auto backward = [x, w, bias, has_bias, m, k, n](Graph& g, const Tensor& go) {
    if (Tensor* sx = g.GradSink(x)) {
      kernels::GemmNT(go.ptr(), g.value(w).ptr(), sx->ptr(), m, n, k, true);
    }
    if (Tensor* sw = g.GradSink(w)) {
      kernels::GemmTN(g.value(x).ptr(), go.ptr(), sw->ptr(), k, m, n, true);
    }
    if (has_bias) {
      if (Tensor* sb = g.GradSink(bias)) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) (*sb)[j] += go[i * n + j];
      }
    }
  };
  if (has_bias) return x.graph().Emit(std::move(out), {x, w, bias}, backward);
  return x.graph().Emit(std::move(out), {x, w}, backward);
}

// ---------------------------------------------------------------------------
// normalization

Var LayerNorm(Var x, Var gain, Var bias, double eps) {
  if (x.shape().empty()) FailUsage("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (d == 0) FailUsage("layer_norm: zero-width feature axis");
  if (gain.value().size() != d || bias.value().size() != d) {
    FailUsage("layer_norm: gain/bias extent must equal " + std::to_string(d));
  }
  if (!(eps > 0)) FailUsage("layer_norm: eps must be positive");
  const std::size_t rows = x.value().size() / d;
  const Tensor& xv = x.value();
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor xhat(x.shape());
  std::vector<double> inv(rows);
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.ptr() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    inv[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mean) * inv[r];
      xhat[r * d + j] = h;
      out[r * d + j] = gv[j] * h + bv[j];
    }
  }
  return x.graph().Emit(
      std::move(out), {x, gain, bias},
      [x, gain, bias, d, rows, xhat = std::move(xhat), inv = std::move(inv)](
          Graph& g, const Tensor& go) {
        const Tensor& gv = g.value(gain);
        if (Tensor* sg = g.GradSink(gain)) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j)
              (*sg)[j] += go[r * d + j] * xhat[r * d + j];
        }
        if (Tensor* sb = g.GradSink(bias)) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) (*sb)[j] += go[r * d + j];
        }
        if (Tensor* sx = g.GradSink(x)) {
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = go[r * d + j] * gv[j];
              mean_dh += dh;
              mean_dh_h += dh * xhat[r * d + j];
            }
            mean_dh *= inv_d;
            mean_dh_h *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = go[r * d + j] * gv[j];
              (*sx)[r * d + j] +=
                  inv[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
            }
          }
        }
      });
}

namespace {

Var SoftmaxNode(Var logits, Tensor out) {
  const std::size_t rows = out.dim(0), cols = out.dim(1);
  Tensor y = out;
  return logits.graph().Emit(
      std::move(out), {logits},
      [logits, rows, cols, y = std::move(y)](Graph& g, const Tensor& go) {
        Tensor* s = g.GradSink(logits);
        if (s == nullptr) return;
        for (std::size_t i = 0; i < rows; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < cols; ++j)
            dot += y[i * cols + j] * go[i * cols + j];
          for (std::size_t j = 0; j < cols; ++j)
            (*s)[i * cols + j] += y[i * cols + j] * (go[i * cols + j] - dot);
        }
      });
}

}  // namespace

Var Softmax(Var logits) {
  RequireRank(logits, 2, "softmax");
  const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
  if (cols == 0) FailUsage("empty attention row");
  const Tensor& lv = logits.value();
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    const double* z = lv.ptr() + i * cols;
    double* y = out.ptr() + i * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, z[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[j] = std::exp(z[j] - mx);
      total += y[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
  }
  return SoftmaxNode(logits, std::move(out));
}

Var MaskedSoftmax(Var logits, std::shared_ptr<const AttentionMask> mask) {
  RequireRank(logits, 2, "masked_softmax");
  const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
  if (!mask || mask->rows != rows || mask->cols != cols) {
    FailUsage("masked_softmax: mask shape does not match logits " +
              ShapeString(logits.shape()));
  }
  constexpr double kMasked = -1e30;
  const Tensor& lv = logits.value();
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    const double* z = lv.ptr() + i * cols;
    double* y = out.ptr() + i * cols;
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < cols; ++j) {
      const bool ok = mask->allowed(i, j);
      y[j] = ok ? z[j] : z[j] + kMasked;
      if (ok) {
        any = true;
        mx = std::max(mx, y[j]);
      }
    }
    if (!any) FailUsage("empty attention row");
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      // masked cells are forced to an exact zero
      y[j] = mask->allowed(i, j) ? std::exp(y[j] - mx) : 0.0;
      total += y[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
  }
  return SoftmaxNode(logits, std::move(out));
}

// ---------------------------------------------------------------------------
// shape manipulation

Var Reshape(Var a, Shape shape) {
  Tensor out = a.value().Reshaped(std::move(shape));
  return a.graph().Emit(std::move(out), {a}, [a](Graph& g, const Tensor& go) {
    if (Tensor* sa = g.GradSink(a)) {
      for (std::size_t i = 0; i < go.size(); ++i) (*sa)[i] += go[i];
    }
  });
}

Var Concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) FailUsage("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) FailUsage("concat: axis out of range");
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) FailUsage("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != s0[i]) {
        FailUsage("concat: extent mismatch " + ShapeString(s) + " vs " +
                  ShapeString(s0));
      }
    }
    out_shape[axis] += s[axis];
  }
  const AxisSplit os = SplitAt(out_shape, axis);
  Tensor out(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    const AxisSplit ps = SplitAt(p.shape(), axis);
    const double* src = p.value().ptr();
    const std::size_t chunk = ps.extent * ps.inner;
    for (std::size_t o = 0; o < os.outer; ++o) {
      std::copy(src + o * chunk, src + (o + 1) * chunk,
                out.ptr() + o * os.extent * os.inner + off * os.inner);
    }
    off += ps.extent;
  }
  auto backward = [parts, axis, offsets, os](Graph& g, const Tensor& go) {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      Tensor* s = g.GradSink(parts[k]);
      if (s == nullptr) continue;
      const AxisSplit ps = SplitAt(g.value(parts[k]).shape(), axis);
      const std::size_t chunk = ps.extent * ps.inner;
      for (std::size_t o = 0; o < os.outer; ++o) {
        const double* src = go.ptr() + o * os.extent * os.inner + offsets[k] * os.inner;
        double* dst = s->ptr() + o * chunk;
        for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
      }
    }
  };
  return parts[0].graph().Emit(std::move(out), parts, backward);
}

Var Slice(Var a, std::size_t axis, std::size_t begin, std::size_t length) {
  const Shape& s = a.shape();
  if (axis >= s.size() || begin + length > s[axis]) {
    FailUsage("slice: range out of bounds for " + ShapeString(s));
  }
  const AxisSplit as = SplitAt(s, axis);
  Shape out_shape = s;
  out_shape[axis] = length;
  Tensor out(out_shape);
  const double* src = a.value().ptr();
  for (std::size_t o = 0; o < as.outer; ++o) {
    std::copy(src + (o * as.extent + begin) * as.inner,
              src + (o * as.extent + begin + length) * as.inner,
              out.ptr() + o * length * as.inner);
  }
  return a.graph().Emit(std::move(out), {a}, [a, as, begin, length](Graph& g, const Tensor& go) {
    Tensor* sa = g.GradSink(a);
    if (sa == nullptr) return;
    for (std::size_t o = 0; o < as.outer; ++o) {
      const double* src = go.ptr() + o * length * as.inner;
      double* dst = sa->ptr() + (o * as.extent + begin) * as.inner;
      for (std::size_t i = 0; i < length * as.inner; ++i) dst[i] += src[i];
    }
  });
}

Var Select(Var a, std::size_t index) {
  const Shape& s = a.shape();
  if (s.empty() || index >= s[0]) FailUsage("select: index out of range");
  Shape rest(s.begin() + 1, s.end());
  if (rest.empty()) rest = {1};
  return Reshape(Slice(a, 0, index, 1), rest);
}

Var Stack(const std::vector<Var>& parts) {
  std::vector<Var> expanded;
  expanded.reserve(parts.size());
  for (const Var& p : parts) {
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    expanded.push_back(Reshape(p, s));
  }
  return Concat(expanded, 0);
}

Var Transpose01(Var a) {
  const Shape& s = a.shape();
  if (s.size() < 2) FailUsage("transpose01: rank < 2");
  const std::size_t n0 = s[0], n1 = s[1];
  std::size_t inner = 1;
  for (std::size_t i = 2; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  std::swap(out_shape[0], out_shape[1]);
  Tensor out(out_shape);
  const double* src = a.value().ptr();
  for (std::size_t i = 0; i < n0; ++i)
    for (std::size_t j = 0; j < n1; ++j)
      std::copy(src + (i * n1 + j) * inner, src + (i * n1 + j + 1) * inner,
                out.ptr() + (j * n0 + i) * inner);
  return a.graph().Emit(std::move(out), {a}, [a, n0, n1, inner](Graph& g, const Tensor& go) {
    Tensor* sa = g.GradSink(a);
    if (sa == nullptr) return;
    for (std::size_t i = 0; i < n0; ++i)
      for (std::size_t j = 0; j < n1; ++j) {
        const double* src = go.ptr() + (j * n0 + i) * inner;
        double* dst = sa->ptr() + (i * n1 + j) * inner;
        for (std::size_t q = 0; q < inner; ++q) dst[q] += src[q];
      }
  });
}

// ---------------------------------------------------------------------------
// convolution

namespace {

struct ConvDims {
  std::size_t batch, c_in, c_out, t, f_in, f_out;
};

// y[b,o,t,j] += sum_{c,a,e} k[o,c,a,e] x[b,c,t-1+a,2j+e]
void ConvForward(const double* x, const double* k, double* y, const ConvDims& d) {
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t o = 0; o < d.c_out; ++o)
      for (std::size_t c = 0; c < d.c_in; ++c)
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t e = 0; e < 2; ++e) {
            const double kv = k[((o * d.c_in + c) * 2 + a) * 2 + e];
            for (std::size_t t = 0; t < d.t; ++t) {
              if (t + a < 1) continue;
              const std::size_t ts = t + a - 1;
              const double* xr = x + ((b * d.c_in + c) * d.t + ts) * d.f_in;
              double* yr = y + ((b * d.c_out + o) * d.t + t) * d.f_out;
              for (std::size_t j = 0; j < d.f_out; ++j) yr[j] += kv * xr[2 * j + e];
            }
          }
}

void ConvBackwardData(const double* gy, const double* k, double* gx, const ConvDims& d) {
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t o = 0; o < d.c_out; ++o)
      for (std::size_t c = 0; c < d.c_in; ++c)
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t e = 0; e < 2; ++e) {
            const double kv = k[((o * d.c_in + c) * 2 + a) * 2 + e];
            for (std::size_t t = 0; t < d.t; ++t) {
              if (t + a < 1) continue;
              const std::size_t ts = t + a - 1;
              double* xr = gx + ((b * d.c_in + c) * d.t + ts) * d.f_in;
              const double* yr = gy + ((b * d.c_out + o) * d.t + t) * d.f_out;
              for (std::size_t j = 0; j < d.f_out; ++j) xr[2 * j + e] += kv * yr[j];
            }
          }
}

void ConvBackwardKernel(const double* gy, const double* x, double* gk, const ConvDims& d) {
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t o = 0; o < d.c_out; ++o)
      for (std::size_t c = 0; c < d.c_in; ++c)
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t e = 0; e < 2; ++e) {
            double acc = 0.0;
            for (std::size_t t = 0; t < d.t; ++t) {
              if (t + a < 1) continue;
              const std::size_t ts = t + a - 1;
              const double* xr = x + ((b * d.c_in + c) * d.t + ts) * d.f_in;
              const double* yr = gy + ((b * d.c_out + o) * d.t + t) * d.f_out;
              for (std::size_t j = 0; j < d.f_out; ++j) acc += yr[j] * xr[2 * j + e];
            }
            gk[((o * d.c_in + c) * 2 + a) * 2 + e] += acc;
          }
}

// Transposed: y[b,o,t,2j+e] += sum_{c,a} k[c,o,a,e] x[b,c,t-1+a,j]
struct DeconvDims {
  std::size_t batch, c_in, c_out, t, f_in;  // f_out = 2 f_in
};

void DeconvForward(const double* x, const double* k, double* y, const DeconvDims& d) {
  const std::size_t f_out = 2 * d.f_in;
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t c = 0; c < d.c_in; ++c)
      for (std::size_t o = 0; o < d.c_out; ++o)
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t e = 0; e < 2; ++e) {
            const double kv = k[((c * d.c_out + o) * 2 + a) * 2 + e];
            for (std::size_t t = 0; t < d.t; ++t) {
              if (t + a < 1) continue;
              const std::size_t ts = t + a - 1;
              const double* xr = x + ((b * d.c_in + c) * d.t + ts) * d.f_in;
              double* yr = y + ((b * d.c_out + o) * d.t + t) * f_out;
              for (std::size_t j = 0; j < d.f_in; ++j) yr[2 * j + e] += kv * xr[j];
            }
          }
}

}  // namespace

Var CausalConv2d(Var x, Var kernel, Var bias) {
  RequireRank(x, 4, "causal_conv2d");
  RequireRank(kernel, 4, "causal_conv2d kernel");
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  if (ks[2] != 2 || ks[3] != 2) FailUsage("causal_conv2d: kernel must be 2x2");
  if (ks[1] != xs[1]) FailUsage("causal_conv2d: input channels do not match kernel");
  if (xs[3] < 2) {
    FailUsage("causal_conv2d: frequency extent " + std::to_string(xs[3]) +
              " smaller than kernel");
  }
  const ConvDims d{xs[0], xs[1], ks[0], xs[2], xs[3], xs[3] / 2};
  if (bias.value().size() != d.c_out) FailUsage("causal_conv2d: bias extent mismatch");
  Tensor out({d.batch, d.c_out, d.t, d.f_out});
  const Tensor& bv = bias.value();
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t o = 0; o < d.c_out; ++o) {
      double* yr = out.ptr() + (b * d.c_out + o) * d.t * d.f_out;
      std::fill(yr, yr + d.t * d.f_out, bv[o]);
    }
  ConvForward(x.value().ptr(), kernel.value().ptr(), out.ptr(), d);
  return x.graph().Emit(std::move(out), {x, kernel, bias}, [x, kernel, bias, d](Graph& g, const Tensor& go) {
    if (Tensor* sx = g.GradSink(x)) ConvBackwardData(go.ptr(), g.value(kernel).ptr(), sx->ptr(), d);
    if (Tensor* sk = g.GradSink(kernel)) ConvBackwardKernel(go.ptr(), g.value(x).ptr(), sk->ptr(), d);
    if (Tensor* sb = g.GradSink(bias)) {
      for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t o = 0; o < d.c_out; ++o) {
          const double* yr = go.ptr() + (b * d.c_out + o) * d.t * d.f_out;
          double acc = 0.0;
          for (std::size_t i = 0; i < d.t * d.f_out; ++i) acc += yr[i];
          (*sb)[o] += acc;
        }
    }
  });
}

Tensor CausalConv2dAdjoint(const Tensor& grad_out, const Tensor& kernel,
                           std::size_t freq_in) {
  const Shape& gs = grad_out.shape();
  const Shape& ks = kernel.shape();
  if (gs.size() != 4 || ks.size() != 4 || ks[0] != gs[1] || freq_in / 2 != gs[3]) {
    FailUsage("causal_conv2d_adjoint: inconsistent shapes");
  }
  const ConvDims d{gs[0], ks[1], ks[0], gs[2], freq_in, gs[3]};
  Tensor gx({d.batch, d.c_in, d.t, d.f_in});
  ConvBackwardData(grad_out.ptr(), kernel.ptr(), gx.ptr(), d);
  return gx;
}

Var CausalConvTranspose2d(Var x, Var kernel, Var bias) {
  RequireRank(x, 4, "causal_conv_transpose2d");
  RequireRank(kernel, 4, "causal_conv_transpose2d kernel");
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  if (ks[2] != 2 || ks[3] != 2) FailUsage("causal_conv_transpose2d: kernel must be 2x2");
  if (ks[0] != xs[1]) {
    FailUsage("causal_conv_transpose2d: input channels " + std::to_string(xs[1]) +
              " do not match kernel " + ShapeString(ks));
  }
  const DeconvDims d{xs[0], xs[1], ks[1], xs[2], xs[3]};
  const std::size_t f_out = 2 * d.f_in;
  if (bias.value().size() != d.c_out) FailUsage("causal_conv_transpose2d: bias extent mismatch");
  Tensor out({d.batch, d.c_out, d.t, f_out});
  const Tensor& bv = bias.value();
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t o = 0; o < d.c_out; ++o) {
      double* yr = out.ptr() + (b * d.c_out + o) * d.t * f_out;
      std::fill(yr, yr + d.t * f_out, bv[o]);
    }
  DeconvForward(x.value().ptr(), kernel.value().ptr(), out.ptr(), d);
  return x.graph().Emit(std::move(out), {x, kernel, bias}, [x, kernel, bias, d](Graph& g, const Tensor& go) {
    const std::size_t f_out = 2 * d.f_in;
    const double* k = g.value(kernel).ptr();
    const double* xv = g.value(x).ptr();
    Tensor* sx = g.GradSink(x);
    Tensor* sk = g.GradSink(kernel);
    for (std::size_t b = 0; b < d.batch; ++b)
      for (std::size_t c = 0; c < d.c_in; ++c)
        for (std::size_t o = 0; o < d.c_out; ++o)
          for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t e = 0; e < 2; ++e) {
              const std::size_t ki = ((c * d.c_out + o) * 2 + a) * 2 + e;
              double acc = 0.0;
              for (std::size_t t = 0; t < d.t; ++t) {
                if (t + a < 1) continue;
                const std::size_t ts = t + a - 1;
                const std::size_t xoff = ((b * d.c_in + c) * d.t + ts) * d.f_in;
                const double* yr = go.ptr() + ((b * d.c_out + o) * d.t + t) * f_out;
                if (sx) {
                  double* gxr = sx->ptr() + xoff;
                  for (std::size_t j = 0; j < d.f_in; ++j) gxr[j] += k[ki] * yr[2 * j + e];
                }
                if (sk) {
                  const double* xr = xv + xoff;
                  for (std::size_t j = 0; j < d.f_in; ++j) acc += yr[2 * j + e] * xr[j];
                }
              }
              if (sk) (*sk)[ki] += acc;
            }
    if (Tensor* sb = g.GradSink(bias)) {
      for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t o = 0; o < d.c_out; ++o) {
          const double* yr = go.ptr() + (b * d.c_out + o) * d.t * f_out;
          double acc = 0.0;
          for (std::size_t i = 0; i < d.t * f_out; ++i) acc += yr[i];
          (*sb)[o] += acc;
        }
    }
  });
}

Var Glu(Var x) {
  RequireRank(x, 4, "glu");
  const Shape& s = x.shape();
  if (s[1] % 2 != 0) {
    FailUsage("glu: channel extent " + std::to_string(s[1]) + " is odd");
  }
  const std::size_t half = s[1] / 2;
  const std::size_t plane = s[2] * s[3];
  Tensor out({s[0], half, s[2], s[3]});
  Tensor sig({s[0], half, s[2], s[3]});
  const double* xv = x.value().ptr();
  for (std::size_t b = 0; b < s[0]; ++b)
    for (std::size_t c = 0; c < half; ++c) {
      const double* av = xv + (b * s[1] + c) * plane;
      const double* gv = xv + (b * s[1] + c + half) * plane;
      double* o = out.ptr() + (b * half + c) * plane;
      double* sg = sig.ptr() + (b * half + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sg[i] = SigmoidScalar(gv[i]);
        o[i] = av[i] * sg[i];
      }
    }
  return x.graph().Emit(std::move(out), {x}, [x, s, half, plane, sig = std::move(sig)](Graph& g, const Tensor& go) {
    Tensor* sx = g.GradSink(x);
    if (sx == nullptr) return;
    const double* xv = g.value(x).ptr();
    for (std::size_t b = 0; b < s[0]; ++b)
      for (std::size_t c = 0; c < half; ++c) {
        const double* av = xv + (b * s[1] + c) * plane;
        const double* sg = sig.ptr() + (b * half + c) * plane;
        const double* gr = go.ptr() + (b * half + c) * plane;
        double* da = sx->ptr() + (b * s[1] + c) * plane;
        double* dg = sx->ptr() + (b * s[1] + c + half) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          da[i] += gr[i] * sg[i];
          dg[i] += gr[i] * av[i] * sg[i] * (1.0 - sg[i]);
        }
      }
  });
}

Var BatchNorm(Var x, Var gamma, Var beta, const Tensor& running_mean,
              const Tensor& running_var, BatchNormMode mode, double eps,
              BatchStatistics* observed) {
  RequireRank(x, 4, "batch_norm");
  const Shape& s = x.shape();
  const std::size_t nb = s[0], nc = s[1], plane = s[2] * s[3];
  if (gamma.value().size() != nc || beta.value().size() != nc ||
      running_mean.size() != nc || running_var.size() != nc) {
    FailUsage("batch_norm: parameter extent mismatch for " + ShapeString(s));
  }
  const double count = static_cast<double>(nb * plane);
  std::vector<double> mean(nc), inv(nc);
  const double* xv = x.value().ptr();
  const bool batch_stats = mode == BatchNormMode::kBatchStatistics;
  if (batch_stats && nb * plane < 2) FailUsage("batch_norm: need >= 2 values per channel");
  BatchStatistics stats;
  for (std::size_t c = 0; c < nc; ++c) {
    if (batch_stats) {
      double m = 0.0;
      for (std::size_t b = 0; b < nb; ++b) {
        const double* xr = xv + (b * nc + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) m += xr[i];
      }
      m /= count;
      double v = 0.0;
      for (std::size_t b = 0; b < nb; ++b) {
        const double* xr = xv + (b * nc + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) v += (xr[i] - m) * (xr[i] - m);
      }
      v /= count;
      mean[c] = m;
      inv[c] = 1.0 / std::sqrt(v + eps);
      stats.mean.push_back(m);
      stats.var.push_back(v);
    } else {
      mean[c] = running_mean[c];
      inv[c] = 1.0 / std::sqrt(running_var[c] + eps);
    }
  }
  if (observed && batch_stats) *observed = stats;
  Tensor xhat(s);
  Tensor out(s);
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t c = 0; c < nc; ++c) {
      const std::size_t off = (b * nc + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double h = (xv[off + i] - mean[c]) * inv[c];
        xhat[off + i] = h;
        out[off + i] = gv[c] * h + bv[c];
      }
    }
  return x.graph().Emit(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, nb, nc, plane, count, batch_stats, inv = std::move(inv),
       xhat = std::move(xhat)](Graph& g, const Tensor& go) {
        const Tensor& gv = g.value(gamma);
        std::vector<double> sum_g(nc, 0.0), sum_gh(nc, 0.0);
        for (std::size_t b = 0; b < nb; ++b)
          for (std::size_t c = 0; c < nc; ++c) {
            const std::size_t off = (b * nc + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_g[c] += go[off + i];
              sum_gh[c] += go[off + i] * xhat[off + i];
            }
          }
        if (Tensor* sg = g.GradSink(gamma))
          for (std::size_t c = 0; c < nc; ++c) (*sg)[c] += sum_gh[c];
        if (Tensor* sb = g.GradSink(beta))
          for (std::size_t c = 0; c < nc; ++c) (*sb)[c] += sum_g[c];
        Tensor* sx = g.GradSink(x);
        if (sx == nullptr) return;
        for (std::size_t b = 0; b < nb; ++b)
          for (std::size_t c = 0; c < nc; ++c) {
            const std::size_t off = (b * nc + c) * plane;
            const double scale = gv[c] * inv[c];
            if (batch_stats) {
              const double mg = sum_g[c] / count;
              const double mgh = sum_gh[c] / count;
              for (std::size_t i = 0; i < plane; ++i)
                (*sx)[off + i] += scale * (go[off + i] - mg - xhat[off + i] * mgh);
            } else {
              for (std::size_t i = 0; i < plane; ++i) (*sx)[off + i] += scale * go[off + i];
            }
          }
      });
}

// ---------------------------------------------------------------------------
// recurrence

void LstmStep(const double* x, const LstmState& prev, const Tensor& w_ih,
              const Tensor& w_hh, const Tensor& bias, LstmState& next,
              double* gates) {
  const std::size_t d_in = w_ih.shape()[0];
  const std::size_t g4 = w_ih.shape()[1];
  const std::size_t h = g4 / 4;
  std::vector<double> z(bias.storage());
  for (std::size_t p = 0; p < d_in; ++p) {
    const double xv = x[p];
    const double* wr = w_ih.ptr() + p * g4;
    for (std::size_t j = 0; j < g4; ++j) z[j] += xv * wr[j];
  }
  for (std::size_t p = 0; p < h; ++p) {
    const double hv = prev.h[p];
    const double* wr = w_hh.ptr() + p * g4;
    for (std::size_t j = 0; j < g4; ++j) z[j] += hv * wr[j];
  }
  next.h.resize(h);
  next.c.resize(h);
  for (std::size_t j = 0; j < h; ++j) {
    const double ig = SigmoidScalar(z[j]);
    const double fg = SigmoidScalar(z[h + j]);
    const double gg = std::tanh(z[2 * h + j]);
    const double og = SigmoidScalar(z[3 * h + j]);
    const double c = fg * prev.c[j] + ig * gg;
    next.c[j] = c;
    next.h[j] = og * std::tanh(c);
    if (gates) {
      gates[j] = ig;
      gates[h + j] = fg;
      gates[2 * h + j] = gg;
      gates[3 * h + j] = og;
    }
  }
}

Var LstmSequence(Var x, Var w_ih, Var w_hh, Var bias, const LstmState* initial,
                 LstmState* final_state) {
  RequireRank(x, 2, "lstm");
  RequireRank(w_ih, 2, "lstm w_ih");
  RequireRank(w_hh, 2, "lstm w_hh");
  const std::size_t t = x.shape()[0], d_in = x.shape()[1];
  const std::size_t g4 = w_ih.shape()[1], h = g4 / 4;
  if (w_ih.shape()[0] != d_in || g4 % 4 != 0 || w_hh.shape()[0] != h ||
      w_hh.shape()[1] != g4 || bias.value().size() != g4) {
    FailUsage("lstm: inconsistent parameter shapes");
  }
  LstmState state;
  if (initial) {
    if (initial->h.size() != h || initial->c.size() != h) FailUsage("lstm: bad initial state");
    state = *initial;
  } else {
    state.h.assign(h, 0.0);
    state.c.assign(h, 0.0);
  }
  // saved per step: h_prev, c_prev, gates, c
  std::vector<double> h_prev(t * h), c_prev(t * h), gates(t * g4), c_all(t * h);
  Tensor out({t, h});
  LstmState next;
  for (std::size_t s = 0; s < t; ++s) {
    std::copy(state.h.begin(), state.h.end(), h_prev.begin() + s * h);
    std::copy(state.c.begin(), state.c.end(), c_prev.begin() + s * h);
    LstmStep(x.value().ptr() + s * d_in, state, w_ih.value(), w_hh.value(),
             bias.value(), next, gates.data() + s * g4);
    std::copy(next.c.begin(), next.c.end(), c_all.begin() + s * h);
    std::copy(next.h.begin(), next.h.end(), out.ptr() + s * h);
    std::swap(state, next);
  }
  if (final_state) *final_state = state;
  return x.graph().Emit(
      std::move(out), {x, w_ih, w_hh, bias},
      [x, w_ih, w_hh, bias, t, d_in, h, g4, h_prev = std::move(h_prev),
       c_prev = std::move(c_prev), gates = std::move(gates),
       c_all = std::move(c_all)](Graph& g, const Tensor& go) {
        const Tensor& wih = g.value(w_ih);
        const Tensor& whh = g.value(w_hh);
        const double* xv = g.value(x).ptr();
        Tensor* sx = g.GradSink(x);
        Tensor* swih = g.GradSink(w_ih);
        Tensor* swhh = g.GradSink(w_hh);
        Tensor* sb = g.GradSink(bias);
        std::vector<double> dh_next(h, 0.0), dc_next(h, 0.0), dz(g4);
        for (std::size_t s = t; s-- > 0;) {
          const double* gt = gates.data() + s * g4;
          for (std::size_t j = 0; j < h; ++j) {
            const double ig = gt[j], fg = gt[h + j], gg = gt[2 * h + j], og = gt[3 * h + j];
            const double tc = std::tanh(c_all[s * h + j]);
            const double dh = go[s * h + j] + dh_next[j];
            const double dc = dh * og * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * gg * ig * (1.0 - ig);
            dz[h + j] = dc * c_prev[s * h + j] * fg * (1.0 - fg);
            dz[2 * h + j] = dc * ig * (1.0 - gg * gg);
            dz[3 * h + j] = dh * tc * og * (1.0 - og);
            dc_next[j] = dc * fg;
          }
          // dh_next = W_hh dz
          for (std::size_t p = 0; p < h; ++p) {
            const double* wr = whh.ptr() + p * g4;
            double acc = 0.0;
            for (std::size_t j = 0; j < g4; ++j) acc += wr[j] * dz[j];
            dh_next[p] = acc;
          }
          if (sx) {
            for (std::size_t p = 0; p < d_in; ++p) {
              const double* wr = wih.ptr() + p * g4;
              double acc = 0.0;
              for (std::size_t j = 0; j < g4; ++j) acc += wr[j] * dz[j];
              (*sx)[s * d_in + p] += acc;
            }
          }
          if (swih) {
            for (std::size_t p = 0; p < d_in; ++p) {
              const double xp = xv[s * d_in + p];
              double* gr = swih->ptr() + p * g4;
              for (std::size_t j = 0; j < g4; ++j) gr[j] += xp * dz[j];
            }
          }
          if (swhh) {
            for (std::size_t p = 0; p < h; ++p) {
              const double hp = h_prev[s * h + p];
              double* gr = swhh->ptr() + p * g4;
              for (std::size_t j = 0; j < g4; ++j) gr[j] += hp * dz[j];
            }
          }
          if (sb) {
            for (std::size_t j = 0; j < g4; ++j) (*sb)[j] += dz[j];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// complex planes

namespace {

void RequirePlanes(const Var& a, const char* op) {
  if (a.shape().empty() || a.shape()[0] != 2) {
    FailUsage(std::string(op) + ": expected leading plane axis of 2, got " +
              ShapeString(a.shape()));
  }
}

// tanh(rho)/rho and (d/drho (tanh(rho)/rho)) / rho
void GateTerms(double rho, double& ratio, double& q) {
  if (rho < 1e-3) {
    const double r2 = rho * rho;
    ratio = 1.0 - r2 / 3.0 + 2.0 * r2 * r2 / 15.0;
    q = -2.0 / 3.0 + 8.0 * r2 / 15.0;
    return;
  }
  const double th = std::tanh(rho);
  const double sech2 = 1.0 - th * th;
  ratio = th / rho;
  q = (rho * sech2 - th) / (rho * rho * rho);
}

}  // namespace

Var ComplexGate(Var raw, double bound) {
  RequirePlanes(raw, "complex_gate");
  const std::size_t n = raw.value().size() / 2;
  const double* re = raw.value().ptr();
  const double* im = re + n;
  Tensor out(raw.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double ratio, q;
    GateTerms(std::hypot(re[i], im[i]), ratio, q);
    out[i] = bound * ratio * re[i];
    out[n + i] = bound * ratio * im[i];
  }
  return raw.graph().Emit(std::move(out), {raw}, [raw, n, bound](Graph& g, const Tensor& go) {
    Tensor* s = g.GradSink(raw);
    if (s == nullptr) return;
    const double* re = g.value(raw).ptr();
    const double* im = re + n;
    for (std::size_t i = 0; i < n; ++i) {
      double ratio, q;
      GateTerms(std::hypot(re[i], im[i]), ratio, q);
      const double proj = re[i] * go[i] + im[i] * go[n + i];
      (*s)[i] += bound * (ratio * go[i] + re[i] * q * proj);
      (*s)[n + i] += bound * (ratio * go[n + i] + im[i] * q * proj);
    }
  });
}

Var ComplexMul(Var a, Var b) {
  RequirePlanes(a, "complex_mul");
  RequireSameShape(a, b, "complex_mul");
  const std::size_t n = a.value().size() / 2;
  const double* ar = a.value().ptr();
  const double* ai = ar + n;
  const double* br = b.value().ptr();
  const double* bi = br + n;
  Tensor out(a.shape());
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = ar[k] * br[k] - ai[k] * bi[k];
    out[n + k] = ar[k] * bi[k] + ai[k] * br[k];
  }
  return a.graph().Emit(std::move(out), {a, b}, [a, b, n](Graph& g, const Tensor& go) {
    const double* ar = g.value(a).ptr();
    const double* ai = ar + n;
    const double* br = g.value(b).ptr();
    const double* bi = br + n;
    const double* gr = go.ptr();
    const double* gi = gr + n;
    if (Tensor* sa = g.GradSink(a)) {
      for (std::size_t k = 0; k < n; ++k) {
        (*sa)[k] += gr[k] * br[k] + gi[k] * bi[k];
        (*sa)[n + k] += -gr[k] * bi[k] + gi[k] * br[k];
      }
    }
    if (Tensor* sb = g.GradSink(b)) {
      for (std::size_t k = 0; k < n; ++k) {
        (*sb)[k] += gr[k] * ar[k] + gi[k] * ai[k];
        (*sb)[n + k] += -gr[k] * ai[k] + gi[k] * ar[k];
      }
    }
  });
}

Var WeightedComplexAbsSum(Var diff, const Tensor& weights) {
  RequirePlanes(diff, "weighted_complex_abs_sum");
  const std::size_t n = diff.value().size() / 2;
  const std::size_t kb = weights.size();
  if (kb == 0 || n % kb != 0 || diff.shape().back() != kb) {
    FailUsage("weighted_complex_abs_sum: weight extent does not match last axis");
  }
  const double* re = diff.value().ptr();
  const double* im = re + n;
  double total = 0.0;
  double kink = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double rho = std::hypot(re[i], im[i]);
    kink = std::min(kink, rho);
    total += weights[i % kb] * rho;
  }
  diff.graph().NoteKink(kink);
  return diff.graph().Emit(Tensor::Scalar(total), {diff}, [diff, weights, n, kb](Graph& g, const Tensor& go) {
    Tensor* s = g.GradSink(diff);
    if (s == nullptr) return;
    const double* re = g.value(diff).ptr();
    const double* im = re + n;
    for (std::size_t i = 0; i < n; ++i) {
      const double rho = std::hypot(re[i], im[i]);
      if (rho == 0.0) continue;
      const double w = go[0] * weights[i % kb] / rho;
      (*s)[i] += w * re[i];
      (*s)[n + i] += w * im[i];
    }
  });
}

Var WeightedComplexSquareSum(Var diff, const Tensor& weights) {
  RequirePlanes(diff, "weighted_complex_square_sum");
  const std::size_t n = diff.value().size() / 2;
  const std::size_t kb = weights.size();
  if (kb == 0 || n % kb != 0 || diff.shape().back() != kb) {
    FailUsage("weighted_complex_square_sum: weight extent does not match last axis");
  }
  const double* re = diff.value().ptr();
  const double* im = re + n;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += weights[i % kb] * (re[i] * re[i] + im[i] * im[i]);
  return diff.graph().Emit(Tensor::Scalar(total), {diff}, [diff, weights, n, kb](Graph& g, const Tensor& go) {
    Tensor* s = g.GradSink(diff);
    if (s == nullptr) return;
    const double* re = g.value(diff).ptr();
    const double* im = re + n;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = 2.0 * go[0] * weights[i % kb];
      (*s)[i] += w * re[i];
      (*s)[n + i] += w * im[i];
    }
  });
}

}  // namespace sca_aec::ops
