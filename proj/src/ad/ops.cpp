#include "hoit/ad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hoit/errors.hpp"
#include "kernels.hpp"

namespace hoit::ad {

namespace {

std::vector<double>* input_grad(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  return in.requires_grad ? &in.grad_buffer() : nullptr;
}

const std::vector<double>& input_value(const Node& self, std::size_t i) {
  return self.inputs[i]->value;
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

void require_finite(std::span<const double> v, std::string_view op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(op) + ": non-finite input");
    }
  }
}

// Splits `shape` around `axis` into (outer, extent, inner) for strided loops.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, std::string_view op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " invalid for shape " + to_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, std::string_view op, F f,
              DA da, DB db) {
  require_same_shape(a, b, op);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
  return make_result(a.shape(), std::move(out), {a, b}, op, [da, db](Node& self) {
    const auto& x = input_value(self, 0);
    const auto& y = input_value(self, 1);
    const auto& g = self.grad;
    if (auto* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * da(x[i], y[i]);
    }
    if (auto* gy = input_grad(self, 1)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gy)[i] += g[i] * db(x[i], y[i]);
    }
  });
}

// `df(x, y)` is the local derivative given input x and output y.
template <class F, class DF>
Tensor unary(const Tensor& x, std::string_view op, F f, DF df) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result(x.shape(), std::move(out), {x}, op, [df](Node& self) {
    const auto& in = input_value(self, 0);
    const auto& g = self.grad;
    if (auto* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*gx)[i] += g[i] * df(in[i], self.value[i]);
      }
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

// Ties route the gradient to the first argument.
Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "maximum", [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y) { return x >= y ? 0.0 : 1.0; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "minimum", [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      x, "add_scalar", [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 || std::isnan(v) ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input");
  }
  return unary(
      x, "log", [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, "abs", [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result({}, {total}, {x}, "sum", [](Node& self) {
    if (auto* gx = input_grad(self, 0)) {
      const double g = self.grad[0];
      for (double& v : *gx) v += g;
    }
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_last(const Tensor& x) {
  if (x.dim() == 0) throw ShapeError("sum_last: 0-d tensor");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = cols ? x.numel() / cols : 0;
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  std::vector<double> out(rows, 0.0);
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r] += xv[r * cols + c];
  }
  return make_result(std::move(out_shape), std::move(out), {x}, "sum_last",
                     [rows, cols](Node& self) {
                       if (auto* gx = input_grad(self, 0)) {
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t c = 0; c < cols; ++c) {
                             (*gx)[r * cols + c] += self.grad[r];
                           }
                         }
                       }
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(0)) {
    throw ShapeError("matmul: shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + " are not conformable");
  }
  const std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {a, b}, "matmul", [m, k, n](Node& self) {
    const auto& av = input_value(self, 0);
    const auto& bv = input_value(self, 1);
    const auto& g = self.grad;
    if (auto* ga = input_grad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          (*ga)[i * k + p] += acc;
        }
      }
    }
    if (auto* gb = input_grad(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          double* grow = gb->data() + p * n;
          for (std::size_t j = 0; j < n; ++j) grow[j] += aip * g[i * n + j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& x) {
  if (x.dim() != 2) throw ShapeError("transpose: expected 2-d, got " + to_string(x.shape()));
  const std::size_t r = x.size(0), c = x.size(1);
  const auto xv = x.values();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  }
  return make_result({c, r}, std::move(out), {x}, "transpose", [r, c](Node& self) {
    if (auto* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += self.grad[j * r + i];
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " +
                     to_string(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {x}, "reshape", [](Node& self) {
    if (auto* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += self.grad[i];
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape out_shape = parts.front().shape();
  const AxisSplit first = split_axis(out_shape, axis, "concat");
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != out_shape.size()) {
      throw ShapeError("concat: rank mismatch " + to_string(out_shape) + " vs " +
                       to_string(probe));
    }
    probe[axis] = out_shape[axis];
    if (probe != out_shape) {
      throw ShapeError("concat: shape mismatch " + to_string(parts.front().shape()) +
                       " vs " + to_string(p.shape()));
    }
    extents.push_back(p.shape()[axis]);
    total += p.shape()[axis];
  }
  out_shape[axis] = total;
  const std::size_t outer = first.outer, inner = first.inner;
  std::vector<double> out(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].values();
    const std::size_t block = extents[k] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.data() + o * block, block,
                  out.data() + o * total * inner + offset * inner);
    }
    offset += extents[k];
  }
  return make_result(std::move(out_shape), std::move(out), parts, "concat",
                     [extents, outer, inner, total](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < extents.size(); ++k) {
                         const std::size_t block = extents[k] * inner;
                         if (auto* gp = input_grad(self, k)) {
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double* src =
                                 self.grad.data() + o * total * inner + offset * inner;
                             double* dst = gp->data() + o * block;
                             for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                           }
                         }
                         offset += extents[k];
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit s = split_axis(x.shape(), axis, "slice");
  if (begin > end || end > s.extent) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") out of bounds for " + to_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t len = end - begin;
  std::vector<double> out(numel(out_shape));
  const auto xv = x.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xv.data() + (o * s.extent + begin) * s.inner, len * s.inner,
                out.data() + o * len * s.inner);
  }
  return make_result(std::move(out_shape), std::move(out), {x}, "slice",
                     [s, begin, len](Node& self) {
                       if (auto* gx = input_grad(self, 0)) {
                         for (std::size_t o = 0; o < s.outer; ++o) {
                           const double* src = self.grad.data() + o * len * s.inner;
                           double* dst = gx->data() + (o * s.extent + begin) * s.inner;
                           for (std::size_t i = 0; i < len * s.inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "softmax");
  require_finite(x.values(), "softmax");
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      double mx = -INFINITY;
      for (std::size_t k = 0; k < s.extent; ++k) mx = std::max(mx, xv[base + k * s.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.extent; ++k) {
        const double e = std::exp(xv[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] /= z;
    }
  }
  return make_result(x.shape(), std::move(out), {x}, "softmax", [s](Node& self) {
    auto* gx = input_grad(self, 0);
    if (!gx) return;
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.extent * s.inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < s.extent; ++k) {
          dot += g[base + k * s.inner] * y[base + k * s.inner];
        }
        for (std::size_t k = 0; k < s.extent; ++k) {
          const std::size_t i = base + k * s.inner;
          (*gx)[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.dim() == 0) throw ShapeError("layer_norm: 0-d input");
  const std::size_t c = x.shape().back();
  if (gain.shape() != Shape{c} || bias.shape() != Shape{c}) {
    throw ShapeError("layer_norm: input " + to_string(x.shape()) + " with gain " +
                     to_string(gain.shape()) + " and bias " + to_string(bias.shape()));
  }
  const std::size_t rows = x.numel() / c;
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  std::vector<double> out(xv.size());
  std::vector<double> normalized(xv.size());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      const double xh = (row[j] - mu) * rstd[r];
      normalized[r * c + j] = xh;
      out[r * c + j] = xh * gv[j] + bv[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gain, bias}, "layer_norm",
      [rows, c, normalized = std::move(normalized), rstd = std::move(rstd)](Node& self) {
        const auto& g = self.grad;
        const auto& gv = input_value(self, 1);
        auto* gx = input_grad(self, 0);
        auto* gg = input_grad(self, 1);
        auto* gb = input_grad(self, 2);
        const double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * c;
          const double* xh = normalized.data() + r * c;
          if (gg || gb) {
            for (std::size_t j = 0; j < c; ++j) {
              if (gg) (*gg)[j] += gr[j] * xh[j];
              if (gb) (*gb)[j] += gr[j];
            }
          }
          if (gx) {
            double sum_d = 0.0, sum_dx = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double d = gr[j] * gv[j];
              sum_d += d;
              sum_dx += d * xh[j];
            }
            for (std::size_t j = 0; j < c; ++j) {
              const double d = gr[j] * gv[j];
              (*gx)[r * c + j] += rstd[r] * (d - inv_c * sum_d - xh[j] * inv_c * sum_dx);
            }
          }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.dim() == 0 || weight.dim() != 2 || x.shape().back() != weight.size(1)) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " vs weight " +
                     to_string(weight.shape()));
  }
  const std::size_t in = weight.size(1), out_f = weight.size(0);
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{out_f}) {
    throw ShapeError("linear: weight " + to_string(weight.shape()) + " vs bias " +
                     to_string(bias.shape()));
  }
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_f;
  const auto xv = x.values();
  const auto wv = weight.values();
  const double* bv = has_bias ? bias.values().data() : nullptr;
  std::vector<double> out(rows * out_f);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * in;
    for (std::size_t o = 0; o < out_f; ++o) {
      out[r * out_f + o] = (bv ? bv[o] : 0.0) + kernels::dot(xr, wv.data() + o * in, in);
    }
  }
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result(std::move(out_shape), std::move(out), std::move(inputs), "linear",
                     [rows, in, out_f, has_bias](Node& self) {
                       const auto& xv = input_value(self, 0);
                       const auto& wv = input_value(self, 1);
                       const auto& g = self.grad;
                       auto* gx = input_grad(self, 0);
                       auto* gw = input_grad(self, 1);
                       auto* gb = has_bias ? input_grad(self, 2) : nullptr;
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* xr = xv.data() + r * in;
                         for (std::size_t o = 0; o < out_f; ++o) {
                           const double go = g[r * out_f + o];
                           if (go == 0.0) continue;
                           if (gx) kernels::axpy(go, wv.data() + o * in, gx->data() + r * in, in);
                           if (gw) kernels::axpy(go, xr, gw->data() + o * in, in);
                           if (gb) (*gb)[o] += go;
                         }
                       }
                     });
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices) {
  if (table.dim() != 2) {
    throw ShapeError("embedding_lookup: table must be 2-d, got " + to_string(table.shape()));
  }
  const std::size_t rows = table.size(0), d = table.size(1);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * d);
  const auto tv = table.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) {
      throw ShapeError("embedding_lookup: index " + std::to_string(idx[i]) +
                       " out of range for table " + to_string(table.shape()));
    }
    std::copy_n(tv.data() + idx[i] * d, d, out.data() + i * d);
  }
  const std::size_t n = idx.size();
  return make_result({n, d}, std::move(out), {table}, "embedding_lookup",
                     [idx = std::move(idx), d](Node& self) {
                       if (auto* gt = input_grad(self, 0)) {
                         for (std::size_t i = 0; i < idx.size(); ++i) {
                           for (std::size_t j = 0; j < d; ++j) {
                             (*gt)[idx[i] * d + j] += self.grad[i * d + j];
                           }
                         }
                       }
                     });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                     std::span<const double> weights) {
  if (logits.dim() != 2) {
    throw ShapeError("cross_entropy: logits must be [R x K], got " + to_string(logits.shape()));
  }
  const std::size_t rows = logits.size(0), k = logits.size(1);
  if (targets.size() != rows || weights.size() != rows) {
    throw ShapeError("cross_entropy: logits " + to_string(logits.shape()) + " with " +
                     std::to_string(targets.size()) + " targets and " +
                     std::to_string(weights.size()) + " weights");
  }
  require_finite(logits.values(), "cross_entropy");
  const auto zv = logits.values();
  std::vector<double> probs(zv.size());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= k) {
      throw ShapeError("cross_entropy: target " + std::to_string(targets[r]) +
                       " out of range for " + std::to_string(k) + " classes");
    }
    const double* z = zv.data() + r * k;
    const double mx = *std::max_element(z, z + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      probs[r * k + j] = std::exp(z[j] - mx);
      s += probs[r * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] /= s;
    total += weights[r] * (mx + std::log(s) - z[targets[r]]);
  }
  std::vector<std::size_t> t(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  return make_result({}, {total}, {logits}, "cross_entropy",
                     [rows, k, probs = std::move(probs), t = std::move(t),
                      w = std::move(w)](Node& self) {
                       if (auto* gz = input_grad(self, 0)) {
                         const double g = self.grad[0];
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < k; ++j) {
                             const double onehot = (j == t[r]) ? 1.0 : 0.0;
                             (*gz)[r * k + j] += g * w[r] * (probs[r * k + j] - onehot);
                           }
                         }
                       }
                     });
}

Tensor cross_entropy(const Tensor& logits, std::size_t target, double weight) {
  if (logits.dim() != 1) {
    throw ShapeError("cross_entropy: expected a [K] logit vector, got " +
                     to_string(logits.shape()));
  }
  const std::size_t t[] = {target};
  const double w[] = {weight};
  return cross_entropy(reshape(logits, {1, logits.size(0)}), t, w);
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  if (x.dim() != 3 || weight.dim() != 4 || weight.size(1) != weight.size(2) ||
      weight.size(3) != x.size(2)) {
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " vs weight " +
                     to_string(weight.shape()));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t h = x.size(0), w = x.size(1), cin = x.size(2);
  const std::size_t cout = weight.size(0), k = weight.size(1);
  if (h + 2 * padding < k || w + 2 * padding < k) {
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " smaller than kernel " +
                     to_string(weight.shape()));
  }
  const std::size_t ho = (h + 2 * padding - k) / stride + 1;
  const std::size_t wo = (w + 2 * padding - k) / stride + 1;
  const std::size_t patch = k * k * cin;

  // im2col: one row per output pixel, laid out as (ky, kx, cin).
  std::vector<double> cols(ho * wo * patch, 0.0);
  const auto xv = x.values();
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      double* row = cols.data() + (oy * wo + ox) * patch;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
        if (iy < 0 || iy >= static_cast<long>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
          if (ix < 0 || ix >= static_cast<long>(w)) continue;
          std::copy_n(xv.data() + (static_cast<std::size_t>(iy) * w +
                                   static_cast<std::size_t>(ix)) * cin,
                      cin, row + (ky * k + kx) * cin);
        }
      }
    }
  }
  const auto wv = weight.values();
  const auto bv = bias.values();
  if (bv.size() != cout) {
    throw ShapeError("conv2d: weight " + to_string(weight.shape()) + " vs bias " +
                     to_string(bias.shape()));
  }
  const std::size_t pixels = ho * wo;
  std::vector<double> out(pixels * cout);
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* cr = cols.data() + p * patch;
    for (std::size_t o = 0; o < cout; ++o) {
      out[p * cout + o] = bv[o] + kernels::dot(cr, wv.data() + o * patch, patch);
    }
  }
  return make_result(
      {ho, wo, cout}, std::move(out), {x, weight, bias}, "conv2d",
      [=, cols = std::move(cols)](Node& self) {
        const auto& g = self.grad;
        const auto& wv = input_value(self, 1);
        auto* gx = input_grad(self, 0);
        auto* gw = input_grad(self, 1);
        auto* gb = input_grad(self, 2);
        std::vector<double> dcols;
        if (gx) dcols.assign(pixels * patch, 0.0);
        for (std::size_t p = 0; p < pixels; ++p) {
          const double* cr = cols.data() + p * patch;
          for (std::size_t o = 0; o < cout; ++o) {
            const double go = g[p * cout + o];
            if (go == 0.0) continue;
            if (gb) (*gb)[o] += go;
            if (gw) kernels::axpy(go, cr, gw->data() + o * patch, patch);
            if (gx) kernels::axpy(go, wv.data() + o * patch, dcols.data() + p * patch, patch);
          }
        }
        if (!gx) return;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const double* row = dcols.data() + (oy * wo + ox) * patch;
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
              if (iy < 0 || iy >= static_cast<long>(h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
                if (ix < 0 || ix >= static_cast<long>(w)) continue;
                double* dst = gx->data() + (static_cast<std::size_t>(iy) * w +
                                            static_cast<std::size_t>(ix)) * cin;
                const double* src = row + (ky * k + kx) * cin;
                for (std::size_t c = 0; c < cin; ++c) dst[c] += src[c];
              }
            }
          }
        }
      });
}

}  // namespace hoit::ad
