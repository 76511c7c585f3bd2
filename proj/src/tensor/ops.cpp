/* Copyright (c) 2026 VEPE Authors. All Rights Reserved.
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
    http://www.apache.org/licenses/LICENSE-2.0
Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#include "vepe/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <string>

#include "vepe/kernels.hpp"

namespace vepe {
namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor make_out(Shape shape, bool requires_grad) {
  Tensor t(std::move(shape));
  t.set_requires_grad(requires_grad);
  return t;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " + shape_str(x.shape()));
  }
}

// Rows x cols view of a tensor whose last axis is the column axis.
std::pair<std::size_t, std::size_t> as_matrix(const Tensor& x) {
  const std::size_t cols = x.rank() == 0 ? 1 : x.shape().back();
  return {cols == 0 ? 0 : x.numel() / cols, cols};
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

}  // namespace

// ---------------------------------------------------------------- structure

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " +
                     shape_str(shape));
  }
  const bool track = tracking({&x});
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(),
                                                    x.data().end()));
  out.set_requires_grad(track);
  if (track) {
    ImplPtr o = out.impl(), xi = x.impl();
    tape().record("reshape", [o, xi] {
      if (o->grad.empty()) return;
      auto& g = grad_of(xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  require_rank("transpose", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  const bool track = tracking({&x});
  Tensor out = make_out({c, r}, track);
  const double* src = x.ptr();
  double* dst = out.ptr_mut();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
  if (track) {
    ImplPtr o = out.impl(), xi = x.impl();
    tape().record("transpose", [o, xi, r, c] {
      if (o->grad.empty()) return;
      auto& g = grad_of(xi);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o->grad[j * r + i];
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  bool track = false;
  for (const Tensor& p : parts) {
    Shape pt(p.shape().begin() + 1, p.shape().end());
    if (p.rank() == 0 || pt != tail) {
      throw ShapeError("concat_rows: incompatible " + shape_str(p.shape()) +
                       " vs " + shape_str(parts[0].shape()));
    }
    rows += p.dim(0);
    track = track || tracking({&p});
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  Tensor out = make_out(shape, track);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.ptr_mut() + offset);
    offset += p.numel();
  }
  if (track) {
    std::vector<ImplPtr> ins;
    for (const Tensor& p : parts) ins.push_back(p.impl());
    ImplPtr o = out.impl();
    tape().record("concat_rows", [o, ins] {
      if (o->grad.empty()) return;
      std::size_t off = 0;
      for (const ImplPtr& in : ins) {
        if (in->requires_grad) {
          auto& g = grad_of(in);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[off + i];
        }
        off += in->data.size();
      }
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  bool track = false;
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) {
    require_rank("concat_cols", p, 2);
    if (p.dim(0) != rows) {
      throw ShapeError("concat_cols: row mismatch " + shape_str(p.shape()) +
                       " vs " + shape_str(parts[0].shape()));
    }
    widths.push_back(p.dim(1));
    cols += p.dim(1);
    track = track || tracking({&p});
  }
  Tensor out = make_out({rows, cols}, track);
  std::size_t c0 = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const double* src = parts[k].ptr();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(src + i * widths[k], widths[k], out.ptr_mut() + i * cols + c0);
    c0 += widths[k];
  }
  if (track) {
    std::vector<ImplPtr> ins;
    for (const Tensor& p : parts) ins.push_back(p.impl());
    ImplPtr o = out.impl();
    tape().record("concat_cols", [o, ins, widths, rows, cols] {
      if (o->grad.empty()) return;
      std::size_t off = 0;
      for (std::size_t k = 0; k < ins.size(); ++k) {
        if (ins[k]->requires_grad) {
          auto& g = grad_of(ins[k]);
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < widths[k]; ++j)
              g[i * widths[k] + j] += o->grad[i * cols + off + j];
        }
        off += widths[k];
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0 || begin > end || end > x.dim(0)) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") out of " + shape_str(x.shape()));
  }
  const std::size_t row = x.numel() / std::max<std::size_t>(x.dim(0), 1);
  Shape shape = x.shape();
  shape[0] = end - begin;
  const bool track = tracking({&x});
  Tensor out = make_out(shape, track);
  std::copy_n(x.ptr() + begin * row, (end - begin) * row, out.ptr_mut());
  if (track) {
    ImplPtr o = out.impl(), xi = x.impl();
    tape().record("slice_rows", [o, xi, begin, row] {
      if (o->grad.empty()) return;
      auto& g = grad_of(xi);
      for (std::size_t i = 0; i < o->grad.size(); ++i)
        g[begin * row + i] += o->grad[i];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin > end || end > cols) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") out of " + shape_str(x.shape()));
  }
  const std::size_t w = end - begin;
  const bool track = tracking({&x});
  Tensor out = make_out({rows, w}, track);
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(x.ptr() + i * cols + begin, w, out.ptr_mut() + i * w);
  if (track) {
    ImplPtr o = out.impl(), xi = x.impl();
    tape().record("slice_cols", [o, xi, rows, cols, begin, w] {
      if (o->grad.empty()) return;
      auto& g = grad_of(xi);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < w; ++j)
          g[i * cols + begin + j] += o->grad[i * w + j];
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  if (x.rank() == 0) throw ShapeError("gather_rows: scalar input");
  const std::size_t n = x.dim(0);
  const std::size_t row = n == 0 ? 0 : x.numel() / n;
  for (std::size_t r : rows) {
    if (r >= n) {
      throw ShapeError("gather_rows: row " + std::to_string(r) +
                       " out of " + shape_str(x.shape()));
    }
  }
  Shape shape = x.shape();
  shape[0] = rows.size();
  const bool track = tracking({&x});
  Tensor out = make_out(shape, track);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(x.ptr() + rows[i] * row, row, out.ptr_mut() + i * row);
  if (track) {
    ImplPtr o = out.impl(), xi = x.impl();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    tape().record("gather_rows", [o, xi, idx, row] {
      if (o->grad.empty()) return;
      auto& g = grad_of(xi);
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < row; ++j)
          g[idx[i] * row + j] += o->grad[i * row + j];
    });
  }
  return out;
}

Tensor scale_rows(const Tensor& x, std::span<const double> factors) {
  if (x.rank() == 0 || factors.size() != x.dim(0)) {
    throw ShapeError("scale_rows: " + std::to_string(factors.size()) +
                     " factors for " + shape_str(x.shape()));
  }
  const std::size_t row = factors.empty() ? 0 : x.numel() / factors.size();
  const bool track = tracking({&x});
  Tensor out = make_out(x.shape(), track);
  for (std::size_t i = 0; i < factors.size(); ++i)
    for (std::size_t j = 0; j < row; ++j)
      out.ptr_mut()[i * row + j] = x.ptr()[i * row + j] * factors[i];
  if (track) {
    ImplPtr o = out.impl(), xi = x.impl();
    std::vector<double> f(factors.begin(), factors.end());
    tape().record("scale_rows", [o, xi, f, row] {
      if (o->grad.empty()) return;
      auto& g = grad_of(xi);
      for (std::size_t i = 0; i < f.size(); ++i)
        for (std::size_t j = 0; j < row; ++j)
          g[i * row + j] += o->grad[i * row + j] * f[i];
    });
  }
  return out;
}

// --------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const bool track = tracking({&a, &b});
  Tensor out = make_out(a.shape(), track);
  for (std::size_t i = 0; i < a.numel(); ++i)
    out.ptr_mut()[i] = a.ptr()[i] + b.ptr()[i];
  if (track) {
    ImplPtr o = out.impl(), ai = a.impl(), bi = b.impl();
    tape().record("add", [o, ai, bi] {
      if (o->grad.empty()) return;
      for (const ImplPtr& in : {ai, bi}) {
        if (!in->requires_grad) continue;
        auto& g = grad_of(in);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const bool track = tracking({&a, &b});
  Tensor out = make_out(a.shape(), track);
  for (std::size_t i = 0; i < a.numel(); ++i)
    out.ptr_mut()[i] = a.ptr()[i] - b.ptr()[i];
  if (track) {
    ImplPtr o = out.impl(), ai = a.impl(), bi = b.impl();
    tape().record("sub", [o, ai, bi] {
      if (o->grad.empty()) return;
      if (ai->requires_grad) {
        auto& g = grad_of(ai);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
      if (bi->requires_grad) {
        auto& g = grad_of(bi);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const bool track = tracking({&a, &b});
  Tensor out = make_out(a.shape(), track);
  for (std::size_t i = 0; i < a.numel(); ++i)
    out.ptr_mut()[i] = a.ptr()[i] * b.ptr()[i];
  if (track) {
    ImplPtr o = out.impl(), ai = a.impl(), bi = b.impl();
    tape().record("mul", [o, ai, bi] {
      if (o->grad.empty()) return;
      if (ai->requires_grad) {
        auto& g = grad_of(ai);
        for (std::size_t i = 0; i < g.size(); ++i)
          g[i] += o->grad[i] * bi->data[i];
      }
      if (bi->requires_grad) {
        auto& g = grad_of(bi);
        for (std::size_t i = 0; i < g.size(); ++i)
          g[i] += o->grad[i] * ai->data[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double s) {
  const bool track = tracking({&x});
  Tensor out = make_out(x.shape(), track);
  for (std::size_t i = 0; i < x.numel(); ++i) out.ptr_mut()[i] = x.ptr()[i] * s;
  if (track) {
    ImplPtr o = out.impl(), xi = x.impl();
    tape().record("scale", [o, xi, s] {
      if (o->grad.empty()) return;
      auto& g = grad_of(xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * s;
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& x, double s) {
  const bool track = tracking({&x});
  Tensor out = make_out(x.shape(), track);
  for (std::size_t i = 0; i < x.numel(); ++i) out.ptr_mut()[i] = x.ptr()[i] + s;
  if (track) {
    ImplPtr o = out.impl(), xi = x.impl();
    tape().record("add_scalar", [o, xi] {
      if (o->grad.empty()) return;
      auto& g = grad_of(xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  const auto [rows, cols] = as_matrix(x);
  if (b.numel() != cols) {
    throw ShapeError("add_bias: bias " + shape_str(b.shape()) + " for " +
                     shape_str(x.shape()));
  }
  const bool track = tracking({&x, &b});
  Tensor out = make_out(x.shape(), track);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out.ptr_mut()[i * cols + j] = x.ptr()[i * cols + j] + b.ptr()[j];
  if (track) {
    ImplPtr o = out.impl(), xi = x.impl(), bi = b.impl();
    tape().record("add_bias", [o, xi, bi, rows, cols] {
      if (o->grad.empty()) return;
      if (xi->requires_grad) {
        auto& g = grad_of(xi);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
      if (bi->requires_grad) {
        auto& g = grad_of(bi);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) g[j] += o->grad[i * cols + j];
      }
    });
  }
  return out;
}

Tensor mul_const(const Tensor& x, std::span<const double> c) {
  if (c.size() != x.numel()) {
    throw ShapeError("mul_const: " + std::to_string(c.size()) +
                     " constants for " + shape_str(x.shape()));
  }
  const bool track = tracking({&x});
  Tensor out = make_out(x.shape(), track);
  for (std::size_t i = 0; i < x.numel(); ++i) out.ptr_mut()[i] = x.ptr()[i] * c[i];
  if (track) {
    ImplPtr o = out.impl(), xi = x.impl();
    std::vector<double> cc(c.begin(), c.end());
    tape().record("mul_const", [o, xi, cc] {
      if (o->grad.empty()) return;
      auto& g = grad_of(xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * cc[i];
    });
  }
  return out;
}

namespace {

// Pointwise op helper: f gives the value, df the derivative in terms of
// (input, output).
template <typename F, typename DF>
Tensor pointwise(const char* name, const Tensor& x, F f, DF df) {
  const bool track = tracking({&x});
  Tensor out = make_out(x.shape(), track);
  for (std::size_t i = 0; i < x.numel(); ++i) out.ptr_mut()[i] = f(x.ptr()[i]);
  if (track) {
    ImplPtr o = out.impl(), xi = x.impl();
    tape().record(name, [o, xi, df] {
      if (o->grad.empty()) return;
      auto& g = grad_of(xi);
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += o->grad[i] * df(xi->data[i], o->data[i]);
    });
  }
  return out;
}

}  // namespace

Tensor gelu(const Tensor& x) {
  return pointwise(
      "gelu", x,
      [](double v) {
        return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + 0.044715 * v * v * v)));
      },
      [](double v, double) {
        const double u = kGeluC * (v + 0.044715 * v * v * v);
        const double t = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * 0.044715 * v * v);
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
      });
}

Tensor relu(const Tensor& x) {
  return pointwise(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return pointwise(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor inverse_sigmoid(const Tensor& x, double eps) {
  return pointwise(
      "inverse_sigmoid", x,
      [eps](double v) {
        const double c = std::clamp(v, eps, 1.0 - eps);
        return std::log(c) - std::log1p(-c);
      },
      [eps](double v, double) {
        if (v < eps || v > 1.0 - eps) return 0.0;
        return 1.0 / (v * (1.0 - v));
      });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return pointwise(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return v >= lo && v <= hi ? 1.0 : 0.0; });
}

Tensor shift_logit(const Tensor& p, const Tensor& delta, double max_logit) {
  require_same_shape("shift_logit", p, delta);
  if (!(max_logit > 0.0)) throw ShapeError("shift_logit: max_logit must be positive");
  const double hi = 1.0 / (1.0 + std::exp(-max_logit));
  const double lo = 1.0 - hi;
  const bool track = tracking({&p, &delta});
  Tensor out = make_out(p.shape(), track);
  std::vector<char> live(p.numel());
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double q = std::clamp(p.ptr()[i], lo, hi);
    const double d = delta.ptr()[i];
    const double z = std::log(q) - std::log1p(-q) + d;
    double s;
    if (z >= max_logit) {
      s = hi;
    } else if (z <= -max_logit) {
      s = lo;
    } else if (d >= 0.0) {
      s = q / (q + (1.0 - q) * std::exp(-d));
    } else {
      const double e = std::exp(d);
      s = q * e / ((1.0 - q) + q * e);
    }
    live[i] = z > -max_logit && z < max_logit;
    out.ptr_mut()[i] = s;
  }
  if (track) {
    ImplPtr o = out.impl(), pi = p.impl(), di = delta.impl();
    tape().record("shift_logit", [o, pi, di, live, lo, hi] {
      if (o->grad.empty()) return;
      for (std::size_t i = 0; i < live.size(); ++i) {
        if (!live[i]) continue;
        const double s = o->data[i], ds = o->grad[i] * s * (1.0 - s);
        if (di->requires_grad) grad_of(di)[i] += ds;
        const double q = pi->data[i];
        if (pi->requires_grad && q >= lo && q <= hi) grad_of(pi)[i] += ds / (q * (1.0 - q));
      }
    });
  }
  return out;
}

Tensor abs(const Tensor& x) {
  return pointwise(
      "abs", x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor log(const Tensor& x) {
  return pointwise(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of " +
                     shape_str(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t n = x.dim(axis);
  const bool track = tracking({&x});
  Tensor out = make_out(x.shape(), track);
  const double* src = x.ptr();
  double* dst = out.ptr_mut();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, src[base + i * inner]);
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = std::exp(src[base + i * inner] - mx);
        dst[base + i * inner] = e;
        s += e;
      }
      for (std::size_t i = 0; i < n; ++i) dst[base + i * inner] /= s;
    }
  }
  if (track) {
    ImplPtr o = out.impl(), xi = x.impl();
    tape().record("softmax", [o, xi, outer, inner, n] {
      if (o->grad.empty()) return;
      auto& g = grad_of(xi);
      for (std::size_t a = 0; a < outer; ++a) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = a * n * inner + in;
          double dotp = 0.0;
          for (std::size_t i = 0; i < n; ++i)
            dotp += o->grad[base + i * inner] * o->data[base + i * inner];
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t k = base + i * inner;
            g[k] += o->data[k] * (o->grad[k] - dotp);
          }
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const auto [rows, cols] = as_matrix(x);
  if (gamma.numel() != cols || beta.numel() != cols) {
    throw ShapeError("layer_norm: affine params for width " +
                     std::to_string(cols) + " got " +
                     shape_str(gamma.shape()) + ", " + shape_str(beta.shape()));
  }
  const bool track = tracking({&x, &gamma, &beta});
  Tensor out = make_out(x.shape(), track);
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* r = x.ptr() + i * cols;
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += r[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= static_cast<double>(cols);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) {
      xhat[i * cols + j] = (r[j] - mu) * inv_std[i];
      out.ptr_mut()[i * cols + j] =
          xhat[i * cols + j] * gamma.ptr()[j] + beta.ptr()[j];
    }
  }
  if (track) {
    ImplPtr o = out.impl(), xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
    tape().record("layer_norm", [o, xi, gi, bi, rows, cols,
                                 xhat = std::move(xhat),
                                 inv_std = std::move(inv_std)] {
      if (o->grad.empty()) return;
      const auto& dy = o->grad;
      if (gi->requires_grad) {
        auto& g = grad_of(gi);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j)
            g[j] += dy[i * cols + j] * xhat[i * cols + j];
      }
      if (bi->requires_grad) {
        auto& g = grad_of(bi);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) g[j] += dy[i * cols + j];
      }
      if (xi->requires_grad) {
        auto& g = grad_of(xi);
        const double inv_n = 1.0 / static_cast<double>(cols);
        for (std::size_t i = 0; i < rows; ++i) {
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t j = 0; j < cols; ++j) {
            const double dxh = dy[i * cols + j] * gi->data[j];
            s1 += dxh;
            s2 += dxh * xhat[i * cols + j];
          }
          for (std::size_t j = 0; j < cols; ++j) {
            const double dxh = dy[i * cols + j] * gi->data[j];
            g[i * cols + j] +=
                inv_std[i] * (dxh - inv_n * s1 - xhat[i * cols + j] * inv_n * s2);
          }
        }
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  const bool track = tracking({&x});
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = make_out({1}, track);
  out.ptr_mut()[0] = s;
  if (track) {
    ImplPtr o = out.impl(), xi = x.impl();
    tape().record("sum", [o, xi] {
      if (o->grad.empty()) return;
      auto& g = grad_of(xi);
      for (double& v : g) v += o->grad[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

// ------------------------------------------------------------ linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions differ for " +
                     shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const bool track = tracking({&a, &b});
  Tensor out = make_out({m, n}, track);
  kernels::gemm(false, false, m, n, k, a.ptr(), k, b.ptr(), n, false,
                out.ptr_mut(), n);
  if (track) {
    ImplPtr o = out.impl(), ai = a.impl(), bi = b.impl();
    tape().record("matmul", [o, ai, bi, m, k, n] {
      if (o->grad.empty()) return;
      if (ai->requires_grad) {
        kernels::gemm(false, true, m, k, n, o->grad.data(), n, bi->data.data(),
                      n, true, grad_of(ai).data(), k);
      }
      if (bi->requires_grad) {
        kernels::gemm(true, false, k, n, m, ai->data.data(), k, o->grad.data(),
                      n, true, grad_of(bi).data(), n);
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank("linear", w, 2);
  const auto [rows, in] = as_matrix(x);
  if (in != w.dim(0)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) +
                     " does not match weight " + shape_str(w.shape()));
  }
  const std::size_t outw = w.dim(1);
  if (b.defined() && b.numel() != outw) {
    throw ShapeError("linear: bias " + shape_str(b.shape()) + " for weight " +
                     shape_str(w.shape()));
  }
  Shape shape = x.shape();
  shape.back() = outw;
  const bool track = tracking({&x, &w, &b});
  Tensor out = make_out(shape, track);
  double* y = out.ptr_mut();
  if (b.defined()) {
    for (std::size_t i = 0; i < rows; ++i) std::copy_n(b.ptr(), outw, y + i * outw);
  }
  kernels::gemm(false, false, rows, outw, in, x.ptr(), in, w.ptr(), outw,
                b.defined(), y, outw);
  if (track) {
    ImplPtr o = out.impl(), xi = x.impl(), wi = w.impl();
    ImplPtr bi = b.defined() ? b.impl() : nullptr;
    tape().record("linear", [o, xi, wi, bi, rows, in, outw] {
      if (o->grad.empty()) return;
      if (xi->requires_grad) {
        kernels::gemm(false, true, rows, in, outw, o->grad.data(), outw,
                      wi->data.data(), outw, true, grad_of(xi).data(), in);
      }
      if (wi->requires_grad) {
        kernels::gemm(true, false, in, outw, rows, xi->data.data(), in,
                      o->grad.data(), outw, true, grad_of(wi).data(), outw);
      }
      if (bi && bi->requires_grad) {
        auto& g = grad_of(bi);
        for (std::size_t i = 0; i < rows; ++i)
          kernels::axpy(1.0, o->grad.data() + i * outw, g.data(), outw);
      }
    });
  }
  return out;
}

// ------------------------------------------------------------------ sampling

namespace {

struct Corner {
  std::ptrdiff_t index;  // -1 when outside the grid
  double weight;
};

// Four bilinear corners of pixel-space (px, py) plus weight derivatives.
struct Bilinear {
  Corner c[4];
  double dwdx[4];
  double dwdy[4];
};

inline Bilinear bilinear_corners(double px, double py, std::size_t h,
                                 std::size_t w) {
  Bilinear b{};
  const double fx = std::floor(px), fy = std::floor(py);
  const double ax = px - fx, ay = py - fy;
  const auto x0 = static_cast<std::ptrdiff_t>(fx);
  const auto y0 = static_cast<std::ptrdiff_t>(fy);
  const std::ptrdiff_t xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const std::ptrdiff_t ys[4] = {y0, y0, y0 + 1, y0 + 1};
  const double wx[4] = {1 - ax, ax, 1 - ax, ax};
  const double wy[4] = {1 - ay, 1 - ay, ay, ay};
  const double dx[4] = {-1, 1, -1, 1};
  const double dy[4] = {-1, -1, 1, 1};
  const auto hh = static_cast<std::ptrdiff_t>(h);
  const auto ww = static_cast<std::ptrdiff_t>(w);
  for (int i = 0; i < 4; ++i) {
    const bool inside = xs[i] >= 0 && xs[i] < ww && ys[i] >= 0 && ys[i] < hh;
    b.c[i].index = inside ? ys[i] * ww + xs[i] : -1;
    b.c[i].weight = wx[i] * wy[i];
    b.dwdx[i] = dx[i] * wy[i];
    b.dwdy[i] = dy[i] * wx[i];
  }
  return b;
}

}  // namespace

Tensor bilinear_sample(const Tensor& map, const Tensor& points) {
  require_rank("bilinear_sample", map, 3);
  if (points.rank() != 2 || points.dim(1) != 2) {
    throw ShapeError("bilinear_sample: points must be [P x 2], got " +
                     shape_str(points.shape()));
  }
  const std::size_t h = map.dim(0), w = map.dim(1), c = map.dim(2);
  const std::size_t p = points.dim(0);
  const bool track = tracking({&map, &points});
  Tensor out = make_out({p, c}, track);
  for (std::size_t i = 0; i < p; ++i) {
    const Bilinear b = bilinear_corners(points.ptr()[2 * i],
                                        points.ptr()[2 * i + 1], h, w);
    double* dst = out.ptr_mut() + i * c;
    for (const Corner& cr : b.c) {
      if (cr.index < 0 || cr.weight == 0.0) continue;
      kernels::axpy(cr.weight, map.ptr() + cr.index * c, dst, c);
    }
  }
  if (track) {
    ImplPtr o = out.impl(), mi = map.impl(), pi = points.impl();
    tape().record("bilinear_sample", [o, mi, pi, h, w, c, p] {
      if (o->grad.empty()) return;
      for (std::size_t i = 0; i < p; ++i) {
        const Bilinear b = bilinear_corners(pi->data[2 * i], pi->data[2 * i + 1],
                                            h, w);
        const double* go = o->grad.data() + i * c;
        double gx = 0.0, gy = 0.0;
        for (int k = 0; k < 4; ++k) {
          const Corner& cr = b.c[k];
          if (cr.index < 0) continue;
          if (mi->requires_grad) {
            kernels::axpy(cr.weight, go, grad_of(mi).data() + cr.index * c, c);
          }
          if (pi->requires_grad) {
            const double d = kernels::dot(go, mi->data.data() + cr.index * c, c);
            gx += b.dwdx[k] * d;
            gy += b.dwdy[k] * d;
          }
        }
        if (pi->requires_grad) {
          auto& g = grad_of(pi);
          g[2 * i] += gx;
          g[2 * i + 1] += gy;
        }
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t kernel, std::size_t stride, std::size_t pad) {
  require_rank("conv2d", x, 3);
  const std::size_t h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
  const std::size_t kdim = kernel * kernel * cin;
  if (w.rank() != 2 || w.dim(0) != kdim) {
    throw ShapeError("conv2d: weight " + shape_str(w.shape()) + " for input " +
                     shape_str(x.shape()) + " and kernel " +
                     std::to_string(kernel));
  }
  if (stride == 0 || h + 2 * pad < kernel || wd + 2 * pad < kernel) {
    throw ShapeError("conv2d: invalid geometry for " + shape_str(x.shape()));
  }
  const std::size_t cout = w.dim(1);
  const std::size_t ho = (h + 2 * pad - kernel) / stride + 1;
  const std::size_t wo = (wd + 2 * pad - kernel) / stride + 1;
  std::vector<double> col(ho * wo * kdim, 0.0);
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      double* dst = col.data() + (oy * wo + ox) * kdim;
      for (std::size_t ky = 0; ky < kernel; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                  static_cast<std::ptrdiff_t>(pad);
        for (std::size_t kx = 0; kx < kernel; ++kx) {
          const std::ptrdiff_t ix =
              static_cast<std::ptrdiff_t>(ox * stride + kx) -
              static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
              ix >= static_cast<std::ptrdiff_t>(wd))
            continue;
          std::copy_n(x.ptr() + (iy * wd + ix) * cin, cin,
                      dst + (ky * kernel + kx) * cin);
        }
      }
    }
  }
  const bool track = tracking({&x, &w, &b});
  Tensor out = make_out({ho, wo, cout}, track);
  if (b.defined()) {
    for (std::size_t i = 0; i < ho * wo; ++i)
      std::copy_n(b.ptr(), cout, out.ptr_mut() + i * cout);
  }
  kernels::gemm(false, false, ho * wo, cout, kdim, col.data(), kdim, w.ptr(),
                cout, b.defined(), out.ptr_mut(), cout);
  if (track) {
    ImplPtr o = out.impl(), xi = x.impl(), wi = w.impl();
    ImplPtr bi = b.defined() ? b.impl() : nullptr;
    tape().record("conv2d", [o, xi, wi, bi, col = std::move(col), h, wd, cin,
                             kernel, stride, pad, ho, wo, cout, kdim] {
      if (o->grad.empty()) return;
      const std::size_t rows = ho * wo;
      if (wi->requires_grad) {
        kernels::gemm(true, false, kdim, cout, rows, col.data(), kdim,
                      o->grad.data(), cout, true, grad_of(wi).data(), cout);
      }
      if (bi && bi->requires_grad) {
        auto& g = grad_of(bi);
        for (std::size_t i = 0; i < rows; ++i)
          kernels::axpy(1.0, o->grad.data() + i * cout, g.data(), cout);
      }
      if (xi->requires_grad) {
        std::vector<double> dcol(rows * kdim);
        kernels::gemm(false, true, rows, kdim, cout, o->grad.data(), cout,
                      wi->data.data(), cout, false, dcol.data(), kdim);
        auto& g = grad_of(xi);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const double* src = dcol.data() + (oy * wo + ox) * kdim;
            for (std::size_t ky = 0; ky < kernel; ++ky) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(oy * stride + ky) -
                  static_cast<std::ptrdiff_t>(pad);
              for (std::size_t kx = 0; kx < kernel; ++kx) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * stride + kx) -
                    static_cast<std::ptrdiff_t>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
                    ix >= static_cast<std::ptrdiff_t>(wd))
                  continue;
                kernels::axpy(1.0, src + (ky * kernel + kx) * cin,
                              g.data() + (iy * wd + ix) * cin, cin);
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// ----------------------------------------------------- deformable aggregation

std::size_t LevelLayout::tokens() const {
  std::size_t n = 0;
  for (const auto& [h, w] : shapes) n += h * w;
  return n;
}

std::size_t LevelLayout::start(std::size_t level) const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < level; ++l) n += shapes[l].first * shapes[l].second;
  return n;
}

Tensor deformable_aggregate(const Tensor& value, const LevelLayout& layout,
                            const Tensor& locations, const Tensor& weights,
                            std::size_t heads, std::size_t points) {
  require_rank("deformable_aggregate", value, 3);
  const std::size_t frames = value.dim(0), tokens = value.dim(1);
  const std::size_t d = value.dim(2);
  const std::size_t levels = layout.levels();
  if (tokens != layout.tokens() || heads == 0 || d % heads != 0) {
    throw ShapeError("deformable_aggregate: value " + shape_str(value.shape()) +
                     " inconsistent with layout/heads");
  }
  const std::size_t dh = d / heads;
  const std::size_t per_head = frames * levels * points;
  if (weights.rank() != 5 || weights.dim(1) != heads || weights.dim(2) != frames ||
      weights.dim(3) != levels || weights.dim(4) != points) {
    throw ShapeError("deformable_aggregate: weights " +
                     shape_str(weights.shape()) + " do not match value " +
                     shape_str(value.shape()));
  }
  const std::size_t nq = weights.dim(0);
  if (locations.numel() != nq * heads * per_head * 2) {
    throw ShapeError("deformable_aggregate: locations " +
                     shape_str(locations.shape()) + " do not match weights " +
                     shape_str(weights.shape()));
  }
  std::vector<std::size_t> starts(levels);
  for (std::size_t l = 0; l < levels; ++l) starts[l] = layout.start(l);

  const bool track = tracking({&value, &locations, &weights});
  Tensor out = make_out({nq, d}, track);
  const double* val = value.ptr();
  const double* loc = locations.ptr();
  const double* wts = weights.ptr();
  for (std::size_t q = 0; q < nq; ++q) {
    for (std::size_t m = 0; m < heads; ++m) {
      double* dst = out.ptr_mut() + q * d + m * dh;
      for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t l = 0; l < levels; ++l) {
          const auto [lh, lw] = layout.shapes[l];
          const double* base = val + (f * tokens + starts[l]) * d + m * dh;
          for (std::size_t k = 0; k < points; ++k) {
            const std::size_t s = (((q * heads + m) * frames + f) * levels + l) *
                                      points + k;
            const double a = wts[s];
            const Bilinear b = bilinear_corners(
                loc[2 * s] * static_cast<double>(lw) - 0.5,
                loc[2 * s + 1] * static_cast<double>(lh) - 0.5, lh, lw);
            for (const Corner& cr : b.c) {
              if (cr.index < 0) continue;
              kernels::axpy(a * cr.weight, base + cr.index * d, dst, dh);
            }
          }
        }
      }
    }
  }
  if (track) {
    ImplPtr o = out.impl(), vi = value.impl(), li = locations.impl(),
            wi = weights.impl();
    LevelLayout lay = layout;
    tape().record("deformable_aggregate", [o, vi, li, wi, lay, starts, frames,
                                           tokens, d, dh, heads, levels, points,
                                           nq] {
      if (o->grad.empty()) return;
      const double* val = vi->data.data();
      const double* loc = li->data.data();
      const double* wts = wi->data.data();
      double* gv = vi->requires_grad ? grad_of(vi).data() : nullptr;
      double* gl = li->requires_grad ? grad_of(li).data() : nullptr;
      double* gw = wi->requires_grad ? grad_of(wi).data() : nullptr;
      for (std::size_t q = 0; q < nq; ++q) {
        for (std::size_t m = 0; m < heads; ++m) {
          const double* go = o->grad.data() + q * d + m * dh;
          for (std::size_t f = 0; f < frames; ++f) {
            for (std::size_t l = 0; l < levels; ++l) {
              const auto [lh, lw] = lay.shapes[l];
              const std::size_t row0 = (f * tokens + starts[l]) * d + m * dh;
              for (std::size_t k = 0; k < points; ++k) {
                const std::size_t s =
                    (((q * heads + m) * frames + f) * levels + l) * points + k;
                const double a = wts[s];
                const Bilinear b = bilinear_corners(
                    loc[2 * s] * static_cast<double>(lw) - 0.5,
                    loc[2 * s + 1] * static_cast<double>(lh) - 0.5, lh, lw);
                double gsample = 0.0, gx = 0.0, gy = 0.0;
                for (int c = 0; c < 4; ++c) {
                  const Corner& cr = b.c[c];
                  if (cr.index < 0) continue;
                  const std::size_t off = row0 + cr.index * d;
                  if (gv) kernels::axpy(a * cr.weight, go, gv + off, dh);
                  if (gl || gw) {
                    const double dv = kernels::dot(go, val + off, dh);
                    gsample += cr.weight * dv;
                    gx += b.dwdx[c] * dv;
                    gy += b.dwdy[c] * dv;
                  }
                }
                if (gw) gw[s] += gsample;
                if (gl) {
                  gl[2 * s] += a * gx * static_cast<double>(lw);
                  gl[2 * s + 1] += a * gy * static_cast<double>(lh);
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// ------------------------------------------------------- dot-product attention

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t heads, std::span<const std::uint8_t> mask,
                            EmptyRowPolicy policy) {
  require_rank("scaled_dot_attention", q, 2);
  require_rank("scaled_dot_attention", k, 2);
  require_rank("scaled_dot_attention", v, 2);
  const std::size_t nq = q.dim(0), nk = k.dim(0), d = q.dim(1);
  if (k.dim(1) != d || v.dim(1) != d || v.dim(0) != nk || heads == 0 ||
      d % heads != 0) {
    throw ShapeError("scaled_dot_attention: q " + shape_str(q.shape()) + ", k " +
                     shape_str(k.shape()) + ", v " + shape_str(v.shape()) +
                     " with " + std::to_string(heads) + " heads");
  }
  if (!mask.empty() && mask.size() != nq * nk) {
    throw ShapeError("scaled_dot_attention: mask size " +
                     std::to_string(mask.size()) + " for " +
                     std::to_string(nq) + "x" + std::to_string(nk));
  }
  std::vector<std::uint8_t> empty_row(nq, 0);
  for (std::size_t i = 0; i < nq; ++i) {
    bool any = nk > 0;
    if (!mask.empty()) {
      any = false;
      for (std::size_t j = 0; j < nk && !any; ++j) any = mask[i * nk + j] != 0;
    }
    if (!any) {
      if (policy == EmptyRowPolicy::kError) {
        throw std::invalid_argument("attention: query " + std::to_string(i) +
                                    " has no attendable key");
      }
      empty_row[i] = 1;
    }
  }
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool track = tracking({&q, &k, &v});
  Tensor out = make_out({nq, d}, track);
  // probs[m][i][j]
  std::vector<double> probs(heads * nq * nk, 0.0);
  for (std::size_t m = 0; m < heads; ++m) {
    double* p = probs.data() + m * nq * nk;
    kernels::gemm(false, true, nq, nk, dh, q.ptr() + m * dh, d, k.ptr() + m * dh,
                  d, false, p, nk);
    for (std::size_t i = 0; i < nq; ++i) {
      double* row = p + i * nk;
      if (empty_row[i]) {
        std::fill_n(row, nk, 0.0);
        continue;
      }
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < nk; ++j) {
        if (!mask.empty() && !mask[i * nk + j]) continue;
        row[j] *= inv_sqrt;
        mx = std::max(mx, row[j]);
      }
      double s = 0.0;
      for (std::size_t j = 0; j < nk; ++j) {
        if (!mask.empty() && !mask[i * nk + j]) {
          row[j] = 0.0;
          continue;
        }
        row[j] = std::exp(row[j] - mx);
        s += row[j];
      }
      for (std::size_t j = 0; j < nk; ++j) row[j] /= s;
    }
    kernels::gemm(false, false, nq, dh, nk, p, nk, v.ptr() + m * dh, d, false,
                  out.ptr_mut() + m * dh, d);
  }
  if (track) {
    ImplPtr o = out.impl(), qi = q.impl(), ki = k.impl(), vi = v.impl();
    tape().record("scaled_dot_attention", [o, qi, ki, vi, probs = std::move(probs),
                                           heads, nq, nk, d, dh, inv_sqrt] {
      if (o->grad.empty()) return;
      std::vector<double> dp(nq * nk);
      for (std::size_t m = 0; m < heads; ++m) {
        const double* p = probs.data() + m * nq * nk;
        const double* go = o->grad.data() + m * dh;
        if (vi->requires_grad) {
          kernels::gemm(true, false, nk, dh, nq, p, nk, go, d, true,
                        grad_of(vi).data() + m * dh, d);
        }
        if (!qi->requires_grad && !ki->requires_grad) continue;
        kernels::gemm(false, true, nq, nk, dh, go, d, vi->data.data() + m * dh, d,
                      false, dp.data(), nk);
        for (std::size_t i = 0; i < nq; ++i) {
          double* row = dp.data() + i * nk;
          const double* prow = p + i * nk;
          double s = 0.0;
          for (std::size_t j = 0; j < nk; ++j) s += row[j] * prow[j];
          for (std::size_t j = 0; j < nk; ++j)
            row[j] = prow[j] * (row[j] - s) * inv_sqrt;
        }
        if (qi->requires_grad) {
          kernels::gemm(false, false, nq, dh, nk, dp.data(), nk,
                        ki->data.data() + m * dh, d, true,
                        grad_of(qi).data() + m * dh, d);
        }
        if (ki->requires_grad) {
          kernels::gemm(true, false, nk, dh, nq, dp.data(), nk,
                        qi->data.data() + m * dh, d, true,
                        grad_of(ki).data() + m * dh, d);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- losses

Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets) {
  if (logits.numel() != targets.size() || targets.empty()) {
    throw ShapeError("bce_with_logits: " + std::to_string(targets.size()) +
                     " targets for " + shape_str(logits.shape()));
  }
  const std::size_t n = targets.size();
  const bool track = tracking({&logits});
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits.ptr()[i];
    // max(z, 0) - z*t + log(1 + exp(-|z|))
    s += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::fabs(z)));
  }
  Tensor out = make_out({1}, track);
  out.ptr_mut()[0] = s / static_cast<double>(n);
  if (track) {
    ImplPtr o = out.impl(), li = logits.impl();
    std::vector<double> t(targets.begin(), targets.end());
    tape().record("bce_with_logits", [o, li, t, n] {
      if (o->grad.empty()) return;
      auto& g = grad_of(li);
      const double scale = o->grad[0] / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double z = li->data[i];
        const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                                : std::exp(z) / (1.0 + std::exp(z));
        g[i] += scale * (p - t[i]);
      }
    });
  }
  return out;
}

Tensor cosine_similarity_rows(const Tensor& a, const Tensor& b) {
  require_rank("cosine_similarity_rows", a, 2);
  require_same_shape("cosine_similarity_rows", a, b);
  const std::size_t n = a.dim(0), d = a.dim(1);
  std::vector<double> na(n), nb(n), cs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = a.ptr() + i * d;
    const double* y = b.ptr() + i * d;
    na[i] = std::sqrt(kernels::dot(x, x, d));
    nb[i] = std::sqrt(kernels::dot(y, y, d));
    if (na[i] == 0.0 || nb[i] == 0.0) {
      throw std::invalid_argument("cosine similarity: zero-norm row " +
                                  std::to_string(i));
    }
    cs[i] = kernels::dot(x, y, d) / (na[i] * nb[i]);
  }
  const bool track = tracking({&a, &b});
  Tensor out(Shape{n}, cs);
  out.set_requires_grad(track);
  if (track) {
    ImplPtr o = out.impl(), ai = a.impl(), bi = b.impl();
    tape().record("cosine_similarity_rows", [o, ai, bi, na, nb, cs, n, d] {
      if (o->grad.empty()) return;
      for (std::size_t i = 0; i < n; ++i) {
        const double g = o->grad[i];
        const double* x = ai->data.data() + i * d;
        const double* y = bi->data.data() + i * d;
        // d cos / dx = y / (|x||y|) - cos * x / |x|^2
        if (ai->requires_grad) {
          double* gx = grad_of(ai).data() + i * d;
          for (std::size_t j = 0; j < d; ++j)
            gx[j] += g * (y[j] / (na[i] * nb[i]) - cs[i] * x[j] / (na[i] * na[i]));
        }
        if (bi->requires_grad) {
          double* gy = grad_of(bi).data() + i * d;
          for (std::size_t j = 0; j < d; ++j)
            gy[j] += g * (x[j] / (na[i] * nb[i]) - cs[i] * y[j] / (nb[i] * nb[i]));
        }
      }
    });
  }
  return out;
}

Tensor normalize_rows(const Tensor& x) {
  require_rank("normalize_rows", x, 2);
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> norms(n);
  std::vector<double> y(x.numel());
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = x.ptr() + i * d;
    norms[i] = std::sqrt(kernels::dot(r, r, d));
    if (norms[i] == 0.0) {
      throw std::invalid_argument("normalize_rows: zero-norm row " + std::to_string(i));
    }
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] = r[j] / norms[i];
  }
  const bool track = tracking({&x});
  Tensor out(x.shape(), std::move(y));
  out.set_requires_grad(track);
  if (track) {
    ImplPtr o = out.impl(), xi = x.impl();
    tape().record("normalize_rows", [o, xi, norms, n, d] {
      if (o->grad.empty()) return;
      double* gx = grad_of(xi).data();
      for (std::size_t i = 0; i < n; ++i) {
        const double* yr = o->data.data() + i * d;
        const double* g = o->grad.data() + i * d;
        const double proj = kernels::dot(yr, g, d);
        for (std::size_t j = 0; j < d; ++j) {
          gx[i * d + j] += (g[j] - yr[j] * proj) / norms[i];
        }
      }
    });
  }
  return out;
}

}  // namespace vepe
