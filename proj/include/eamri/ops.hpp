#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "eamri/conv.hpp"
#include "eamri/fft.hpp"
#include "eamri/opcount.hpp"
#include "eamri/trace.hpp"

// Traced tensor operations. Every op computes its value eagerly, stores the
// result on the trace, and records a closure computing the vector-Jacobian
// product for the reverse sweep. Closures re-acquire slot references at call
// time; no new slots are created during backward.
//
// Complex tensors use the real-pair convention: gradients hold
// (dL/d re, dL/d im) interleaved, so the adjoint of a complex-linear map F is
// conj(F)^T applied to the gradient viewed as complex.

namespace eamri {

// ---------------------------------------------------------------------------
// elementwise / shape ops (real unless stated)
// ---------------------------------------------------------------------------

inline Var add(Trace& tr, Var a, Var b) {
  require_shape(tr.shape(a) == tr.shape(b) && tr.is_complex(a) == tr.is_complex(b),
                "add: mismatched operands " + shape_str(tr.shape(a)) + " vs " + shape_str(tr.shape(b)));
  std::vector<double> out(tr.data(a).size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = tr.data(a)[i] + tr.data(b)[i];
  Var y = tr.make_value(tr.shape(a), std::move(out), tr.is_complex(a));
  tr.record([&tr, a, b, y] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    auto& ga = tr.grad(a);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gb = tr.grad(b);
    for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
  return y;
}

inline Var sub(Trace& tr, Var a, Var b) {
  require_shape(tr.shape(a) == tr.shape(b) && tr.is_complex(a) == tr.is_complex(b),
                "sub: mismatched operands " + shape_str(tr.shape(a)) + " vs " + shape_str(tr.shape(b)));
  std::vector<double> out(tr.data(a).size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = tr.data(a)[i] - tr.data(b)[i];
  Var y = tr.make_value(tr.shape(a), std::move(out), tr.is_complex(a));
  tr.record([&tr, a, b, y] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    auto& ga = tr.grad(a);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gb = tr.grad(b);
    for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
  return y;
}

// Elementwise product of real tensors.
inline Var mul(Trace& tr, Var a, Var b) {
  require_shape(tr.shape(a) == tr.shape(b) && !tr.is_complex(a) && !tr.is_complex(b),
                "mul: expects real tensors of equal shape");
  std::vector<double> out(tr.data(a).size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = tr.data(a)[i] * tr.data(b)[i];
  Var y = tr.make_value(tr.shape(a), std::move(out), false);
  tr.record([&tr, a, b, y] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    const auto& av = tr.data(a);
    const auto& bv = tr.data(b);
    auto& ga = tr.grad(a);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    auto& gb = tr.grad(b);
    for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
  });
  return y;
}

// Multiplication by a fixed scalar constant (real or complex operand).
inline Var scale(Trace& tr, Var a, double s) {
  std::vector<double> out(tr.data(a).size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = tr.data(a)[i] * s;
  Var y = tr.make_value(tr.shape(a), std::move(out), tr.is_complex(a));
  tr.record([&tr, a, y, s] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    auto& ga = tr.grad(a);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
  });
  return y;
}

inline Var relu(Trace& tr, Var x) {
  require_shape(!tr.is_complex(x), "relu: expects a real tensor");
  std::vector<double> out(tr.data(x).size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = tr.data(x)[i] > 0.0 ? tr.data(x)[i] : 0.0;
  Var y = tr.make_value(tr.shape(x), std::move(out), false);
  tr.record([&tr, x, y] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    const auto& xv = tr.data(x);
    auto& gx = tr.grad(x);
    for (size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) gx[i] += g[i];
  });
  return y;
}

inline Var sigmoid(Trace& tr, Var x) {
  require_shape(!tr.is_complex(x), "sigmoid: expects a real tensor");
  std::vector<double> out(tr.data(x).size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-tr.data(x)[i]));
  Var y = tr.make_value(tr.shape(x), std::move(out), false);
  tr.record([&tr, x, y] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    const auto& yv = tr.data(y);
    auto& gx = tr.grad(x);
    for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i] * (1.0 - yv[i]);
  });
  return y;
}

// |x| elementwise; subgradient at 0 is 0.
inline Var abs_op(Trace& tr, Var x) {
  require_shape(!tr.is_complex(x), "abs: expects a real tensor");
  std::vector<double> out(tr.data(x).size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(tr.data(x)[i]);
  Var y = tr.make_value(tr.shape(x), std::move(out), false);
  tr.record([&tr, x, y] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    const auto& xv = tr.data(x);
    auto& gx = tr.grad(x);
    for (size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0)
        gx[i] += g[i];
      else if (xv[i] < 0.0)
        gx[i] -= g[i];
    }
  });
  return y;
}

inline Var sqrt_op(Trace& tr, Var x) {
  require_shape(!tr.is_complex(x), "sqrt: expects a real tensor");
  std::vector<double> out(tr.data(x).size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(tr.data(x)[i]);
  Var y = tr.make_value(tr.shape(x), std::move(out), false);
  tr.record([&tr, x, y] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    const auto& yv = tr.data(y);
    auto& gx = tr.grad(x);
    for (size_t i = 0; i < g.size(); ++i)
      if (yv[i] > 0.0) gx[i] += g[i] * 0.5 / yv[i];
  });
  return y;
}

inline Var recip(Trace& tr, Var x) {
  require_shape(!tr.is_complex(x), "recip: expects a real tensor");
  std::vector<double> out(tr.data(x).size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / tr.data(x)[i];
  Var y = tr.make_value(tr.shape(x), std::move(out), false);
  tr.record([&tr, x, y] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    const auto& yv = tr.data(y);
    auto& gx = tr.grad(x);
    for (size_t i = 0; i < g.size(); ++i) gx[i] -= g[i] * yv[i] * yv[i];
  });
  return y;
}

// max(x, lo) elementwise; gradient is blocked where the clamp engages.
inline Var clamp_min(Trace& tr, Var x, double lo) {
  require_shape(!tr.is_complex(x), "clamp_min: expects a real tensor");
  std::vector<double> out(tr.data(x).size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(tr.data(x)[i], lo);
  Var y = tr.make_value(tr.shape(x), std::move(out), false);
  tr.record([&tr, x, y, lo] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    const auto& xv = tr.data(x);
    auto& gx = tr.grad(x);
    for (size_t i = 0; i < g.size(); ++i)
      if (xv[i] > lo) gx[i] += g[i];
  });
  return y;
}

inline Var reshape(Trace& tr, Var x, std::vector<int> new_shape) {
  require_shape(numel_of(new_shape) == tr.logical_numel(x),
                "reshape: numel mismatch " + shape_str(tr.shape(x)) + " -> " + shape_str(new_shape));
  std::vector<double> out = tr.data(x);
  Var y = tr.make_value(std::move(new_shape), std::move(out), tr.is_complex(x));
  tr.record([&tr, x, y] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    auto& gx = tr.grad(x);
    for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
  return y;
}

inline Var sum_all(Trace& tr, Var x) {
  require_shape(!tr.is_complex(x), "sum: expects a real tensor");
  double s = 0.0;
  for (double v : tr.data(x)) s += v;
  Var y = tr.make_value({1}, {s}, false);
  tr.record([&tr, x, y] {
    if (!tr.has_grad(y)) return;
    const double g = tr.grad(y)[0];
    auto& gx = tr.grad(x);
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
  return y;
}

inline Var mean_all(Trace& tr, Var x) {
  size_t n = tr.logical_numel(x);
  return scale(tr, sum_all(tr, x), 1.0 / static_cast<double>(n));
}

// Sums a real tensor along one axis.
inline Var sum_axis(Trace& tr, Var x, int axis) {
  require_shape(!tr.is_complex(x), "sum_axis: expects a real tensor");
  const auto& shape = tr.shape(x);
  require(axis >= 0 && axis < static_cast<int>(shape.size()), "sum_axis: axis out of range");
  size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(shape[i]);
  for (size_t i = axis + 1; i < shape.size(); ++i) inner *= static_cast<size_t>(shape[i]);
  size_t n = static_cast<size_t>(shape[axis]);
  std::vector<int> out_shape;
  for (int i = 0; i < static_cast<int>(shape.size()); ++i)
    if (i != axis) out_shape.push_back(shape[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> out(outer * inner, 0.0);
  {
    const auto& xv = tr.data(x);
    for (size_t o = 0; o < outer; ++o)
      for (size_t k = 0; k < n; ++k)
        for (size_t i = 0; i < inner; ++i) out[o * inner + i] += xv[(o * n + k) * inner + i];
  }
  Var y = tr.make_value(std::move(out_shape), std::move(out), false);
  tr.record([&tr, x, y, outer, inner, n] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    auto& gx = tr.grad(x);
    for (size_t o = 0; o < outer; ++o)
      for (size_t k = 0; k < n; ++k)
        for (size_t i = 0; i < inner; ++i) gx[(o * n + k) * inner + i] += g[o * inner + i];
  });
  return y;
}

// Numerically stabilized exponential normalization along an axis.
inline Var softmax(Trace& tr, Var x, int axis) {
  require_shape(!tr.is_complex(x), "softmax: expects a real tensor");
  const auto& shape = tr.shape(x);
  if (axis < 0) axis += static_cast<int>(shape.size());
  require(axis >= 0 && axis < static_cast<int>(shape.size()), "softmax: axis out of range");
  size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(shape[i]);
  for (size_t i = axis + 1; i < shape.size(); ++i) inner *= static_cast<size_t>(shape[i]);
  size_t n = static_cast<size_t>(shape[axis]);
  std::vector<double> out(tr.data(x).size());
  {
    const auto& xv = tr.data(x);
    for (size_t o = 0; o < outer; ++o) {
      for (size_t i = 0; i < inner; ++i) {
        double m = -1e300;
        for (size_t k = 0; k < n; ++k) m = std::max(m, xv[(o * n + k) * inner + i]);
        double z = 0.0;
        for (size_t k = 0; k < n; ++k) {
          double e = std::exp(xv[(o * n + k) * inner + i] - m);
          out[(o * n + k) * inner + i] = e;
          z += e;
        }
        for (size_t k = 0; k < n; ++k) out[(o * n + k) * inner + i] /= z;
      }
    }
  }
  Var y = tr.make_value(shape, std::move(out), false);
  tr.record([&tr, x, y, outer, inner, n] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    const auto& s = tr.data(y);
    auto& gx = tr.grad(x);
    for (size_t o = 0; o < outer; ++o) {
      for (size_t i = 0; i < inner; ++i) {
        double dot = 0.0;
        for (size_t k = 0; k < n; ++k) {
          size_t idx = (o * n + k) * inner + i;
          dot += g[idx] * s[idx];
        }
        for (size_t k = 0; k < n; ++k) {
          size_t idx = (o * n + k) * inner + i;
          gx[idx] += s[idx] * (g[idx] - dot);
        }
      }
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

inline Var matmul(Trace& tr, Var a, Var b) {
  require_shape(!tr.is_complex(a) && !tr.is_complex(b), "matmul: expects real tensors");
  const auto& sa = tr.shape(a);
  const auto& sb = tr.shape(b);
  require_shape(sa.size() == 2 && sb.size() == 2 && sa[1] == sb[0],
                "matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
  const int m = sa[0], k = sa[1], n = sb[1];
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  {
    const auto& av = tr.data(a);
    const auto& bv = tr.data(b);
    for (int i = 0; i < m; ++i)
      for (int l = 0; l < k; ++l) {
        const double av_il = av[static_cast<size_t>(i) * k + l];
        if (av_il == 0.0) continue;
        const double* brow = bv.data() + static_cast<size_t>(l) * n;
        double* orow = out.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) orow[j] += av_il * brow[j];
      }
  }
  opcount::add(static_cast<uint64_t>(m) * k * n);
  Var y = tr.make_value({m, n}, std::move(out), false);
  tr.record([&tr, a, b, y, m, k, n] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    const auto& av = tr.data(a);
    const auto& bv = tr.data(b);
    {  // dA = g . B^T
      auto& ga = tr.grad(a);
      for (int i = 0; i < m; ++i)
        for (int l = 0; l < k; ++l) {
          double acc = 0.0;
          const double* grow = g.data() + static_cast<size_t>(i) * n;
          const double* brow = bv.data() + static_cast<size_t>(l) * n;
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[static_cast<size_t>(i) * k + l] += acc;
        }
    }
    {  // dB = A^T . g
      auto& gb = tr.grad(b);
      for (int l = 0; l < k; ++l)
        for (int i = 0; i < m; ++i) {
          const double av_il = av[static_cast<size_t>(i) * k + l];
          if (av_il == 0.0) continue;
          const double* grow = g.data() + static_cast<size_t>(i) * n;
          double* brow = gb.data() + static_cast<size_t>(l) * n;
          for (int j = 0; j < n; ++j) brow[j] += av_il * grow[j];
        }
    }
  });
  return y;
}

inline Var transpose2d(Trace& tr, Var a) {
  require_shape(!tr.is_complex(a) && tr.shape(a).size() == 2, "transpose2d: expects a real matrix");
  const int m = tr.shape(a)[0], n = tr.shape(a)[1];
  std::vector<double> out(static_cast<size_t>(m) * n);
  {
    const auto& av = tr.data(a);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = av[static_cast<size_t>(i) * n + j];
  }
  Var y = tr.make_value({n, m}, std::move(out), false);
  tr.record([&tr, a, y, m, n] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    auto& ga = tr.grad(a);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
  });
  return y;
}

// out = x / s where s is a one-element real tensor.
inline Var div_scalar(Trace& tr, Var x, Var s) {
  require_shape(!tr.is_complex(x) && !tr.is_complex(s) && tr.logical_numel(s) == 1,
                "div_scalar: x real, s a one-element real tensor");
  const double sv = tr.data(s)[0];
  std::vector<double> out(tr.data(x).size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = tr.data(x)[i] / sv;
  Var y = tr.make_value(tr.shape(x), std::move(out), false);
  tr.record([&tr, x, s, y] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    const auto& xv = tr.data(x);
    const double sv = tr.data(s)[0];
    auto& gx = tr.grad(x);
    for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / sv;
    double acc = 0.0;
    for (size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
    tr.grad(s)[0] -= acc / (sv * sv);
  });
  return y;
}

// ---------------------------------------------------------------------------
// channel ops (NCHW, real)
// ---------------------------------------------------------------------------

inline Var concat_channels(Trace& tr, const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_channels: empty input list");
  const auto& s0 = tr.shape(parts[0]);
  require_shape(s0.size() == 4 && !tr.is_complex(parts[0]), "concat_channels: expects real NCHW tensors");
  int ctotal = 0;
  for (Var p : parts) {
    const auto& s = tr.shape(p);
    require_shape(s.size() == 4 && s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3] && !tr.is_complex(p),
                  "concat_channels: mismatched part shape " + shape_str(s));
    ctotal += s[1];
  }
  const int n = s0[0], h = s0[2], w = s0[3];
  const size_t hw = static_cast<size_t>(h) * w;
  std::vector<double> out(static_cast<size_t>(n) * ctotal * hw);
  std::vector<int> offsets;
  {
    int coff = 0;
    for (Var p : parts) {
      offsets.push_back(coff);
      const int pc = tr.shape(p)[1];
      const auto& pv = tr.data(p);
      for (int b = 0; b < n; ++b)
        std::copy(pv.begin() + static_cast<long>(b) * pc * hw, pv.begin() + static_cast<long>(b + 1) * pc * hw,
                  out.begin() + (static_cast<long>(b) * ctotal + coff) * hw);
      coff += pc;
    }
  }
  Var y = tr.make_value({n, ctotal, h, w}, std::move(out), false);
  tr.record([&tr, parts, offsets, y, n, ctotal, hw] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    for (size_t pi = 0; pi < parts.size(); ++pi) {
      const int pc = tr.shape(parts[pi])[1];
      auto& gp = tr.grad(parts[pi]);
      for (int b = 0; b < n; ++b) {
        const double* src = g.data() + (static_cast<size_t>(b) * ctotal + offsets[pi]) * hw;
        double* dst = gp.data() + static_cast<size_t>(b) * pc * hw;
        for (size_t i = 0; i < static_cast<size_t>(pc) * hw; ++i) dst[i] += src[i];
      }
    }
  });
  return y;
}

inline Var slice_channels(Trace& tr, Var x, int start, int len) {
  const auto& s = tr.shape(x);
  require_shape(s.size() == 4 && !tr.is_complex(x), "slice_channels: expects a real NCHW tensor");
  require(start >= 0 && len >= 1 && start + len <= s[1], "slice_channels: range out of bounds");
  const int n = s[0], c = s[1], h = s[2], w = s[3];
  const size_t hw = static_cast<size_t>(h) * w;
  std::vector<double> out(static_cast<size_t>(n) * len * hw);
  {
    const auto& xv = tr.data(x);
    for (int b = 0; b < n; ++b)
      std::copy(xv.begin() + (static_cast<long>(b) * c + start) * hw,
                xv.begin() + (static_cast<long>(b) * c + start + len) * hw,
                out.begin() + static_cast<long>(b) * len * hw);
  }
  Var y = tr.make_value({n, len, h, w}, std::move(out), false);
  tr.record([&tr, x, y, start, len, n, c, hw] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    auto& gx = tr.grad(x);
    for (int b = 0; b < n; ++b) {
      const double* src = g.data() + static_cast<size_t>(b) * len * hw;
      double* dst = gx.data() + (static_cast<size_t>(b) * c + start) * hw;
      for (size_t i = 0; i < static_cast<size_t>(len) * hw; ++i) dst[i] += src[i];
    }
  });
  return y;
}

// Contiguous slice of a rank-1 real tensor.
inline Var slice1d(Trace& tr, Var x, int start, int len) {
  const auto& s = tr.shape(x);
  require_shape(s.size() == 1 && !tr.is_complex(x), "slice1d: expects a real vector");
  require(start >= 0 && len >= 1 && start + len <= s[0], "slice1d: range out of bounds");
  std::vector<double> out(tr.data(x).begin() + start, tr.data(x).begin() + start + len);
  Var y = tr.make_value({len}, std::move(out), false);
  tr.record([&tr, x, y, start, len] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    auto& gx = tr.grad(x);
    for (int i = 0; i < len; ++i) gx[static_cast<size_t>(start + i)] += g[static_cast<size_t>(i)];
  });
  return y;
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

inline Var conv2d(Trace& tr, Var input, Var weight, Var bias, int dilation = 1, int groups = 1) {
  require_shape(!tr.is_complex(input) && !tr.is_complex(weight) && !tr.is_complex(bias),
                "conv2d: expects real tensors");
  detail::ConvDims d = detail::conv_dims(tr.shape(input), tr.shape(weight), dilation, groups);
  require_shape(tr.shape(bias) == std::vector<int>{d.cout},
                "conv2d: bias shape " + shape_str(tr.shape(bias)) + " != [" + std::to_string(d.cout) + "]");
  std::vector<double> out(static_cast<size_t>(d.n) * d.cout * d.h * d.w);
  detail::conv2d_forward(tr.data(input).data(), tr.data(weight).data(), tr.data(bias).data(),
                         out.data(), d);
  Var y = tr.make_value({d.n, d.cout, d.h, d.w}, std::move(out), false);
  tr.record([&tr, input, weight, bias, y, d] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    detail::conv2d_backward_input(tr.data(weight).data(), g.data(), tr.grad(input).data(), d);
    detail::conv2d_backward_weight(tr.data(input).data(), g.data(), tr.grad(weight).data(), d);
    detail::conv2d_backward_bias(g.data(), tr.grad(bias).data(), d);
  });
  return y;
}

// Depth-wise convolution: one kernel per channel, weight shaped C x 1 x K x K.
inline Var depthwise_conv2d(Trace& tr, Var input, Var weight, Var bias, int dilation = 1) {
  const auto& s = tr.shape(input);
  require_shape(s.size() == 4, "depthwise_conv2d: input must be NCHW, got " + shape_str(s));
  return conv2d(tr, input, weight, bias, dilation, /*groups=*/s[1]);
}

// ---------------------------------------------------------------------------
// complex ops
// ---------------------------------------------------------------------------

// Centered orthonormal 2-D DFT over the last two dims. VJP is the inverse
// transform (the map is unitary).
inline Var fft2c(Trace& tr, Var x) {
  require_shape(tr.is_complex(x), "fft2c: expects a complex tensor");
  ComplexTensor out = fft2c_raw(tr.complex(x), false);
  Var y = tr.make_value(out.shape, std::move(out.data), true);
  tr.record([&tr, x, y] {
    if (!tr.has_grad(y)) return;
    ComplexTensor g = tr.grad_complex(y);
    ComplexTensor gx = fft2c_raw(g, true);
    auto& dst = tr.grad(x);
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += gx.data[i];
  });
  return y;
}

inline Var ifft2c(Trace& tr, Var k) {
  require_shape(tr.is_complex(k), "ifft2c: expects a complex tensor");
  ComplexTensor out = fft2c_raw(tr.complex(k), true);
  Var y = tr.make_value(out.shape, std::move(out.data), true);
  tr.record([&tr, k, y] {
    if (!tr.has_grad(y)) return;
    ComplexTensor g = tr.grad_complex(y);
    ComplexTensor gk = fft2c_raw(g, false);
    auto& dst = tr.grad(k);
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += gk.data[i];
  });
  return y;
}

// Elementwise complex product.
inline Var cmul(Trace& tr, Var a, Var b) {
  require_shape(tr.is_complex(a) && tr.is_complex(b) && tr.shape(a) == tr.shape(b),
                "cmul: expects complex tensors of equal shape");
  const size_t n = tr.logical_numel(a);
  std::vector<double> out(2 * n);
  {
    const auto& av = tr.data(a);
    const auto& bv = tr.data(b);
    for (size_t i = 0; i < n; ++i) {
      out[2 * i] = av[2 * i] * bv[2 * i] - av[2 * i + 1] * bv[2 * i + 1];
      out[2 * i + 1] = av[2 * i] * bv[2 * i + 1] + av[2 * i + 1] * bv[2 * i];
    }
  }
  Var y = tr.make_value(tr.shape(a), std::move(out), true);
  tr.record([&tr, a, b, y, n] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    const auto& av = tr.data(a);
    const auto& bv = tr.data(b);
    auto& ga = tr.grad(a);
    // dL/da = g * conj(b)
    for (size_t i = 0; i < n; ++i) {
      ga[2 * i] += g[2 * i] * bv[2 * i] + g[2 * i + 1] * bv[2 * i + 1];
      ga[2 * i + 1] += -g[2 * i] * bv[2 * i + 1] + g[2 * i + 1] * bv[2 * i];
    }
    auto& gb = tr.grad(b);
    for (size_t i = 0; i < n; ++i) {
      gb[2 * i] += g[2 * i] * av[2 * i] + g[2 * i + 1] * av[2 * i + 1];
      gb[2 * i + 1] += -g[2 * i] * av[2 * i + 1] + g[2 * i + 1] * av[2 * i];
    }
  });
  return y;
}

// Per-coil product: out_i = S_i * x, with S shaped [nc, H, W] and x [H, W].
inline Var expand_coils(Trace& tr, Var S, Var x) {
  const auto& ss = tr.shape(S);
  const auto& xs = tr.shape(x);
  require_shape(tr.is_complex(S) && tr.is_complex(x) && ss.size() == 3 && xs.size() == 2 &&
                    ss[1] == xs[0] && ss[2] == xs[1],
                "expand_coils: S must be [nc,H,W] and x [H,W], got " + shape_str(ss) + " and " +
                    shape_str(xs));
  const size_t nc = static_cast<size_t>(ss[0]);
  const size_t hw = numel_of(xs);
  std::vector<double> out(2 * nc * hw);
  {
    const auto& sv = tr.data(S);
    const auto& xv = tr.data(x);
    for (size_t c = 0; c < nc; ++c)
      for (size_t i = 0; i < hw; ++i) {
        const size_t si = 2 * (c * hw + i);
        out[si] = sv[si] * xv[2 * i] - sv[si + 1] * xv[2 * i + 1];
        out[si + 1] = sv[si] * xv[2 * i + 1] + sv[si + 1] * xv[2 * i];
      }
  }
  Var y = tr.make_value(ss, std::move(out), true);
  tr.record([&tr, S, x, y, nc, hw] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    const auto& sv = tr.data(S);
    const auto& xv = tr.data(x);
    auto& gs = tr.grad(S);
    // dL/dS_i = g_i * conj(x)
    for (size_t c = 0; c < nc; ++c)
      for (size_t i = 0; i < hw; ++i) {
        const size_t si = 2 * (c * hw + i);
        gs[si] += g[si] * xv[2 * i] + g[si + 1] * xv[2 * i + 1];
        gs[si + 1] += -g[si] * xv[2 * i + 1] + g[si + 1] * xv[2 * i];
      }
    // dL/dx = sum_i conj(S_i) * g_i   (the reduce kernel)
    auto& gx = tr.grad(x);
    for (size_t c = 0; c < nc; ++c)
      for (size_t i = 0; i < hw; ++i) {
        const size_t si = 2 * (c * hw + i);
        gx[2 * i] += sv[si] * g[si] + sv[si + 1] * g[si + 1];
        gx[2 * i + 1] += sv[si] * g[si + 1] - sv[si + 1] * g[si];
      }
  });
  return y;
}

// Sensitivity-weighted combination: out = sum_i conj(S_i) * x_i.
inline Var reduce_coils(Trace& tr, Var S, Var coils) {
  const auto& ss = tr.shape(S);
  const auto& cs = tr.shape(coils);
  require_shape(tr.is_complex(S) && tr.is_complex(coils) && ss.size() == 3 && cs == ss,
                "reduce_coils: S and coil images must both be [nc,H,W], got " + shape_str(ss) +
                    " and " + shape_str(cs));
  const size_t nc = static_cast<size_t>(ss[0]);
  const size_t hw = static_cast<size_t>(ss[1]) * ss[2];
  std::vector<double> out(2 * hw, 0.0);
  {
    const auto& sv = tr.data(S);
    const auto& xv = tr.data(coils);
    for (size_t c = 0; c < nc; ++c)
      for (size_t i = 0; i < hw; ++i) {
        const size_t si = 2 * (c * hw + i);
        out[2 * i] += sv[si] * xv[si] + sv[si + 1] * xv[si + 1];
        out[2 * i + 1] += sv[si] * xv[si + 1] - sv[si + 1] * xv[si];
      }
  }
  Var y = tr.make_value({ss[1], ss[2]}, std::move(out), true);
  tr.record([&tr, S, coils, y, nc, hw] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    const auto& sv = tr.data(S);
    const auto& xv = tr.data(coils);
    // dL/dx_i = S_i * g   (the expand kernel)
    auto& gc = tr.grad(coils);
    for (size_t c = 0; c < nc; ++c)
      for (size_t i = 0; i < hw; ++i) {
        const size_t si = 2 * (c * hw + i);
        gc[si] += sv[si] * g[2 * i] - sv[si + 1] * g[2 * i + 1];
        gc[si + 1] += sv[si] * g[2 * i + 1] + sv[si + 1] * g[2 * i];
      }
    // dL/dS_i = conj(g) * x_i
    auto& gs = tr.grad(S);
    for (size_t c = 0; c < nc; ++c)
      for (size_t i = 0; i < hw; ++i) {
        const size_t si = 2 * (c * hw + i);
        gs[si] += g[2 * i] * xv[si] + g[2 * i + 1] * xv[si + 1];
        gs[si + 1] += g[2 * i] * xv[si + 1] - g[2 * i + 1] * xv[si];
      }
  });
  return y;
}

// Squared magnitude re^2 + im^2 of a complex tensor, as a real tensor.
inline Var abs2(Trace& tr, Var x) {
  require_shape(tr.is_complex(x), "abs2: expects a complex tensor");
  const size_t n = tr.logical_numel(x);
  std::vector<double> out(n);
  {
    const auto& xv = tr.data(x);
    for (size_t i = 0; i < n; ++i) out[i] = xv[2 * i] * xv[2 * i] + xv[2 * i + 1] * xv[2 * i + 1];
  }
  Var y = tr.make_value(tr.shape(x), std::move(out), false);
  tr.record([&tr, x, y, n] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    const auto& xv = tr.data(x);
    auto& gx = tr.grad(x);
    for (size_t i = 0; i < n; ++i) {
      gx[2 * i] += 2.0 * g[i] * xv[2 * i];
      gx[2 * i + 1] += 2.0 * g[i] * xv[2 * i + 1];
    }
  });
  return y;
}

// |x| with the |x|=0 subgradient set to 0.
inline Var magnitude(Trace& tr, Var x) {
  require_shape(tr.is_complex(x), "magnitude: expects a complex tensor");
  const size_t n = tr.logical_numel(x);
  std::vector<double> out(n);
  {
    const auto& xv = tr.data(x);
    for (size_t i = 0; i < n; ++i) out[i] = std::hypot(xv[2 * i], xv[2 * i + 1]);
  }
  Var y = tr.make_value(tr.shape(x), std::move(out), false);
  tr.record([&tr, x, y, n] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    const auto& xv = tr.data(x);
    const auto& yv = tr.data(y);
    auto& gx = tr.grad(x);
    for (size_t i = 0; i < n; ++i) {
      if (yv[i] == 0.0) continue;
      gx[2 * i] += g[i] * xv[2 * i] / yv[i];
      gx[2 * i + 1] += g[i] * xv[2 * i + 1] / yv[i];
    }
  });
  return y;
}

// Complex tensor scaled by a real field. r either matches x's shape or the
// trailing dims of x (broadcast over leading axes, e.g. per-coil).
inline Var cmul_real(Trace& tr, Var x, Var r) {
  require_shape(tr.is_complex(x) && !tr.is_complex(r), "cmul_real: expects complex x, real r");
  const auto& xs = tr.shape(x);
  const auto& rs = tr.shape(r);
  require_shape(rs.size() <= xs.size() &&
                    std::equal(rs.rbegin(), rs.rend(), xs.rbegin()),
                "cmul_real: r shape " + shape_str(rs) + " must match trailing dims of " + shape_str(xs));
  const size_t rn = numel_of(rs);
  const size_t n = tr.logical_numel(x);
  std::vector<double> out(2 * n);
  {
    const auto& xv = tr.data(x);
    const auto& rv = tr.data(r);
    for (size_t i = 0; i < n; ++i) {
      const double rr = rv[i % rn];
      out[2 * i] = xv[2 * i] * rr;
      out[2 * i + 1] = xv[2 * i + 1] * rr;
    }
  }
  Var y = tr.make_value(xs, std::move(out), true);
  tr.record([&tr, x, r, y, n, rn] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    const auto& xv = tr.data(x);
    const auto& rv = tr.data(r);
    auto& gx = tr.grad(x);
    for (size_t i = 0; i < n; ++i) {
      const double rr = rv[i % rn];
      gx[2 * i] += g[2 * i] * rr;
      gx[2 * i + 1] += g[2 * i + 1] * rr;
    }
    auto& gr = tr.grad(r);
    for (size_t i = 0; i < n; ++i)
      gr[i % rn] += g[2 * i] * xv[2 * i] + g[2 * i + 1] * xv[2 * i + 1];
  });
  return y;
}

// Multiplies the last axis by a fixed binary column mask (or its complement).
// Works on real and complex tensors; the VJP applies the same mask.
inline Var apply_colmask(Trace& tr, Var x, std::vector<uint8_t> columns, bool invert) {
  const auto& s = tr.shape(x);
  require_shape(!s.empty() && s.back() == static_cast<int>(columns.size()),
                "apply_colmask: last dim " + shape_str(s) + " != mask width " +
                    std::to_string(columns.size()));
  const size_t w = columns.size();
  const size_t stride = tr.is_complex(x) ? 2 : 1;
  const size_t rows = tr.data(x).size() / (w * stride);
  std::vector<double> out(tr.data(x).size(), 0.0);
  {
    const auto& xv = tr.data(x);
    for (size_t rowi = 0; rowi < rows; ++rowi)
      for (size_t j = 0; j < w; ++j) {
        const bool keep = invert ? columns[j] == 0 : columns[j] != 0;
        if (!keep) continue;
        for (size_t k = 0; k < stride; ++k) {
          const size_t idx = (rowi * w + j) * stride + k;
          out[idx] = xv[idx];
        }
      }
  }
  Var y = tr.make_value(s, std::move(out), tr.is_complex(x));
  tr.record([&tr, x, y, columns = std::move(columns), invert, w, stride, rows] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    auto& gx = tr.grad(x);
    for (size_t rowi = 0; rowi < rows; ++rowi)
      for (size_t j = 0; j < w; ++j) {
        const bool keep = invert ? columns[j] == 0 : columns[j] != 0;
        if (!keep) continue;
        for (size_t k = 0; k < stride; ++k) {
          const size_t idx = (rowi * w + j) * stride + k;
          gx[idx] += g[idx];
        }
      }
  });
  return y;
}

// [N,H,W] complex -> [N,2,H,W] real with channel 0 = re, channel 1 = im.
inline Var two_channel_from_complex(Trace& tr, Var x) {
  const auto& s = tr.shape(x);
  require_shape(tr.is_complex(x) && s.size() == 3,
                "two_channel_from_complex: expects complex [N,H,W], got " + shape_str(s));
  const size_t n = static_cast<size_t>(s[0]);
  const size_t hw = static_cast<size_t>(s[1]) * s[2];
  std::vector<double> out(2 * n * hw);
  {
    const auto& xv = tr.data(x);
    for (size_t b = 0; b < n; ++b)
      for (size_t i = 0; i < hw; ++i) {
        out[(b * 2 + 0) * hw + i] = xv[2 * (b * hw + i)];
        out[(b * 2 + 1) * hw + i] = xv[2 * (b * hw + i) + 1];
      }
  }
  Var y = tr.make_value({s[0], 2, s[1], s[2]}, std::move(out), false);
  tr.record([&tr, x, y, n, hw] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    auto& gx = tr.grad(x);
    for (size_t b = 0; b < n; ++b)
      for (size_t i = 0; i < hw; ++i) {
        gx[2 * (b * hw + i)] += g[(b * 2 + 0) * hw + i];
        gx[2 * (b * hw + i) + 1] += g[(b * 2 + 1) * hw + i];
      }
  });
  return y;
}

// [N,2,H,W] real -> [N,H,W] complex.
inline Var complex_from_two_channel(Trace& tr, Var x) {
  const auto& s = tr.shape(x);
  require_shape(!tr.is_complex(x) && s.size() == 4 && s[1] == 2,
                "complex_from_two_channel: expects real [N,2,H,W], got " + shape_str(s));
  const size_t n = static_cast<size_t>(s[0]);
  const size_t hw = static_cast<size_t>(s[2]) * s[3];
  std::vector<double> out(2 * n * hw);
  {
    const auto& xv = tr.data(x);
    for (size_t b = 0; b < n; ++b)
      for (size_t i = 0; i < hw; ++i) {
        out[2 * (b * hw + i)] = xv[(b * 2 + 0) * hw + i];
        out[2 * (b * hw + i) + 1] = xv[(b * 2 + 1) * hw + i];
      }
  }
  Var y = tr.make_value({s[0], s[2], s[3]}, std::move(out), true);
  tr.record([&tr, x, y, n, hw] {
    if (!tr.has_grad(y)) return;
    const auto& g = tr.grad(y);
    auto& gx = tr.grad(x);
    for (size_t b = 0; b < n; ++b)
      for (size_t i = 0; i < hw; ++i) {
        gx[(b * 2 + 0) * hw + i] += g[2 * (b * hw + i)];
        gx[(b * 2 + 1) * hw + i] += g[2 * (b * hw + i) + 1];
      }
  });
  return y;
}

}  // namespace eamri
