#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

#include "eamri/layers.hpp"
#include "eamri/opcount.hpp"
#include "eamri/ops.hpp"

namespace eamri {

// ---------------------------------------------------------------------------
// ground-truth edge extraction (untraced)
// ---------------------------------------------------------------------------

// Zero-padded Sobel gradients with the standard 3x3 kernels.
inline void sobel_gradients(const RealTensor& img, RealTensor& gx, RealTensor& gy) {
  require_shape(img.rank() == 2, "sobel: expects an [H,W] image, got " + shape_str(img.shape));
  const int h = img.dim(0), w = img.dim(1);
  gx = RealTensor::zeros({h, w});
  gy = RealTensor::zeros({h, w});
  auto px = [&](int y, int x) -> double {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
    return img.data[static_cast<size_t>(y) * w + x];
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double a = px(y - 1, x - 1), b = px(y - 1, x), c = px(y - 1, x + 1);
      const double d = px(y, x - 1), f = px(y, x + 1);
      const double g = px(y + 1, x - 1), hh = px(y + 1, x), i = px(y + 1, x + 1);
      gx.data[static_cast<size_t>(y) * w + x] = (c + 2.0 * f + i) - (a + 2.0 * d + g);
      gy.data[static_cast<size_t>(y) * w + x] = (g + 2.0 * hh + i) - (a + 2.0 * b + c);
    }
}

// Unnormalized Sobel gradient magnitude sqrt(Gx^2 + Gy^2).
inline RealTensor sobel_magnitude(const RealTensor& img) {
  RealTensor gx, gy;
  sobel_gradients(img, gx, gy);
  RealTensor out = RealTensor::zeros(img.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::hypot(gx.data[i], gy.data[i]);
  return out;
}

// Sobel edge map normalized by its own maximum; all zeros when flat.
inline RealTensor sobel_edges(const RealTensor& img) {
  RealTensor mag = sobel_magnitude(img);
  const double m = mag.max_abs();
  if (m > 0.0)
    for (double& v : mag.data) v /= m;
  return mag;
}

// Canny: gradient -> non-maximum suppression -> hysteresis. Thresholds are
// fractions of the maximum gradient magnitude; output is binary {0,1}.
inline RealTensor canny_edges(const RealTensor& img, double low, double high) {
  require(low < high, "canny: low threshold must be below high threshold");
  require(low >= 0.0 && high <= 1.0, "canny: thresholds are fractions of max gradient in [0,1]");
  const int h = img.dim(0), w = img.dim(1);
  RealTensor gx, gy;
  sobel_gradients(img, gx, gy);
  RealTensor mag = RealTensor::zeros({h, w});
  for (size_t i = 0; i < mag.data.size(); ++i) mag.data[i] = std::hypot(gx.data[i], gy.data[i]);
  const double mmax = mag.max_abs();
  RealTensor out = RealTensor::zeros({h, w});
  if (mmax == 0.0) return out;
  for (double& v : mag.data) v /= mmax;

  auto at = [&](const RealTensor& t, int y, int x) -> double {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
    return t.data[static_cast<size_t>(y) * w + x];
  };

  // NMS: quantize the gradient direction to 0/45/90/135 degrees and keep
  // local maxima along it (strict on one side so plateaus thin to a line).
  RealTensor thin = RealTensor::zeros({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double m = mag.data[static_cast<size_t>(y) * w + x];
      if (m == 0.0) continue;
      const double ang = std::atan2(gy.data[static_cast<size_t>(y) * w + x],
                                    gx.data[static_cast<size_t>(y) * w + x]);
      double deg = ang * 180.0 / 3.141592653589793;
      if (deg < 0.0) deg += 180.0;
      int dy1, dx1;
      if (deg < 22.5 || deg >= 157.5) {
        dy1 = 0; dx1 = 1;          // horizontal gradient, vertical edge
      } else if (deg < 67.5) {
        dy1 = 1; dx1 = 1;
      } else if (deg < 112.5) {
        dy1 = 1; dx1 = 0;
      } else {
        dy1 = 1; dx1 = -1;
      }
      const double before = at(mag, y - dy1, x - dx1);
      const double after = at(mag, y + dy1, x + dx1);
      if (m > before && m >= after) thin.data[static_cast<size_t>(y) * w + x] = m;
    }

  // double threshold + hysteresis from strong pixels
  std::deque<std::pair<int, int>> frontier;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (thin.data[static_cast<size_t>(y) * w + x] >= high) {
        out.data[static_cast<size_t>(y) * w + x] = 1.0;
        frontier.emplace_back(y, x);
      }
  while (!frontier.empty()) {
    auto [y, x] = frontier.front();
    frontier.pop_front();
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
        const size_t idx = static_cast<size_t>(yy) * w + xx;
        if (out.data[idx] == 0.0 && thin.data[idx] >= low) {
          out.data[idx] = 1.0;
          frontier.emplace_back(yy, xx);
        }
      }
  }
  return out;
}

// ---------------------------------------------------------------------------
// edge prediction network
// ---------------------------------------------------------------------------

// Multi-scale residual block: two cross-fused stages mixing dilation-1 and
// dilation-2 receptive fields, closed by a 1x1 fusion onto a residual path.
struct MsrbBlock {
  Conv2dLayer p1, s1;    // stage 1: C -> C, dilations 1 and 2
  Conv2dLayer p2, s2;    // stage 2: 2C -> C, dilations 1 and 2
  Conv2dLayer fuse;      // 1x1, 2C -> C
};

inline MsrbBlock make_msrb(ParamStore& store, const std::string& prefix, int c, Rng& rng) {
  MsrbBlock b;
  b.p1 = make_conv(store, prefix + ".p1", c, c, 3, 1, rng);
  b.s1 = make_conv(store, prefix + ".s1", c, c, 3, 2, rng);
  b.p2 = make_conv(store, prefix + ".p2", 2 * c, c, 3, 1, rng);
  b.s2 = make_conv(store, prefix + ".s2", 2 * c, c, 3, 2, rng);
  b.fuse = make_conv(store, prefix + ".fuse", 2 * c, c, 1, 1, rng);
  return b;
}

inline Var msrb_forward(Trace& tr, Var x, const MsrbBlock& b, ParamStore& store) {
  Var p1 = relu(tr, apply_conv(tr, store, b.p1, x));
  Var s1 = relu(tr, apply_conv(tr, store, b.s1, x));
  Var p2 = relu(tr, apply_conv(tr, store, b.p2, concat_channels(tr, {p1, s1})));
  Var s2 = relu(tr, apply_conv(tr, store, b.s2, concat_channels(tr, {s1, p1})));
  Var fused = apply_conv(tr, store, b.fuse, concat_channels(tr, {p2, s2}));
  return add(tr, x, fused);
}

// Edge Prediction Network: head conv, a cascade of MSRBs whose outputs are
// all collected, 1x1 fusion, tail conv, sigmoid bound to [0,1].
struct EpnNet {
  Conv2dLayer head;               // 2 -> C
  std::vector<MsrbBlock> blocks;  // width C
  Conv2dLayer fuse;               // 1x1, blocks*C -> C
  Conv2dLayer tail;               // C -> 1
};

inline EpnNet make_epn(ParamStore& store, const std::string& prefix, int c, int msrb_count,
                       Rng& rng) {
  EpnNet net;
  net.head = make_conv(store, prefix + ".head", 2, c, 3, 1, rng);
  for (int i = 0; i < msrb_count; ++i)
    net.blocks.push_back(make_msrb(store, prefix + ".msrb" + std::to_string(i), c, rng));
  net.fuse = make_conv(store, prefix + ".fuse", msrb_count * c, c, 1, 1, rng);
  net.tail = make_conv(store, prefix + ".tail", c, 1, 3, 1, rng);
  return net;
}

// x is the 2-channel image representation [N,2,H,W]; returns [N,1,H,W] in [0,1].
inline Var epn_forward(Trace& tr, Var x, const EpnNet& net, ParamStore& store) {
  ++opcount::edge_net_calls;
  Var h = apply_conv(tr, store, net.head, x);
  std::vector<Var> outs;
  Var cur = h;
  for (const auto& b : net.blocks) {
    cur = msrb_forward(tr, cur, b, store);
    outs.push_back(cur);
  }
  Var fused = apply_conv(tr, store, net.fuse, concat_channels(tr, outs));
  Var logits = apply_conv(tr, store, net.tail, fused);
  return sigmoid(tr, logits);
}

}  // namespace eamri
