#pragma once

#include <algorithm>
#include <cstdint>

#include "eamri/opcount.hpp"
#include "eamri/tensor.hpp"

namespace eamri {
namespace detail {

// Shapes for "same"-padded 2-D cross-correlation. Input N x Cin x H x W,
// weight Cout x (Cin/groups) x K x K, output N x Cout x H x W. K must be odd.
struct ConvDims {
  int n, cin, h, w, cout, k, dilation, groups;
  int pad() const { return dilation * (k - 1) / 2; }
  int cin_g() const { return cin / groups; }
  int cout_g() const { return cout / groups; }
};

inline ConvDims conv_dims(const std::vector<int>& in_shape, const std::vector<int>& w_shape,
                          int dilation, int groups) {
  require_shape(in_shape.size() == 4, "conv2d: input must be NCHW, got " + shape_str(in_shape));
  require_shape(w_shape.size() == 4 && w_shape[2] == w_shape[3],
                "conv2d: weight must be OIKK with square kernel, got " + shape_str(w_shape));
  require(dilation >= 1, "conv2d: dilation must be >= 1");
  require(groups >= 1, "conv2d: groups must be >= 1");
  ConvDims d{in_shape[0], in_shape[1], in_shape[2], in_shape[3],
             w_shape[0],  w_shape[2],  dilation,    groups};
  require_shape(d.k % 2 == 1, "conv2d: kernel size must be odd for same padding");
  require_shape(d.cin % groups == 0, "conv2d: in-channels " + std::to_string(d.cin) +
                                         " not divisible by groups " + std::to_string(groups));
  require_shape(d.cout % groups == 0, "conv2d: out-channels " + std::to_string(d.cout) +
                                          " not divisible by groups " + std::to_string(groups));
  require_shape(w_shape[1] == d.cin_g(),
                "conv2d: weight in-channels " + std::to_string(w_shape[1]) + " != input channels/groups " +
                    std::to_string(d.cin_g()));
  return d;
}

inline uint64_t conv_macs(const ConvDims& d) {
  return static_cast<uint64_t>(d.n) * d.cout * d.cin_g() * d.k * d.k * d.h * d.w;
}

// out[n][oc][oh][ow] = bias[oc] + sum_{ic,ky,kx} w[oc][ic][ky][kx] * in[n][g*cin_g+ic][oh+ky*dil-pad][ow+kx*dil-pad]
inline void conv2d_forward(const double* in, const double* w, const double* bias, double* out,
                           const ConvDims& d) {
  const int pad = d.pad();
  const size_t hw = static_cast<size_t>(d.h) * d.w;
  for (int n = 0; n < d.n; ++n) {
    for (int oc = 0; oc < d.cout; ++oc) {
      double* outp = out + (static_cast<size_t>(n) * d.cout + oc) * hw;
      const double b = bias ? bias[oc] : 0.0;
      std::fill(outp, outp + hw, b);
      const int g = oc / d.cout_g();
      for (int ic = 0; ic < d.cin_g(); ++ic) {
        const double* inp = in + (static_cast<size_t>(n) * d.cin + g * d.cin_g() + ic) * hw;
        const double* wrow = w + ((static_cast<size_t>(oc) * d.cin_g() + ic) * d.k) * d.k;
        for (int ky = 0; ky < d.k; ++ky) {
          const int dy = ky * d.dilation - pad;
          const int oh_lo = std::max(0, -dy);
          const int oh_hi = std::min(d.h, d.h - dy);
          for (int kx = 0; kx < d.k; ++kx) {
            const double wv = wrow[ky * d.k + kx];
            if (wv == 0.0) continue;
            const int dx = kx * d.dilation - pad;
            const int ow_lo = std::max(0, -dx);
            const int ow_hi = std::min(d.w, d.w - dx);
            for (int oh = oh_lo; oh < oh_hi; ++oh) {
              double* orow = outp + static_cast<size_t>(oh) * d.w;
              const double* irow = inp + static_cast<size_t>(oh + dy) * d.w + dx;
              for (int ow = ow_lo; ow < ow_hi; ++ow) orow[ow] += wv * irow[ow];
            }
          }
        }
      }
    }
  }
  opcount::add(conv_macs(d));
}

// Accumulates d(loss)/d(in) given d(loss)/d(out); gin must be pre-zeroed by
// the caller (or hold a running accumulation).
inline void conv2d_backward_input(const double* w, const double* gout, double* gin,
                                  const ConvDims& d) {
  const int pad = d.pad();
  const size_t hw = static_cast<size_t>(d.h) * d.w;
  for (int n = 0; n < d.n; ++n) {
    for (int oc = 0; oc < d.cout; ++oc) {
      const double* gop = gout + (static_cast<size_t>(n) * d.cout + oc) * hw;
      const int g = oc / d.cout_g();
      for (int ic = 0; ic < d.cin_g(); ++ic) {
        double* gip = gin + (static_cast<size_t>(n) * d.cin + g * d.cin_g() + ic) * hw;
        const double* wrow = w + ((static_cast<size_t>(oc) * d.cin_g() + ic) * d.k) * d.k;
        for (int ky = 0; ky < d.k; ++ky) {
          const int dy = ky * d.dilation - pad;
          const int oh_lo = std::max(0, -dy);
          const int oh_hi = std::min(d.h, d.h - dy);
          for (int kx = 0; kx < d.k; ++kx) {
            const double wv = wrow[ky * d.k + kx];
            if (wv == 0.0) continue;
            const int dx = kx * d.dilation - pad;
            const int ow_lo = std::max(0, -dx);
            const int ow_hi = std::min(d.w, d.w - dx);
            for (int oh = oh_lo; oh < oh_hi; ++oh) {
              const double* grow = gop + static_cast<size_t>(oh) * d.w;
              double* irow = gip + static_cast<size_t>(oh + dy) * d.w + dx;
              for (int ow = ow_lo; ow < ow_hi; ++ow) irow[ow] += wv * grow[ow];
            }
          }
        }
      }
    }
  }
}

// Accumulates d(loss)/d(w) into gw.
inline void conv2d_backward_weight(const double* in, const double* gout, double* gw,
                                   const ConvDims& d) {
  const int pad = d.pad();
  const size_t hw = static_cast<size_t>(d.h) * d.w;
  for (int n = 0; n < d.n; ++n) {
    for (int oc = 0; oc < d.cout; ++oc) {
      const double* gop = gout + (static_cast<size_t>(n) * d.cout + oc) * hw;
      const int g = oc / d.cout_g();
      for (int ic = 0; ic < d.cin_g(); ++ic) {
        const double* inp = in + (static_cast<size_t>(n) * d.cin + g * d.cin_g() + ic) * hw;
        double* wrow = gw + ((static_cast<size_t>(oc) * d.cin_g() + ic) * d.k) * d.k;
        for (int ky = 0; ky < d.k; ++ky) {
          const int dy = ky * d.dilation - pad;
          const int oh_lo = std::max(0, -dy);
          const int oh_hi = std::min(d.h, d.h - dy);
          for (int kx = 0; kx < d.k; ++kx) {
            const int dx = kx * d.dilation - pad;
            const int ow_lo = std::max(0, -dx);
            const int ow_hi = std::min(d.w, d.w - dx);
            double acc = 0.0;
            for (int oh = oh_lo; oh < oh_hi; ++oh) {
              const double* grow = gop + static_cast<size_t>(oh) * d.w;
              const double* irow = inp + static_cast<size_t>(oh + dy) * d.w + dx;
              for (int ow = ow_lo; ow < ow_hi; ++ow) acc += grow[ow] * irow[ow];
            }
            wrow[ky * d.k + kx] += acc;
          }
        }
      }
    }
  }
}

inline void conv2d_backward_bias(const double* gout, double* gb, const ConvDims& d) {
  const size_t hw = static_cast<size_t>(d.h) * d.w;
  for (int n = 0; n < d.n; ++n) {
    for (int oc = 0; oc < d.cout; ++oc) {
      const double* gop = gout + (static_cast<size_t>(n) * d.cout + oc) * hw;
      double acc = 0.0;
      for (size_t i = 0; i < hw; ++i) acc += gop[i];
      gb[oc] += acc;
    }
  }
}

}  // namespace detail
}  // namespace eamri
