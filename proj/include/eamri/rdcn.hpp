#pragma once

#include <string>
#include <vector>

#include "eamri/layers.hpp"
#include "eamri/mri.hpp"
#include "eamri/ops.hpp"

namespace eamri {

// Dilated Convolution Block: three 3x3 convs at dilations (1, 2, 4), relu
// after each but the last, plus a residual connection. One instance is
// shared across all recursions of its RDCN.
struct DcbParams {
  Conv2dLayer c1, c2, c3;
};

inline DcbParams make_dcb(ParamStore& store, const std::string& prefix, int c, Rng& rng) {
  DcbParams d;
  d.c1 = make_conv(store, prefix + ".c1", c, c, 3, 1, rng);
  d.c2 = make_conv(store, prefix + ".c2", c, c, 3, 2, rng);
  d.c3 = make_conv(store, prefix + ".c3", c, c, 3, 4, rng);
  return d;
}

inline Var dcb_forward(Trace& tr, Var x, const DcbParams& d, ParamStore& store) {
  Var h = relu(tr, apply_conv(tr, store, d.c1, x));
  h = relu(tr, apply_conv(tr, store, d.c2, h));
  h = apply_conv(tr, store, d.c3, h);
  return add(tr, x, h);
}

// Recursive dilated conv trunk: lift to width C, M weight-shared DCB passes
// whose outputs are all aggregated together with the lifted input, then a
// zero-initialized projection back to 2 channels on a residual path.
struct RdcnBlock {
  Conv2dLayer lift;     // 2 -> C
  DcbParams dcb;        // shared across recursions
  Conv2dLayer project;  // C -> 2, zero-init
  int recursions = 3;
};

inline RdcnBlock make_rdcn(ParamStore& store, const std::string& prefix, int c, int recursions,
                           Rng& rng) {
  RdcnBlock b;
  b.lift = make_conv(store, prefix + ".lift", 2, c, 3, 1, rng);
  b.dcb = make_dcb(store, prefix + ".dcb", c, rng);
  b.project = make_zero_conv(store, prefix + ".project", c, 2, 3, 1);
  b.recursions = recursions;
  return b;
}

// Conv trunk only (no data consistency): x + project(h0 + sum_m h_m).
inline Var rdcn_refine(Trace& tr, Var x, const RdcnBlock& b, ParamStore& store) {
  Var h = apply_conv(tr, store, b.lift, x);
  Var agg = h;
  for (int m = 0; m < b.recursions; ++m) {
    h = dcb_forward(tr, h, b.dcb, store);
    agg = add(tr, agg, h);
  }
  Var delta = apply_conv(tr, store, b.project, agg);
  return add(tr, x, delta);
}

// Full de-aliasing block: trunk followed by a data-consistency layer.
// x is the 2-channel image representation [1,2,H,W].
inline Var rdcn_forward(Trace& tr, Var x, const RdcnBlock& b, ParamStore& store, Var y,
                        const SamplingMask& mask, Var S) {
  Var refined = rdcn_refine(tr, x, b, store);
  Var img = complex_from_two_channel(tr, refined);
  const auto& s = tr.shape(img);
  Var dc = data_consistency(tr, reshape(tr, img, {s[1], s[2]}), y, mask, S);
  return two_channel_from_complex(tr, reshape(tr, dc, {1, s[1], s[2]}));
}

}  // namespace eamri
