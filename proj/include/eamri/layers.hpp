#pragma once

#include <cmath>
#include <string>

#include "eamri/ops.hpp"
#include "eamri/rng.hpp"
#include "eamri/trace.hpp"

namespace eamri {

// Parameter handles for one conv layer. Weights live in a ParamStore; the
// layer itself is just ids plus fixed hyperparameters.
struct Conv2dLayer {
  int w = -1;
  int b = -1;
  int dilation = 1;
  int groups = 1;
};

// Centered uniform init with fan-in scaling, zero bias.
inline Conv2dLayer make_conv(ParamStore& store, const std::string& name, int cin, int cout, int k,
                             int dilation, Rng& rng, int groups = 1) {
  Conv2dLayer layer;
  layer.dilation = dilation;
  layer.groups = groups;
  const int cin_g = cin / groups;
  RealTensor w = RealTensor::zeros({cout, cin_g, k, k});
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin_g) * k * k);
  for (double& v : w.data) v = rng.uniform(-bound, bound);
  layer.w = store.add(name + ".w", std::move(w));
  layer.b = store.add(name + ".b", RealTensor::zeros({cout}));
  return layer;
}

// Zero-initialized conv, used for every projection that feeds a residual add
// so freshly built models start as identity maps.
inline Conv2dLayer make_zero_conv(ParamStore& store, const std::string& name, int cin, int cout,
                                  int k, int dilation, int groups = 1) {
  Conv2dLayer layer;
  layer.dilation = dilation;
  layer.groups = groups;
  layer.w = store.add(name + ".w", RealTensor::zeros({cout, cin / groups, k, k}));
  layer.b = store.add(name + ".b", RealTensor::zeros({cout}));
  return layer;
}

inline Conv2dLayer make_depthwise_conv(ParamStore& store, const std::string& name, int c, int k,
                                       int dilation, Rng& rng) {
  return make_conv(store, name, c, c, k, dilation, rng, /*groups=*/c);
}

inline Var apply_conv(Trace& tr, ParamStore& store, const Conv2dLayer& layer, Var x) {
  Var w = tr.leaf(store, layer.w);
  Var b = tr.leaf(store, layer.b);
  return conv2d(tr, x, w, b, layer.dilation, layer.groups);
}

}  // namespace eamri
