#pragma once

#include <string>
#include <vector>

#include "eamri/config.hpp"
#include "eamri/edge.hpp"
#include "eamri/mri.hpp"
#include "eamri/rdcn.hpp"
#include "eamri/sme.hpp"

namespace eamri {

// Edge Attention Module. Image queries and values come from 1x1 convs
// followed by 3x3 depthwise convs; edge keys from a 3x3 conv. Attention is
// paired channel-wise: per head, logits K.Q^T form a (C/heads)x(C/heads)
// matrix, so the contraction cost is linear in H*W.
struct EamBlock {
  Conv2dLayer q1, qd;   // image query: 1x1 then depthwise 3x3
  Conv2dLayer v1, vd;   // image value: same structure
  Conv2dLayer k3;       // edge key: 3x3, 1 -> C
  Conv2dLayer proj;     // 1x1, C -> 2, zero-init
  int alpha = -1;       // per-head temperature, shape [heads], init 1
  int heads = 4;
};

inline EamBlock make_eam(ParamStore& store, const std::string& prefix, int c, int heads, Rng& rng) {
  require(c % heads == 0, "eam: heads must divide channels");
  EamBlock b;
  b.heads = heads;
  b.q1 = make_conv(store, prefix + ".q1", 2, c, 1, 1, rng);
  b.qd = make_depthwise_conv(store, prefix + ".qd", c, 3, 1, rng);
  b.v1 = make_conv(store, prefix + ".v1", 2, c, 1, 1, rng);
  b.vd = make_depthwise_conv(store, prefix + ".vd", c, 3, 1, rng);
  b.k3 = make_conv(store, prefix + ".k3", 1, c, 3, 1, rng);
  b.proj = make_zero_conv(store, prefix + ".proj", c, 2, 1, 1);
  b.alpha = store.add(prefix + ".alpha", RealTensor::full({heads}, 1.0));
  return b;
}

// Optional instrumentation filled during eam_forward: one attention matrix
// per head, post-softmax.
struct EamProbe {
  std::vector<RealTensor> attention;
};

// x: [1,2,H,W] image features; edge: [1,1,H,W]. Ends in data consistency.
// With literal_alpha the learnable temperature divides the attended values
// after the softmax instead of tempering the logits.
inline Var eam_forward(Trace& tr, Var x, Var edge, const EamBlock& b, ParamStore& store, Var y,
                       const SamplingMask& mask, Var S, bool literal_alpha = false,
                       EamProbe* probe = nullptr) {
  const auto& xs = tr.shape(x);
  const auto& es = tr.shape(edge);
  require_shape(xs.size() == 4 && xs[0] == 1 && xs[1] == 2, "eam: image must be [1,2,H,W]");
  require_shape(es == std::vector<int>{1, 1, xs[2], xs[3]},
                "eam: edge shape " + shape_str(es) + " does not match image " + shape_str(xs));
  const int h = xs[2], w = xs[3], hw = h * w;

  Var q = apply_conv(tr, store, b.qd, apply_conv(tr, store, b.q1, x));
  Var v = apply_conv(tr, store, b.vd, apply_conv(tr, store, b.v1, x));
  Var k = apply_conv(tr, store, b.k3, edge);
  const int c = tr.shape(q)[1];
  const int ch = c / b.heads;
  Var alpha = tr.leaf(store, b.alpha);

  std::vector<Var> head_outs;
  for (int head = 0; head < b.heads; ++head) {
    Var qh = reshape(tr, slice_channels(tr, q, head * ch, ch), {ch, hw});
    Var kh = reshape(tr, slice_channels(tr, k, head * ch, ch), {ch, hw});
    Var vh = reshape(tr, slice_channels(tr, v, head * ch, ch), {ch, hw});
    Var logits = matmul(tr, kh, transpose2d(tr, qh));  // [ch, ch]
    Var ah = slice1d(tr, alpha, head, 1);
    Var attended;
    if (literal_alpha) {
      Var attn = softmax(tr, logits, -1);
      if (probe) probe->attention.push_back(tr.real(attn));
      attended = div_scalar(tr, matmul(tr, attn, vh), ah);
    } else {
      Var attn = softmax(tr, div_scalar(tr, logits, ah), -1);
      if (probe) probe->attention.push_back(tr.real(attn));
      attended = matmul(tr, attn, vh);
    }
    head_outs.push_back(reshape(tr, attended, {1, ch, h, w}));
  }
  Var merged = concat_channels(tr, head_outs);
  Var delta = apply_conv(tr, store, b.proj, merged);
  Var out = add(tr, x, delta);

  Var img = complex_from_two_channel(tr, out);
  Var dc = data_consistency(tr, reshape(tr, img, {h, w}), y, mask, S);
  return two_channel_from_complex(tr, reshape(tr, dc, {1, h, w}));
}

// M2-style fusion: concat the edge map onto the image channels, 1x1 conv on
// a residual path, then data consistency.
inline Var concat_fuse_forward(Trace& tr, Var x, Var edge, const Conv2dLayer& fuse,
                               ParamStore& store, Var y, const SamplingMask& mask, Var S) {
  Var delta = apply_conv(tr, store, fuse, concat_channels(tr, {x, edge}));
  Var out = add(tr, x, delta);
  const auto& s = tr.shape(out);
  Var img = complex_from_two_channel(tr, out);
  Var dc = data_consistency(tr, reshape(tr, img, {s[2], s[3]}), y, mask, S);
  return two_channel_from_complex(tr, reshape(tr, dc, {1, s[2], s[3]}));
}

// ---------------------------------------------------------------------------
// assembled model
// ---------------------------------------------------------------------------

// Full model: SME, image head, and N cascades. The FULL variant pairs each
// RDCN with its own EAM; M1 drops the edge branch entirely; M2 swaps EAM for
// concat + 1x1 conv; M3 shares one EAM across all cascades. One EPN instance
// serves every cascade in the edge-guided variants.
struct EamriModel {
  ReconConfig cfg;
  Variant kind = Variant::Full;
  ParamStore params;

  SmeNet sme;
  RdcnBlock image_head;
  std::vector<RdcnBlock> cascades;
  bool has_epn = false;
  EpnNet epn;
  std::vector<EamBlock> eams;        // FULL: N, M3: 1
  std::vector<Conv2dLayer> fusions;  // M2: N
};

inline EamriModel build_variant(Variant kind, const ReconConfig& cfg, uint64_t init_seed) {
  cfg.validate();
  EamriModel m;
  m.cfg = cfg;
  m.kind = kind;
  Rng rng(init_seed);
  m.sme = make_sme(m.params, "sme", cfg.sme_channels(), cfg.M, rng);
  m.image_head = make_rdcn(m.params, "head", cfg.head_channels(), cfg.M, rng);
  for (int t = 0; t < cfg.N; ++t)
    m.cascades.push_back(make_rdcn(m.params, "cascade" + std::to_string(t) + ".rdcn", cfg.C, cfg.M, rng));
  if (kind != Variant::M1) {
    m.epn = make_epn(m.params, "epn", cfg.C, cfg.msrb_count, rng);
    m.has_epn = true;
  }
  switch (kind) {
    case Variant::Full:
      for (int t = 0; t < cfg.N; ++t)
        m.eams.push_back(make_eam(m.params, "cascade" + std::to_string(t) + ".eam", cfg.C, cfg.heads, rng));
      break;
    case Variant::M3:
      m.eams.push_back(make_eam(m.params, "eam_shared", cfg.C, cfg.heads, rng));
      break;
    case Variant::M2:
      for (int t = 0; t < cfg.N; ++t)
        m.fusions.push_back(
            make_zero_conv(m.params, "cascade" + std::to_string(t) + ".fuse", 3, 2, 1, 1));
      break;
    case Variant::M1:
      break;
  }
  return m;
}

inline EamriModel build_variant(const ReconConfig& cfg) {
  return build_variant(cfg.variant_kind(), cfg, Rng::derive(cfg.seed, 0x1417));
}

struct ModelOutput {
  Var x_pred;              // complex [H,W]
  std::vector<Var> edges;  // N maps [1,1,H,W] for edge-guided variants
};

// End-to-end forward pass: estimate maps, zero-fill, image head, then the
// cascade loop. Each cascade predicts edges from its input state, de-aliases
// with RDCN, and fuses the edge prior; every stage ends in data consistency.
inline ModelOutput model_forward(Trace& tr, const ComplexTensor& y_data, const SamplingMask& mask,
                                 EamriModel& m, EamProbe* probe = nullptr) {
  require_shape(y_data.rank() == 3, "model_forward: y must be [nc,H,W]");
  const int h = y_data.dim(1), w = y_data.dim(2);
  Var y = tr.input(y_data);
  Var S = estimate_sensitivities(tr, y, mask, m.sme, m.params);
  Var x0 = zero_filled(tr, y, S);
  Var x = two_channel_from_complex(tr, reshape(tr, x0, {1, h, w}));
  x = rdcn_forward(tr, x, m.image_head, m.params, y, mask, S);

  ModelOutput out;
  for (int t = 0; t < m.cfg.N; ++t) {
    Var e;
    if (m.has_epn) {
      e = epn_forward(tr, x, m.epn, m.params);
      out.edges.push_back(e);
    }
    x = rdcn_forward(tr, x, m.cascades[static_cast<size_t>(t)], m.params, y, mask, S);
    switch (m.kind) {
      case Variant::Full:
        x = eam_forward(tr, x, e, m.eams[static_cast<size_t>(t)], m.params, y, mask, S,
                        m.cfg.literal_alpha, probe);
        break;
      case Variant::M3:
        x = eam_forward(tr, x, e, m.eams[0], m.params, y, mask, S, m.cfg.literal_alpha, probe);
        break;
      case Variant::M2:
        x = concat_fuse_forward(tr, x, e, m.fusions[static_cast<size_t>(t)], m.params, y, mask, S);
        break;
      case Variant::M1:
        break;
    }
  }
  Var img = complex_from_two_channel(tr, x);
  out.x_pred = reshape(tr, img, {h, w});
  return out;
}

inline ModelOutput model_forward(Trace& tr, const KSpaceSample& sample, EamriModel& m,
                                 EamProbe* probe = nullptr) {
  return model_forward(tr, sample.y, sample.mask, m, probe);
}

}  // namespace eamri
