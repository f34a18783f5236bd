#pragma once

#include <string>

#include "eamri/mri.hpp"
#include "eamri/ops.hpp"
#include "eamri/rdcn.hpp"

namespace eamri {

// Learnable sensitivity map estimation: the refiner is a reduced-width RDCN
// trunk applied per coil. Its projection layer starts at zero, so the
// freshly built module passes coil images through unchanged.
struct SmeNet {
  RdcnBlock refiner;
};

inline SmeNet make_sme(ParamStore& store, const std::string& prefix, int c, int recursions,
                       Rng& rng) {
  return SmeNet{make_rdcn(store, prefix + ".refiner", c, recursions, rng)};
}

// ACS filter -> per-coil inverse FFT -> parallel RSS and CNN branches ->
// divide -> renormalize so sum_i conj(S_i) S_i == 1 pixelwise. Fully traced.
// y is constant k-space [nc,H,W]; result is a traced [nc,H,W] map stack.
inline Var estimate_sensitivities(Trace& tr, Var y, const SamplingMask& mask, const SmeNet& net,
                                  ParamStore& store) {
  require(mask.acs_count() > 0, "estimate_sensitivities: mask has an empty ACS region");
  Var acs_k = apply_colmask(tr, y, mask.acs_columns(), /*invert=*/false);
  Var coil_imgs = ifft2c(tr, acs_k);

  // branch A: root sum of squares (guarded away from zero)
  Var denom = rss_guarded(tr, coil_imgs);

  // branch B: per-coil CNN refinement on the 2-channel representation
  Var stacked = two_channel_from_complex(tr, coil_imgs);
  Var refined2ch = rdcn_refine(tr, stacked, net.refiner, store);
  Var refined = complex_from_two_channel(tr, refined2ch);

  // divide, then renormalize to enforce the unit-sensitivity identity
  Var s0 = cmul_real(tr, refined, recip(tr, denom));
  Var nrm = rss_guarded(tr, s0);
  return cmul_real(tr, s0, recip(tr, nrm));
}

}  // namespace eamri
