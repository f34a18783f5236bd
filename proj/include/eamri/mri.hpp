#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "eamri/fft.hpp"
#include "eamri/ops.hpp"
#include "eamri/rng.hpp"
#include "eamri/tensor.hpp"

namespace eamri {

// Cartesian column mask: a binary vector over k-space columns, broadcast over
// rows, with a fully sampled contiguous center band (the ACS region).
struct SamplingMask {
  std::vector<uint8_t> columns;
  int acs_lo = 0;  // inclusive
  int acs_hi = 0;  // exclusive

  int width() const { return static_cast<int>(columns.size()); }
  int sampled_count() const {
    int n = 0;
    for (uint8_t c : columns) n += c != 0;
    return n;
  }
  int acs_count() const { return acs_hi - acs_lo; }

  std::vector<uint8_t> acs_columns() const {
    std::vector<uint8_t> acs(columns.size(), 0);
    for (int j = acs_lo; j < acs_hi; ++j) acs[static_cast<size_t>(j)] = 1;
    return acs;
  }
};

// Per-coil complex sensitivity maps, shaped [nc, H, W].
struct CoilSensitivities {
  ComplexTensor maps;

  int coils() const { return maps.dim(0); }
  int height() const { return maps.dim(1); }
  int width() const { return maps.dim(2); }

  // max |sum_i conj(S_i) S_i - 1| over pixels.
  double normalization_residual() const {
    const size_t hw = static_cast<size_t>(height()) * width();
    double worst = 0.0;
    for (size_t i = 0; i < hw; ++i) {
      double s = 0.0;
      for (int c = 0; c < coils(); ++c) {
        const size_t idx = 2 * (static_cast<size_t>(c) * hw + i);
        s += maps.data[idx] * maps.data[idx] + maps.data[idx + 1] * maps.data[idx + 1];
      }
      worst = std::max(worst, std::fabs(s - 1.0));
    }
    return worst;
  }
};

// One training example: undersampled multi-coil k-space, its mask, the
// ground-truth image and the ground-truth edge map.
struct KSpaceSample {
  ComplexTensor y;      // [nc, H, W], zero off-mask
  SamplingMask mask;
  ComplexTensor x_gt;   // [H, W]
  RealTensor edge_gt;   // [H, W] in [0, 1]
};

// ---------------------------------------------------------------------------
// mask generation
// ---------------------------------------------------------------------------

// Fully sampled center band of ceil(center_fraction * W) columns plus
// uniformly random non-center columns, totalling round(W / af) sampled
// columns. af == 1 returns the all-ones mask.
inline SamplingMask make_cartesian_mask(int width, int af, double center_fraction, uint64_t seed) {
  require(width >= 1, "make_cartesian_mask: width must be >= 1");
  require(af >= 1, "make_cartesian_mask: acceleration factor must be >= 1");
  SamplingMask m;
  m.columns.assign(static_cast<size_t>(width), 0);
  if (af == 1) {
    std::fill(m.columns.begin(), m.columns.end(), 1);
    m.acs_lo = 0;
    m.acs_hi = width;
    return m;
  }
  require(center_fraction > 0.0 && center_fraction < 1.0 / af,
          "make_cartesian_mask: center_fraction must lie in (0, 1/af)");
  const int n_total = static_cast<int>(std::lround(static_cast<double>(width) / af));
  const int n_acs = static_cast<int>(std::ceil(center_fraction * width));
  require(n_total >= 1, "make_cartesian_mask: width/af rounds to zero sampled columns");
  require(n_acs <= n_total,
          "make_cartesian_mask: center band (" + std::to_string(n_acs) +
              " cols) exceeds the sampling budget (" + std::to_string(n_total) + " cols)");
  m.acs_lo = (width - n_acs + 1) / 2;
  m.acs_hi = m.acs_lo + n_acs;
  for (int j = m.acs_lo; j < m.acs_hi; ++j) m.columns[static_cast<size_t>(j)] = 1;

  std::vector<int> rest;
  for (int j = 0; j < width; ++j)
    if (j < m.acs_lo || j >= m.acs_hi) rest.push_back(j);
  Rng rng(seed);
  // partial Fisher-Yates: draw n_total - n_acs columns without replacement
  int need = n_total - n_acs;
  for (int i = 0; i < need; ++i) {
    size_t pick = static_cast<size_t>(i) + rng.below(rest.size() - static_cast<size_t>(i));
    std::swap(rest[static_cast<size_t>(i)], rest[pick]);
    m.columns[static_cast<size_t>(rest[static_cast<size_t>(i)])] = 1;
  }
  return m;
}

// ---------------------------------------------------------------------------
// untraced acquisition physics (data generation and baselines)
// ---------------------------------------------------------------------------

// expand: per-coil images (S_1 x, ..., S_nc x).
inline ComplexTensor expand(const CoilSensitivities& S, const ComplexTensor& x) {
  require_shape(x.shape == std::vector<int>{S.height(), S.width()},
                "expand: image shape " + shape_str(x.shape) + " does not match maps");
  ComplexTensor out = ComplexTensor::zeros(S.maps.shape);
  const size_t hw = x.numel();
  for (int c = 0; c < S.coils(); ++c)
    for (size_t i = 0; i < hw; ++i) {
      const size_t si = 2 * (static_cast<size_t>(c) * hw + i);
      out.data[si] = S.maps.data[si] * x.data[2 * i] - S.maps.data[si + 1] * x.data[2 * i + 1];
      out.data[si + 1] = S.maps.data[si] * x.data[2 * i + 1] + S.maps.data[si + 1] * x.data[2 * i];
    }
  return out;
}

// reduce: sensitivity-weighted combination sum_i conj(S_i) x_i.
inline ComplexTensor reduce(const CoilSensitivities& S, const ComplexTensor& coil_images) {
  require_shape(coil_images.shape == S.maps.shape,
                "reduce: coil image shape " + shape_str(coil_images.shape) + " does not match maps");
  ComplexTensor out = ComplexTensor::zeros({S.height(), S.width()});
  const size_t hw = out.numel();
  for (int c = 0; c < S.coils(); ++c)
    for (size_t i = 0; i < hw; ++i) {
      const size_t si = 2 * (static_cast<size_t>(c) * hw + i);
      out.data[2 * i] += S.maps.data[si] * coil_images.data[si] + S.maps.data[si + 1] * coil_images.data[si + 1];
      out.data[2 * i + 1] +=
          S.maps.data[si] * coil_images.data[si + 1] - S.maps.data[si + 1] * coil_images.data[si];
    }
  return out;
}

// Root sum of squares over the coil axis, [nc,H,W] -> [H,W].
inline RealTensor rss(const ComplexTensor& coil_images) {
  require_shape(coil_images.rank() == 3, "rss: expects [nc,H,W], got " + shape_str(coil_images.shape));
  const int nc = coil_images.dim(0);
  const size_t hw = static_cast<size_t>(coil_images.dim(1)) * coil_images.dim(2);
  RealTensor out = RealTensor::zeros({coil_images.dim(1), coil_images.dim(2)});
  for (int c = 0; c < nc; ++c)
    for (size_t i = 0; i < hw; ++i) {
      const size_t si = 2 * (static_cast<size_t>(c) * hw + i);
      out.data[i] += coil_images.data[si] * coil_images.data[si] +
                     coil_images.data[si + 1] * coil_images.data[si + 1];
    }
  for (size_t i = 0; i < hw; ++i) out.data[i] = std::sqrt(out.data[i]);
  return out;
}

inline void apply_mask_inplace(ComplexTensor& k, const SamplingMask& mask) {
  require_shape(k.rank() >= 1 && k.shape.back() == mask.width(),
                "apply_mask: k-space width does not match mask");
  const size_t w = static_cast<size_t>(mask.width());
  const size_t rows = k.numel() / w;
  for (size_t r = 0; r < rows; ++r)
    for (size_t j = 0; j < w; ++j)
      if (!mask.columns[j]) {
        k.data[2 * (r * w + j)] = 0.0;
        k.data[2 * (r * w + j) + 1] = 0.0;
      }
}

// y_i = M .* (F(S_i x) + eps_i), with optional complex Gaussian noise of
// standard deviation sigma per component on the sampled entries.
inline ComplexTensor forward_model(const ComplexTensor& x, const CoilSensitivities& S,
                                   const SamplingMask& mask, double sigma = 0.0,
                                   Rng* noise_rng = nullptr) {
  ComplexTensor k = fft2c(expand(S, x));
  if (sigma > 0.0) {
    require(noise_rng != nullptr, "forward_model: sigma > 0 requires a noise rng");
    for (size_t i = 0; i < k.data.size(); ++i) k.data[i] += sigma * noise_rng->normal();
  }
  apply_mask_inplace(k, mask);
  return k;
}

// Sensitivity-weighted zero-filled reconstruction R(S, F*(y)).
inline ComplexTensor zero_filled(const ComplexTensor& y, const CoilSensitivities& S) {
  return reduce(S, ifft2c(y));
}

// ---------------------------------------------------------------------------
// traced physics (built from traced primitives so gradients flow through)
// ---------------------------------------------------------------------------

inline Var zero_filled(Trace& tr, Var y, Var S) { return reduce_coils(tr, S, ifft2c(tr, y)); }

// Data-consistency projection of Eq.-type R(S, F*((1-M).*F(E(x)) + M.*y)).
// y must already be zero off-mask (the KSpaceSample invariant).
inline Var data_consistency(Trace& tr, Var x, Var y, const SamplingMask& mask, Var S) {
  require_shape(tr.shape(x).size() == 2 && tr.is_complex(x),
                "data_consistency: x must be a complex [H,W] image");
  Var coils = expand_coils(tr, S, x);
  Var k = fft2c(tr, coils);
  Var k_unsampled = apply_colmask(tr, k, mask.columns, /*invert=*/true);
  Var k_mixed = add(tr, k_unsampled, y);
  return reduce_coils(tr, S, ifft2c(tr, k_mixed));
}

// Traced RSS with the vanishing-denominator guard: sqrt is clamped away from
// zero so downstream divisions stay at least 1e-8.
inline Var rss_guarded(Trace& tr, Var coils) {
  Var sumsq = sum_axis(tr, abs2(tr, coils), 0);
  return sqrt_op(tr, clamp_min(tr, sumsq, 1e-16));
}

}  // namespace eamri
