#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "eamri/edge.hpp"
#include "eamri/mri.hpp"
#include "eamri/rng.hpp"
#include "eamri/threading.hpp"

namespace eamri {

// Synthetic ellipse phantom: size must be a power of two for the radix-2
// transforms downstream.
struct PhantomSpec {
  int size = 32;
  int ellipses = 6;
  double min_intensity = 0.2;
  double max_intensity = 0.9;
  uint64_t seed = 0;
};

// Sum of randomly placed ellipses, magnitude clipped to [0,1], modulated by
// a smooth complex phase ramp.
inline ComplexTensor generate_phantom(const PhantomSpec& spec) {
  require(spec.size >= 4 && detail::is_pow2(spec.size), "phantom: size must be a power of two >= 4");
  require(spec.ellipses >= 0, "phantom: ellipse count must be >= 0");
  const int n = spec.size;
  Rng rng(Rng::derive(spec.seed, 0xe11));
  RealTensor mag = RealTensor::zeros({n, n});
  for (int e = 0; e < spec.ellipses; ++e) {
    const double cx = rng.uniform(0.25, 0.75) * n;
    const double cy = rng.uniform(0.25, 0.75) * n;
    const double ra = rng.uniform(0.08, 0.35) * n;
    const double rb = rng.uniform(0.08, 0.35) * n;
    const double th = rng.uniform(0.0, 3.141592653589793);
    const double amp = rng.uniform(spec.min_intensity, spec.max_intensity);
    const double ct = std::cos(th), st = std::sin(th);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double dx = x - cx, dy = y - cy;
        const double u = (dx * ct + dy * st) / ra;
        const double v = (-dx * st + dy * ct) / rb;
        if (u * u + v * v <= 1.0) mag.data[static_cast<size_t>(y) * n + x] += amp;
      }
  }
  for (double& v : mag.data) v = std::min(std::max(v, 0.0), 1.0);

  const double px = rng.uniform(-0.5, 0.5);
  const double py = rng.uniform(-0.5, 0.5);
  const double p0 = rng.uniform(0.0, 6.283185307179586);
  ComplexTensor out = ComplexTensor::zeros({n, n});
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const size_t i = static_cast<size_t>(y) * n + x;
      const double phase = p0 + 6.283185307179586 * (px * x / n + py * y / n);
      out.data[2 * i] = mag.data[i] * std::cos(phase);
      out.data[2 * i + 1] = mag.data[i] * std::sin(phase);
    }
  return out;
}

// Smooth Gaussian-lobe coil profiles centered on a ring around the field of
// view, with gentle per-coil phase ramps, normalized so that
// sum_i conj(S_i) S_i == 1 at every pixel. A single coil degenerates to the
// constant unit map.
inline CoilSensitivities simulate_coil_maps(int n_c, int h, int w, uint64_t seed) {
  require(n_c >= 1, "simulate_coil_maps: need at least one coil");
  CoilSensitivities S;
  S.maps = ComplexTensor::zeros({n_c, h, w});
  const size_t hw = static_cast<size_t>(h) * w;
  if (n_c == 1) {
    for (size_t i = 0; i < hw; ++i) S.maps.data[2 * i] = 1.0;
    return S;
  }
  Rng rng(Rng::derive(seed, 0xc011));
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double ring = 0.55 * std::max(h, w);
  const double sigma = 0.6 * std::max(h, w);
  for (int c = 0; c < n_c; ++c) {
    const double ang = 6.283185307179586 * c / n_c + rng.uniform(-0.1, 0.1);
    const double lx = cx + ring * std::cos(ang);
    const double ly = cy + ring * std::sin(ang);
    const double pxr = rng.uniform(-0.3, 0.3);
    const double pyr = rng.uniform(-0.3, 0.3);
    const double p0 = rng.uniform(0.0, 6.283185307179586);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const size_t i = static_cast<size_t>(c) * hw + static_cast<size_t>(y) * w + x;
        const double d2 = (x - lx) * (x - lx) + (y - ly) * (y - ly);
        const double g = std::exp(-d2 / (2.0 * sigma * sigma));
        const double phase = p0 + 6.283185307179586 * (pxr * x / w + pyr * y / h);
        S.maps.data[2 * i] = g * std::cos(phase);
        S.maps.data[2 * i + 1] = g * std::sin(phase);
      }
  }
  // pixelwise normalization (Gaussians are strictly positive, so safe)
  for (size_t i = 0; i < hw; ++i) {
    double ss = 0.0;
    for (int c = 0; c < n_c; ++c) {
      const size_t idx = 2 * (static_cast<size_t>(c) * hw + i);
      ss += S.maps.data[idx] * S.maps.data[idx] + S.maps.data[idx + 1] * S.maps.data[idx + 1];
    }
    const double inv = 1.0 / std::sqrt(ss);
    for (int c = 0; c < n_c; ++c) {
      const size_t idx = 2 * (static_cast<size_t>(c) * hw + i);
      S.maps.data[idx] *= inv;
      S.maps.data[idx + 1] *= inv;
    }
  }
  return S;
}

struct DatasetSpec {
  int n_samples = 100;
  PhantomSpec phantom;
  int n_coils = 4;
  int af = 4;
  double center_fraction = 0.08;
  double sigma = 0.0;
  std::string edge_op = "sobel";  // sobel | canny
  double canny_low = 0.1;
  double canny_high = 0.3;
  uint64_t seed = 0;
};

inline RealTensor extract_edges(const RealTensor& mag, const DatasetSpec& spec) {
  if (spec.edge_op == "canny") return canny_edges(mag, spec.canny_low, spec.canny_high);
  require(spec.edge_op == "sobel", "extract_edges: unknown edge op '" + spec.edge_op + "'");
  return sobel_edges(mag);
}

inline KSpaceSample make_sample(const DatasetSpec& spec, int index) {
  PhantomSpec ps = spec.phantom;
  ps.seed = Rng::derive(spec.seed, static_cast<uint64_t>(index) * 4 + 0);
  ComplexTensor x = generate_phantom(ps);
  CoilSensitivities S = simulate_coil_maps(spec.n_coils, ps.size, ps.size,
                                           Rng::derive(spec.seed, static_cast<uint64_t>(index) * 4 + 1));
  SamplingMask mask = make_cartesian_mask(ps.size, spec.af, spec.center_fraction,
                                          Rng::derive(spec.seed, static_cast<uint64_t>(index) * 4 + 2));
  Rng noise(Rng::derive(spec.seed, static_cast<uint64_t>(index) * 4 + 3));
  KSpaceSample s;
  s.y = forward_model(x, S, mask, spec.sigma, &noise);
  s.mask = mask;
  s.x_gt = std::move(x);
  s.edge_gt = extract_edges(magnitude_of(s.x_gt), spec);
  return s;
}

// Generates samples (parallel; each sample is seeded independently).
inline std::vector<KSpaceSample> build_dataset(const DatasetSpec& spec) {
  require(spec.n_samples >= 1, "build_dataset: need at least one sample");
  std::vector<KSpaceSample> out(static_cast<size_t>(spec.n_samples));
  parallel_for(spec.n_samples, [&](int i) { out[static_cast<size_t>(i)] = make_sample(spec, i); });
  return out;
}

}  // namespace eamri
