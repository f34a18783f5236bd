#pragma once

#include <complex>
#include <vector>

#include "eamri/tensor.hpp"

namespace eamri {
namespace detail {

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey, unnormalized. sign = -1 forward,
// +1 inverse.
inline void fft1d_pow2(std::complex<double>* a, int n, int sign) {
  // bit reversal permutation
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    double ang = sign * 2.0 * 3.141592653589793238462643383279502884 / len;
    std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Circular roll of the last two axes by (rh, rw): out[(y+rh)%H][(x+rw)%W] = in[y][x].
inline void roll2(std::complex<double>* buf, int h, int w, int rh, int rw,
                  std::vector<std::complex<double>>& scratch) {
  scratch.resize(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    int yy = (y + rh) % h;
    for (int x = 0; x < w; ++x) scratch[static_cast<size_t>(yy) * w + (x + rw) % w] = buf[static_cast<size_t>(y) * w + x];
  }
  std::copy(scratch.begin(), scratch.end(), buf);
}

}  // namespace detail

// Centered, orthonormally scaled 2-D DFT over the last two dims:
//   fft2c(x)  = fftshift(FFT2(ifftshift(x))) / sqrt(H*W)
//   ifft2c(k) = fftshift(IFFT2(ifftshift(k))) / sqrt(H*W)
// Spatial sizes must be powers of two (radix-2 implementation).
inline ComplexTensor fft2c_raw(const ComplexTensor& x, bool inverse) {
  require_shape(x.rank() >= 2, "fft2c: tensor rank must be >= 2, got " + shape_str(x.shape));
  int h = x.dim(x.rank() - 2);
  int w = x.dim(x.rank() - 1);
  require_shape(detail::is_pow2(h) && detail::is_pow2(w),
                "fft2c: spatial dims must be powers of two, got " + shape_str(x.shape));
  ComplexTensor out = x;
  size_t batch = out.numel() / (static_cast<size_t>(h) * w);
  int sign = inverse ? +1 : -1;
  double scale = 1.0 / std::sqrt(static_cast<double>(h) * w);
  std::vector<std::complex<double>> scratch;
  std::vector<std::complex<double>> col(static_cast<size_t>(h));
  for (size_t b = 0; b < batch; ++b) {
    std::complex<double>* plane = out.cdata() + b * static_cast<size_t>(h) * w;
    // ifftshift: roll by ceil(n/2)
    detail::roll2(plane, h, w, (h + 1) / 2, (w + 1) / 2, scratch);
    for (int y = 0; y < h; ++y) detail::fft1d_pow2(plane + static_cast<size_t>(y) * w, w, sign);
    for (int x0 = 0; x0 < w; ++x0) {
      for (int y = 0; y < h; ++y) col[static_cast<size_t>(y)] = plane[static_cast<size_t>(y) * w + x0];
      detail::fft1d_pow2(col.data(), h, sign);
      for (int y = 0; y < h; ++y) plane[static_cast<size_t>(y) * w + x0] = col[static_cast<size_t>(y)];
    }
    // fftshift: roll by floor(n/2)
    detail::roll2(plane, h, w, h / 2, w / 2, scratch);
    for (size_t i = 0; i < static_cast<size_t>(h) * w; ++i) plane[i] *= scale;
  }
  return out;
}

inline ComplexTensor fft2c(const ComplexTensor& x) { return fft2c_raw(x, false); }
inline ComplexTensor ifft2c(const ComplexTensor& k) { return fft2c_raw(k, true); }

}  // namespace eamri
