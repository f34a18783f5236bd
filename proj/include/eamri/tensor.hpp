#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace eamri {

// Thrown when tensor shapes do not line up for an operation.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

inline size_t numel_of(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
    n *= static_cast<size_t>(d);
  }
  return n;
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void require_shape(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

// Dense row-major tensor of 64-bit floats.
struct RealTensor {
  std::vector<int> shape;
  std::vector<double> data;

  RealTensor() = default;
  RealTensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    require_shape(data.size() == numel_of(shape),
                  "RealTensor data length " + std::to_string(data.size()) +
                      " does not match shape " + shape_str(shape));
  }

  static RealTensor zeros(std::vector<int> s) {
    size_t n = numel_of(s);
    return RealTensor(std::move(s), std::vector<double>(n, 0.0));
  }
  static RealTensor full(std::vector<int> s, double v) {
    size_t n = numel_of(s);
    return RealTensor(std::move(s), std::vector<double>(n, v));
  }
  static RealTensor scalar(double v) { return RealTensor({1}, {v}); }

  size_t numel() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  bool same_shape(const RealTensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data) m = std::max(m, std::fabs(v));
    return m;
  }
};

// Dense row-major tensor of complex values stored as interleaved (re, im)
// 64-bit float pairs; data.size() == 2 * numel_of(shape).
struct ComplexTensor {
  std::vector<int> shape;
  std::vector<double> data;

  ComplexTensor() = default;
  ComplexTensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    require_shape(data.size() == 2 * numel_of(shape),
                  "ComplexTensor data length " + std::to_string(data.size()) +
                      " does not match 2*numel of shape " + shape_str(shape));
  }

  static ComplexTensor zeros(std::vector<int> s) {
    size_t n = numel_of(s);
    return ComplexTensor(std::move(s), std::vector<double>(2 * n, 0.0));
  }

  size_t numel() const { return data.size() / 2; }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  std::complex<double>* cdata() { return reinterpret_cast<std::complex<double>*>(data.data()); }
  const std::complex<double>* cdata() const {
    return reinterpret_cast<const std::complex<double>*>(data.data());
  }
  std::complex<double> at(size_t i) const { return {data[2 * i], data[2 * i + 1]}; }
  void set(size_t i, std::complex<double> v) {
    data[2 * i] = v.real();
    data[2 * i + 1] = v.imag();
  }

  bool same_shape(const ComplexTensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline double norm2(const RealTensor& t) {
  double s = 0.0;
  for (double v : t.data) s += v * v;
  return std::sqrt(s);
}

inline double norm2(const ComplexTensor& t) {
  double s = 0.0;
  for (double v : t.data) s += v * v;
  return std::sqrt(s);
}

inline double max_abs_diff(const RealTensor& a, const RealTensor& b) {
  require_shape(a.same_shape(b), "max_abs_diff: shape mismatch " + shape_str(a.shape) + " vs " +
                                     shape_str(b.shape));
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

inline double max_abs_diff(const ComplexTensor& a, const ComplexTensor& b) {
  require_shape(a.same_shape(b), "max_abs_diff: shape mismatch " + shape_str(a.shape) + " vs " +
                                     shape_str(b.shape));
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

// Magnitude image |x| of a complex tensor (untraced helper).
inline RealTensor magnitude_of(const ComplexTensor& x) {
  RealTensor out = RealTensor::zeros(x.shape);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = std::hypot(x.data[2 * i], x.data[2 * i + 1]);
  return out;
}

}  // namespace eamri
