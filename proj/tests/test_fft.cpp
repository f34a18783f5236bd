#include <catch2/catch_amalgamated.hpp>

#include "eamri/fft.hpp"
#include "eamri/ops.hpp"
#include "eamri/rng.hpp"
#include "oracles.hpp"

using namespace eamri;

namespace {

ComplexTensor random_complex(std::vector<int> shape, uint64_t seed) {
  ComplexTensor t = ComplexTensor::zeros(std::move(shape));
  Rng rng(seed);
  for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("centered delta transforms to a flat spectrum", "[fft]") {
  const int n = 16;
  ComplexTensor x = ComplexTensor::zeros({n, n});
  x.set(static_cast<size_t>(n / 2) * n + n / 2, {1.0, 0.0});
  ComplexTensor k = fft2c(x);
  const double expected = 1.0 / n;  // 1/sqrt(n*n)
  for (size_t i = 0; i < k.numel(); ++i) {
    CHECK(k.at(i).real() == Catch::Approx(expected).margin(1e-14));
    CHECK(k.at(i).imag() == Catch::Approx(0.0).margin(1e-14));
  }
}

TEST_CASE("fft2c round trip and unitarity", "[fft]") {
  ComplexTensor x = random_complex({16, 16}, 7);
  ComplexTensor back = ifft2c(fft2c(x));
  CHECK(max_abs_diff(back, x) < 1e-12);
  CHECK(std::fabs(norm2(fft2c(x)) - norm2(x)) < 1e-12);
}

TEST_CASE("fft2c matches the naive DFT oracle", "[fft]") {
  ComplexTensor x = random_complex({8, 8}, 21);
  CHECK(max_abs_diff(fft2c(x), oracle::dft2c(x, false)) < 1e-10);
  CHECK(max_abs_diff(ifft2c(x), oracle::dft2c(x, true)) < 1e-10);
}

TEST_CASE("fft2c handles batched coil stacks", "[fft]") {
  ComplexTensor x = random_complex({3, 8, 8}, 33);
  ComplexTensor k = fft2c(x);
  for (int c = 0; c < 3; ++c) {
    ComplexTensor xc = ComplexTensor::zeros({8, 8});
    std::copy(x.data.begin() + c * 128, x.data.begin() + (c + 1) * 128, xc.data.begin());
    ComplexTensor kc = ComplexTensor::zeros({8, 8});
    std::copy(k.data.begin() + c * 128, k.data.begin() + (c + 1) * 128, kc.data.begin());
    CHECK(max_abs_diff(kc, fft2c(xc)) == 0.0);
  }
}

TEST_CASE("fft2c rejects non-power-of-two sizes", "[fft]") {
  CHECK_THROWS_AS(fft2c(ComplexTensor::zeros({6, 8})), ShapeError);
  CHECK_THROWS_AS(fft2c(ComplexTensor::zeros({8})), ShapeError);
}

TEST_CASE("traced fft VJP is the inverse transform", "[fft]") {
  // directional finite difference through a random linear functional
  ComplexTensor x = random_complex({8, 8}, 55);
  RealTensor r = RealTensor::zeros({128});
  Rng rng(56);
  for (double& v : r.data) v = rng.uniform(-1.0, 1.0);
  auto eval = [&](const ComplexTensor& xin) {
    Trace tr;
    Var v = tr.input(xin);
    Var k = fft2c(tr, v);
    Var flat = reshape(tr, two_channel_from_complex(tr, reshape(tr, k, {1, 64, 1})), {128});
    return tr.data(sum_all(tr, mul(tr, flat, tr.input(r))))[0];
  };

  Trace tr;
  Var v = tr.input(x);
  Var k = fft2c(tr, v);
  Var flat = reshape(tr, two_channel_from_complex(tr, reshape(tr, k, {1, 64, 1})), {128});
  Var loss = sum_all(tr, mul(tr, flat, tr.input(r)));
  tr.backward(loss);
  const auto& g = tr.grad(v);

  Rng dir_rng(57);
  std::vector<double> dir(x.data.size());
  for (double& d : dir) d = dir_rng.uniform(-1.0, 1.0);
  double analytic = 0.0;
  for (size_t i = 0; i < dir.size(); ++i) analytic += g[i] * dir[i];

  const double h = 1e-6;
  ComplexTensor xp = x, xm = x;
  for (size_t i = 0; i < dir.size(); ++i) {
    xp.data[i] += h * dir[i];
    xm.data[i] -= h * dir[i];
  }
  const double fd = (eval(xp) - eval(xm)) / (2 * h);
  CHECK(std::fabs(fd - analytic) / std::max(std::fabs(fd), 1e-10) < 1e-8);
}
