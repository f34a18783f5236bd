#include <catch2/catch_amalgamated.hpp>

#include "eamri/phantom.hpp"
#include "eamri/sme.hpp"
#include "eamri/training.hpp"

using namespace eamri;

namespace {

struct SmeFixture {
  ParamStore store;
  SmeNet net;
  SmeFixture(int c = 4, int m = 2, uint64_t seed = 5) {
    Rng rng(seed);
    net = make_sme(store, "sme", c, m, rng);
  }
};

}  // namespace

TEST_CASE("fresh SME recovers smooth maps up to a shared phase", "[sme]") {
  // Full ACS (all-ones mask) and a pass-through refiner: the estimate is the
  // classic coil-image / RSS ratio, which matches the true maps up to one
  // per-pixel phase common to all coils.
  const int n = 16, nc = 3;
  CoilSensitivities S_true = simulate_coil_maps(nc, n, n, 77);
  PhantomSpec ps;
  ps.size = n;
  ps.seed = 78;
  ComplexTensor x = generate_phantom(ps);
  SamplingMask full = make_cartesian_mask(n, 1, 0.5, 0);
  ComplexTensor y = forward_model(x, S_true, full);

  SmeFixture f;
  Trace tr;
  Var S_est = estimate_sensitivities(tr, tr.input(y), full, f.net, f.store);
  ComplexTensor S = tr.complex(S_est);

  // normalization holds everywhere
  CoilSensitivities wrapped{S};
  CHECK(wrapped.normalization_residual() < 1e-6);

  // coil ratios match wherever the image has support (phase cancels)
  const size_t hw = static_cast<size_t>(n) * n;
  RealTensor mag = magnitude_of(x);
  for (size_t i = 0; i < hw; ++i) {
    if (mag.data[i] < 0.3) continue;
    const auto t0 = S_true.maps.at(i);
    const auto t1 = S_true.maps.at(hw + i);
    const auto e0 = S.at(i);
    const auto e1 = S.at(hw + i);
    CHECK(std::abs(e0 * t1 - e1 * t0) < 1e-8);
  }
}

TEST_CASE("single coil normalizes to the unit map", "[sme]") {
  const int n = 8;
  ComplexTensor y = ComplexTensor::zeros({1, n, n});
  Rng rng(9);
  for (double& v : y.data) v = rng.uniform(-1.0, 1.0);
  SamplingMask mask = make_cartesian_mask(n, 2, 0.2, 1);
  apply_mask_inplace(y, mask);

  SmeFixture f;
  // perturb the refiner so its output magnitude is arbitrary
  for (auto& p : f.store.params())
    for (double& v : p.value.data) v += 0.1;
  Trace tr;
  Var S_est = estimate_sensitivities(tr, tr.input(y), mask, f.net, f.store);
  ComplexTensor S = tr.complex(S_est);
  for (size_t i = 0; i < S.numel(); ++i) CHECK(std::abs(std::abs(S.at(i)) - 1.0) < 1e-6);
}

TEST_CASE("normalization holds for random inputs", "[sme]") {
  const int n = 8, nc = 4;
  Rng rng(15);
  ComplexTensor y = ComplexTensor::zeros({nc, n, n});
  for (double& v : y.data) v = rng.uniform(-1.0, 1.0);
  SamplingMask mask = make_cartesian_mask(n, 2, 0.3, 2);
  apply_mask_inplace(y, mask);

  SmeFixture f;
  Trace tr;
  Var S_est = estimate_sensitivities(tr, tr.input(y), mask, f.net, f.store);
  CoilSensitivities wrapped{tr.complex(S_est)};
  CHECK(wrapped.normalization_residual() < 1e-6);
}

TEST_CASE("empty ACS region is rejected", "[sme]") {
  SmeFixture f;
  SamplingMask bad;
  bad.columns.assign(8, 1);
  bad.acs_lo = bad.acs_hi = 4;
  ComplexTensor y = ComplexTensor::zeros({1, 8, 8});
  Trace tr;
  CHECK_THROWS_AS(estimate_sensitivities(tr, tr.input(y), bad, f.net, f.store),
                  std::invalid_argument);
}

TEST_CASE("gradients reach the refiner parameters end to end", "[sme]") {
  DatasetSpec spec;
  spec.n_samples = 1;
  spec.phantom.size = 8;
  spec.n_coils = 2;
  spec.af = 2;
  spec.center_fraction = 0.2;
  spec.seed = 4;
  KSpaceSample s = make_sample(spec, 0);

  SmeFixture f;
  f.store.zero_grad();
  Trace tr;
  Var y = tr.input(s.y);
  Var S = estimate_sensitivities(tr, y, s.mask, f.net, f.store);
  Var zf = zero_filled(tr, y, S);
  Var loss = image_loss(tr, zf, s.x_gt);
  tr.backward(loss);

  double total = 0.0;
  for (const auto& p : f.store.params())
    for (double g : p.grad.data) total += std::fabs(g);
  CHECK(total > 0.0);
}
