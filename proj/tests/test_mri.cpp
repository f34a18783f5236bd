#include <catch2/catch_amalgamated.hpp>

#include "eamri/mri.hpp"
#include "eamri/phantom.hpp"
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

TEST_CASE("cartesian mask column counts follow the stated formula", "[mri]") {
  // W=32, af=4, cf=0.08: round(32/4)=8 sampled columns, ceil(2.56)=3 ACS
  SamplingMask m = make_cartesian_mask(32, 4, 0.08, 42);
  CHECK(m.sampled_count() == 8);
  CHECK(m.acs_count() == 3);
  for (int j = m.acs_lo; j < m.acs_hi; ++j) CHECK(m.columns[static_cast<size_t>(j)] == 1);

  SamplingMask m6 = make_cartesian_mask(48, 6, 0.06, 42);
  CHECK(m6.sampled_count() == 8);  // round(48/6)
  CHECK(m6.acs_count() == 3);      // ceil(2.88)
}

TEST_CASE("af=1 yields the all-ones mask", "[mri]") {
  SamplingMask m = make_cartesian_mask(16, 1, 0.5, 1);
  CHECK(m.sampled_count() == 16);
  CHECK(m.acs_lo == 0);
  CHECK(m.acs_hi == 16);
}

TEST_CASE("masks are deterministic per seed", "[mri]") {
  SamplingMask a = make_cartesian_mask(64, 4, 0.08, 7);
  SamplingMask b = make_cartesian_mask(64, 4, 0.08, 7);
  SamplingMask c = make_cartesian_mask(64, 4, 0.08, 8);
  CHECK(a.columns == b.columns);
  CHECK(a.columns != c.columns);
}

TEST_CASE("infeasible mask fractions are rejected", "[mri]") {
  CHECK_THROWS_AS(make_cartesian_mask(32, 4, 0.3, 1), std::invalid_argument);   // cf >= 1/af
  CHECK_THROWS_AS(make_cartesian_mask(32, 4, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_cartesian_mask(32, 0, 0.08, 1), std::invalid_argument);
}

TEST_CASE("forward model basics", "[mri]") {
  CoilSensitivities S = simulate_coil_maps(2, 8, 8, 3);
  SamplingMask mask = make_cartesian_mask(8, 2, 0.2, 5);

  SECTION("zero image gives zero k-space") {
    ComplexTensor y = forward_model(ComplexTensor::zeros({8, 8}), S, mask);
    CHECK(norm2(y) == 0.0);
  }

  SECTION("single unit coil and full mask reduce to the Fourier transform") {
    CoilSensitivities S1 = simulate_coil_maps(1, 8, 8, 3);
    SamplingMask full = make_cartesian_mask(8, 1, 0.5, 5);
    ComplexTensor x = random_complex({8, 8}, 9);
    ComplexTensor y = forward_model(x, S1, full);
    ComplexTensor expect = fft2c(x);
    expect.shape = {1, 8, 8};
    CHECK(max_abs_diff(y, expect) < 1e-13);
  }

  SECTION("composition matches a per-definition oracle") {
    ComplexTensor x = random_complex({8, 8}, 11);
    ComplexTensor y = forward_model(x, S, mask);
    // oracle: expand -> per-coil centered DFT -> column mask
    for (int c = 0; c < 2; ++c) {
      ComplexTensor coil = ComplexTensor::zeros({8, 8});
      for (size_t i = 0; i < coil.numel(); ++i) {
        const auto s = S.maps.at(static_cast<size_t>(c) * 64 + i);
        coil.set(i, s * x.at(i));
      }
      ComplexTensor k = oracle::dft2c(coil, false);
      for (int row = 0; row < 8; ++row)
        for (int col = 0; col < 8; ++col) {
          const auto got = y.at((static_cast<size_t>(c) * 8 + row) * 8 + col);
          const auto want = mask.columns[static_cast<size_t>(col)] ? k.at(static_cast<size_t>(row) * 8 + col)
                                                                   : std::complex<double>(0, 0);
          CHECK(std::abs(got - want) < 1e-10);
        }
    }
  }
}

TEST_CASE("reduce/expand identities under unit normalization", "[mri]") {
  CoilSensitivities S = simulate_coil_maps(3, 8, 8, 21);
  REQUIRE(S.normalization_residual() < 1e-12);
  ComplexTensor x = random_complex({8, 8}, 22);

  CHECK(max_abs_diff(reduce(S, expand(S, x)), x) < 1e-12);

  CoilSensitivities S1 = simulate_coil_maps(1, 4, 4, 0);
  ComplexTensor x1 = random_complex({4, 4}, 23);
  CHECK(max_abs_diff(reduce(S1, expand(S1, x1)), x1) < 1e-14);

  // against the loop oracle
  ComplexTensor coils = random_complex({3, 8, 8}, 24);
  CHECK(max_abs_diff(reduce(S, coils), oracle::reduce(S.maps, coils)) < 1e-12);
}

TEST_CASE("rss identities and oracle", "[mri]") {
  CoilSensitivities S = simulate_coil_maps(3, 8, 8, 31);
  ComplexTensor x = random_complex({8, 8}, 32);

  // single coil: rss is the magnitude
  ComplexTensor one = random_complex({1, 8, 8}, 33);
  ComplexTensor onesq = ComplexTensor(std::vector<int>{8, 8}, one.data);
  CHECK(max_abs_diff(rss(one), magnitude_of(onesq)) < 1e-14);

  // rss(expand(S,x)) == |x| under the unit normalization
  CHECK(max_abs_diff(rss(expand(S, x)), magnitude_of(x)) < 1e-12);

  ComplexTensor coils = random_complex({3, 8, 8}, 34);
  CHECK(max_abs_diff(rss(coils), oracle::rss(coils)) < 1e-12);
}

TEST_CASE("zero-filled reconstruction", "[mri]") {
  CoilSensitivities S = simulate_coil_maps(3, 8, 8, 41);
  ComplexTensor x = random_complex({8, 8}, 42);
  SamplingMask full = make_cartesian_mask(8, 1, 0.5, 1);

  // full mask, noiseless: exact recovery
  ComplexTensor y = forward_model(x, S, full);
  CHECK(max_abs_diff(zero_filled(y, S), x) < 1e-12);

  // zero k-space: zero image
  CHECK(norm2(zero_filled(ComplexTensor::zeros({3, 8, 8}), S)) == 0.0);
}

TEST_CASE("data consistency projection", "[mri]") {
  CoilSensitivities S = simulate_coil_maps(2, 8, 8, 51);
  ComplexTensor x_gt = random_complex({8, 8}, 52);
  SamplingMask mask = make_cartesian_mask(8, 2, 0.2, 53);
  ComplexTensor y = forward_model(x_gt, S, mask);
  ComplexTensor x_in = random_complex({8, 8}, 54);

  auto run_dc = [&](const ComplexTensor& xi, const SamplingMask& mk, const ComplexTensor& yy) {
    Trace tr;
    Var out = data_consistency(tr, tr.input(xi), tr.input(yy), mk, tr.input(S.maps));
    return tr.complex(out);
  };

  SECTION("all-zero mask passes the input through (reduce after expand)") {
    SamplingMask none;
    none.columns.assign(8, 0);
    ComplexTensor y0 = ComplexTensor::zeros({2, 8, 8});
    CHECK(max_abs_diff(run_dc(x_in, none, y0), x_in) < 1e-12);
  }

  SECTION("already consistent input is unchanged") {
    SamplingMask full = make_cartesian_mask(8, 1, 0.5, 1);
    ComplexTensor yf = forward_model(x_gt, S, full);
    ComplexTensor zf = zero_filled(yf, S);
    CHECK(max_abs_diff(run_dc(zf, full, yf), zf) < 1e-12);
  }

  SECTION("sampled k-space of the output equals y") {
    ComplexTensor out = run_dc(x_in, mask, y);
    ComplexTensor k = fft2c(expand(S, out));
    for (int c = 0; c < 2; ++c)
      for (int row = 0; row < 8; ++row)
        for (int col = 0; col < 8; ++col)
          if (mask.columns[static_cast<size_t>(col)]) {
            const size_t i = (static_cast<size_t>(c) * 8 + row) * 8 + col;
            CHECK(std::abs(k.at(i) - y.at(i)) < 1e-10);
          }
  }

  SECTION("idempotence") {
    ComplexTensor once = run_dc(x_in, mask, y);
    ComplexTensor twice = run_dc(once, mask, y);
    CHECK(max_abs_diff(once, twice) < 1e-10);
  }
}

TEST_CASE("mask cardinality property across widths and factors", "[mri]") {
  Rng rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 16 << rng.below(3);  // 16, 32, 64
    const int af = rng.below(2) ? 4 : 6;
    const double cf = af == 4 ? 0.08 : 0.06;
    SamplingMask m = make_cartesian_mask(w, af, cf, rng.next_u64());
    CHECK(m.sampled_count() == static_cast<int>(std::lround(static_cast<double>(w) / af)));
    CHECK(m.acs_count() == static_cast<int>(std::ceil(cf * w)));
  }
}
