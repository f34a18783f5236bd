#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "eamri/phantom.hpp"
#include "eamri/recon.hpp"
#include "eamri/training.hpp"
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

TEST_CASE("image loss basics", "[training]") {
  ComplexTensor gt = random_complex({4, 4}, 3);

  SECTION("identical images give zero loss") {
    Trace tr;
    Var pred = tr.input(gt);
    CHECK(tr.data(image_loss(tr, pred, gt))[0] == 0.0);
  }

  SECTION("constant magnitude offset gives |c|") {
    // gt is real positive, prediction adds 0.25 to the magnitude
    ComplexTensor base = ComplexTensor::zeros({4, 4});
    ComplexTensor shifted = ComplexTensor::zeros({4, 4});
    Rng rng(5);
    for (size_t i = 0; i < base.numel(); ++i) {
      const double m = rng.uniform(0.5, 1.0);
      base.set(i, {m, 0.0});
      shifted.set(i, {m + 0.25, 0.0});
    }
    Trace tr;
    CHECK(tr.data(image_loss(tr, tr.input(shifted), base))[0] == Catch::Approx(0.25));
  }

  SECTION("gradient matches central differences away from zero magnitude") {
    ComplexTensor pred = random_complex({4, 4}, 7);
    for (double& v : pred.data) v = (v >= 0 ? v + 0.5 : v - 0.5);
    Trace tr;
    Var p = tr.input(pred);
    tr.backward(image_loss(tr, p, gt));
    const auto& g = tr.grad(p);
    Rng rng(8);
    const double h = 1e-6;
    for (int probe = 0; probe < 8; ++probe) {
      const size_t i = rng.below(pred.data.size());
      ComplexTensor pp = pred, pm = pred;
      pp.data[i] += h;
      pm.data[i] -= h;
      Trace tp, tm;
      const double lp = tp.data(image_loss(tp, tp.input(pp), gt))[0];
      const double lm = tm.data(image_loss(tm, tm.input(pm), gt))[0];
      const double fd = (lp - lm) / (2 * h);
      CHECK(std::fabs(fd - g[i]) / std::max({std::fabs(fd), std::fabs(g[i]), 1e-8}) < 1e-6);
    }
  }
}

TEST_CASE("edge loss is a sum of per-cascade means", "[training]") {
  RealTensor gt = RealTensor::zeros({4, 4});
  Rng rng(9);
  for (double& v : gt.data) v = rng.uniform(0.0, 1.0);

  SECTION("perfect predictions give zero") {
    Trace tr;
    Var e = tr.input(RealTensor({1, 1, 4, 4}, gt.data));
    CHECK(tr.data(edge_loss(tr, {e, e}, gt))[0] == 0.0);
  }

  SECTION("two identical maps give exactly twice the single-map loss") {
    RealTensor pred = RealTensor::zeros({1, 1, 4, 4});
    for (double& v : pred.data) v = rng.uniform(0.0, 1.0);
    Trace tr;
    Var e = tr.input(pred);
    const double one = tr.data(edge_loss(tr, {e}, gt))[0];
    const double two = tr.data(edge_loss(tr, {e, e}, gt))[0];
    CHECK(two == Catch::Approx(2.0 * one).epsilon(1e-12));
  }

  SECTION("gradient check") {
    RealTensor pred = RealTensor::zeros({1, 1, 4, 4});
    for (double& v : pred.data) v = rng.uniform(0.2, 0.8);
    Trace tr;
    Var e = tr.input(pred);
    tr.backward(edge_loss(tr, {e}, gt));
    const auto& g = tr.grad(e);
    const double h = 1e-6;
    for (int probe = 0; probe < 6; ++probe) {
      const size_t i = rng.below(pred.data.size());
      RealTensor pp = pred, pm = pred;
      pp.data[i] += h;
      pm.data[i] -= h;
      Trace tp, tm;
      const double lp = tp.data(edge_loss(tp, {tp.input(pp)}, gt))[0];
      const double lm = tm.data(edge_loss(tm, {tm.input(pm)}, gt))[0];
      const double fd = (lp - lm) / (2 * h);
      CHECK(std::fabs(fd - g[i]) / std::max({std::fabs(fd), std::fabs(g[i]), 1e-8}) < 1e-6);
    }
  }
}

TEST_CASE("total loss composition and beta scaling", "[training]") {
  ComplexTensor gt = random_complex({4, 4}, 11);
  ComplexTensor pred = random_complex({4, 4}, 12);
  RealTensor egt = RealTensor::zeros({4, 4});
  RealTensor epred = RealTensor::zeros({1, 1, 4, 4});
  Rng rng(13);
  for (double& v : egt.data) v = rng.uniform(0.0, 1.0);
  for (double& v : epred.data) v = rng.uniform(0.0, 1.0);

  auto eval = [&](double beta) {
    Trace tr;
    Var p = tr.input(pred);
    Var e = tr.input(epred);
    return tr.data(total_loss(tr, p, gt, {e}, egt, beta))[0];
  };
  Trace tr;
  const double img = tr.data(image_loss(tr, tr.input(pred), gt))[0];
  const double edg = tr.data(edge_loss(tr, {tr.input(epred)}, egt))[0];

  CHECK(eval(0.0) == Catch::Approx(img));
  CHECK(eval(1.0) == Catch::Approx(img + edg));
  // beta scales only the edge term
  CHECK(eval(2.0) - eval(1.0) == Catch::Approx(edg).epsilon(1e-10));
}

TEST_CASE("adam first step and invariances", "[training]") {
  SECTION("zero gradients leave parameters unchanged (no decay)") {
    ParamStore store;
    store.add("w", RealTensor({2}, {1.5, -0.5}));
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    AdamState state = AdamState::init(store, cfg);
    store.zero_grad();
    adam_step(store, state);
    CHECK(store.at(0).value.data[0] == 1.5);
    CHECK(store.at(0).value.data[1] == -0.5);
  }

  SECTION("first step moves by about -lr * sign(g)") {
    ParamStore store;
    store.add("w", RealTensor({1}, {0.3}));
    AdamConfig cfg;
    cfg.lr = 1e-3;
    cfg.weight_decay = 0.0;
    AdamState state = AdamState::init(store, cfg);
    store.at(0).grad.data[0] = 2.7;  // positive gradient
    adam_step(store, state);
    CHECK(store.at(0).value.data[0] == Catch::Approx(0.3 - 1e-3).epsilon(1e-5));
  }

  SECTION("ten steps on a quadratic bowl descend monotonically after step 2") {
    ParamStore store;
    store.add("w", RealTensor({2}, {2.0, -3.0}));
    AdamConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    AdamState state = AdamState::init(store, cfg);
    auto objective = [&]() {
      const auto& w = store.at(0).value.data;
      return 0.5 * (w[0] * w[0] + w[1] * w[1]);
    };
    std::vector<double> history;
    for (int step = 0; step < 10; ++step) {
      store.zero_grad();
      store.at(0).grad.data[0] = store.at(0).value.data[0];
      store.at(0).grad.data[1] = store.at(0).value.data[1];
      adam_step(store, state);
      history.push_back(objective());
    }
    for (size_t i = 2; i < history.size(); ++i) CHECK(history[i] < history[i - 1]);
  }
}

TEST_CASE("metric identities", "[training]") {
  Rng rng(17);
  RealTensor gt = RealTensor::zeros({16, 16});
  for (double& v : gt.data) v = rng.uniform(0.0, 1.0);

  CHECK(std::isinf(psnr(gt, gt)));
  CHECK(nmse(gt, gt) == 0.0);
  CHECK(ssim(gt, gt) == Catch::Approx(1.0).margin(1e-12));
  CHECK(nmse(RealTensor::zeros({16, 16}), gt) == Catch::Approx(1.0));
}

TEST_CASE("ssim matches the slow per-window oracle", "[training]") {
  Rng rng(19);
  RealTensor a = RealTensor::zeros({12, 10});
  RealTensor b = RealTensor::zeros({12, 10});
  for (double& v : a.data) v = rng.uniform(0.0, 1.0);
  for (double& v : b.data) v = rng.uniform(0.0, 1.0);
  CHECK(std::fabs(ssim(a, b) - oracle::ssim(a, b)) < 1e-8);
}

TEST_CASE("one training step touches every module with nonzero grads", "[training]") {
  DatasetSpec spec;
  spec.n_samples = 4;
  spec.phantom.size = 8;
  spec.n_coils = 2;
  spec.af = 2;
  spec.center_fraction = 0.2;
  spec.seed = 21;
  std::vector<KSpaceSample> data = build_dataset(spec);

  ReconConfig cfg;
  cfg.N = 1;
  cfg.M = 1;
  cfg.C = 4;
  cfg.heads = 2;
  cfg.msrb_count = 1;
  cfg.batch = 2;
  cfg.steps = 1;
  cfg.seed = 5;
  EamriModel model = build_variant(Variant::Full, cfg, 23);

  std::vector<double> before;
  for (const auto& p : model.params.params())
    before.insert(before.end(), p.value.data.begin(), p.value.data.end());

  AdamState adam = AdamState::init(model.params, AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  train_loop(model, data, data, adam, 0);

  // every major module moved at least one parameter
  for (const std::string& prefix : {"sme.", "head.", "cascade0.", "epn."}) {
    double moved = 0.0;
    size_t offset = 0;
    for (const auto& p : model.params.params()) {
      if (p.name.rfind(prefix, 0) == 0)
        for (size_t i = 0; i < p.value.data.size(); ++i)
          moved = std::max(moved, std::fabs(p.value.data[i] - before[offset + i]));
      offset += p.value.data.size();
    }
    INFO(prefix);
    CHECK(moved > 0.0);
  }
}

TEST_CASE("loss decreases over the first 20 steps on a fixed toy set", "[training][slow]") {
  DatasetSpec spec;
  spec.n_samples = 8;
  spec.phantom.size = 16;
  spec.n_coils = 2;
  spec.af = 4;
  spec.center_fraction = 0.1;
  spec.seed = 33;
  std::vector<KSpaceSample> data = build_dataset(spec);

  ReconConfig cfg;
  cfg.N = 1;
  cfg.M = 1;
  cfg.C = 8;
  cfg.heads = 4;
  cfg.msrb_count = 1;
  cfg.batch = 4;
  cfg.steps = 20;
  cfg.seed = 6;
  EamriModel model = build_variant(Variant::Full, cfg, 29);
  AdamState adam = AdamState::init(model.params, AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  TrainResult result = train_loop(model, data, data, adam, 0);

  REQUIRE(result.epochs.size() >= 2);
  CHECK(result.epochs.back().loss < result.epochs.front().loss);
}

TEST_CASE("empty dataset is rejected", "[training]") {
  ReconConfig cfg;
  cfg.steps = 1;
  EamriModel model = build_variant(Variant::M1, cfg, 1);
  AdamState adam = AdamState::init(model.params, AdamConfig{});
  std::vector<KSpaceSample> empty;
  CHECK_THROWS_AS(train_loop(model, empty, empty, adam, 0), std::invalid_argument);
}

TEST_CASE("metric log emits one json object per epoch", "[training]") {
  DatasetSpec spec;
  spec.n_samples = 4;
  spec.phantom.size = 8;
  spec.n_coils = 1;
  spec.af = 2;
  spec.center_fraction = 0.2;
  spec.seed = 44;
  std::vector<KSpaceSample> data = build_dataset(spec);

  ReconConfig cfg;
  cfg.N = 1;
  cfg.M = 1;
  cfg.C = 4;
  cfg.heads = 2;
  cfg.msrb_count = 1;
  cfg.batch = 2;
  cfg.steps = 4;  // two epochs of two steps
  cfg.seed = 3;
  cfg.variant = "m1";
  EamriModel model = build_variant(Variant::M1, cfg, 31);
  AdamState adam = AdamState::init(model.params, AdamConfig{});
  std::ostringstream log;
  TrainOptions opt;
  opt.metric_log = &log;
  train_loop(model, data, data, adam, 0, opt);

  std::istringstream lines(log.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j.contains("step"));
    CHECK(j.contains("loss"));
    CHECK(j.contains("psnr"));
    CHECK(j.contains("ssim"));
    CHECK(j.contains("nmse"));
    ++count;
  }
  CHECK(count == 2);
}
