#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "eamri/phantom.hpp"
#include "eamri/recon.hpp"
#include "eamri/training.hpp"

// Central finite-difference verification of every differentiable operation
// and of the assembled model. Runs single-threaded.

namespace eamri {
namespace gradcheck {

struct Entry {
  std::string name;
  double rel_err = 0.0;
  bool pass = false;
};

struct Report {
  std::vector<Entry> entries;
  double seconds = 0.0;
  bool all_pass() const {
    for (const auto& e : entries)
      if (!e.pass) return false;
    return true;
  }
  int failures() const {
    int n = 0;
    for (const auto& e : entries) n += !e.pass;
    return n;
  }
};

inline double rel_err(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-10});
  if (std::fabs(a) < 1e-10 && std::fabs(b) < 1e-10) return 0.0;
  return std::fabs(a - b) / scale;
}

struct FdInput {
  std::vector<int> shape;
  bool complex = false;
  std::vector<double> data;
};

inline FdInput random_real(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  FdInput in{std::move(shape), false, {}};
  in.data.resize(numel_of(in.shape));
  for (double& v : in.data) v = rng.uniform(lo, hi);
  return in;
}

// Random values bounded away from zero (for kinked ops like relu/abs).
inline FdInput random_real_away_from(std::vector<int> shape, Rng& rng, double margin) {
  FdInput in = random_real(std::move(shape), rng);
  for (double& v : in.data) v = (v >= 0.0 ? v + margin : v - margin);
  return in;
}

inline FdInput random_complex(std::vector<int> shape, Rng& rng) {
  FdInput in{std::move(shape), true, {}};
  in.data.resize(2 * numel_of(in.shape));
  for (double& v : in.data) v = rng.uniform(-1.0, 1.0);
  return in;
}

// Flattens any output (real or complex) to a rank-1 real view for the random
// inner-product loss.
inline Var as_flat_real(Trace& tr, Var v) {
  const int n = static_cast<int>(tr.logical_numel(v));
  if (!tr.is_complex(v)) return reshape(tr, v, {n});
  Var c3 = reshape(tr, v, {1, n, 1});
  Var two = two_channel_from_complex(tr, c3);
  return reshape(tr, two, {2 * n});
}

using BuildFn = std::function<Var(Trace&, const std::vector<Var>&)>;

// Checks d<r, f(x)>/dx against central differences along random directions.
inline void check_op(Report& report, const std::string& name, std::vector<FdInput> inputs,
                     const BuildFn& build, Rng& rng, double h = 1e-6, double tol = 1e-5,
                     int dirs = 2) {
  // probe the output size, then freeze the random loss weights
  std::vector<double> weights;
  {
    Trace tr;
    std::vector<Var> vars;
    for (const auto& in : inputs)
      vars.push_back(in.complex ? tr.input(ComplexTensor(in.shape, in.data))
                                : tr.input(RealTensor(in.shape, in.data)));
    Var out = build(tr, vars);
    const size_t n = tr.data(out).size();
    weights.resize(n);
    for (double& w : weights) w = rng.uniform(0.5, 1.5) * (rng.below(2) ? 1.0 : -1.0);
  }
  // one traced pass for the analytic gradients
  Trace tr;
  std::vector<Var> vars;
  for (const auto& in : inputs)
    vars.push_back(in.complex ? tr.input(ComplexTensor(in.shape, in.data))
                              : tr.input(RealTensor(in.shape, in.data)));
  Var out = build(tr, vars);
  Var flat = as_flat_real(tr, out);
  Var wv = tr.input(RealTensor({static_cast<int>(weights.size())}, weights));
  Var loss = sum_all(tr, mul(tr, flat, wv));
  tr.backward(loss);

  Entry entry{name, 0.0, true};
  for (size_t j = 0; j < inputs.size(); ++j) {
    for (int d = 0; d < dirs; ++d) {
      std::vector<double> dir(inputs[j].data.size());
      for (double& v : dir) v = rng.uniform(-1.0, 1.0);
      double analytic = 0.0;
      const auto& g = tr.grad(vars[j]);
      for (size_t i = 0; i < dir.size(); ++i) analytic += g[i] * dir[i];
      std::vector<FdInput> plus = inputs, minus = inputs;
      for (size_t i = 0; i < dir.size(); ++i) {
        plus[j].data[i] += h * dir[i];
        minus[j].data[i] -= h * dir[i];
      }
      double lp, lm;
      {
        Trace t2;
        std::vector<Var> v2;
        for (const auto& in : plus)
          v2.push_back(in.complex ? t2.input(ComplexTensor(in.shape, in.data))
                                  : t2.input(RealTensor(in.shape, in.data)));
        Var o2 = build(t2, v2);
        Var f2 = as_flat_real(t2, o2);
        Var w2 = t2.input(RealTensor({static_cast<int>(weights.size())}, weights));
        lp = t2.data(sum_all(t2, mul(t2, f2, w2)))[0];
      }
      {
        Trace t2;
        std::vector<Var> v2;
        for (const auto& in : minus)
          v2.push_back(in.complex ? t2.input(ComplexTensor(in.shape, in.data))
                                  : t2.input(RealTensor(in.shape, in.data)));
        Var o2 = build(t2, v2);
        Var f2 = as_flat_real(t2, o2);
        Var w2 = t2.input(RealTensor({static_cast<int>(weights.size())}, weights));
        lm = t2.data(sum_all(t2, mul(t2, f2, w2)))[0];
      }
      const double fd = (lp - lm) / (2.0 * h);
      entry.rel_err = std::max(entry.rel_err, rel_err(fd, analytic));
    }
  }
  entry.pass = entry.rel_err < tol;
  report.entries.push_back(entry);
}

// ---------------------------------------------------------------------------
// per-op suite
// ---------------------------------------------------------------------------

inline void run_op_checks(Report& report, Rng& rng) {
  check_op(report, "conv2d", {random_real({1, 2, 8, 8}, rng), random_real({4, 2, 3, 3}, rng),
                              random_real({4}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return conv2d(tr, v[0], v[1], v[2]); }, rng);
  check_op(report, "conv2d dilation=2",
           {random_real({1, 2, 8, 8}, rng), random_real({4, 2, 3, 3}, rng), random_real({4}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return conv2d(tr, v[0], v[1], v[2], 2); }, rng);
  check_op(report, "conv2d groups=2",
           {random_real({1, 4, 6, 6}, rng), random_real({4, 2, 3, 3}, rng), random_real({4}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return conv2d(tr, v[0], v[1], v[2], 1, 2); },
           rng);
  check_op(report, "conv2d 1x1",
           {random_real({1, 3, 5, 5}, rng), random_real({2, 3, 1, 1}, rng), random_real({2}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return conv2d(tr, v[0], v[1], v[2]); }, rng);
  check_op(report, "depthwise_conv2d",
           {random_real({1, 3, 6, 6}, rng), random_real({3, 1, 3, 3}, rng), random_real({3}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return depthwise_conv2d(tr, v[0], v[1], v[2]); },
           rng);
  check_op(report, "matmul", {random_real({3, 4}, rng), random_real({4, 2}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return matmul(tr, v[0], v[1]); }, rng);
  check_op(report, "transpose2d", {random_real({3, 5}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return transpose2d(tr, v[0]); }, rng);
  check_op(report, "add", {random_real({4, 3}, rng), random_real({4, 3}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return add(tr, v[0], v[1]); }, rng);
  check_op(report, "sub", {random_real({4, 3}, rng), random_real({4, 3}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return sub(tr, v[0], v[1]); }, rng);
  check_op(report, "mul", {random_real({4, 3}, rng), random_real({4, 3}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return mul(tr, v[0], v[1]); }, rng);
  check_op(report, "scale", {random_real({4, 3}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return scale(tr, v[0], -1.7); }, rng);
  check_op(report, "relu", {random_real_away_from({4, 5}, rng, 0.1)},
           [](Trace& tr, const std::vector<Var>& v) { return relu(tr, v[0]); }, rng);
  check_op(report, "sigmoid", {random_real({4, 5}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return sigmoid(tr, v[0]); }, rng);
  check_op(report, "abs", {random_real_away_from({4, 5}, rng, 0.1)},
           [](Trace& tr, const std::vector<Var>& v) { return abs_op(tr, v[0]); }, rng);
  check_op(report, "sqrt", {random_real({4, 5}, rng, 0.5, 2.0)},
           [](Trace& tr, const std::vector<Var>& v) { return sqrt_op(tr, v[0]); }, rng);
  check_op(report, "recip", {random_real({4, 5}, rng, 0.5, 2.0)},
           [](Trace& tr, const std::vector<Var>& v) { return recip(tr, v[0]); }, rng);
  check_op(report, "clamp_min", {random_real_away_from({4, 5}, rng, 0.2)},
           [](Trace& tr, const std::vector<Var>& v) { return clamp_min(tr, v[0], 0.1); }, rng);
  check_op(report, "softmax axis=-1", {random_real({3, 5}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return softmax(tr, v[0], -1); }, rng);
  check_op(report, "softmax axis=0", {random_real({3, 5}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return softmax(tr, v[0], 0); }, rng);
  check_op(report, "sum_axis", {random_real({3, 4, 5}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return sum_axis(tr, v[0], 0); }, rng);
  check_op(report, "mean_all", {random_real({3, 4}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return mean_all(tr, v[0]); }, rng);
  check_op(report, "reshape", {random_real({3, 4}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return reshape(tr, v[0], {2, 6}); }, rng);
  check_op(report, "concat_channels",
           {random_real({1, 2, 4, 4}, rng), random_real({1, 3, 4, 4}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return concat_channels(tr, {v[0], v[1]}); },
           rng);
  check_op(report, "slice_channels", {random_real({1, 6, 4, 4}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return slice_channels(tr, v[0], 2, 3); }, rng);
  check_op(report, "slice1d", {random_real({7}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return slice1d(tr, v[0], 2, 3); }, rng);
  check_op(report, "div_scalar", {random_real({4, 3}, rng), random_real({1}, rng, 0.5, 2.0)},
           [](Trace& tr, const std::vector<Var>& v) { return div_scalar(tr, v[0], v[1]); }, rng);

  check_op(report, "fft2c", {random_complex({8, 8}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return fft2c(tr, v[0]); }, rng);
  check_op(report, "ifft2c", {random_complex({8, 8}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return ifft2c(tr, v[0]); }, rng);
  check_op(report, "cmul", {random_complex({3, 4}, rng), random_complex({3, 4}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return cmul(tr, v[0], v[1]); }, rng);
  check_op(report, "expand_coils", {random_complex({3, 4, 4}, rng), random_complex({4, 4}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return expand_coils(tr, v[0], v[1]); }, rng);
  check_op(report, "reduce_coils", {random_complex({3, 4, 4}, rng), random_complex({3, 4, 4}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return reduce_coils(tr, v[0], v[1]); }, rng);
  check_op(report, "abs2", {random_complex({4, 4}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return abs2(tr, v[0]); }, rng);
  {
    // keep |x| well away from 0 so the magnitude kink stays out of reach
    FdInput c = random_complex({4, 4}, rng);
    for (double& v : c.data) v = (v >= 0 ? v + 0.5 : v - 0.5);
    check_op(report, "magnitude", {c},
             [](Trace& tr, const std::vector<Var>& v) { return magnitude(tr, v[0]); }, rng);
  }
  check_op(report, "cmul_real broadcast",
           {random_complex({3, 4, 4}, rng), random_real({4, 4}, rng, 0.5, 1.5)},
           [](Trace& tr, const std::vector<Var>& v) { return cmul_real(tr, v[0], v[1]); }, rng);
  check_op(report, "apply_colmask", {random_complex({2, 4, 6}, rng)},
           [](Trace& tr, const std::vector<Var>& v) {
             return apply_colmask(tr, v[0], {1, 0, 1, 1, 0, 0}, true);
           },
           rng);
  check_op(report, "two_channel_from_complex", {random_complex({2, 4, 4}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return two_channel_from_complex(tr, v[0]); },
           rng);
  check_op(report, "complex_from_two_channel", {random_real({2, 2, 4, 4}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return complex_from_two_channel(tr, v[0]); },
           rng);

  // composites: data consistency (gradients through both x and S) and the
  // guarded RSS used by sensitivity estimation
  {
    SamplingMask mask = make_cartesian_mask(8, 4, 0.1, 11);
    FdInput y = random_complex({2, 8, 8}, rng);
    {  // keep the constant y consistent with its zero-off-mask invariant
      for (int c = 0; c < 2; ++c)
        for (int row = 0; row < 8; ++row)
          for (int col = 0; col < 8; ++col)
            if (!mask.columns[static_cast<size_t>(col)]) {
              const size_t i = 2 * ((static_cast<size_t>(c) * 8 + row) * 8 + col);
              y.data[i] = 0.0;
              y.data[i + 1] = 0.0;
            }
    }
    check_op(report, "data_consistency",
             {random_complex({8, 8}, rng), random_complex({2, 8, 8}, rng)},
             [mask, y](Trace& tr, const std::vector<Var>& v) {
               Var yc = tr.input(ComplexTensor(y.shape, y.data));
               return data_consistency(tr, v[0], yc, mask, v[1]);
             },
             rng);
  }
  check_op(report, "rss_guarded", {random_complex({3, 4, 4}, rng)},
           [](Trace& tr, const std::vector<Var>& v) { return rss_guarded(tr, v[0]); }, rng);
  {
    FdInput pred = random_complex({4, 4}, rng);
    for (double& v : pred.data) v = (v >= 0 ? v + 0.5 : v - 0.5);
    ComplexTensor gt = ComplexTensor::zeros({4, 4});
    Rng gtr(99);
    for (double& v : gt.data) v = gtr.uniform(-1.0, 1.0);
    check_op(report, "image_loss", {pred},
             [gt](Trace& tr, const std::vector<Var>& v) { return image_loss(tr, v[0], gt); }, rng,
             1e-6, 1e-5);
  }
  {
    RealTensor egt = RealTensor::zeros({4, 4});
    Rng gtr(77);
    for (double& v : egt.data) v = gtr.uniform(0.0, 1.0);
    check_op(report, "edge_loss", {random_real({1, 1, 4, 4}, rng), random_real({1, 1, 4, 4}, rng)},
             [egt](Trace& tr, const std::vector<Var>& v) {
               return edge_loss(tr, {v[0], v[1]}, egt);
             },
             rng);
  }
}

// ---------------------------------------------------------------------------
// assembled-model sweep: every parameter tensor is probed with directional
// and per-entry central differences through the full forward + loss.
// ---------------------------------------------------------------------------

inline void run_model_check(Report& report, Rng& rng, int entry_probes = 4) {
  DatasetSpec dspec;
  dspec.n_samples = 1;
  dspec.phantom.size = 8;
  dspec.phantom.ellipses = 3;
  dspec.n_coils = 2;
  dspec.af = 4;
  dspec.center_fraction = 0.08;
  dspec.seed = 314;
  KSpaceSample sample = make_sample(dspec, 0);

  ReconConfig cfg;
  cfg.N = 2;
  cfg.M = 2;
  cfg.C = 8;
  cfg.heads = 4;
  cfg.msrb_count = 3;
  cfg.seed = 5;
  EamriModel model = build_variant(Variant::Full, cfg, 17);

  // generic random init everywhere: zero-started projections would hide
  // their own gradient errors behind zero activations
  Rng init(23);
  for (auto& p : model.params.params())
    for (double& v : p.value.data) v += init.uniform(-0.05, 0.05);

  auto eval_loss = [&]() {
    Trace tr;
    ModelOutput out = model_forward(tr, sample, model);
    Var loss = total_loss(tr, out.x_pred, sample.x_gt, out.edges, sample.edge_gt, cfg.beta);
    return tr.data(loss)[0];
  };

  model.params.zero_grad();
  {
    Trace tr;
    ModelOutput out = model_forward(tr, sample, model);
    Var loss = total_loss(tr, out.x_pred, sample.x_gt, out.edges, sample.edge_gt, cfg.beta);
    tr.backward(loss);
  }

  const double h = 1e-5;
  const double tol = 1e-4;
  for (auto& p : model.params.params()) {
    Entry entry{"model: " + p.name, 0.0, true};
    // two random directions
    for (int d = 0; d < 2; ++d) {
      std::vector<double> dir(p.value.data.size());
      for (double& v : dir) v = rng.uniform(-1.0, 1.0);
      double analytic = 0.0;
      for (size_t i = 0; i < dir.size(); ++i) analytic += p.grad.data[i] * dir[i];
      for (size_t i = 0; i < dir.size(); ++i) p.value.data[i] += h * dir[i];
      const double lp = eval_loss();
      for (size_t i = 0; i < dir.size(); ++i) p.value.data[i] -= 2.0 * h * dir[i];
      const double lm = eval_loss();
      for (size_t i = 0; i < dir.size(); ++i) p.value.data[i] += h * dir[i];
      entry.rel_err = std::max(entry.rel_err, rel_err((lp - lm) / (2.0 * h), analytic));
    }
    // a few individual entries
    const int probes = std::min<int>(entry_probes, static_cast<int>(p.value.data.size()));
    for (int q = 0; q < probes; ++q) {
      const size_t i = static_cast<size_t>(rng.below(p.value.data.size()));
      const double keep = p.value.data[i];
      p.value.data[i] = keep + h;
      const double lp = eval_loss();
      p.value.data[i] = keep - h;
      const double lm = eval_loss();
      p.value.data[i] = keep;
      entry.rel_err = std::max(entry.rel_err, rel_err((lp - lm) / (2.0 * h), p.grad.data[i]));
    }
    entry.pass = entry.rel_err < tol;
    report.entries.push_back(entry);
  }
}

inline Report run_suite(uint64_t seed = 20240901) {
  const auto t0 = std::chrono::steady_clock::now();
  Report report;
  Rng rng(seed);
  run_op_checks(report, rng);
  run_model_check(report, rng);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace gradcheck
}  // namespace eamri
