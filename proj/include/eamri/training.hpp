#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "eamri/recon.hpp"
#include "eamri/threading.hpp"

namespace eamri {

// ---------------------------------------------------------------------------
// losses (traced)
// ---------------------------------------------------------------------------

// Mean L1 between magnitude images. Mean reduction keeps the edge-loss
// weight meaningful at any resolution.
inline Var image_loss(Trace& tr, Var x_pred, const ComplexTensor& x_gt) {
  require_shape(tr.is_complex(x_pred) && tr.shape(x_pred) == x_gt.shape,
                "image_loss: prediction/target shape mismatch");
  Var gt_mag = tr.input(magnitude_of(x_gt));
  return mean_all(tr, abs_op(tr, sub(tr, magnitude(tr, x_pred), gt_mag)));
}

// Sum over cascades of the mean L1 against the single ground-truth map.
inline Var edge_loss(Trace& tr, const std::vector<Var>& edges, const RealTensor& e_gt) {
  if (edges.empty()) return tr.input(RealTensor::scalar(0.0));
  Var total;
  for (Var e : edges) {
    const auto& s = tr.shape(e);
    require_shape(s.size() == 4 && s[0] == 1 && s[1] == 1 &&
                      std::vector<int>{s[2], s[3]} == e_gt.shape,
                  "edge_loss: predicted map shape mismatch");
    Var gt = tr.input(RealTensor({1, 1, e_gt.dim(0), e_gt.dim(1)}, e_gt.data));
    Var term = mean_all(tr, abs_op(tr, sub(tr, e, gt)));
    total = total.valid() ? add(tr, total, term) : term;
  }
  return total;
}

inline Var total_loss(Trace& tr, Var x_pred, const ComplexTensor& x_gt,
                      const std::vector<Var>& edges, const RealTensor& e_gt, double beta) {
  Var li = image_loss(tr, x_pred, x_gt);
  if (beta == 0.0 || edges.empty()) return li;
  return add(tr, li, scale(tr, edge_loss(tr, edges, e_gt), beta));
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-7;  // decoupled
};

struct AdamState {
  AdamConfig cfg;
  int64_t step = 0;
  std::vector<RealTensor> m;
  std::vector<RealTensor> v;

  static AdamState init(const ParamStore& store, AdamConfig cfg) {
    AdamState s;
    s.cfg = cfg;
    for (const auto& p : store.params()) {
      s.m.push_back(RealTensor::zeros(p.value.shape));
      s.v.push_back(RealTensor::zeros(p.value.shape));
    }
    return s;
  }
};

// Bias-corrected Adam with decoupled weight decay.
inline void adam_step(ParamStore& store, AdamState& state) {
  require(static_cast<size_t>(store.size()) == state.m.size(),
          "adam_step: state does not match parameter store");
  ++state.step;
  const AdamConfig& c = state.cfg;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (int i = 0; i < store.size(); ++i) {
    Parameter& p = store.at(i);
    auto& m = state.m[static_cast<size_t>(i)].data;
    auto& v = state.v[static_cast<size_t>(i)].data;
    for (size_t j = 0; j < p.value.data.size(); ++j) {
      const double g = p.grad.data[j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.value.data[j] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
      p.value.data[j] -= c.lr * c.weight_decay * p.value.data[j];
    }
  }
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double nmse = 0.0;
};

// 20*log10(max(gt)/sqrt(MSE)); +inf when the images coincide.
inline double psnr(const RealTensor& pred, const RealTensor& gt) {
  require_shape(pred.same_shape(gt), "psnr: shape mismatch");
  double mse = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - gt.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(pred.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  double peak = 0.0;
  for (double v : gt.data) peak = std::max(peak, v);
  return 20.0 * std::log10(peak / std::sqrt(mse));
}

inline double nmse(const RealTensor& pred, const RealTensor& gt) {
  require_shape(pred.same_shape(gt), "nmse: shape mismatch");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - gt.data[i];
    num += d * d;
    den += gt.data[i] * gt.data[i];
  }
  require(den > 0.0, "nmse: ground truth is identically zero");
  return num / den;
}

// Mean local SSIM over valid 7x7 uniform windows; plain (biased) moments,
// stabilizers k1=0.01 k2=0.03, dynamic range max(gt). Uses running column
// sums; the test-side oracle recomputes every window directly.
inline double ssim(const RealTensor& pred, const RealTensor& gt, int window = 7) {
  require_shape(pred.same_shape(gt) && pred.rank() == 2, "ssim: expects matching [H,W] images");
  const int h = pred.dim(0), w = pred.dim(1);
  require(window % 2 == 1 && h >= window && w >= window, "ssim: image smaller than window");
  double peak = 0.0;
  for (double v : gt.data) peak = std::max(peak, v);
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const double n = static_cast<double>(window) * window;

  // per-row prefix sums of x, y, x^2, y^2, xy
  const int wp = w + 1;
  std::vector<double> sx(static_cast<size_t>(h) * wp, 0.0), sy(sx), sxx(sx), syy(sx), sxy(sx);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const size_t r = static_cast<size_t>(i) * wp + j;
      const double x = pred.data[static_cast<size_t>(i) * w + j];
      const double y = gt.data[static_cast<size_t>(i) * w + j];
      sx[r + 1] = sx[r] + x;
      sy[r + 1] = sy[r] + y;
      sxx[r + 1] = sxx[r] + x * x;
      syy[r + 1] = syy[r] + y * y;
      sxy[r + 1] = sxy[r] + x * y;
    }
  auto window_sum = [&](const std::vector<double>& s, int i0, int j0) {
    double acc = 0.0;
    for (int i = i0; i < i0 + window; ++i)
      acc += s[static_cast<size_t>(i) * wp + j0 + window] - s[static_cast<size_t>(i) * wp + j0];
    return acc;
  };
  double total = 0.0;
  int count = 0;
  for (int i = 0; i + window <= h; ++i)
    for (int j = 0; j + window <= w; ++j) {
      const double mx = window_sum(sx, i, j) / n;
      const double my = window_sum(sy, i, j) / n;
      const double vx = window_sum(sxx, i, j) / n - mx * mx;
      const double vy = window_sum(syy, i, j) / n - my * my;
      const double cxy = window_sum(sxy, i, j) / n - mx * my;
      const double s = ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
                       ((mx * mx + my * my + c1) * (vx + vy + c2));
      total += s;
      ++count;
    }
  return total / count;
}

// ---------------------------------------------------------------------------
// evaluation helpers
// ---------------------------------------------------------------------------

inline MetricReport evaluate_pair(const RealTensor& pred_mag, const RealTensor& gt_mag) {
  return MetricReport{psnr(pred_mag, gt_mag), ssim(pred_mag, gt_mag), nmse(pred_mag, gt_mag)};
}

// Mean metrics of the model over up to `limit` samples (0 = all).
inline MetricReport evaluate_model(EamriModel& model, const std::vector<KSpaceSample>& samples,
                                   int limit = 0) {
  const int n = limit > 0 ? std::min<int>(limit, static_cast<int>(samples.size()))
                          : static_cast<int>(samples.size());
  require(n > 0, "evaluate_model: empty sample set");
  std::vector<MetricReport> reports(static_cast<size_t>(n));
  parallel_for(n, [&](int i) {
    Trace tr;
    ModelOutput out = model_forward(tr, samples[static_cast<size_t>(i)], model);
    RealTensor pred = magnitude_of(tr.complex(out.x_pred));
    RealTensor gt = magnitude_of(samples[static_cast<size_t>(i)].x_gt);
    reports[static_cast<size_t>(i)] = evaluate_pair(pred, gt);
  });
  MetricReport mean;
  for (const auto& r : reports) {
    mean.psnr += r.psnr / n;
    mean.ssim += r.ssim / n;
    mean.nmse += r.nmse / n;
  }
  return mean;
}

// Mean edge loss of the model over samples (frozen parameters).
inline double evaluate_edge_loss(EamriModel& model, const std::vector<KSpaceSample>& samples,
                                 int limit = 0) {
  const int n = limit > 0 ? std::min<int>(limit, static_cast<int>(samples.size()))
                          : static_cast<int>(samples.size());
  std::vector<double> losses(static_cast<size_t>(n), 0.0);
  parallel_for(n, [&](int i) {
    Trace tr;
    ModelOutput out = model_forward(tr, samples[static_cast<size_t>(i)], model);
    if (out.edges.empty()) return;
    Var l = edge_loss(tr, out.edges, samples[static_cast<size_t>(i)].edge_gt);
    losses[static_cast<size_t>(i)] = tr.data(l)[0];
  });
  double mean = 0.0;
  for (double l : losses) mean += l / n;
  return mean;
}

// Zero-filled baseline: classic ACS/RSS sensitivity estimate (an untrained
// SME is exactly that, since its projection starts at zero) followed by
// R(S, F*(y)).
inline MetricReport evaluate_zero_filled(const std::vector<KSpaceSample>& samples,
                                         const ReconConfig& cfg) {
  require(!samples.empty(), "evaluate_zero_filled: empty sample set");
  ParamStore store;
  Rng rng(0x2f1);
  SmeNet sme = make_sme(store, "sme", cfg.sme_channels(), cfg.M, rng);
  const int n = static_cast<int>(samples.size());
  std::vector<MetricReport> reports(static_cast<size_t>(n));
  parallel_for(n, [&](int i) {
    const KSpaceSample& s = samples[static_cast<size_t>(i)];
    Trace tr;
    Var y = tr.input(s.y);
    Var S = estimate_sensitivities(tr, y, s.mask, sme, store);
    Var zf = zero_filled(tr, y, S);
    reports[static_cast<size_t>(i)] =
        evaluate_pair(magnitude_of(tr.complex(zf)), magnitude_of(s.x_gt));
  });
  MetricReport mean;
  for (const auto& r : reports) {
    mean.psnr += r.psnr / n;
    mean.ssim += r.ssim / n;
    mean.nmse += r.nmse / n;
  }
  return mean;
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct EpochStats {
  int step = 0;
  double loss = 0.0;
  MetricReport val;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  double initial_edge_loss = 0.0;
  double final_edge_loss = 0.0;
  int64_t final_step = 0;
};

struct TrainOptions {
  int eval_limit = 32;            // validation samples per epoch log
  std::ostream* metric_log = nullptr;  // one JSON object per epoch
  std::ostream* console = nullptr;
};

inline nlohmann::json metric_json(int step, double loss, const MetricReport& r) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
  };
  return nlohmann::json{
      {"step", step}, {"loss", loss}, {"psnr", num(r.psnr)}, {"ssim", r.ssim}, {"nmse", r.nmse}};
}

// Mini-batch SGD with Adam. Batch indices for global step s are drawn
// without replacement from an rng derived from (seed, s), so a resumed run
// continues the identical data stream from the step counter alone.
inline TrainResult train_loop(EamriModel& model, const std::vector<KSpaceSample>& train,
                              const std::vector<KSpaceSample>& val, AdamState& adam,
                              int64_t start_step, const TrainOptions& opt = {}) {
  require(!train.empty(), "train_loop: empty training set");
  const ReconConfig& cfg = model.cfg;
  const int batch = std::min<int>(cfg.batch, static_cast<int>(train.size()));
  const std::vector<KSpaceSample>& valset = val.empty() ? train : val;
  const int steps_per_epoch = std::max<int>(1, static_cast<int>(train.size()) / batch);

  TrainResult result;
  result.initial_edge_loss = evaluate_edge_loss(model, valset, opt.eval_limit);

  std::vector<double> sample_losses(static_cast<size_t>(batch));
  std::vector<std::unique_ptr<Trace>> traces(static_cast<size_t>(batch));
  double epoch_loss = 0.0;
  int epoch_batches = 0;

  for (int64_t step = start_step; step < cfg.steps; ++step) {
    // draw batch indices for this step
    Rng pick(Rng::derive(cfg.seed, 0xb47c4ULL + static_cast<uint64_t>(step)));
    std::vector<int> idx(train.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    for (int i = 0; i < batch; ++i) {
      size_t picki = static_cast<size_t>(i) + pick.below(idx.size() - static_cast<size_t>(i));
      std::swap(idx[static_cast<size_t>(i)], idx[picki]);
    }

    model.params.zero_grad();
    parallel_for(batch, [&](int i) {
      auto tr = std::make_unique<Trace>();
      const KSpaceSample& s = train[static_cast<size_t>(idx[static_cast<size_t>(i)])];
      ModelOutput out = model_forward(*tr, s, model);
      Var loss = total_loss(*tr, out.x_pred, s.x_gt, out.edges, s.edge_gt, cfg.beta);
      sample_losses[static_cast<size_t>(i)] = tr->data(loss)[0];
      tr->backward(loss, /*accumulate=*/false);
      traces[static_cast<size_t>(i)] = std::move(tr);
    });
    for (int i = 0; i < batch; ++i) {  // ordered merge keeps gradients bit-reproducible
      traces[static_cast<size_t>(i)]->accumulate_param_grads(1.0 / batch);
      traces[static_cast<size_t>(i)].reset();
    }
    adam_step(model.params, adam);

    double batch_loss = 0.0;
    for (int i = 0; i < batch; ++i) batch_loss += sample_losses[static_cast<size_t>(i)] / batch;
    epoch_loss += batch_loss;
    ++epoch_batches;

    const bool epoch_end = ((step + 1) % steps_per_epoch == 0) || (step + 1 == cfg.steps);
    if (epoch_end) {
      EpochStats st;
      st.step = static_cast<int>(step + 1);
      st.loss = epoch_loss / epoch_batches;
      st.val = evaluate_model(model, valset, opt.eval_limit);
      result.epochs.push_back(st);
      if (opt.metric_log) *opt.metric_log << metric_json(st.step, st.loss, st.val) << "\n";
      if (opt.console)
        *opt.console << "step " << st.step << "  loss " << st.loss << "  psnr " << st.val.psnr
                     << "  ssim " << st.val.ssim << "  nmse " << st.val.nmse << "\n";
      epoch_loss = 0.0;
      epoch_batches = 0;
    }
    result.final_step = step + 1;
  }
  result.final_edge_loss = evaluate_edge_loss(model, valset, opt.eval_limit);
  return result;
}

}  // namespace eamri
