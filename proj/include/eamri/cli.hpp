#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eamri/gradcheck.hpp"
#include "eamri/io.hpp"
#include "eamri/phantom.hpp"
#include "eamri/recon.hpp"
#include "eamri/training.hpp"

namespace eamri {
namespace cli {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitCheckFailure = 2;

inline ReconConfig load_config(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config '" + path + "' is not valid JSON: " + e.what());
  }
  return j.get<ReconConfig>();
}

inline std::string format_psnr(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct CommonArgs {
  std::string config_path;
  std::string dataset_path;
  std::string checkpoint_path;
  std::string out_dir = ".";
  uint64_t seed = 0;
  bool seed_set = false;
  std::string variant;
  std::string edge_op;
  int af = 0;
};

inline ReconConfig resolve_config(const CommonArgs& args) {
  ReconConfig cfg;
  if (!args.config_path.empty()) cfg = load_config(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  if (!args.variant.empty()) cfg.variant = args.variant;
  if (args.af != 0) cfg.af = args.af;
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

inline int run_simulate(const CommonArgs& args, int samples, int size, int coils, int ellipses,
                        double sigma, std::ostream& out) {
  DatasetSpec spec;
  spec.n_samples = samples;
  spec.phantom.size = size;
  spec.phantom.ellipses = ellipses;
  spec.n_coils = coils;
  spec.af = args.af != 0 ? args.af : 4;
  spec.center_fraction = spec.af == 6 ? 0.06 : 0.08;
  spec.sigma = sigma;
  spec.edge_op = args.edge_op.empty() ? "sobel" : args.edge_op;
  spec.seed = args.seed;
  std::vector<KSpaceSample> data = build_dataset(spec);
  require(!args.dataset_path.empty(), "simulate: --dataset output path is required");
  save_dataset(args.dataset_path, data, dataset_meta(spec));
  out << "wrote " << data.size() << " samples (" << size << "x" << size << ", " << coils
      << " coils, af " << spec.af << ", " << spec.edge_op << " edges) to " << args.dataset_path
      << "\n";
  return kExitOk;
}

inline int run_train(const CommonArgs& args, const std::string& val_path, std::ostream& out) {
  require(!args.dataset_path.empty(), "train: --dataset is required");
  Dataset train = load_dataset(args.dataset_path);
  std::vector<KSpaceSample> val;
  if (!val_path.empty()) val = load_dataset(val_path).samples;

  EamriModel model;
  AdamState adam;
  int64_t start_step = 0;
  ReconConfig cfg;
  if (!args.checkpoint_path.empty()) {
    Checkpoint ck = load_checkpoint(args.checkpoint_path);
    model = std::move(ck.model);
    adam = std::move(ck.adam);
    start_step = ck.global_step;
    cfg = model.cfg;
    if (!args.config_path.empty()) {
      // allow extending the step budget on resume
      ReconConfig fresh = load_config(args.config_path);
      cfg.steps = fresh.steps;
      model.cfg.steps = fresh.steps;
    }
    out << "resumed from " << args.checkpoint_path << " at step " << start_step << "\n";
  } else {
    cfg = resolve_config(args);
    model = build_variant(cfg);
    adam = AdamState::init(model.params,
                           AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  }

  std::filesystem::create_directories(args.out_dir);
  std::ofstream log(args.out_dir + "/metrics.jsonl", std::ios::app);
  TrainOptions opt;
  opt.metric_log = &log;
  opt.console = &out;
  TrainResult result = train_loop(model, train.samples, val, adam, start_step, opt);

  const std::string ck_path = args.out_dir + "/checkpoint.eamri";
  save_checkpoint(ck_path, model, adam, result.final_step);
  out << "checkpoint written to " << ck_path << "\n";
  out << "edge loss " << result.initial_edge_loss << " -> " << result.final_edge_loss << "\n";
  return kExitOk;
}

inline int run_recon(const CommonArgs& args, int count, std::ostream& out) {
  require(!args.checkpoint_path.empty(), "recon: --checkpoint is required");
  require(!args.dataset_path.empty(), "recon: --dataset is required");
  Checkpoint ck = load_checkpoint(args.checkpoint_path);
  Dataset data = load_dataset(args.dataset_path);
  std::filesystem::create_directories(args.out_dir);

  const int n = std::min<int>(count, static_cast<int>(data.samples.size()));
  for (int i = 0; i < n; ++i) {
    const KSpaceSample& s = data.samples[static_cast<size_t>(i)];
    Trace tr;
    ModelOutput mo = model_forward(tr, s, ck.model);
    RealTensor pred = magnitude_of(tr.complex(mo.x_pred));
    RealTensor gt = magnitude_of(s.x_gt);
    RealTensor err = RealTensor::zeros(gt.shape);
    for (size_t j = 0; j < err.data.size(); ++j) err.data[j] = std::fabs(pred.data[j] - gt.data[j]);

    const std::string stem = args.out_dir + "/" + sample_key(i);
    write_pgm16(stem + "_recon.pgm", pred);
    write_heatmap_ppm(stem + "_error.ppm", err);
    for (size_t t = 0; t < mo.edges.size(); ++t) {
      RealTensor e = tr.real(mo.edges[t]);
      write_pgm16(stem + "_edge" + std::to_string(t) + ".pgm",
                  RealTensor(gt.shape, std::move(e.data)));
    }
    MetricReport r = evaluate_pair(pred, gt);
    out << sample_key(i) << "  psnr " << format_psnr(r.psnr) << "  ssim " << r.ssim << "  nmse "
        << r.nmse << "\n";
  }
  out << "wrote images for " << n << " samples to " << args.out_dir << "\n";
  return kExitOk;
}

inline int run_eval(const CommonArgs& args, std::ostream& out) {
  require(!args.checkpoint_path.empty(), "eval: --checkpoint is required");
  require(!args.dataset_path.empty(), "eval: --dataset is required");
  Checkpoint ck = load_checkpoint(args.checkpoint_path);
  Dataset data = load_dataset(args.dataset_path);
  MetricReport zf = evaluate_zero_filled(data.samples, ck.cfg);
  MetricReport model = evaluate_model(ck.model, data.samples);
  out << "method        psnr     ssim     nmse\n";
  char buf[128];
  std::snprintf(buf, sizeof(buf), "zero-filled   %-8s %.4f   %.5f\n", format_psnr(zf.psnr).c_str(),
                zf.ssim, zf.nmse);
  out << buf;
  std::snprintf(buf, sizeof(buf), "model         %-8s %.4f   %.5f\n",
                format_psnr(model.psnr).c_str(), model.ssim, model.nmse);
  out << buf;
  return kExitOk;
}

inline int run_gradcheck(std::ostream& out) {
  gradcheck::Report report = gradcheck::run_suite();
  for (const auto& e : report.entries)
    out << (e.pass ? "[pass] " : "[FAIL] ") << e.name << "  rel_err " << e.rel_err << "\n";
  out << report.entries.size() - static_cast<size_t>(report.failures()) << "/"
      << report.entries.size() << " checks passed in " << report.seconds << " s\n";
  return report.all_pass() ? kExitOk : kExitCheckFailure;
}

inline int run_ablate(const CommonArgs& args, const std::string& val_path, std::ostream& out) {
  require(!args.dataset_path.empty(), "ablate: --dataset is required");
  Dataset train = load_dataset(args.dataset_path);
  std::vector<KSpaceSample> val =
      val_path.empty() ? train.samples : load_dataset(val_path).samples;
  ReconConfig base = resolve_config(args);

  struct Row {
    std::string name;
    size_t params;
    MetricReport report;
    double edge_final;
  };
  std::vector<Row> rows;

  auto train_one = [&](const std::string& name, Variant kind,
                       const std::vector<KSpaceSample>& tr_samples,
                       const std::vector<KSpaceSample>& va_samples) {
    ReconConfig cfg = base;
    cfg.variant = to_string(kind);
    EamriModel model = build_variant(kind, cfg, Rng::derive(cfg.seed, 0x1417));
    AdamState adam = AdamState::init(model.params,
                                     AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
    out << "training " << name << " (" << model.params.total_parameters() << " params, "
        << cfg.steps << " steps)\n";
    TrainResult res = train_loop(model, tr_samples, va_samples, adam, 0);
    rows.push_back(Row{name, model.params.total_parameters(),
                       evaluate_model(model, va_samples), res.final_edge_loss});
  };

  train_one("m1", Variant::M1, train.samples, val);
  train_one("m2", Variant::M2, train.samples, val);
  train_one("m3", Variant::M3, train.samples, val);
  train_one("full", Variant::Full, train.samples, val);

  // edge-detector ablation: rebuild the ground-truth edges with canny
  {
    DatasetSpec espec;
    espec.edge_op = "canny";
    std::vector<KSpaceSample> canny_train = train.samples;
    for (auto& s : canny_train) s.edge_gt = extract_edges(magnitude_of(s.x_gt), espec);
    std::vector<KSpaceSample> canny_val = val;
    for (auto& s : canny_val) s.edge_gt = extract_edges(magnitude_of(s.x_gt), espec);
    train_one("full+canny", Variant::Full, canny_train, canny_val);
  }

  out << "\nvariant      params    psnr     ssim     nmse     edge_loss\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-12s %-9zu %-8s %.4f   %.5f  %.5f\n", r.name.c_str(),
                  r.params, format_psnr(r.report.psnr).c_str(), r.report.ssim, r.report.nmse,
                  r.edge_final);
    out << buf;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

inline int main(std::vector<std::string> args, std::ostream& out = std::cout,
                std::ostream& err = std::cerr) {
  CLI::App app{"edge-attention parallel-MRI reconstruction on synthetic phantom data"};
  app.require_subcommand(1);

  CommonArgs common;
  int samples = 100, size = 32, coils = 4, ellipses = 6, recon_count = 4;
  double sigma = 0.0;
  std::string val_path;

  auto add_common = [&](CLI::App* sub, bool config = true) {
    if (config) sub->add_option("--config", common.config_path, "JSON config file");
    sub->add_option("--dataset", common.dataset_path, "dataset file");
    sub->add_option("--checkpoint", common.checkpoint_path, "checkpoint file");
    sub->add_option("--out", common.out_dir, "output directory");
    sub->add_option("--seed", common.seed, "seed override")->each([&](const std::string&) {
      common.seed_set = true;
    });
    sub->add_option("--variant", common.variant, "model variant: full|m1|m2|m3");
    sub->add_option("--edge-op", common.edge_op, "edge extractor: sobel|canny");
    sub->add_option("--af", common.af, "acceleration factor (4 or 6)");
  };

  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic multi-coil dataset");
  add_common(sim);
  sim->add_option("--samples", samples, "number of samples");
  sim->add_option("--size", size, "image size (power of two)");
  sim->add_option("--coils", coils, "coil count");
  sim->add_option("--ellipses", ellipses, "ellipses per phantom");
  sim->add_option("--sigma", sigma, "k-space noise std");

  CLI::App* train = app.add_subcommand("train", "train a model on a dataset");
  add_common(train);
  train->add_option("--val-dataset", val_path, "held-out validation dataset");

  CLI::App* recon = app.add_subcommand("recon", "reconstruct and emit images");
  add_common(recon);
  recon->add_option("--count", recon_count, "samples to reconstruct");

  CLI::App* eval = app.add_subcommand("eval", "print a metric table for a checkpoint");
  add_common(eval);

  app.add_subcommand("gradcheck", "run the finite-difference gradient suite");

  CLI::App* ablate = app.add_subcommand("ablate", "train all variants and compare");
  add_common(ablate);
  ablate->add_option("--val-dataset", val_path, "held-out validation dataset");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (app.got_subcommand("simulate"))
      return run_simulate(common, samples, size, coils, ellipses, sigma, out);
    if (app.got_subcommand("train")) return run_train(common, val_path, out);
    if (app.got_subcommand("recon")) return run_recon(common, recon_count, out);
    if (app.got_subcommand("eval")) return run_eval(common, out);
    if (app.got_subcommand("gradcheck")) return run_gradcheck(out);
    if (app.got_subcommand("ablate")) return run_ablate(common, val_path, out);
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  err << "error: no subcommand\n";
  return kExitUsage;
}

}  // namespace cli
}  // namespace eamri
