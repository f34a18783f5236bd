#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eamri/config.hpp"
#include "eamri/phantom.hpp"
#include "eamri/training.hpp"

namespace eamri {

static_assert(std::endian::native == std::endian::little,
              "container format stores raw little-endian doubles");

// Raised when a stored file does not match the container schema; the message
// names the offending field.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// container: 8-byte magic, u32 version, u64 header length, JSON header,
// then raw little-endian f64 payloads in header order.
// ---------------------------------------------------------------------------

struct NamedTensor {
  std::string name;
  bool complex = false;
  std::vector<int> shape;
  std::vector<double> data;
};

inline constexpr char kContainerMagic[8] = {'E', 'A', 'M', 'R', 'I', 'B', 'I', 'N'};
inline constexpr uint32_t kContainerVersion = 1;

inline void write_container(const std::string& path, const std::vector<NamedTensor>& tensors,
                            const nlohmann::json& meta) {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : tensors) {
    header["tensors"].push_back(
        {{"name", t.name}, {"dtype", t.complex ? "c128" : "f64"}, {"shape", t.shape}});
    const size_t expect = numel_of(t.shape) * (t.complex ? 2 : 1);
    require(t.data.size() == expect, "write_container: tensor '" + t.name + "' length mismatch");
  }
  const std::string hs = header.dump();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), "write_container: cannot open '" + path + "' for writing");
  f.write(kContainerMagic, 8);
  const uint32_t version = kContainerVersion;
  f.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& t : tensors)
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  require(f.good(), "write_container: write failed for '" + path + "'");
}

struct Container {
  nlohmann::json meta;
  std::vector<NamedTensor> tensors;

  const NamedTensor& get(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t;
    throw FormatError("container: missing tensor '" + name + "'");
  }
  bool has(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return true;
    return false;
  }
};

inline Container read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f.good()) throw FormatError("container: cannot open '" + path + "'");
  char magic[8];
  f.read(magic, 8);
  if (!f.good() || std::memcmp(magic, kContainerMagic, 8) != 0)
    throw FormatError("container: bad magic in '" + path + "'");
  uint32_t version = 0;
  f.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kContainerVersion)
    throw FormatError("container: unsupported version " + std::to_string(version));
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f.good()) throw FormatError("container: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("container: header is not valid JSON: ") + e.what());
  }
  if (!header.contains("tensors") || !header["tensors"].is_array())
    throw FormatError("container: header field 'tensors' missing or not an array");
  Container c;
  c.meta = header.value("meta", nlohmann::json::object());
  for (const auto& jt : header["tensors"]) {
    NamedTensor t;
    if (!jt.contains("name")) throw FormatError("container: tensor entry without 'name'");
    t.name = jt["name"].get<std::string>();
    const std::string dtype = jt.value("dtype", "");
    if (dtype == "c128")
      t.complex = true;
    else if (dtype == "f64")
      t.complex = false;
    else
      throw FormatError("container: tensor '" + t.name + "' has unknown dtype '" + dtype + "'");
    if (!jt.contains("shape")) throw FormatError("container: tensor '" + t.name + "' missing 'shape'");
    t.shape = jt["shape"].get<std::vector<int>>();
    t.data.resize(numel_of(t.shape) * (t.complex ? 2 : 1));
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!f.good()) throw FormatError("container: truncated payload for tensor '" + t.name + "'");
    c.tensors.push_back(std::move(t));
  }
  return c;
}

// ---------------------------------------------------------------------------
// dataset files
// ---------------------------------------------------------------------------

inline nlohmann::json dataset_meta(const DatasetSpec& spec) {
  return nlohmann::json{{"kind", "dataset"},
                        {"n_samples", spec.n_samples},
                        {"size", spec.phantom.size},
                        {"ellipses", spec.phantom.ellipses},
                        {"min_intensity", spec.phantom.min_intensity},
                        {"max_intensity", spec.phantom.max_intensity},
                        {"n_coils", spec.n_coils},
                        {"af", spec.af},
                        {"center_fraction", spec.center_fraction},
                        {"sigma", spec.sigma},
                        {"edge_op", spec.edge_op},
                        {"seed", spec.seed}};
}

inline std::string sample_key(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%04d", i);
  return buf;
}

inline void save_dataset(const std::string& path, const std::vector<KSpaceSample>& samples,
                         const nlohmann::json& meta) {
  std::vector<NamedTensor> tensors;
  for (size_t i = 0; i < samples.size(); ++i) {
    const KSpaceSample& s = samples[i];
    const std::string key = sample_key(static_cast<int>(i));
    tensors.push_back({key + "/y", true, s.y.shape, s.y.data});
    std::vector<double> cols(s.mask.columns.begin(), s.mask.columns.end());
    tensors.push_back({key + "/mask", false, {s.mask.width()}, std::move(cols)});
    tensors.push_back({key + "/acs", false, {2},
                       {static_cast<double>(s.mask.acs_lo), static_cast<double>(s.mask.acs_hi)}});
    tensors.push_back({key + "/x", true, s.x_gt.shape, s.x_gt.data});
    tensors.push_back({key + "/edge", false, s.edge_gt.shape, s.edge_gt.data});
  }
  nlohmann::json m = meta;
  m["n_samples"] = samples.size();
  write_container(path, tensors, m);
}

struct Dataset {
  nlohmann::json meta;
  std::vector<KSpaceSample> samples;
};

inline Dataset load_dataset(const std::string& path) {
  Container c = read_container(path);
  if (c.meta.value("kind", "") != "dataset")
    throw FormatError("dataset: meta field 'kind' is not \"dataset\" in '" + path + "'");
  if (!c.meta.contains("n_samples")) throw FormatError("dataset: meta field 'n_samples' missing");
  const int n = c.meta["n_samples"].get<int>();
  Dataset d;
  d.meta = c.meta;
  for (int i = 0; i < n; ++i) {
    const std::string key = sample_key(i);
    KSpaceSample s;
    const NamedTensor& y = c.get(key + "/y");
    if (!y.complex || y.shape.size() != 3)
      throw FormatError("dataset: tensor '" + key + "/y' must be complex [nc,H,W]");
    s.y = ComplexTensor(y.shape, y.data);
    const NamedTensor& mask = c.get(key + "/mask");
    if (mask.complex || mask.shape.size() != 1 || mask.shape[0] != y.shape[2])
      throw FormatError("dataset: tensor '" + key + "/mask' must be real [W]");
    s.mask.columns.resize(mask.data.size());
    for (size_t j = 0; j < mask.data.size(); ++j) {
      if (mask.data[j] != 0.0 && mask.data[j] != 1.0)
        throw FormatError("dataset: tensor '" + key + "/mask' has a non-binary entry");
      s.mask.columns[j] = mask.data[j] != 0.0 ? 1 : 0;
    }
    const NamedTensor& acs = c.get(key + "/acs");
    if (acs.data.size() != 2) throw FormatError("dataset: tensor '" + key + "/acs' must have 2 entries");
    s.mask.acs_lo = static_cast<int>(acs.data[0]);
    s.mask.acs_hi = static_cast<int>(acs.data[1]);
    if (s.mask.acs_lo < 0 || s.mask.acs_hi > s.mask.width() || s.mask.acs_lo >= s.mask.acs_hi)
      throw FormatError("dataset: tensor '" + key + "/acs' range is invalid");
    const NamedTensor& x = c.get(key + "/x");
    if (!x.complex || x.shape != std::vector<int>{y.shape[1], y.shape[2]})
      throw FormatError("dataset: tensor '" + key + "/x' must be complex [H,W]");
    s.x_gt = ComplexTensor(x.shape, x.data);
    const NamedTensor& e = c.get(key + "/edge");
    if (e.complex || e.shape != x.shape)
      throw FormatError("dataset: tensor '" + key + "/edge' must be real [H,W]");
    s.edge_gt = RealTensor(e.shape, e.data);
    d.samples.push_back(std::move(s));
  }
  return d;
}

// ---------------------------------------------------------------------------
// checkpoint files
// ---------------------------------------------------------------------------

struct Checkpoint {
  ReconConfig cfg;
  int64_t global_step = 0;
  EamriModel model;     // rebuilt from cfg, values loaded from file
  AdamState adam;
};

inline void save_checkpoint(const std::string& path, const EamriModel& model,
                            const AdamState& adam, int64_t global_step) {
  std::vector<NamedTensor> tensors;
  const auto& params = model.params.params();
  for (const auto& p : params)
    tensors.push_back({"param/" + p.name, false, p.value.shape, p.value.data});
  for (size_t i = 0; i < params.size(); ++i)
    tensors.push_back({"adam_m/" + params[i].name, false, adam.m[i].shape, adam.m[i].data});
  for (size_t i = 0; i < params.size(); ++i)
    tensors.push_back({"adam_v/" + params[i].name, false, adam.v[i].shape, adam.v[i].data});
  nlohmann::json meta{{"kind", "checkpoint"},
                      {"config", model.cfg},
                      {"global_step", global_step},
                      {"adam_step", adam.step},
                      {"adam", {{"lr", adam.cfg.lr},
                                {"beta1", adam.cfg.beta1},
                                {"beta2", adam.cfg.beta2},
                                {"eps", adam.cfg.eps},
                                {"weight_decay", adam.cfg.weight_decay}}}};
  write_container(path, tensors, meta);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  Container c = read_container(path);
  if (c.meta.value("kind", "") != "checkpoint")
    throw FormatError("checkpoint: meta field 'kind' is not \"checkpoint\" in '" + path + "'");
  if (!c.meta.contains("config")) throw FormatError("checkpoint: meta field 'config' missing");
  Checkpoint ck;
  ck.cfg = c.meta["config"].get<ReconConfig>();
  ck.global_step = c.meta.value("global_step", 0);
  ck.model = build_variant(ck.cfg);
  AdamConfig ac;
  if (c.meta.contains("adam")) {
    const auto& ja = c.meta["adam"];
    ac.lr = ja.value("lr", ac.lr);
    ac.beta1 = ja.value("beta1", ac.beta1);
    ac.beta2 = ja.value("beta2", ac.beta2);
    ac.eps = ja.value("eps", ac.eps);
    ac.weight_decay = ja.value("weight_decay", ac.weight_decay);
  }
  ck.adam = AdamState::init(ck.model.params, ac);
  ck.adam.step = c.meta.value("adam_step", 0);
  auto& params = ck.model.params.params();
  for (size_t i = 0; i < params.size(); ++i) {
    const NamedTensor& pv = c.get("param/" + params[i].name);
    if (pv.shape != params[i].value.shape)
      throw FormatError("checkpoint: tensor 'param/" + params[i].name + "' has unexpected shape " +
                        shape_str(pv.shape));
    params[i].value.data = pv.data;
    ck.adam.m[i].data = c.get("adam_m/" + params[i].name).data;
    ck.adam.v[i].data = c.get("adam_v/" + params[i].name).data;
  }
  return ck;
}

// ---------------------------------------------------------------------------
// image emission: 16-bit PGM for grayscale, 8-bit PPM for heatmaps
// ---------------------------------------------------------------------------

// Values are clamped to [0,1] and scaled to the full 16-bit range.
inline void write_pgm16(const std::string& path, const RealTensor& img) {
  require_shape(img.rank() == 2, "write_pgm16: expects an [H,W] image");
  const int h = img.dim(0), w = img.dim(1);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), "write_pgm16: cannot open '" + path + "'");
  f << "P5\n" << w << " " << h << "\n65535\n";
  for (size_t i = 0; i < img.data.size(); ++i) {
    double v = std::min(std::max(img.data[i], 0.0), 1.0);
    const uint16_t q = static_cast<uint16_t>(std::lround(v * 65535.0));
    const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
    f.write(bytes, 2);
  }
  require(f.good(), "write_pgm16: write failed for '" + path + "'");
}

inline RealTensor read_pgm16(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f.good()) throw FormatError("pgm: cannot open '" + path + "'");
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 65535) throw FormatError("pgm: expected binary P5 with maxval 65535");
  f.get();  // single whitespace after header
  RealTensor img = RealTensor::zeros({h, w});
  for (size_t i = 0; i < img.data.size(); ++i) {
    char bytes[2];
    f.read(bytes, 2);
    const uint16_t q = static_cast<uint16_t>((static_cast<uint8_t>(bytes[0]) << 8) |
                                             static_cast<uint8_t>(bytes[1]));
    img.data[i] = q / 65535.0;
  }
  if (!f.good()) throw FormatError("pgm: truncated pixel data in '" + path + "'");
  return img;
}

// Fixed viridis-like ramp (9 anchors, linear interpolation).
inline void viridis(double t, uint8_t rgb[3]) {
  static const uint8_t anchors[9][3] = {{68, 1, 84},    {71, 44, 122},  {59, 81, 139},
                                        {44, 113, 142}, {33, 144, 141}, {39, 173, 129},
                                        {92, 200, 99},  {170, 220, 50}, {253, 231, 37}};
  t = std::min(std::max(t, 0.0), 1.0);
  const double pos = t * 8.0;
  const int lo = std::min(static_cast<int>(pos), 7);
  const double fr = pos - lo;
  for (int k = 0; k < 3; ++k)
    rgb[k] = static_cast<uint8_t>(std::lround(anchors[lo][k] * (1.0 - fr) + anchors[lo + 1][k] * fr));
}

// Error heatmap: values normalized by their maximum and colormapped.
inline void write_heatmap_ppm(const std::string& path, const RealTensor& img) {
  require_shape(img.rank() == 2, "write_heatmap_ppm: expects an [H,W] image");
  const int h = img.dim(0), w = img.dim(1);
  const double m = std::max(img.max_abs(), 1e-300);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), "write_heatmap_ppm: cannot open '" + path + "'");
  f << "P6\n" << w << " " << h << "\n255\n";
  for (size_t i = 0; i < img.data.size(); ++i) {
    uint8_t rgb[3];
    viridis(std::fabs(img.data[i]) / m, rgb);
    f.write(reinterpret_cast<const char*>(rgb), 3);
  }
  require(f.good(), "write_heatmap_ppm: write failed for '" + path + "'");
}

}  // namespace eamri
