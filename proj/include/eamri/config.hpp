#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "eamri/tensor.hpp"

namespace eamri {

enum class Variant { Full, M1, M2, M3 };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::M1: return "m1";
    case Variant::M2: return "m2";
    case Variant::M3: return "m3";
  }
  return "full";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::Full;
  if (s == "m1") return Variant::M1;
  if (s == "m2") return Variant::M2;
  if (s == "m3") return Variant::M3;
  throw std::invalid_argument("unknown variant '" + s + "' (expected full|m1|m2|m3)");
}

// Architecture plus training configuration. Defaults follow the reference
// setup: 4 cascades of 3-recursion DCBs at 32 channels, 4 attention heads,
// 3 MSRBs, Adam at 5e-4 with 1e-7 weight decay, beta = 1.
struct ReconConfig {
  int N = 4;               // cascade count
  int M = 3;               // DCB recursions per RDCN
  int C = 32;              // feature channels
  int heads = 4;           // edge attention heads
  int msrb_count = 3;      // MSRBs in the edge prediction net
  int af = 4;              // acceleration factor
  double center_fraction = 0.08;
  double beta = 1.0;       // edge loss weight
  double lr = 5e-4;
  double weight_decay = 1e-7;
  int batch = 4;
  int steps = 500;
  uint64_t seed = 1;
  std::string variant = "full";
  bool literal_alpha = false;  // divide after softmax instead of tempering logits

  int sme_channels() const { return std::max(2, C / 4); }
  int head_channels() const { return std::max(2, C / 2); }
  Variant variant_kind() const { return variant_from_string(variant); }

  void validate() const {
    require(N >= 1, "config: N must be >= 1");
    require(M >= 1, "config: M must be >= 1");
    require(C >= 4, "config: C must be >= 4");
    require(heads >= 1 && C % heads == 0, "config: heads must divide C");
    require(msrb_count >= 1, "config: msrb_count must be >= 1");
    require(af >= 1, "config: af must be >= 1");
    require(af == 1 || (center_fraction > 0.0 && center_fraction < 1.0 / af),
            "config: center_fraction must lie in (0, 1/af)");
    require(beta >= 0.0, "config: beta must be >= 0");
    require(lr > 0.0, "config: lr must be > 0");
    require(weight_decay >= 0.0, "config: weight_decay must be >= 0");
    require(batch >= 1, "config: batch must be >= 1");
    require(steps >= 0, "config: steps must be >= 0");
    variant_from_string(variant);
  }
};

inline void to_json(nlohmann::json& j, const ReconConfig& c) {
  j = nlohmann::json{{"N", c.N},
                     {"M", c.M},
                     {"C", c.C},
                     {"heads", c.heads},
                     {"msrb_count", c.msrb_count},
                     {"af", c.af},
                     {"center_fraction", c.center_fraction},
                     {"beta", c.beta},
                     {"lr", c.lr},
                     {"weight_decay", c.weight_decay},
                     {"batch", c.batch},
                     {"steps", c.steps},
                     {"seed", c.seed},
                     {"variant", c.variant},
                     {"literal_alpha", c.literal_alpha}};
}

inline void from_json(const nlohmann::json& j, ReconConfig& c) {
  ReconConfig defaults;
  c.N = j.value("N", defaults.N);
  c.M = j.value("M", defaults.M);
  c.C = j.value("C", defaults.C);
  c.heads = j.value("heads", defaults.heads);
  c.msrb_count = j.value("msrb_count", defaults.msrb_count);
  c.af = j.value("af", defaults.af);
  c.center_fraction = j.value("center_fraction", defaults.center_fraction);
  c.beta = j.value("beta", defaults.beta);
  c.lr = j.value("lr", defaults.lr);
  c.weight_decay = j.value("weight_decay", defaults.weight_decay);
  c.batch = j.value("batch", defaults.batch);
  c.steps = j.value("steps", defaults.steps);
  c.seed = j.value("seed", defaults.seed);
  c.variant = j.value("variant", defaults.variant);
  c.literal_alpha = j.value("literal_alpha", defaults.literal_alpha);
  c.validate();
}

}  // namespace eamri
