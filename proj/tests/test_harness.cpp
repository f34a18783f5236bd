#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "eamri/io.hpp"
#include "eamri/phantom.hpp"

using namespace eamri;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("phantom generation basics", "[harness]") {
  PhantomSpec spec;
  spec.size = 16;
  spec.seed = 5;

  SECTION("zero ellipses give a zero image") {
    PhantomSpec empty = spec;
    empty.ellipses = 0;
    CHECK(norm2(generate_phantom(empty)) == 0.0);
  }

  SECTION("same seed reproduces the image; different seeds differ broadly") {
    ComplexTensor a = generate_phantom(spec);
    ComplexTensor b = generate_phantom(spec);
    CHECK(max_abs_diff(a, b) == 0.0);

    PhantomSpec other = spec;
    other.seed = 6;
    ComplexTensor c = generate_phantom(other);
    int differing = 0;
    for (size_t i = 0; i < a.numel(); ++i)
      if (std::abs(a.at(i) - c.at(i)) > 1e-12) ++differing;
    CHECK(differing >= static_cast<int>(a.numel()) / 10);
  }

  SECTION("magnitude stays in [0,1]") {
    RealTensor mag = magnitude_of(generate_phantom(spec));
    for (double v : mag.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-12);
    }
  }

  SECTION("non-power-of-two sizes are rejected") {
    PhantomSpec bad = spec;
    bad.size = 12;
    CHECK_THROWS_AS(generate_phantom(bad), std::invalid_argument);
  }
}

TEST_CASE("simulated coil maps", "[harness]") {
  SECTION("single coil is the unit map") {
    CoilSensitivities S = simulate_coil_maps(1, 8, 8, 3);
    for (size_t i = 0; i < S.maps.numel(); ++i) {
      CHECK(S.maps.at(i).real() == 1.0);
      CHECK(S.maps.at(i).imag() == 0.0);
    }
  }

  SECTION("normalization residual is tiny") {
    CoilSensitivities S = simulate_coil_maps(4, 32, 32, 7);
    CHECK(S.normalization_residual() < 1e-12);
  }

  SECTION("profiles are smooth") {
    CoilSensitivities S = simulate_coil_maps(4, 32, 32, 7);
    const size_t hw = 32 * 32;
    for (int c = 0; c < 4; ++c)
      for (int y = 0; y < 32; ++y)
        for (int x = 1; x < 32; ++x) {
          const size_t i = static_cast<size_t>(c) * hw + static_cast<size_t>(y) * 32 + x;
          const double a = std::abs(S.maps.at(i));
          const double b = std::abs(S.maps.at(i - 1));
          CHECK(std::fabs(a - b) < 0.1);
        }
  }
}

TEST_CASE("dataset invariants and round trip", "[harness]") {
  DatasetSpec spec;
  spec.n_samples = 5;
  spec.phantom.size = 16;
  spec.n_coils = 3;
  spec.af = 4;
  spec.center_fraction = 0.1;
  spec.seed = 11;
  std::vector<KSpaceSample> data = build_dataset(spec);

  SECTION("stored k-space is zero off-mask") {
    for (const auto& s : data)
      for (int c = 0; c < 3; ++c)
        for (int row = 0; row < 16; ++row)
          for (int col = 0; col < 16; ++col)
            if (!s.mask.columns[static_cast<size_t>(col)]) {
              const size_t i = (static_cast<size_t>(c) * 16 + row) * 16 + col;
              CHECK(s.y.at(i) == std::complex<double>(0.0, 0.0));
            }
  }

  SECTION("edge maps live in [0,1]") {
    for (const auto& s : data)
      for (double v : s.edge_gt.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
  }

  SECTION("write/read round trip is bit-exact") {
    const std::string path = temp_path("eamri_test_dataset.bin");
    save_dataset(path, data, dataset_meta(spec));
    Dataset loaded = load_dataset(path);
    REQUIRE(loaded.samples.size() == data.size());
    for (size_t i = 0; i < data.size(); ++i) {
      CHECK(loaded.samples[i].y.data == data[i].y.data);
      CHECK(loaded.samples[i].x_gt.data == data[i].x_gt.data);
      CHECK(loaded.samples[i].edge_gt.data == data[i].edge_gt.data);
      CHECK(loaded.samples[i].mask.columns == data[i].mask.columns);
      CHECK(loaded.samples[i].mask.acs_lo == data[i].mask.acs_lo);
      CHECK(loaded.samples[i].mask.acs_hi == data[i].mask.acs_hi);
    }
    std::filesystem::remove(path);
  }

  SECTION("malformed files raise format errors naming the field") {
    const std::string path = temp_path("eamri_test_baddata.bin");
    nlohmann::json meta = dataset_meta(spec);
    std::vector<NamedTensor> tensors;
    meta["n_samples"] = 1;
    tensors.push_back({"s0000/y", true, data[0].y.shape, data[0].y.data});
    // mask missing entirely
    write_container(path, tensors, meta);
    try {
      load_dataset(path);
      FAIL("expected a FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("s0000/mask") != std::string::npos);
    }
    std::filesystem::remove(path);
  }
}

TEST_CASE("container rejects corrupted files", "[harness]") {
  const std::string path = temp_path("eamri_test_container.bin");
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOTMAGIC and some junk";
  }
  CHECK_THROWS_AS(read_container(path), FormatError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_container(temp_path("eamri_missing_file.bin")), FormatError);
}

TEST_CASE("checkpoint round trip restores parameters and adam state", "[harness]") {
  ReconConfig cfg;
  cfg.N = 1;
  cfg.M = 1;
  cfg.C = 4;
  cfg.heads = 2;
  cfg.msrb_count = 1;
  cfg.seed = 9;
  EamriModel model = build_variant(cfg);
  AdamState adam = AdamState::init(model.params, AdamConfig{});
  // dirty the state so the roundtrip is nontrivial
  Rng rng(13);
  for (auto& p : model.params.params())
    for (double& v : p.value.data) v += rng.uniform(-0.1, 0.1);
  for (auto& t : adam.m)
    for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
  adam.step = 17;

  const std::string path = temp_path("eamri_test_ck.bin");
  save_checkpoint(path, model, adam, 42);
  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.global_step == 42);
  CHECK(ck.adam.step == 17);
  REQUIRE(ck.model.params.size() == model.params.size());
  for (int i = 0; i < model.params.size(); ++i) {
    CHECK(ck.model.params.at(i).name == model.params.at(i).name);
    CHECK(ck.model.params.at(i).value.data == model.params.at(i).value.data);
    CHECK(ck.adam.m[static_cast<size_t>(i)].data == adam.m[static_cast<size_t>(i)].data);
    CHECK(ck.adam.v[static_cast<size_t>(i)].data == adam.v[static_cast<size_t>(i)].data);
  }
  std::filesystem::remove(path);
}

TEST_CASE("pgm images round trip and ppm heatmaps are valid", "[harness]") {
  Rng rng(15);
  RealTensor img = RealTensor::zeros({8, 12});
  for (double& v : img.data) v = rng.uniform(0.0, 1.0);
  const std::string path = temp_path("eamri_test_img.pgm");
  write_pgm16(path, img);
  RealTensor back = read_pgm16(path);
  REQUIRE(back.shape == img.shape);
  // quantized to 16 bits: half a step of error at most
  CHECK(max_abs_diff(back, img) <= 0.5 / 65535.0 + 1e-12);
  // writing the read-back image again is byte-identical (fixed quantization)
  const std::string path2 = temp_path("eamri_test_img2.pgm");
  write_pgm16(path2, back);
  std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);

  const std::string hpath = temp_path("eamri_test_heat.ppm");
  write_heatmap_ppm(hpath, img);
  std::ifstream h(hpath, std::ios::binary);
  std::string magic;
  int w, hh, maxv;
  h >> magic >> w >> hh >> maxv;
  CHECK(magic == "P6");
  CHECK(w == 12);
  CHECK(hh == 8);
  CHECK(maxv == 255);
  std::filesystem::remove(hpath);
}

TEST_CASE("config json round trips with exact field names", "[harness]") {
  ReconConfig cfg;
  cfg.N = 2;
  cfg.C = 16;
  cfg.lr = 1e-3;
  cfg.variant = "m2";
  cfg.literal_alpha = true;
  nlohmann::json j = cfg;
  for (const char* key : {"N", "M", "C", "heads", "msrb_count", "af", "center_fraction", "beta",
                          "lr", "weight_decay", "batch", "steps", "seed", "variant",
                          "literal_alpha"})
    CHECK(j.contains(key));
  ReconConfig back = j.get<ReconConfig>();
  CHECK(back.N == 2);
  CHECK(back.C == 16);
  CHECK(back.lr == 1e-3);
  CHECK(back.variant == "m2");
  CHECK(back.literal_alpha == true);

  nlohmann::json bad = j;
  bad["heads"] = 5;  // does not divide C=16
  CHECK_THROWS_AS(bad.get<ReconConfig>(), std::invalid_argument);
}
