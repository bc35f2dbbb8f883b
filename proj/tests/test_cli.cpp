// Copyright (c) 2026 the flare authors. MIT license, see LICENSE.
//
// End-to-end tests that drive the installed binary through a shell, checking
// exit codes, the JSON contract on stdout, and the files left on disk.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>
#include <nlohmann/json.hpp>

#include "flare/error.hpp"
#include "flare/harness.hpp"
#include "flare/image.hpp"
#include "flare/niqe.hpp"
#include "flare/synth.hpp"
#include "support/test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli() { return std::string(FLARE_CLI_PATH); }

int run_cli(const std::string& args, std::string* out = nullptr,
            std::string* err = nullptr) {
  return testutil::run_command(cli() + " " + args, out, err);
}

// Shared corpus-trained model, one enhance pair, and a two-pair dataset,
// written to disk once for every CLI case in this file.
struct CliFixture {
  testutil::TempDir dir;
  std::string model_path;
  std::string low_path;
  std::string ref_path;
  std::string dataset;

  CliFixture() {
    std::vector<flare::ImageBuffer> corpus;
    for (int i = 0; i < 12; ++i)
      corpus.push_back(
          flare::synth_texture(128, 128, 100 + static_cast<uint64_t>(i)));
    model_path = dir.file("model.json");
    flare::niqe_save(flare::niqe_train(corpus, 24, 0.4), model_path);

    flare::ImageBuffer ref = flare::synth_texture(48, 48, 700);
    flare::ImageBuffer low = flare::synth_low_from_ref(ref, 900);
    low_path = dir.file("low.png");
    ref_path = dir.file("ref.png");
    flare::write_png(low_path, low);
    flare::write_png(ref_path, ref);

    dataset = dir.file("dataset");
    fs::create_directories(fs::path(dataset) / "low");
    fs::create_directories(fs::path(dataset) / "high");
    for (int i = 0; i < 2; ++i) {
      char name[16];
      std::snprintf(name, sizeof(name), "%04d.png", i);
      flare::ImageBuffer r =
          flare::synth_texture(48, 48, 700 + static_cast<uint64_t>(i));
      flare::ImageBuffer l =
          flare::synth_low_from_ref(r, 900 + static_cast<uint64_t>(i));
      flare::write_png((fs::path(dataset) / "high" / name).string(), r);
      flare::write_png((fs::path(dataset) / "low" / name).string(), l);
    }
  }

  std::string search_flags() const {
    return " --n-init 3 --budget 6 --niqe-model " + model_path;
  }
};

const CliFixture& fixture() {
  static const CliFixture fix;
  return fix;
}

}  // namespace

TEST_CASE("cli help and subcommand dispatch") {
  std::string out;
  CHECK(run_cli("--help", &out) == 0);
  CHECK(out.find("enhance") != std::string::npos);
  CHECK(out.find("batch") != std::string::npos);

  CHECK(run_cli("") == 2);
  CHECK(run_cli("transmogrify") == 2);
}

TEST_CASE("cli enhance writes the image and reports the result") {
  const CliFixture& fix = fixture();
  testutil::TempDir dir;
  std::string out_png = dir.file("enhanced.png");
  std::string trace = dir.file("trace.jsonl");
  std::string stdout_text;
  int rc = run_cli("enhance --low " + fix.low_path + " --ref " + fix.ref_path +
                       " --out " + out_png + " --trace " + trace + " --seed 7" +
                       " --gamma-min 0.5 --gamma-max 1.5" + fix.search_flags(),
                   &stdout_text);
  REQUIRE(rc == 0);

  flare::ImageBuffer enhanced = flare::read_png(out_png);
  CHECK(enhanced.width == 48);
  CHECK(enhanced.height == 48);
  CHECK(enhanced.channels == 3);

  std::istringstream trace_in(testutil::read_file(trace));
  int lines = 0;
  for (std::string line; std::getline(trace_in, line);) {
    json row = json::parse(line);
    CHECK(row.contains("objective"));
    ++lines;
  }
  CHECK(lines == 6);

  json j = json::parse(stdout_text);
  CHECK(j["schema"] == "flare.enhance.v1");
  CHECK(j["out"] == out_png);
  REQUIRE(j["theta"].size() == flare::kNumParams);
  for (const char* name : flare::kParamNames)
    CHECK(j["theta"].contains(name));
  CHECK(std::isfinite(j["objective"].get<double>()));
  CHECK(j["psnr"].get<double>() > 0.0);
  CHECK(j["config"]["seed"] == 7);
  CHECK(j["config"]["n_init"] == 3);
  CHECK(j["config"]["n_total"] == 6);
  CHECK(j["config"]["bounds"]["gamma"] == json::array({0.5, 1.5}));
}

TEST_CASE("cli enhance is deterministic for a fixed seed") {
  const CliFixture& fix = fixture();
  testutil::TempDir dir;
  std::string out_png = dir.file("enhanced.png");
  std::string cmd = "enhance --low " + fix.low_path + " --ref " + fix.ref_path +
                    " --out " + out_png + " --seed 3" + fix.search_flags();

  std::string out1, out2;
  REQUIRE(run_cli(cmd, &out1) == 0);
  std::string png1 = testutil::read_file(out_png);
  REQUIRE(run_cli(cmd, &out2) == 0);
  std::string png2 = testutil::read_file(out_png);

  CHECK(out1 == out2);
  CHECK(png1 == png2);
  CHECK_FALSE(png1.empty());
}

TEST_CASE("cli enhance explains bad invocations") {
  const CliFixture& fix = fixture();
  testutil::TempDir dir;
  std::string out_png = dir.file("x.png");
  std::string err;

  // Required flag absent: argument parse error.
  CHECK(run_cli("enhance --low " + fix.low_path + " --out " + out_png +
                    fix.search_flags(),
                nullptr, &err) == 2);

  // Unreadable input: I/O error naming the offending path.
  std::string missing = dir.file("missing.png");
  CHECK(run_cli("enhance --low " + missing + " --ref " + fix.ref_path +
                    " --out " + out_png + fix.search_flags(),
                nullptr, &err) == 1);
  CHECK(err.find(missing) != std::string::npos);

  // Budget below the default warm-up length: configuration error.
  CHECK(run_cli("enhance --low " + fix.low_path + " --ref " + fix.ref_path +
                    " --out " + out_png + " --budget 5 --niqe-model " +
                    fix.model_path,
                nullptr, &err) == 2);
  CHECK(err.find("n_init") != std::string::npos);

  // Missing model file: I/O error.
  CHECK(run_cli("enhance --low " + fix.low_path + " --ref " + fix.ref_path +
                    " --out " + out_png +
                    " --n-init 3 --budget 6 --niqe-model " +
                    dir.file("no_model.json"),
                nullptr, &err) == 1);
}

TEST_CASE("cli batch output does not depend on the worker count") {
  const CliFixture& fix = fixture();
  testutil::TempDir dir;
  std::string out1 = dir.file("w1");
  std::string out4 = dir.file("w4");
  std::string base = "batch --dataset " + fix.dataset + " --seed 0" +
                     fix.search_flags();

  std::string stdout1, stdout4;
  REQUIRE(run_cli(base + " --out " + out1 + " --workers 1", &stdout1) == 0);
  REQUIRE(run_cli(base + " --out " + out4 + " --workers 4", &stdout4) == 0);

  json j1 = json::parse(stdout1);
  CHECK(j1["schema"] == "flare.batch.v1");
  CHECK(j1["n_pairs"] == 2);
  CHECK(j1["n_ok"] == 2);
  CHECK(j1["failed"].empty());

  json j4 = json::parse(stdout4);
  CHECK(j1["mean_psnr"] == j4["mean_psnr"]);
  CHECK(j1["mean_objective"] == j4["mean_objective"]);

  // CSV rows agree once the timing column is dropped.
  auto strip_seconds = [](const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> rows;
    for (std::string line; std::getline(in, line);)
      rows.push_back(line.substr(0, line.find_last_of(',')));
    return rows;
  };
  std::vector<std::string> rows1 =
      strip_seconds(testutil::read_file(out1 + "/report.csv"));
  std::vector<std::string> rows4 =
      strip_seconds(testutil::read_file(out4 + "/report.csv"));
  REQUIRE(rows1.size() == 3);
  CHECK(rows1 == rows4);

  // JSON reports agree except for the echoed worker count.
  json r1 = json::parse(testutil::read_file(out1 + "/report.json"));
  json r4 = json::parse(testutil::read_file(out4 + "/report.json"));
  CHECK(r1["config"]["worker_count"] == 1);
  CHECK(r4["config"]["worker_count"] == 4);
  r1["config"].erase("worker_count");
  r4["config"].erase("worker_count");
  CHECK(r1 == r4);

  std::string err;
  CHECK(run_cli("batch --dataset " + dir.file("nowhere") + " --out " +
                    dir.file("o") + fix.search_flags(),
                nullptr, &err) == 1);
}

TEST_CASE("cli metrics reports the agreed fixtures") {
  const CliFixture& fix = fixture();
  testutil::TempDir dir;
  std::string stdout_text;

  REQUIRE(run_cli("metrics --a " + fix.ref_path + " --b " + fix.ref_path,
                  &stdout_text) == 0);
  json j = json::parse(stdout_text);
  CHECK(j["schema"] == "flare.metrics.v1");
  CHECK(j["psnr"].get<double>() == 100.0);
  CHECK(j["ssim"].get<double>() == 1.0);
  CHECK(j["niqe_a"].is_null());

  // Constant images 10 levels apart: PSNR is 10*log10(255^2/100).
  std::string a = dir.file("a.png");
  std::string b = dir.file("b.png");
  flare::write_png(
      a, testutil::constant_image(16, 16, 3, 100.0, flare::ColorSpace::Srgb8));
  flare::write_png(
      b, testutil::constant_image(16, 16, 3, 110.0, flare::ColorSpace::Srgb8));
  REQUIRE(run_cli("metrics --a " + a + " --b " + b, &stdout_text) == 0);
  j = json::parse(stdout_text);
  CHECK_THAT(j["psnr"].get<double>(),
             Catch::Matchers::WithinAbs(28.130803608679103, 1e-12));

  REQUIRE(run_cli("metrics --a " + fix.low_path + " --b " + fix.ref_path +
                      " --niqe-model " + fix.model_path,
                  &stdout_text) == 0);
  j = json::parse(stdout_text);
  REQUIRE(j["niqe_a"].is_number());
  CHECK(std::isfinite(j["niqe_a"].get<double>()));
  CHECK(j["niqe_a"].get<double>() > 0.0);

  std::string small = dir.file("small.png");
  flare::write_png(small, testutil::constant_image(16, 12, 3, 100.0,
                                                   flare::ColorSpace::Srgb8));
  std::string err;
  CHECK(run_cli("metrics --a " + a + " --b " + small, nullptr, &err) == 2);
}

TEST_CASE("cli niqe-train fits a loadable model") {
  testutil::TempDir dir;
  std::string corpus = dir.file("corpus");
  std::string stdout_text;
  REQUIRE(run_cli("synth --out " + corpus +
                      " --count 10 --width 128 --height 128 --seed 55",
                  &stdout_text) == 0);
  json j = json::parse(stdout_text);
  CHECK(j["schema"] == "flare.synth.v1");
  CHECK(j["files"].size() == 10);

  std::string model1 = dir.file("m1.json");
  REQUIRE(run_cli("niqe-train --corpus " + corpus + " --out " + model1 +
                      " --patch 24 --threshold 0.4",
                  &stdout_text) == 0);
  j = json::parse(stdout_text);
  CHECK(j["schema"] == "flare.niqe_train.v1");
  CHECK(j["images"] == 10);
  CHECK(j["patches"].get<int>() >= 100);
  CHECK(j["patches"].get<int>() <= 250);
  REQUIRE(j["loo_median"].is_number());
  CHECK(std::isfinite(j["loo_median"].get<double>()));

  flare::NiqeModel model = flare::niqe_load(model1);
  CHECK(model.patch_size == 24);
  CHECK(model.mean.size() == flare::kNiqeFeatureDim);

  // Retraining writes a byte-identical file.
  std::string model2 = dir.file("m2.json");
  REQUIRE(run_cli("niqe-train --corpus " + corpus + " --out " + model2 +
                      " --patch 24 --threshold 0.4",
                  nullptr) == 0);
  CHECK(testutil::read_file(model1) == testutil::read_file(model2));

  // A corpus below the minimum image count is rejected up front.
  std::string tiny = dir.file("tiny_corpus");
  fs::create_directories(tiny);
  flare::write_png((fs::path(tiny) / "only.png").string(),
                   flare::synth_texture(128, 128, 9));
  std::string err;
  CHECK(run_cli("niqe-train --corpus " + tiny + " --out " + dir.file("m3.json"),
                nullptr, &err) == 2);
  CHECK(err.find("10") != std::string::npos);
}

TEST_CASE("cli synth generates paired datasets") {
  testutil::TempDir dir;
  std::string out = dir.file("pairs");
  std::string stdout_text;
  REQUIRE(run_cli("synth --out " + out +
                      " --pairs --count 2 --width 40 --height 32 --seed 9",
                  &stdout_text) == 0);
  json j = json::parse(stdout_text);
  CHECK(j["pairs"] == true);
  CHECK(j["files"].size() == 2);

  auto dim = flare::read_png_header(out + "/low/0000.png");
  CHECK(dim.first == 40);
  CHECK(dim.second == 32);
  flare::PairedDataset ds = flare::load_paired(out);
  CHECK(ds.entries.size() == 2);
  CHECK(ds.skipped.empty());

  CHECK(run_cli("synth --out " + dir.file("none") + " --count 0") == 2);
}

TEST_CASE("cli config file supplies defaults and flags override it") {
  const CliFixture& fix = fixture();
  testutil::TempDir dir;
  std::string config = dir.file("flare.toml");
  testutil::write_file(config,
                       "[bo]\n"
                       "seed = 123\n"
                       "n_init = 3\n"
                       "n_total = 6\n"
                       "[niqe]\n"
                       "model = \"" + fix.model_path + "\"\n");
  std::string out_png = dir.file("enhanced.png");
  std::string base = "enhance --low " + fix.low_path + " --ref " +
                     fix.ref_path + " --out " + out_png;

  std::string stdout_text;
  REQUIRE(run_cli(base + " --config " + config, &stdout_text) == 0);
  json j = json::parse(stdout_text);
  CHECK(j["config"]["seed"] == 123);
  CHECK(j["config"]["n_init"] == 3);
  CHECK(j["config"]["n_total"] == 6);
  CHECK(j["config"]["niqe_model"] == fix.model_path);

  REQUIRE(run_cli(base + " --config " + config + " --seed 7", &stdout_text) ==
          0);
  j = json::parse(stdout_text);
  CHECK(j["config"]["seed"] == 7);
  CHECK(j["config"]["n_init"] == 3);

  // The same file reaches the binary through the environment.
  REQUIRE(testutil::run_command("FLARE_CONFIG=" + config + " " + cli() + " " +
                                    base,
                                &stdout_text) == 0);
  j = json::parse(stdout_text);
  CHECK(j["config"]["seed"] == 123);

  std::string err;
  std::string bad = dir.file("bad.toml");
  testutil::write_file(bad, "[bo]\nsneed = 1\n");
  CHECK(run_cli(base + " --config " + bad, nullptr, &err) == 2);
  CHECK(err.find("unknown key") != std::string::npos);

  std::string bad_bounds = dir.file("bad_bounds.toml");
  testutil::write_file(bad_bounds, "[bounds]\nalpha = [1]\n");
  CHECK(run_cli(base + " --config " + bad_bounds, nullptr, &err) == 2);
  CHECK(err.find("[min, max]") != std::string::npos);
}
