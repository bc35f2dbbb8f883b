// SPDX-License-Identifier: MIT
//
// flare: command line front end for the low-light enhancement library.
//
// Subcommands:
//   enhance     optimise pipeline parameters for one low/reference pair
//   batch       run the optimiser over a paired dataset directory
//   metrics     score one image against another
//   niqe-train  fit the naturalness model from a pristine corpus
//   synth       generate procedural textures or synthetic low/high pairs
//
// Stdout carries machine-readable JSON with a top-level "schema" field;
// human diagnostics go to stderr. Exit codes: 0 success, 1 I/O error,
// 2 configuration or contract error, 3 numeric failure.
//
// Settings precedence: flag > config file > built-in default. The config
// file is TOML, named by --config or the FLARE_CONFIG environment variable.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "flare/flare.hpp"

namespace {

using nlohmann::ordered_json;

// Effective settings after overlaying an optional TOML config file on the
// built-in defaults. Command line flags are bound on top of these.
struct Settings {
  flare::BoConfig bo;
  flare::ParamBounds bounds;
  std::string kernel = "squared_exponential";
  int workers = 1;
  std::string niqe_model = "models/niqe_model.json";
  int niqe_patch = flare::kNiqeDefaultPatch;
  double niqe_threshold = flare::kNiqeDefaultSharpness;
};

flare::KernelKind parse_kernel(const std::string& name) {
  if (name == "squared_exponential" || name == "se")
    return flare::KernelKind::SquaredExponential;
  if (name == "matern52") return flare::KernelKind::Matern52;
  throw flare::ConfigError("unknown kernel '" + name +
                           "' (expected squared_exponential or matern52)");
}

std::string kernel_name(flare::KernelKind kind) {
  return kind == flare::KernelKind::SquaredExponential ? "squared_exponential"
                                                       : "matern52";
}

// Known config keys; anything else in the file is a typo we reject loudly.
const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k = {
        "bo.n_init",   "bo.n_total", "bo.restarts",      "bo.seed",
        "bo.baseline", "bo.kernel",  "batch.workers",    "niqe.model",
        "niqe.patch",  "niqe.threshold",
    };
    for (const char* name : flare::kParamNames)
      k.insert(std::string("bounds.") + name);
    return k;
  }();
  return keys;
}

void apply_config(const flare::TomlTable& file, Settings* s) {
  for (const auto& [key, value] : file.entries()) {
    (void)value;
    if (!known_config_keys().count(key))
      throw flare::ConfigError("config: unknown key '" + key + "'");
  }
  s->bo.n_init = static_cast<int>(file.get_integer("bo.n_init", s->bo.n_init));
  s->bo.n_total =
      static_cast<int>(file.get_integer("bo.n_total", s->bo.n_total));
  s->bo.acquisition_restarts = static_cast<int>(
      file.get_integer("bo.restarts", s->bo.acquisition_restarts));
  s->bo.seed = static_cast<uint64_t>(
      file.get_integer("bo.seed", static_cast<int64_t>(s->bo.seed)));
  s->bo.baseline_mode = file.get_boolean("bo.baseline", s->bo.baseline_mode);
  s->kernel = file.get_string("bo.kernel", s->kernel);
  s->bo.kernel = parse_kernel(s->kernel);
  s->workers = static_cast<int>(file.get_integer("batch.workers", s->workers));
  s->niqe_model = file.get_string("niqe.model", s->niqe_model);
  s->niqe_patch =
      static_cast<int>(file.get_integer("niqe.patch", s->niqe_patch));
  s->niqe_threshold = file.get_number("niqe.threshold", s->niqe_threshold);
  for (int i = 0; i < flare::kNumParams; ++i) {
    std::string key = std::string("bounds.") + flare::kParamNames[i];
    if (!file.contains(key)) continue;
    std::vector<double> pair = file.get_array(key);
    if (pair.size() != 2)
      throw flare::ConfigError("config: " + key + " must be [min, max]");
    s->bounds.min[i] = pair[0];
    s->bounds.max[i] = pair[1];
  }
}

// The config file named by --config (scanned ahead of the real parse so its
// values can serve as flag defaults) or by FLARE_CONFIG.
std::string find_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  const char* env = std::getenv("FLARE_CONFIG");
  return env ? std::string(env) : std::string();
}

// Everything the subcommands can bind. Only one subcommand parses per run,
// so the shared fields are unambiguous.
struct Opts {
  // enhance
  std::string low, ref, out, trace;
  // batch
  std::string dataset;
  int workers = 1;
  // metrics
  std::string a, b;
  bool with_niqe = false;
  // niqe-train / synth
  std::string corpus;
  int patch = flare::kNiqeDefaultPatch;
  double threshold = flare::kNiqeDefaultSharpness;
  int count = 12;
  int width = 384;
  int height = 384;
  bool pairs = false;
  // shared optimiser settings
  uint64_t seed = 0;
  int budget = 50;
  int n_init = 16;
  int restarts = 8;
  bool baseline = false;
  std::string kernel;
  std::string niqe_model;
  flare::ParamBounds bounds;
};

flare::BoConfig make_bo_config(const Opts& o) {
  flare::BoConfig cfg;
  cfg.seed = o.seed;
  cfg.n_total = o.budget;
  cfg.n_init = o.n_init;
  cfg.acquisition_restarts = o.restarts;
  cfg.baseline_mode = o.baseline;
  cfg.kernel = parse_kernel(o.kernel);
  return cfg;
}

void add_search_flags(CLI::App* cmd, Opts* o) {
  cmd->add_option("--seed", o->seed, "base RNG seed")->capture_default_str();
  cmd->add_option("--budget", o->budget,
                  "total objective evaluations per image")
      ->capture_default_str();
  cmd->add_option("--n-init", o->n_init, "quasi-random warm-up evaluations")
      ->capture_default_str();
  cmd->add_option("--restarts", o->restarts,
                  "acquisition optimiser restart count")
      ->capture_default_str();
  cmd->add_flag("--baseline", o->baseline,
                "restrict the search to alpha, beta, h (tone curve plus "
                "luminance denoise)");
  cmd->add_option("--kernel", o->kernel,
                  "surrogate kernel: squared_exponential or matern52")
      ->capture_default_str();
  cmd->add_option("--niqe-model", o->niqe_model,
                  "path to the trained naturalness model JSON")
      ->capture_default_str();
}

void add_bounds_flags(CLI::App* cmd, Opts* o) {
  for (int i = 0; i < flare::kNumParams; ++i) {
    std::string flag = flare::kParamNames[i];
    std::replace(flag.begin(), flag.end(), '_', '-');
    cmd->add_option("--" + flag + "-min", o->bounds.min[i],
                    std::string("lower bound for ") + flare::kParamNames[i])
        ->capture_default_str();
    cmd->add_option("--" + flag + "-max", o->bounds.max[i],
                    std::string("upper bound for ") + flare::kParamNames[i])
        ->capture_default_str();
  }
}

ordered_json theta_json(const flare::ParamVector& theta) {
  ordered_json j;
  for (int i = 0; i < flare::kNumParams; ++i) j[flare::kParamNames[i]] = theta[i];
  return j;
}

ordered_json config_echo(const flare::BoConfig& cfg,
                         const flare::ParamBounds& bounds,
                         const std::string& niqe_model, int workers = 0) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["n_init"] = cfg.n_init;
  j["n_total"] = cfg.n_total;
  j["restarts"] = cfg.acquisition_restarts;
  j["baseline"] = cfg.baseline_mode;
  j["kernel"] = kernel_name(cfg.kernel);
  j["niqe_model"] = niqe_model;
  if (workers > 0) j["workers"] = workers;
  ordered_json b;
  for (int i = 0; i < flare::kNumParams; ++i)
    b[flare::kParamNames[i]] = {bounds.min[i], bounds.max[i]};
  j["bounds"] = b;
  return j;
}

void print_json(const ordered_json& j) { std::cout << j.dump(2) << "\n"; }

int cmd_enhance(const Opts& o) {
  flare::ImageBuffer low = flare::read_png(o.low);
  flare::ImageBuffer ref = flare::read_png(o.ref);
  flare::NiqeModel model = flare::niqe_load(o.niqe_model);
  flare::BoConfig cfg = make_bo_config(o);
  flare::OptimiseResult res =
      flare::optimise_image(low, ref, model, cfg, o.bounds);
  if (!o.out.empty()) flare::write_png(o.out, res.best_image);
  if (!o.trace.empty()) flare::write_trace(res.trace, o.trace);

  ordered_json j;
  j["schema"] = "flare.enhance.v1";
  j["low"] = o.low;
  j["ref"] = o.ref;
  j["out"] = o.out;
  j["theta"] = theta_json(res.best_theta);
  j["psnr"] = res.best_report.psnr;
  j["ssim"] = res.best_report.ssim;
  j["niqe"] = res.best_report.niqe;
  j["objective"] = res.best_report.objective;
  j["config"] = config_echo(cfg, o.bounds, o.niqe_model);
  print_json(j);
  return 0;
}

int cmd_batch(const Opts& o) {
  flare::PairedDataset dataset = flare::load_paired(o.dataset);
  flare::NiqeModel model = flare::niqe_load(o.niqe_model);
  flare::BoConfig cfg = make_bo_config(o);
  std::cerr << "flare: " << dataset.entries.size() << " pairs under "
            << o.dataset;
  if (!dataset.skipped.empty())
    std::cerr << " (" << dataset.skipped.size() << " skipped)";
  std::cerr << "\n";
  flare::BatchReport report =
      flare::run_batch(dataset, cfg, model, o.workers, o.out, o.bounds);

  ordered_json j;
  j["schema"] = "flare.batch.v1";
  j["dataset"] = o.dataset;
  j["out"] = o.out;
  j["n_pairs"] = dataset.entries.size();
  j["n_ok"] = report.n_ok;
  j["mean_psnr"] = report.mean_psnr;
  j["mean_ssim"] = report.mean_ssim;
  j["mean_niqe"] = report.mean_niqe;
  j["mean_objective"] = report.mean_objective;
  ordered_json failed = ordered_json::array();
  for (const flare::BatchItem& item : report.items)
    if (!item.ok) failed.push_back(item.id);
  j["failed"] = failed;
  j["skipped"] = dataset.skipped;
  j["config"] = config_echo(cfg, o.bounds, o.niqe_model, o.workers);
  print_json(j);
  return 0;
}

int cmd_metrics(const Opts& o) {
  flare::ImageBuffer a = flare::read_png(o.a);
  flare::ImageBuffer b = flare::read_png(o.b);
  double psnr_val = flare::psnr(a, b);
  double ssim_val = flare::ssim(a, b);

  ordered_json j;
  j["schema"] = "flare.metrics.v1";
  j["a"] = o.a;
  j["b"] = o.b;
  j["psnr"] = psnr_val;
  j["ssim"] = ssim_val;
  if (o.with_niqe) {
    flare::NiqeModel model = flare::niqe_load(o.niqe_model);
    j["niqe_a"] = flare::niqe_score(a, model);
  } else {
    j["niqe_a"] = nullptr;
  }
  print_json(j);
  return 0;
}

int cmd_niqe_train(const Opts& o) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(o.corpus))
    throw flare::IoError("niqe-train: not a directory: " + o.corpus);
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(o.corpus)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  if (names.size() < 10)
    throw flare::ConfigError("niqe-train: >= 10 images required, found " +
                             std::to_string(names.size()));

  std::vector<Eigen::MatrixXd> feats(names.size());
  std::vector<Eigen::VectorXd> sharp(names.size());
  for (size_t i = 0; i < names.size(); ++i) {
    flare::ImageBuffer img =
        flare::read_png((fs::path(o.corpus) / names[i]).string());
    flare::detail::image_patch_features(img, o.patch, &feats[i], &sharp[i]);
  }

  int n_patches = 0;
  flare::NiqeModel model = flare::niqe_train_from_features(
      feats, sharp, o.patch, o.threshold, &n_patches);
  flare::niqe_save(model, o.out);

  // Leave-one-image-out check: train on the rest, score the held-out image.
  // Folds that end up with too few patches are skipped.
  std::vector<double> loo;
  for (size_t i = 0; i < names.size(); ++i) {
    std::vector<Eigen::MatrixXd> f2;
    std::vector<Eigen::VectorXd> s2;
    for (size_t k = 0; k < names.size(); ++k) {
      if (k == i) continue;
      f2.push_back(feats[k]);
      s2.push_back(sharp[k]);
    }
    try {
      flare::NiqeModel fold =
          flare::niqe_train_from_features(f2, s2, o.patch, o.threshold);
      loo.push_back(flare::niqe_score_from_features(feats[i], fold));
    } catch (const flare::Error&) {
      // fold unusable; skip
    }
  }
  ordered_json loo_median = nullptr;
  if (!loo.empty()) {
    std::sort(loo.begin(), loo.end());
    size_t n = loo.size();
    loo_median = n % 2 == 1 ? loo[n / 2] : 0.5 * (loo[n / 2 - 1] + loo[n / 2]);
  }

  std::cerr << "flare: trained on " << names.size() << " images, " << n_patches
            << " patches kept\n";

  ordered_json j;
  j["schema"] = "flare.niqe_train.v1";
  j["corpus"] = o.corpus;
  j["out"] = o.out;
  j["images"] = names.size();
  j["patches"] = n_patches;
  j["patch_size"] = o.patch;
  j["threshold"] = o.threshold;
  j["loo_median"] = loo_median;
  print_json(j);
  return 0;
}

int cmd_synth(const Opts& o) {
  namespace fs = std::filesystem;
  if (o.count < 1) throw flare::ConfigError("synth: --count must be >= 1");
  std::vector<std::string> written;
  if (o.pairs) {
    fs::create_directories(fs::path(o.out) / "low");
    fs::create_directories(fs::path(o.out) / "high");
  } else {
    fs::create_directories(o.out);
  }
  for (int i = 0; i < o.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04d.png", i);
    uint64_t tex_seed = o.seed * 1000003ull + static_cast<uint64_t>(i);
    flare::ImageBuffer ref = flare::synth_texture(o.width, o.height, tex_seed);
    if (o.pairs) {
      flare::ImageBuffer low = flare::synth_low_from_ref(ref, tex_seed ^ 0x5e);
      flare::write_png((fs::path(o.out) / "high" / name).string(), ref);
      flare::write_png((fs::path(o.out) / "low" / name).string(), low);
    } else {
      flare::write_png((fs::path(o.out) / name).string(), ref);
    }
    written.push_back(name);
  }

  ordered_json j;
  j["schema"] = "flare.synth.v1";
  j["out"] = o.out;
  j["count"] = o.count;
  j["width"] = o.width;
  j["height"] = o.height;
  j["pairs"] = o.pairs;
  j["seed"] = o.seed;
  j["files"] = written;
  print_json(j);
  return 0;
}

int run(int argc, char** argv) {
  Settings settings;
  std::string config_path = find_config_path(argc, argv);
  if (!config_path.empty())
    apply_config(flare::TomlTable::parse_file(config_path), &settings);

  Opts o;
  o.seed = settings.bo.seed;
  o.budget = settings.bo.n_total;
  o.n_init = settings.bo.n_init;
  o.restarts = settings.bo.acquisition_restarts;
  o.baseline = settings.bo.baseline_mode;
  o.kernel = settings.kernel;
  o.niqe_model = settings.niqe_model;
  o.bounds = settings.bounds;
  o.workers = settings.workers;
  o.patch = settings.niqe_patch;
  o.threshold = settings.niqe_threshold;

  CLI::App app{"low-light image enhancement by per-image Bayesian parameter "
               "search (version " +
               std::string(flare::version()) + ")"};
  app.require_subcommand(1);
  std::string config_flag;
  app.add_option("--config", config_flag,
                 "TOML config file (FLARE_CONFIG is honoured when absent; "
                 "flags override the file)");

  CLI::App* enhance =
      app.add_subcommand("enhance", "optimise one low/reference pair");
  enhance->add_option("--low", o.low, "low-light input PNG")->required();
  enhance->add_option("--ref", o.ref, "well-exposed reference PNG")->required();
  enhance->add_option("--out", o.out, "output PNG for the enhanced image")
      ->required();
  enhance->add_option("--trace", o.trace,
                      "optional JSONL file recording every evaluation");
  add_search_flags(enhance, &o);
  add_bounds_flags(enhance, &o);

  CLI::App* batch = app.add_subcommand(
      "batch", "optimise every pair under a dataset directory");
  batch->add_option("--dataset", o.dataset,
                    "dataset root containing low/ and high/ subdirectories")
      ->required();
  batch
      ->add_option("--out", o.out,
                   "output directory for images, traces, and reports")
      ->required();
  batch->add_option("--workers", o.workers, "concurrent images")
      ->capture_default_str();
  add_search_flags(batch, &o);
  add_bounds_flags(batch, &o);

  CLI::App* metrics =
      app.add_subcommand("metrics", "score image --a against image --b");
  metrics->add_option("--a", o.a, "test image PNG")->required();
  metrics->add_option("--b", o.b, "reference image PNG")->required();
  CLI::Option* model_opt =
      metrics->add_option("--niqe-model", o.niqe_model,
                          "also report the no-reference score of --a")
          ->capture_default_str();

  CLI::App* train = app.add_subcommand(
      "niqe-train", "fit the naturalness model from a pristine corpus");
  train->add_option("--corpus", o.corpus, "directory of pristine PNGs")
      ->required();
  train->add_option("--out", o.out, "output path for the model JSON")
      ->required();
  train->add_option("--patch", o.patch, "square patch size (even, >= 6)")
      ->capture_default_str();
  train
      ->add_option("--threshold", o.threshold,
                   "sharpness selection threshold in [0,1]")
      ->capture_default_str();

  CLI::App* synth = app.add_subcommand(
      "synth", "generate procedural textures or low/high pairs");
  synth->add_option("--out", o.out, "output directory")->required();
  synth->add_option("--count", o.count, "number of images")
      ->capture_default_str();
  synth->add_option("--width", o.width, "image width")->capture_default_str();
  synth->add_option("--height", o.height, "image height")
      ->capture_default_str();
  synth->add_flag("--pairs", o.pairs,
                  "emit low/ and high/ subdirectories instead of flat files");
  synth->add_option("--seed", o.seed, "base RNG seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (app.got_subcommand(enhance)) return cmd_enhance(o);
  if (app.got_subcommand(batch)) return cmd_batch(o);
  if (app.got_subcommand(metrics)) {
    o.with_niqe = model_opt->count() > 0;
    return cmd_metrics(o);
  }
  if (app.got_subcommand(train)) return cmd_niqe_train(o);
  if (app.got_subcommand(synth)) return cmd_synth(o);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const flare::IoError& e) {
    std::cerr << "flare: error: " << e.what() << "\n";
    return 1;
  } catch (const flare::ConfigError& e) {
    std::cerr << "flare: error: " << e.what() << "\n";
    return 2;
  } catch (const flare::ContractViolation& e) {
    std::cerr << "flare: error: " << e.what() << "\n";
    return 2;
  } catch (const flare::NumericError& e) {
    std::cerr << "flare: error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "flare: error: " << e.what() << "\n";
    return 1;
  }
}
