#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "flare/bo.hpp"
#include "flare/error.hpp"
#include "flare/image.hpp"
#include "flare/metrics.hpp"
#include "flare/niqe.hpp"
#include "flare/params.hpp"
#include "flare/png_io.hpp"
#include "flare/version.hpp"

namespace flare {

struct PairedEntry {
  std::string id;        // shared filename
  std::string low_path;
  std::string ref_path;
};

struct PairedDataset {
  std::string root;
  std::vector<PairedEntry> entries;
  std::vector<std::string> skipped;  // unmatched or unusable files
};

namespace detail {

inline bool has_png_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

inline std::vector<std::string> list_png_names(const std::filesystem::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && has_png_extension(e.path()))
      names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace detail

// Load a paired dataset laid out as root/low/*.png and root/high/*.png with
// matching filenames. Unmatched files and pairs whose dimensions disagree
// are recorded in `skipped` rather than failing the load.
inline PairedDataset load_paired(const std::string& root,
                                 const std::string& layout = "lol") {
  if (layout != "lol")
    throw ConfigError("load_paired: unknown layout '" + layout + "'");
  namespace fs = std::filesystem;
  fs::path low_dir = fs::path(root) / "low";
  fs::path ref_dir = fs::path(root) / "high";
  if (!fs::is_directory(low_dir) || !fs::is_directory(ref_dir))
    throw IoError("load_paired: expected " + low_dir.string() + " and " +
                  ref_dir.string());

  std::vector<std::string> low_names = detail::list_png_names(low_dir);
  std::vector<std::string> ref_names = detail::list_png_names(ref_dir);

  PairedDataset ds;
  ds.root = root;
  size_t i = 0, j = 0;
  while (i < low_names.size() || j < ref_names.size()) {
    if (j >= ref_names.size() ||
        (i < low_names.size() && low_names[i] < ref_names[j])) {
      ds.skipped.push_back("low/" + low_names[i] + ": no matching reference");
      ++i;
    } else if (i >= low_names.size() || ref_names[j] < low_names[i]) {
      ds.skipped.push_back("high/" + ref_names[j] + ": no matching input");
      ++j;
    } else {
      PairedEntry e;
      e.id = low_names[i];
      e.low_path = (low_dir / low_names[i]).string();
      e.ref_path = (ref_dir / ref_names[j]).string();
      auto dim_low = read_png_header(e.low_path);
      auto dim_ref = read_png_header(e.ref_path);
      if (dim_low != dim_ref)
        ds.skipped.push_back(e.id + ": dimension mismatch between low and high");
      else
        ds.entries.push_back(e);
      ++i;
      ++j;
    }
  }
  if (ds.entries.empty()) throw IoError("load_paired: zero matched pairs");
  return ds;
}

// FNV-1a 64-bit, used to derive a per-image seed from the batch seed so
// results do not depend on processing order or worker count.
inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

struct BatchItem {
  std::string id;
  bool ok = false;
  std::string error;
  ParamVector theta;
  QualityReport report;
  double seconds = 0.0;
};

struct BatchReport {
  std::vector<BatchItem> items;  // one per dataset entry, in dataset order
  int n_ok = 0;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_niqe = 0.0;
  double mean_objective = 0.0;
};

namespace detail {

inline std::string strip_extension(const std::string& name) {
  size_t dot = name.find_last_of('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// CSV report: one row per successfully optimised image.
inline void write_report_csv(const BatchReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_report_csv: cannot open " + path);
  out << "id";
  for (int i = 0; i < kNumParams; ++i) out << "," << kParamNames[i];
  out << ",psnr,ssim,niqe,objective,seconds\n";
  for (const BatchItem& item : report.items) {
    if (!item.ok) continue;
    out << item.id;
    for (int i = 0; i < kNumParams; ++i)
      out << "," << detail::format_g17(item.theta[i]);
    out << "," << detail::format_g17(item.report.psnr) << ","
        << detail::format_g17(item.report.ssim) << ","
        << detail::format_g17(item.report.niqe) << ","
        << detail::format_g17(item.report.objective) << ","
        << detail::format_g17(item.seconds) << "\n";
  }
  if (!out) throw IoError("write_report_csv: write failed for " + path);
}

// Aggregate JSON report. Contains no timing fields, so reruns of the same
// configuration produce byte-identical files.
inline nlohmann::json report_json(const BatchReport& report, const BoConfig& cfg,
                                  int worker_count) {
  nlohmann::json j;
  j["n"] = report.n_ok;
  j["mean_psnr"] = report.mean_psnr;
  j["mean_ssim"] = report.mean_ssim;
  j["mean_niqe"] = report.mean_niqe;
  j["mean_objective"] = report.mean_objective;
  j["config"] = {
      {"n_init", cfg.n_init},
      {"n_total", cfg.n_total},
      {"acquisition_restarts", cfg.acquisition_restarts},
      {"seed", cfg.seed},
      {"baseline_mode", cfg.baseline_mode},
      {"kernel", cfg.kernel == KernelKind::SquaredExponential
                     ? "squared_exponential"
                     : "matern52"},
      {"worker_count", worker_count},
  };
  j["version"] = version();
  nlohmann::json failed = nlohmann::json::array();
  for (const BatchItem& item : report.items)
    if (!item.ok) failed.push_back({{"id", item.id}, {"error", item.error}});
  j["failed"] = failed;
  return j;
}

inline void write_report_json(const BatchReport& report, const BoConfig& cfg,
                              int worker_count, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_report_json: cannot open " + path);
  out << report_json(report, cfg, worker_count).dump(2) << "\n";
  if (!out) throw IoError("write_report_json: write failed for " + path);
}

// 256-bin histogram of the BT.601 luminance of an 8-bit image.
inline std::array<double, 256> luminance_histogram(const ImageBuffer& img) {
  detail::require_space(img, ColorSpace::Srgb8, "luminance_histogram");
  ImageBuffer gray = img.channels == 1 ? img : to_gray(img);
  std::array<double, 256> hist{};
  for (double v : gray.data) {
    int bin = static_cast<int>(std::lround(v));
    hist[std::clamp(bin, 0, 255)] += 1.0;
  }
  return hist;
}

namespace detail {

// Minimal 5x7 glyphs for the distance readout burned into the figure.
inline const uint8_t* figure_glyph(char c) {
  static const uint8_t digits[13][7] = {
      {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e},  // 0
      {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e},  // 1
      {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f},  // 2
      {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e},  // 3
      {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02},  // 4
      {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e},  // 5
      {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e},  // 6
      {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
      {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e},  // 8
      {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c},  // 9
      {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c},  // .
      {0x00, 0x00, 0x1f, 0x00, 0x1f, 0x00, 0x00},  // =
      {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f},  // L
  };
  if (c >= '0' && c <= '9') return digits[c - '0'];
  if (c == '.') return digits[10];
  if (c == '=') return digits[11];
  if (c == 'L') return digits[12];
  return nullptr;
}

inline void figure_text(ImageBuffer* canvas, int x0, int y0,
                        const std::string& text, double r, double g, double b) {
  int x = x0;
  for (char c : text) {
    const uint8_t* glyph = figure_glyph(c);
    if (glyph) {
      for (int row = 0; row < 7; ++row)
        for (int col = 0; col < 5; ++col)
          if ((glyph[row] >> (4 - col)) & 1) {
            int px = x + col, py = y0 + row;
            if (px >= 0 && px < canvas->width && py >= 0 && py < canvas->height) {
              canvas->at(py, px, 0) = r;
              canvas->at(py, px, 1) = g;
              canvas->at(py, px, 2) = b;
            }
          }
    }
    x += 6;
  }
}

inline void figure_polyline(ImageBuffer* canvas, int x0, int y0, int w, int h,
                            const std::array<double, 256>& hist, double r,
                            double g, double b) {
  double peak = 0.0;
  for (double v : hist) peak = std::max(peak, v);
  if (peak <= 0.0) peak = 1.0;
  int prev_y = 0;
  for (int bin = 0; bin < 256; ++bin) {
    int px = x0 + bin * w / 256;
    int bar = static_cast<int>(std::lround(hist[bin] / peak * (h - 1)));
    int py = y0 + (h - 1) - bar;
    if (bin > 0) {
      int lo = std::min(prev_y, py), hi = std::max(prev_y, py);
      for (int y = lo; y <= hi; ++y) {
        canvas->at(y, px, 0) = r;
        canvas->at(y, px, 1) = g;
        canvas->at(y, px, 2) = b;
      }
    } else {
      canvas->at(py, px, 0) = r;
      canvas->at(py, px, 1) = g;
      canvas->at(py, px, 2) = b;
    }
    prev_y = py;
  }
}

}  // namespace detail

// Intensity-distribution figure: luminance histograms of the low input
// (red), enhanced output (green), and reference (blue), with the L1
// distance between the normalised enhanced and reference histograms
// rendered beneath. Returns that L1 distance.
inline double emit_histograms(const ImageBuffer& low, const ImageBuffer& enhanced,
                              const ImageBuffer& ref, const std::string& out_path) {
  if (!low.same_shape(enhanced) || !low.same_shape(ref))
    throw ContractViolation("emit_histograms: image size mismatch");

  std::array<double, 256> h_low = luminance_histogram(low);
  std::array<double, 256> h_enh = luminance_histogram(enhanced);
  std::array<double, 256> h_ref = luminance_histogram(ref);

  double sum_enh = 0.0, sum_ref = 0.0;
  for (int i = 0; i < 256; ++i) {
    sum_enh += h_enh[i];
    sum_ref += h_ref[i];
  }
  double l1 = 0.0;
  for (int i = 0; i < 256; ++i)
    l1 += std::abs(h_enh[i] / sum_enh - h_ref[i] / sum_ref);

  const int plot_w = 512, plot_h = 256, margin = 16, text_h = 20;
  ImageBuffer canvas(plot_w + 2 * margin, plot_h + 2 * margin + text_h, 3,
                     ColorSpace::Srgb8, 255.0);
  for (int x = margin - 1; x <= margin + plot_w; ++x) {
    canvas.at(margin - 1, x, 0) = canvas.at(margin - 1, x, 1) =
        canvas.at(margin - 1, x, 2) = 0.0;
    canvas.at(margin + plot_h, x, 0) = canvas.at(margin + plot_h, x, 1) =
        canvas.at(margin + plot_h, x, 2) = 0.0;
  }
  for (int y = margin - 1; y <= margin + plot_h; ++y) {
    canvas.at(y, margin - 1, 0) = canvas.at(y, margin - 1, 1) =
        canvas.at(y, margin - 1, 2) = 0.0;
    canvas.at(y, margin + plot_w, 0) = canvas.at(y, margin + plot_w, 1) =
        canvas.at(y, margin + plot_w, 2) = 0.0;
  }
  detail::figure_polyline(&canvas, margin, margin, plot_w, plot_h, h_low, 200, 40, 40);
  detail::figure_polyline(&canvas, margin, margin, plot_w, plot_h, h_ref, 40, 40, 200);
  detail::figure_polyline(&canvas, margin, margin, plot_w, plot_h, h_enh, 40, 160, 40);

  char label[48];
  std::snprintf(label, sizeof(label), "L1=%.4f", l1);
  detail::figure_text(&canvas, margin, margin + plot_h + 8, label, 0, 0, 0);

  write_png(out_path, canvas);
  return l1;
}

// Run the optimiser over every dataset entry, up to worker_count images
// concurrently. Per-image failures are recorded and the batch continues;
// only a batch with zero successes throws. When out_dir is non-empty the
// enhanced images, per-image traces, luminance-histogram figures, and both
// report files are written.
inline BatchReport run_batch(const PairedDataset& dataset, const BoConfig& cfg,
                             const NiqeModel& niqe_model, int worker_count = 1,
                             const std::string& out_dir = "",
                             const ParamBounds& bounds = {}) {
  cfg.validate();
  detail::niqe_validate(niqe_model);
  if (worker_count < 1)
    throw ConfigError("run_batch: worker_count must be >= 1");

  namespace fs = std::filesystem;
  const bool writing = !out_dir.empty();
  if (writing) {
    fs::create_directories(fs::path(out_dir) / "enhanced");
    fs::create_directories(fs::path(out_dir) / "trace");
    fs::create_directories(fs::path(out_dir) / "figures");
  }

  BatchReport report;
  report.items.resize(dataset.entries.size());
  std::atomic<size_t> next{0};
  std::mutex io_mutex;

  auto worker = [&]() {
    for (;;) {
      size_t idx = next.fetch_add(1);
      if (idx >= dataset.entries.size()) return;
      const PairedEntry& entry = dataset.entries[idx];
      BatchItem& item = report.items[idx];
      item.id = entry.id;
      auto t0 = std::chrono::steady_clock::now();
      try {
        ImageBuffer low = read_png(entry.low_path);
        ImageBuffer ref = read_png(entry.ref_path);
        BoConfig image_cfg = cfg;
        image_cfg.seed = cfg.seed ^ fnv1a64(entry.id);
        OptimiseResult res =
            optimise_image(low, ref, niqe_model, image_cfg, bounds);
        item.theta = res.best_theta;
        item.report = res.best_report;
        item.ok = true;
        if (writing) {
          std::lock_guard<std::mutex> lock(io_mutex);
          std::string stem = detail::strip_extension(entry.id);
          write_png((fs::path(out_dir) / "enhanced" / entry.id).string(),
                    res.best_image);
          write_trace(res.trace,
                      (fs::path(out_dir) / "trace" / (stem + ".jsonl")).string());
          emit_histograms(
              low, res.best_image, ref,
              (fs::path(out_dir) / "figures" / (stem + ".png")).string());
        }
      } catch (const std::exception& e) {
        item.ok = false;
        item.error = e.what();
      }
      item.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
    }
  };

  if (worker_count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < worker_count; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  for (const BatchItem& item : report.items) {
    if (!item.ok) continue;
    ++report.n_ok;
    report.mean_psnr += item.report.psnr;
    report.mean_ssim += item.report.ssim;
    report.mean_niqe += item.report.niqe;
    report.mean_objective += item.report.objective;
  }
  if (report.n_ok == 0)
    throw NumericError("run_batch: all images failed");
  report.mean_psnr /= report.n_ok;
  report.mean_ssim /= report.n_ok;
  report.mean_niqe /= report.n_ok;
  report.mean_objective /= report.n_ok;

  if (writing) {
    write_report_csv(report, (fs::path(out_dir) / "report.csv").string());
    write_report_json(report, cfg, worker_count,
                      (fs::path(out_dir) / "report.json").string());
  }
  return report;
}

}  // namespace flare
