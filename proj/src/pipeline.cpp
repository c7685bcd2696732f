#include "mammo/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mammo/image_io.hpp"
#include "mammo/io.hpp"
#include "mammo/parallel.hpp"
#include "mammo/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mammo::pipeline {

namespace {

constexpr const char* kToolVersion = "mammo 1.0.0";

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(std::string_view key, std::string_view v) {
  const std::string s = trim(v);
  double out = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
    throw ConfigError("'" + std::string(key) + "': expected a number, got '" +
                      s + "'");
  }
  return out;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  const std::string s = trim(v);
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
    throw ConfigError("'" + std::string(key) +
                      "': expected a nonnegative integer, got '" + s + "'");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  const std::string s = trim(v);
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  throw ConfigError("'" + std::string(key) + "': expected a boolean, got '" +
                    s + "'");
}

std::vector<double> to_list(std::string_view key, std::string_view v) {
  std::vector<double> out;
  for (const auto& f : io::split_csv_line(v)) out.push_back(to_double(key, f));
  if (out.empty()) throw ConfigError("'" + std::string(key) + "': empty list");
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += num(v[i]);
  }
  return s;
}

}  // namespace

void PipelineConfig::validate() const {
  grid.validate();
  if (!(select_threshold > 0.0 && select_threshold <= 1.0)) {
    throw ConfigError("select_threshold must lie in (0, 1]");
  }
  if (ensemble.n_trees < 1) throw ConfigError("n_trees must be >= 1");
  kernel.validate();
  grids.validate();
  solver.validate();
  if (formulations.empty()) throw ConfigError("no formulations selected");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (synth.positives > synth.images) {
    throw ConfigError("synth_positives exceeds synth_images");
  }
}

void apply_setting(PipelineConfig& c, std::string_view key_in,
                   std::string_view value) {
  const std::string key = trim(key_in);
  const std::string v = trim(value);
  if (key == "input_dir") c.input_dir = v;
  else if (key == "work_dir") c.work_dir = v;
  else if (key == "patch_height") c.grid.patch_height = to_uint(key, v);
  else if (key == "patch_width") c.grid.patch_width = to_uint(key, v);
  else if (key == "stride") c.grid.stride = to_uint(key, v);
  else if (key == "positive_overlap_min") c.grid.positive_overlap_min = to_double(key, v);
  else if (key == "per_class") c.per_class = to_uint(key, v);
  else if (key == "skip_blank") c.skip_blank = to_bool(key, v);
  else if (key == "augment") c.augment = to_bool(key, v);
  else if (key == "tap") c.tap = cnn::parse_tap(v);
  else if (key == "weights") c.weights = v;
  else if (key == "random_weights") {
    if (v.empty() || v == "none") c.random_weights.reset();
    else c.random_weights = to_uint(key, v);
  }
  else if (key == "n_trees") c.ensemble.n_trees = to_uint(key, v);
  else if (key == "max_features") {
    if (v.empty() || v == "sqrt") c.ensemble.max_features.reset();
    else c.ensemble.max_features = to_uint(key, v);
  }
  else if (key == "min_samples_split") c.ensemble.min_samples_split = to_uint(key, v);
  else if (key == "max_depth") {
    if (v.empty() || v == "none") c.ensemble.max_depth.reset();
    else c.ensemble.max_depth = to_uint(key, v);
  }
  else if (key == "splitter") {
    if (v == "random" || v == "extra_trees") c.ensemble.splitter = trees::Splitter::random;
    else if (v == "best" || v == "random_forest") c.ensemble.splitter = trees::Splitter::best;
    else throw ConfigError("splitter must be 'random' or 'best'");
  }
  else if (key == "bootstrap") c.ensemble.bootstrap = to_bool(key, v);
  else if (key == "select_threshold") c.select_threshold = to_double(key, v);
  else if (key == "kernel") c.kernel.kind = svm::parse_kernel(v);
  else if (key == "gamma") {
    if (v.empty() || v == "scale") c.kernel.gamma.reset();
    else c.kernel.gamma = to_double(key, v);
  }
  else if (key == "degree") c.kernel.degree = static_cast<int>(to_uint(key, v));
  else if (key == "coef0") c.kernel.coef0 = to_double(key, v);
  else if (key == "c_values") c.grids.c_values = to_list(key, v);
  else if (key == "nu_values") c.grids.nu_values = to_list(key, v);
  else if (key == "formulations") {
    c.formulations.clear();
    for (const auto& field : io::split_csv_line(v)) {
      const std::string f = trim(field);
      if (f == "c_svm") c.formulations.push_back(svm::FormulationKind::c_svm);
      else if (f == "nu_svm") c.formulations.push_back(svm::FormulationKind::nu_svm);
      else throw ConfigError("unknown formulation '" + f + "'");
    }
  }
  else if (key == "kkt_tolerance") c.solver.kkt_tolerance = to_double(key, v);
  else if (key == "max_iterations") c.solver.max_iterations = to_uint(key, v);
  else if (key == "cache_size") c.solver.cache_size = to_uint(key, v);
  else if (key == "seed") c.seed = to_uint(key, v);
  else if (key == "workers") c.workers = to_uint(key, v);
  else if (key == "paper_faithful_rows") c.paper_faithful_rows = to_bool(key, v);
  else if (key == "synth_images") c.synth.images = to_uint(key, v);
  else if (key == "synth_positives") c.synth.positives = to_uint(key, v);
  else if (key == "synth_rows") c.synth.rows = to_uint(key, v);
  else if (key == "synth_cols") c.synth.cols = to_uint(key, v);
  else throw ConfigError("unknown configuration key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> config_entries(
    const PipelineConfig& c) {
  std::string forms;
  for (const auto f : c.formulations) {
    if (!forms.empty()) forms += ',';
    forms += svm::to_string(f);
  }
  return {
      {"input_dir", c.input_dir.string()},
      {"work_dir", c.work_dir.string()},
      {"patch_height", std::to_string(c.grid.patch_height)},
      {"patch_width", std::to_string(c.grid.patch_width)},
      {"stride", std::to_string(c.grid.stride)},
      {"positive_overlap_min", num(c.grid.positive_overlap_min)},
      {"per_class", std::to_string(c.per_class)},
      {"skip_blank", c.skip_blank ? "true" : "false"},
      {"augment", c.augment ? "true" : "false"},
      {"tap", std::string(cnn::to_string(c.tap))},
      {"weights", c.weights.string()},
      {"random_weights",
       c.random_weights ? std::to_string(*c.random_weights) : "none"},
      {"n_trees", std::to_string(c.ensemble.n_trees)},
      {"max_features", c.ensemble.max_features
                           ? std::to_string(*c.ensemble.max_features)
                           : "sqrt"},
      {"min_samples_split", std::to_string(c.ensemble.min_samples_split)},
      {"max_depth",
       c.ensemble.max_depth ? std::to_string(*c.ensemble.max_depth) : "none"},
      {"splitter",
       c.ensemble.splitter == trees::Splitter::random ? "random" : "best"},
      {"bootstrap", c.ensemble.bootstrap ? "true" : "false"},
      {"select_threshold", num(c.select_threshold)},
      {"kernel", std::string(svm::to_string(c.kernel.kind))},
      {"gamma", c.kernel.gamma ? num(*c.kernel.gamma) : "scale"},
      {"degree", std::to_string(c.kernel.degree)},
      {"coef0", num(c.kernel.coef0)},
      {"c_values", join(c.grids.c_values)},
      {"nu_values", join(c.grids.nu_values)},
      {"formulations", forms},
      {"kkt_tolerance", num(c.solver.kkt_tolerance)},
      {"max_iterations", std::to_string(c.solver.max_iterations)},
      {"cache_size", std::to_string(c.solver.cache_size)},
      {"seed", std::to_string(c.seed)},
      {"workers", std::to_string(c.workers)},
      {"paper_faithful_rows", c.paper_faithful_rows ? "true" : "false"},
      {"synth_images", std::to_string(c.synth.images)},
      {"synth_positives", std::to_string(c.synth.positives)},
      {"synth_rows", std::to_string(c.synth.rows)},
      {"synth_cols", std::to_string(c.synth.cols)},
  };
}

void load_config(PipelineConfig& cfg, const fs::path& path) {
  if (!fs::exists(path)) {
    throw ConfigError("config file '" + path.string() + "' not found");
  }
  const std::string text = io::read_text(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigError("'" + path.string() + "': " + e.what());
    }
    if (!j.contains("config") || !j["config"].is_object()) {
      throw ConfigError("'" + path.string() + "' has no config object");
    }
    for (const auto& [k, v] : j["config"].items()) {
      apply_setting(cfg, k, v.is_string() ? v.get<std::string>() : v.dump());
    }
    return;
  }
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("'" + path.string() + "' line " +
                        std::to_string(lineno) + ": expected key=value");
    }
    apply_setting(cfg, t.substr(0, eq), t.substr(eq + 1));
  }
}

fs::path WorkPaths::report(svm::FormulationKind k) const {
  return root / ("report_" + std::string(svm::to_string(k)) + ".csv");
}
fs::path WorkPaths::roc_csv(svm::FormulationKind k,
                            const std::string& case_name) const {
  return root / ("roc_" + std::string(svm::to_string(k)) + "_case_" +
                 case_name + ".csv");
}
fs::path WorkPaths::roc_svg(svm::FormulationKind k) const {
  return root / ("roc_" + std::string(svm::to_string(k)) + ".svg");
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Per-stage provenance written into manifest.json.
class StageRecord {
 public:
  StageRecord(const PipelineConfig& cfg, std::string name)
      : cfg_(cfg), name_(std::move(name)),
        start_(std::chrono::steady_clock::now()) {}

  void input(const fs::path& p) { inputs_[p.string()] = io::sha256_file(p); }
  void output(const fs::path& p) { outputs_[p.string()] = io::sha256_file(p); }
  void count(const std::string& key, double v) { counts_[key] = v; }

  void finish() {
    const double secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start_)
                            .count();
    const WorkPaths wp{cfg_.work_dir};
    fs::create_directories(cfg_.work_dir);
    json j = json::object();
    if (fs::exists(wp.manifest())) {
      try {
        j = json::parse(io::read_text(wp.manifest()));
      } catch (const json::exception&) {
        j = json::object();
      }
    }
    j["tool"] = kToolVersion;
    json c = json::object();
    for (const auto& [k, v] : config_entries(cfg_)) c[k] = v;
    j["config"] = c;
    json s = json::object();
    s["inputs"] = inputs_;
    s["outputs"] = outputs_;
    s["counts"] = counts_;
    s["seconds"] = secs;
    j["stages"][name_] = s;
    io::atomic_write_text(wp.manifest(), j.dump(2) + "\n");
    std::cerr << "[" << name_ << "] done in " << secs << " s\n";
  }

 private:
  const PipelineConfig& cfg_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
  std::map<std::string, std::string> inputs_, outputs_;
  std::map<std::string, double> counts_;
};

void require(const fs::path& p, std::string_view stage) {
  if (!fs::exists(p)) {
    throw DataError("missing prerequisite '" + p.string() + "'; run " +
                    std::string(stage) + " first");
  }
}

double gaussian(Rng& rng) {
  const double u1 = rng.uniform_open();
  const double u2 = rng.uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(seed ^ splitmix64(salt));
}

}  // namespace

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw DataError("input directory '" + dir.string() + "' not found");
  }
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (ext != ".gimg" && ext != ".png") continue;
    if (ends_with(e.path().stem().string(), "_mask")) continue;
    out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::pair<GrayImage, MassMask> synth_image(std::uint64_t seed, bool positive,
                                           std::size_t rows, std::size_t cols,
                                           std::string id) {
  Rng rng(seed);
  GrayImage img{rows, cols, std::vector<std::uint16_t>(rows * cols), std::move(id)};
  MassMask mask{rows, cols, std::vector<std::uint8_t>(rows * cols, 0)};

  // Low-frequency texture from a coarse random lattice, bilinearly upsampled.
  constexpr std::size_t kCells = 10;
  std::vector<double> lattice((kCells + 1) * (kCells + 1));
  for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);
  const double base = rng.uniform(4000.0, 7000.0);
  const double amp = rng.uniform(500.0, 1000.0);
  const double noise = 150.0;

  double cy = 0, cx = 0, radius = 0, contrast = 0;
  constexpr double kEdge = 15.0;
  if (positive) {
    // Centred on the region shared by the overlapping default patches.
    cy = 377.0 + rng.uniform(-15.0, 15.0);
    cx = 377.0 + rng.uniform(-15.0, 15.0);
    radius = rng.uniform(120.0, 150.0);
    contrast = rng.uniform(1200.0, 2500.0);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const double fy = static_cast<double>(r) / static_cast<double>(rows) * kCells;
    const auto iy = std::min<std::size_t>(static_cast<std::size_t>(fy), kCells - 1);
    const double ty = fy - static_cast<double>(iy);
    for (std::size_t c = 0; c < cols; ++c) {
      const double fx = static_cast<double>(c) / static_cast<double>(cols) * kCells;
      const auto ix = std::min<std::size_t>(static_cast<std::size_t>(fx), kCells - 1);
      const double tx = fx - static_cast<double>(ix);
      const auto at = [&](std::size_t y, std::size_t x) {
        return lattice[y * (kCells + 1) + x];
      };
      const double tex = (1 - ty) * ((1 - tx) * at(iy, ix) + tx * at(iy, ix + 1)) +
                         ty * ((1 - tx) * at(iy + 1, ix) + tx * at(iy + 1, ix + 1));
      double v = base + amp * tex + noise * gaussian(rng);
      if (positive) {
        const double d = std::hypot(static_cast<double>(r) - cy,
                                    static_cast<double>(c) - cx);
        double w = 0.0;
        if (d <= radius - kEdge) {
          w = 1.0;
        } else if (d < radius + kEdge) {
          w = 0.5 * (1.0 + std::cos(std::numbers::pi * (d - radius + kEdge) /
                                    (2.0 * kEdge)));
        }
        v += contrast * w;
        if (d <= radius) mask.bits[r * cols + c] = 1;
      }
      img.pixels[r * cols + c] = static_cast<std::uint16_t>(
          std::clamp(std::lround(v), 0L, static_cast<long>(kMaxIntensity)));
    }
  }
  return {std::move(img), std::move(mask)};
}

void cmd_synth(const PipelineConfig& cfg) {
  cfg.validate();
  StageRecord rec(cfg, "synth");
  fs::create_directories(cfg.input_dir);
  const auto& s = cfg.synth;
  std::vector<std::size_t> order(s.images);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(stage_seed(cfg.seed, 0x5EED));
  rng.shuffle(std::span(order));
  std::vector<bool> positive(s.images, false);
  for (std::size_t i = 0; i < s.positives; ++i) positive[order[i]] = true;
  parallel_for(s.images, cfg.workers, [&](std::size_t i) {
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04zu", i);
    auto [img, mask] = synth_image(stage_seed(cfg.seed, 0x1000 + i),
                                   positive[i], s.rows, s.cols, id);
    write_gimg(cfg.input_dir / (std::string(id) + ".gimg"), img);
    write_gmsk(cfg.input_dir / (std::string(id) + "_mask.gmsk"), mask);
  });
  rec.count("images", static_cast<double>(s.images));
  rec.count("positives", static_cast<double>(s.positives));
  std::cout << "synth: wrote " << s.images << " images (" << s.positives
            << " with masses) to " << cfg.input_dir.string() << '\n';
  rec.finish();
}

void cmd_extract_patches(const PipelineConfig& cfg) {
  cfg.validate();
  StageRecord rec(cfg, "extract-patches");
  const auto images = list_images(cfg.input_dir);
  if (images.empty()) {
    throw DataError("no images (.gimg or .png) in '" + cfg.input_dir.string() +
                    "'");
  }
  std::array<std::vector<LabeledPatch>, 2> candidates;
  std::vector<std::string> errors;
  std::size_t discarded = 0, blank = 0;
  for (const auto& path : images) {
    try {
      rec.input(path);
      const GrayImage img = load_image(path);
      img.validate();
      MassMask mask{img.rows, img.cols,
                    std::vector<std::uint8_t>(img.rows * img.cols, 0)};
      for (const char* ext : {".gmsk", ".png"}) {
        const auto mp = path.parent_path() /
                        (path.stem().string() + "_mask" + ext);
        if (fs::exists(mp)) {
          rec.input(mp);
          mask = load_mask(mp);
          break;
        }
      }
      if (mask.rows != img.rows || mask.cols != img.cols) {
        throw ShapeError("mask is " + std::to_string(mask.rows) + "x" +
                         std::to_string(mask.cols) + ", image is " +
                         std::to_string(img.rows) + "x" +
                         std::to_string(img.cols));
      }
      for (auto& p : extract_patches(img, cfg.grid)) {
        const auto cls = label_patch(p.origin, cfg.grid, mask);
        if (cls == PatchClass::discard) {
          ++discarded;
          continue;
        }
        if (cfg.skip_blank) {
          const auto [lo, hi] =
              std::minmax_element(p.pixels.values.begin(), p.pixels.values.end());
          if (*lo == *hi) {
            ++blank;
            continue;
          }
        }
        const Label label = cls == PatchClass::mass ? Label::mass : Label::non_mass;
        candidates[static_cast<std::size_t>(label)].push_back(
            {std::move(p.pixels), label, Augment::original, img.id, p.origin});
      }
    } catch (const Error& e) {
      errors.push_back(path.filename().string() + ": " + e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = std::to_string(errors.size()) + " of " +
                      std::to_string(images.size()) +
                      " input files failed:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw DataError(msg);
  }
  std::vector<LabeledPatch> chosen;
  for (std::size_t cls = 0; cls < 2; ++cls) {
    auto& c = candidates[cls];
    if (cfg.per_class > 0 && c.size() > cfg.per_class) {
      std::vector<std::size_t> idx(c.size());
      std::iota(idx.begin(), idx.end(), 0);
      Rng rng(stage_seed(cfg.seed, 0xCA11 + cls));
      rng.shuffle(std::span(idx));
      idx.resize(cfg.per_class);
      std::sort(idx.begin(), idx.end());
      std::vector<LabeledPatch> keep;
      for (const auto i : idx) keep.push_back(std::move(c[i]));
      c = std::move(keep);
    } else if (cfg.per_class > 0 && c.size() < cfg.per_class) {
      std::cerr << "extract-patches: only " << c.size() << ' '
                << to_string(static_cast<Label>(cls))
                << " patches available (requested " << cfg.per_class << ")\n";
    }
    for (auto& p : c) chosen.push_back(std::move(p));
  }
  std::sort(chosen.begin(), chosen.end(), [](const auto& a, const auto& b) {
    return std::tie(a.source_id, a.origin) < std::tie(b.source_id, b.origin);
  });
  const std::size_t n_mass = static_cast<std::size_t>(std::count_if(
      chosen.begin(), chosen.end(),
      [](const auto& p) { return p.label == Label::mass; }));
  const std::size_t n_base = chosen.size();
  if (cfg.augment) chosen = augment_dataset(std::move(chosen));

  const WorkPaths wp{cfg.work_dir};
  fs::remove_all(wp.patches());
  fs::create_directories(cfg.work_dir);
  write_patch_dataset(cfg.work_dir, chosen);
  rec.output(cfg.work_dir / "manifest.csv");
  rec.count("base_patches", static_cast<double>(n_base));
  rec.count("mass", static_cast<double>(n_mass));
  rec.count("non_mass", static_cast<double>(n_base - n_mass));
  rec.count("rows", static_cast<double>(chosen.size()));
  rec.count("discarded", static_cast<double>(discarded));
  rec.count("blank_skipped", static_cast<double>(blank));
  std::cout << "extract-patches: " << n_base << " base patches (" << n_mass
            << " mass, " << n_base - n_mass << " non-mass), " << chosen.size()
            << " rows after augmentation, " << discarded << " discarded\n";
  rec.finish();
}

void cmd_extract_features(const PipelineConfig& cfg) {
  cfg.validate();
  StageRecord rec(cfg, "extract-features");
  const WorkPaths wp{cfg.work_dir};
  require(cfg.work_dir / "manifest.csv", "extract-patches");
  const auto records = read_patch_manifest(cfg.work_dir);
  rec.input(cfg.work_dir / "manifest.csv");

  cnn::Network net;
  if (!cfg.weights.empty()) {
    if (!fs::exists(cfg.weights)) {
      throw DataError("weight file '" + cfg.weights.string() + "' not found");
    }
    rec.input(cfg.weights);
    net = cnn::load_weights(cfg.weights);
  } else if (cfg.random_weights) {
    net = cnn::seeded_random_network(*cfg.random_weights);
  } else {
    throw ConfigError(
        "no network weights: pass a weight file or --random-weights SEED");
  }

  const std::size_t width = cnn::tap_width(cfg.tap);
  FeatureMatrix fm;
  fm.values = FloatMatrix(records.size(), width);
  constexpr std::size_t kChunk = 64;
  for (std::size_t c0 = 0; c0 < records.size(); c0 += kChunk) {
    const std::size_t nc = std::min(kChunk, records.size() - c0);
    std::vector<LabeledPatch> patches(nc);
    for (std::size_t i = 0; i < nc; ++i) {
      patches[i] = load_patch(cfg.work_dir, records[c0 + i]);
    }
    const auto block = cnn::extract_features(net, patches, cfg.tap, cfg.workers);
    for (std::size_t i = 0; i < nc; ++i) {
      std::copy(block.values.row(i).begin(), block.values.row(i).end(),
                fm.values.row(c0 + i).begin());
      fm.labels.push_back(block.labels[i]);
      fm.provenance.push_back(block.provenance[i]);
    }
    std::cerr << "extract-features: " << c0 + nc << "/" << records.size()
              << '\r' << std::flush;
  }
  std::cerr << '\n';
  write_feature_set(wp.features(), fm);
  rec.output(wp.features());
  rec.output(label_manifest_path(wp.features()));
  rec.count("rows", static_cast<double>(fm.rows()));
  rec.count("cols", static_cast<double>(fm.cols()));
  std::cout << "extract-features: " << fm.rows() << " x " << fm.cols()
            << " (tap " << cnn::to_string(cfg.tap) << ", network "
            << net.checksum().substr(0, 12) << ")\n";
  rec.finish();
}

void cmd_select_features(const PipelineConfig& cfg) {
  cfg.validate();
  StageRecord rec(cfg, "select-features");
  const WorkPaths wp{cfg.work_dir};
  require(wp.features(), "extract-features");
  const auto fm = read_feature_set(wp.features());
  rec.input(wp.features());
  auto ecfg = cfg.ensemble;
  ecfg.seed = stage_seed(cfg.seed, 0x7EE5);
  ecfg.workers = cfg.workers;
  const auto ensemble = trees::fit_ensemble(fm.values, fm.labels, ecfg);
  const auto imp = trees::importances(ensemble);
  const auto sel = trees::select_cumulative(imp, cfg.select_threshold);
  trees::write_selection_report(wp.selection(), sel);
  rec.output(wp.selection());
  rec.count("selected", static_cast<double>(sel.selected.size()));
  rec.count("captured", sel.captured);
  std::cout << "select-features: " << sel.selected.size() << " of "
            << fm.cols() << " features capture " << sel.captured
            << " of total importance\n";
  rec.finish();
}

void cmd_split(const PipelineConfig& cfg) {
  cfg.validate();
  StageRecord rec(cfg, "split");
  const WorkPaths wp{cfg.work_dir};
  require(label_manifest_path(wp.features()), "extract-features");
  const auto fm = read_feature_set(wp.features());
  rec.input(label_manifest_path(wp.features()));
  const auto groups = eval::partition_groups(
      fm.labels, fm.provenance, stage_seed(cfg.seed, 0x5B1D),
      cfg.paper_faithful_rows);
  eval::write_split(wp.split(), groups, fm.rows());
  rec.output(wp.split());
  for (std::size_t g = 0; g < eval::kGroups; ++g) {
    rec.count(std::string("group_") + eval::group_letter(g),
              static_cast<double>(groups.rows[g].size()));
  }
  std::cout << "split: " << fm.rows() << " rows into groups of";
  for (const auto& g : groups.rows) std::cout << ' ' << g.size();
  std::cout << '\n';
  rec.finish();
}

namespace {

std::vector<eval::CaseData> load_cases(const PipelineConfig& cfg,
                                       StageRecord& rec) {
  const WorkPaths wp{cfg.work_dir};
  require(wp.features(), "extract-features");
  require(wp.selection(), "select-features");
  require(wp.split(), "split");
  const auto fm = read_feature_set(wp.features());
  const auto sel = trees::read_selection_report(wp.selection());
  const auto groups = eval::read_split(wp.split(), fm.rows());
  rec.input(wp.features());
  rec.input(wp.selection());
  rec.input(wp.split());
  const auto projected = trees::project(fm, sel.selected);
  return eval::make_cases(projected, eval::build_cases(groups));
}

}  // namespace

void cmd_grid_search(const PipelineConfig& cfg) {
  cfg.validate();
  StageRecord rec(cfg, "grid-search");
  const WorkPaths wp{cfg.work_dir};
  const auto cases = load_cases(cfg, rec);
  std::vector<eval::GridResult> results;
  for (const auto kind : cfg.formulations) {
    const auto& values = cfg.grids.values(kind);
    results.push_back(eval::grid_search(cases, kind, values, cfg.kernel,
                                        cfg.solver, {cfg.workers, false}));
    const auto& r = results.back();
    std::cout << "grid-search: best " << svm::to_string(kind) << " parameter "
              << r.best_value << " (mean validation AUC " << r.best_mean_auc
              << ")\n";
    std::size_t failed = 0;
    for (const auto& c : r.cells) failed += !c.ok;
    if (failed) {
      std::cerr << "grid-search: " << failed << " " << svm::to_string(kind)
                << " cells failed to converge\n";
    }
  }
  for (const auto& c : cases) {
    if (c.counts().test != 0) {
      throw std::logic_error("grid search touched a test partition");
    }
  }
  eval::write_grid(wp.grid(), results);
  rec.output(wp.grid());
  rec.finish();
}

void cmd_evaluate(const PipelineConfig& cfg) {
  cfg.validate();
  StageRecord rec(cfg, "evaluate");
  const WorkPaths wp{cfg.work_dir};
  require(wp.grid(), "grid-search");
  const auto cases = load_cases(cfg, rec);
  const auto grid = eval::read_grid(wp.grid());
  rec.input(wp.grid());
  for (const auto kind : cfg.formulations) {
    const auto it = std::find_if(grid.begin(), grid.end(),
                                 [&](const auto& g) { return g.kind == kind; });
    if (it == grid.end()) {
      throw DataError("grid table has no " + std::string(svm::to_string(kind)) +
                      " rows; rerun grid-search");
    }
    const auto report = eval::evaluate_cases({kind, it->best_value}, cases,
                                             cfg.kernel, cfg.solver,
                                             cfg.workers);
    eval::write_report(wp.report(kind), report);
    rec.output(wp.report(kind));
    for (const auto& c : report.cases) {
      eval::write_roc_csv(wp.roc_csv(kind, c.name), c.roc);
      rec.output(wp.roc_csv(kind, c.name));
    }
    eval::write_roc_svg(wp.roc_svg(kind), report);
    rec.output(wp.roc_svg(kind));
    rec.count(std::string(svm::to_string(kind)) + "_mean_auc",
              report.summary.mean);
    rec.count(std::string(svm::to_string(kind)) + "_std_auc",
              report.summary.std);
    std::cout << "evaluate: " << svm::to_string(kind) << " parameter "
              << it->best_value << " test AUC per case";
    for (const auto& c : report.cases) std::cout << ' ' << c.auc;
    std::cout << " -> " << eval::format_mean_std(report.summary) << '\n';
  }
  rec.finish();
}

void run_pipeline(const PipelineConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  cmd_extract_patches(cfg);
  cmd_extract_features(cfg);
  cmd_select_features(cfg);
  cmd_split(cfg);
  cmd_grid_search(cfg);
  cmd_evaluate(cfg);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::cout << "run-pipeline: total computation time " << secs << " s\n";
}

}  // namespace mammo::pipeline
