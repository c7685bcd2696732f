#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mammo/cnn.hpp"
#include "mammo/eval.hpp"
#include "mammo/patchio.hpp"
#include "mammo/svm.hpp"
#include "mammo/trees.hpp"

namespace mammo::pipeline {

struct SynthConfig {
  std::size_t images = 130;
  std::size_t positives = 65;
  std::size_t rows = 760;
  std::size_t cols = 760;
};

struct PipelineConfig {
  std::filesystem::path input_dir = "data";
  std::filesystem::path work_dir = "work";

  PatchGridConfig grid;
  std::size_t per_class = 0;  // 0 keeps every candidate patch
  bool skip_blank = false;
  bool augment = false;

  cnn::Tap tap = cnn::Tap::fc2;
  std::filesystem::path weights;  // empty: use random_weights
  std::optional<std::uint64_t> random_weights;

  trees::EnsembleConfig ensemble;
  double select_threshold = 0.95;

  svm::KernelSpec kernel;
  eval::GridSpec grids;
  std::vector<svm::FormulationKind> formulations{svm::FormulationKind::c_svm,
                                                 svm::FormulationKind::nu_svm};
  svm::SolverConfig solver;

  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool paper_faithful_rows = false;

  SynthConfig synth;

  void validate() const;  // throws ConfigError
};

// Sets one key=value entry; unknown keys and bad values throw ConfigError.
void apply_setting(PipelineConfig& cfg, std::string_view key,
                   std::string_view value);

// Canonical key=value snapshot, in a fixed key order.
std::vector<std::pair<std::string, std::string>> config_entries(
    const PipelineConfig& cfg);

// Reads a key=value file ('#' comments) or a run manifest (JSON with a
// "config" object) into `cfg`.
void load_config(PipelineConfig& cfg, const std::filesystem::path& path);

// Stage artifact locations inside the work directory.
struct WorkPaths {
  std::filesystem::path root;

  std::filesystem::path patches() const { return root / "patches"; }
  std::filesystem::path features() const { return root / "features.fmat"; }
  std::filesystem::path selection() const { return root / "selection.csv"; }
  std::filesystem::path split() const { return root / "split.csv"; }
  std::filesystem::path grid() const { return root / "grid.csv"; }
  std::filesystem::path report(svm::FormulationKind k) const;
  std::filesystem::path roc_csv(svm::FormulationKind k,
                                const std::string& case_name) const;
  std::filesystem::path roc_svg(svm::FormulationKind k) const;
  std::filesystem::path manifest() const { return root / "manifest.json"; }
};

// Image ingestion: every .gimg/.png in the input directory whose stem does
// not end in "_mask"; the mask is <stem>_mask.gmsk or <stem>_mask.png, and an
// absent mask means no mass pixels.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

// Synthetic texture image; positives carry a bright soft-edged disc that the
// mask marks.
std::pair<GrayImage, MassMask> synth_image(std::uint64_t seed, bool positive,
                                           std::size_t rows, std::size_t cols,
                                           std::string id);

void cmd_synth(const PipelineConfig& cfg);
void cmd_extract_patches(const PipelineConfig& cfg);
void cmd_extract_features(const PipelineConfig& cfg);
void cmd_select_features(const PipelineConfig& cfg);
void cmd_split(const PipelineConfig& cfg);
void cmd_grid_search(const PipelineConfig& cfg);
void cmd_evaluate(const PipelineConfig& cfg);
// extract-patches through evaluate.
void run_pipeline(const PipelineConfig& cfg);

}  // namespace mammo::pipeline
