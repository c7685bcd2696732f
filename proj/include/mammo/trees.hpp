#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "mammo/feature_matrix.hpp"

namespace mammo::trees {

// 1 - sum p_k^2. Throws DomainError when every count is zero.
double gini(std::span<const std::size_t> class_counts);

enum class Splitter {
  random,  // extra-trees: one uniform threshold per candidate feature
  best,    // random forest: best midpoint per candidate feature
};

struct EnsembleConfig {
  std::size_t n_trees = 100;
  std::optional<std::size_t> max_features;  // default ceil(sqrt(M))
  std::size_t min_samples_split = 2;
  std::optional<std::size_t> max_depth;  // unbounded when unset
  Splitter splitter = Splitter::random;
  bool bootstrap = false;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  std::size_t resolved_max_features(std::size_t n_features) const;
  void validate(std::size_t n_features) const;  // throws ConfigError
};

struct TreeNode {
  static constexpr std::int32_t kNone = -1;

  std::array<std::size_t, 2> class_counts{};
  std::size_t samples = 0;
  // Split fields; left == kNone marks a leaf.
  std::size_t feature = 0;
  double threshold = 0.0;  // x <= threshold goes left
  std::int32_t left = kNone;
  std::int32_t right = kNone;
  double impurity_decrease = 0.0;  // weighted by node share of the root

  bool is_leaf() const { return left == kNone; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct Ensemble {
  std::size_t n_features = 0;
  std::vector<Tree> trees;
};

// Per-feature mean decrease in impurity, normalised to sum 1 (all zeros when
// the ensemble made no splits).
struct ImportanceVector {
  std::vector<double> scores;
};

struct SelectionResult {
  std::vector<std::size_t> selected;  // descending importance
  std::vector<double> importance;     // per selected feature
  std::vector<double> cumulative;     // running share of total importance
  double captured = 0.0;
  double threshold = 0.95;
};

// Throws DomainError when fewer than two rows or a single class is present.
Ensemble fit_ensemble(const FloatMatrix& x, std::span<const Label> y,
                      const EnsembleConfig& cfg);

ImportanceVector importances(const Ensemble& ensemble);

// Minimal prefix of the importance ranking (descending, ties by index) whose
// sum reaches threshold x total importance.
SelectionResult select_cumulative(const ImportanceVector& imp,
                                  double threshold = 0.95);

FeatureMatrix project(const FeatureMatrix& x, const SelectionResult& sel);
FeatureMatrix project(const FeatureMatrix& x,
                      std::span<const std::size_t> columns);

// Header comment with threshold and captured share, then
// feature_index,importance,cumulative_importance per selected feature.
void write_selection_report(const std::filesystem::path& path,
                            const SelectionResult& sel);
SelectionResult read_selection_report(const std::filesystem::path& path);

}  // namespace mammo::trees
