#include "mammo/trees.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "mammo/io.hpp"
#include "mammo/parallel.hpp"
#include "mammo/rng.hpp"

namespace mammo::trees {

double gini(std::span<const std::size_t> class_counts) {
  std::size_t total = 0;
  for (const auto c : class_counts) total += c;
  if (total == 0) throw DomainError("gini: all class counts are zero");
  double sum_sq = 0.0;
  for (const auto c : class_counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

std::size_t EnsembleConfig::resolved_max_features(
    std::size_t n_features) const {
  if (max_features) return *max_features;
  return static_cast<std::size_t>(
      std::ceil(std::sqrt(static_cast<double>(n_features))));
}

void EnsembleConfig::validate(std::size_t n_features) const {
  if (n_trees < 1) throw ConfigError("n_trees must be >= 1");
  const auto mf = resolved_max_features(n_features);
  if (mf < 1 || mf > n_features) {
    throw ConfigError("max_features must lie in [1, " +
                      std::to_string(n_features) + "]");
  }
  if (min_samples_split < 2) throw ConfigError("min_samples_split must be >= 2");
}

namespace {

double gini2(std::size_t a, std::size_t b) {
  const double n = static_cast<double>(a + b);
  if (n == 0.0) return 0.0;
  const double pa = static_cast<double>(a) / n;
  const double pb = static_cast<double>(b) / n;
  return 1.0 - pa * pa - pb * pb;
}

struct Candidate {
  bool valid = false;
  std::size_t feature = 0;
  std::uint64_t key = 0;
  double threshold = 0.0;
  double gain = -1.0;  // unweighted impurity decrease at the node
};

// Higher gain wins; ties go to the smaller column key, then smaller index.
bool better(const Candidate& a, const Candidate& b) {
  if (!b.valid) return a.valid;
  if (!a.valid) return false;
  if (a.gain != b.gain) return a.gain > b.gain;
  if (a.key != b.key) return a.key < b.key;
  return a.feature < b.feature;
}

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<float>& columns, std::size_t n_rows,
              std::span<const std::uint8_t> y,
              std::span<const std::uint64_t> column_keys,
              const EnsembleConfig& cfg, std::uint64_t tree_seed)
      : columns_(columns),
        n_rows_(n_rows),
        y_(y),
        keys_(column_keys),
        cfg_(cfg),
        max_features_(cfg.resolved_max_features(column_keys.size())),
        tree_seed_(tree_seed),
        rng_(tree_seed) {}

  Tree build() {
    std::vector<std::size_t> samples(n_rows_);
    if (cfg_.bootstrap) {
      for (auto& s : samples) s = rng_.below(n_rows_);
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    root_samples_ = static_cast<double>(samples.size());
    features_.resize(keys_.size());
    std::iota(features_.begin(), features_.end(), 0);

    Tree tree;
    struct Pending {
      std::int32_t node;
      std::size_t begin, end, depth;
    };
    tree.nodes.push_back(make_node(samples, 0, samples.size()));
    std::vector<Pending> stack{{0, 0, samples.size(), 0}};
    while (!stack.empty()) {
      const Pending p = stack.back();
      stack.pop_back();
      const auto node_copy = tree.nodes[static_cast<std::size_t>(p.node)];
      const std::size_t n = p.end - p.begin;
      const bool pure =
          node_copy.class_counts[0] == 0 || node_copy.class_counts[1] == 0;
      if (pure || n < cfg_.min_samples_split ||
          (cfg_.max_depth && p.depth >= *cfg_.max_depth)) {
        continue;
      }
      const Candidate split =
          find_split(samples, p.begin, p.end, node_copy, p.node);
      if (!split.valid) continue;

      const float* col = columns_.data() + split.feature * n_rows_;
      const auto mid_it = std::partition(
          samples.begin() + static_cast<std::ptrdiff_t>(p.begin),
          samples.begin() + static_cast<std::ptrdiff_t>(p.end),
          [&](std::size_t s) { return col[s] <= split.threshold; });
      const auto mid = static_cast<std::size_t>(mid_it - samples.begin());

      const auto left_id = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.push_back(make_node(samples, p.begin, mid));
      const auto right_id = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.push_back(make_node(samples, mid, p.end));

      auto& node = tree.nodes[static_cast<std::size_t>(p.node)];
      node.feature = split.feature;
      node.threshold = split.threshold;
      node.left = left_id;
      node.right = right_id;
      node.impurity_decrease =
          static_cast<double>(n) / root_samples_ * split.gain;

      // Right pushed first so the left subtree is numbered first.
      stack.push_back({right_id, mid, p.end, p.depth + 1});
      stack.push_back({left_id, p.begin, mid, p.depth + 1});
    }
    return tree;
  }

 private:
  TreeNode make_node(const std::vector<std::size_t>& samples,
                     std::size_t begin, std::size_t end) const {
    TreeNode node;
    for (std::size_t i = begin; i < end; ++i) ++node.class_counts[y_[samples[i]]];
    node.samples = end - begin;
    return node;
  }

  Candidate find_split(std::vector<std::size_t>& samples, std::size_t begin,
                       std::size_t end, const TreeNode& node,
                       std::int32_t node_id) {
    const std::size_t m = features_.size();
    const double parent = gini2(node.class_counts[0], node.class_counts[1]);
    Candidate best;
    std::size_t evaluated = 0;
    for (std::size_t i = 0; i < m && evaluated < max_features_; ++i) {
      // Lazy Fisher-Yates draw of the next candidate feature.
      const std::size_t j = i + rng_.below(m - i);
      std::swap(features_[i], features_[j]);
      const std::size_t f = features_[i];
      const float* col = columns_.data() + f * n_rows_;

      float lo = std::numeric_limits<float>::infinity();
      float hi = -lo;
      for (std::size_t s = begin; s < end; ++s) {
        lo = std::min(lo, col[samples[s]]);
        hi = std::max(hi, col[samples[s]]);
      }
      if (!(lo < hi)) continue;  // constant at this node
      ++evaluated;

      Candidate c = cfg_.splitter == Splitter::random
                        ? random_split(samples, begin, end, node, col, lo, hi,
                                       f, node_id)
                        : best_split(samples, begin, end, node, col);
      if (!c.valid) continue;
      c.feature = f;
      c.key = keys_[f];
      c.gain = parent - c.gain;  // c.gain held the weighted child impurity
      if (better(c, best)) best = c;
    }
    return best;
  }

  // Child impurity for x <= threshold.
  double child_impurity(std::vector<std::size_t>& samples, std::size_t begin,
                        std::size_t end, const TreeNode& node,
                        const float* col, double threshold) const {
    std::array<std::size_t, 2> left{};
    for (std::size_t s = begin; s < end; ++s) {
      if (col[samples[s]] <= threshold) ++left[y_[samples[s]]];
    }
    const std::size_t nl = left[0] + left[1];
    const std::size_t n = end - begin;
    const std::size_t nr = n - nl;
    const double wl = static_cast<double>(nl) / static_cast<double>(n);
    const double wr = static_cast<double>(nr) / static_cast<double>(n);
    return wl * gini2(left[0], left[1]) +
           wr * gini2(node.class_counts[0] - left[0],
                      node.class_counts[1] - left[1]);
  }

  Candidate random_split(std::vector<std::size_t>& samples, std::size_t begin,
                         std::size_t end, const TreeNode& node,
                         const float* col, float lo, float hi, std::size_t f,
                         std::int32_t node_id) const {
    // The draw is keyed on (tree, node, column contents) so a feature keeps
    // its random stream wherever its column sits in the matrix.
    const std::uint64_t bits = splitmix64(
        tree_seed_ ^
        splitmix64(static_cast<std::uint64_t>(node_id) ^ splitmix64(keys_[f])));
    double u = unit_from_bits(bits);
    if (u == 0.0) u = 0.5;
    double threshold = static_cast<double>(lo) +
                       u * (static_cast<double>(hi) - static_cast<double>(lo));
    if (!(threshold > lo && threshold < hi)) {
      threshold = 0.5 * (static_cast<double>(lo) + static_cast<double>(hi));
    }
    Candidate c;
    c.valid = true;
    c.threshold = threshold;
    c.gain = child_impurity(samples, begin, end, node, col, threshold);
    return c;
  }

  Candidate best_split(std::vector<std::size_t>& samples, std::size_t begin,
                       std::size_t end, const TreeNode& node,
                       const float* col) const {
    std::vector<std::pair<float, std::uint8_t>> vals;
    vals.reserve(end - begin);
    for (std::size_t s = begin; s < end; ++s) {
      vals.emplace_back(col[samples[s]], y_[samples[s]]);
    }
    std::sort(vals.begin(), vals.end());
    const std::size_t n = vals.size();
    std::array<std::size_t, 2> left{};
    Candidate c;
    double best_impurity = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < n; ++i) {
      ++left[vals[i].second];
      if (vals[i].first == vals[i + 1].first) continue;
      const std::size_t nl = i + 1;
      const double wl = static_cast<double>(nl) / static_cast<double>(n);
      const double wr = 1.0 - wl;
      const double imp =
          wl * gini2(left[0], left[1]) +
          wr * gini2(node.class_counts[0] - left[0],
                     node.class_counts[1] - left[1]);
      if (imp < best_impurity) {
        best_impurity = imp;
        double mid = 0.5 * (static_cast<double>(vals[i].first) +
                            static_cast<double>(vals[i + 1].first));
        c.valid = true;
        c.threshold = mid;
        c.gain = imp;
      }
    }
    return c;
  }

  const std::vector<float>& columns_;
  std::size_t n_rows_;
  std::span<const std::uint8_t> y_;
  std::span<const std::uint64_t> keys_;
  const EnsembleConfig& cfg_;
  std::size_t max_features_;
  std::uint64_t tree_seed_;
  Rng rng_;
  std::vector<std::size_t> features_;
  double root_samples_ = 1.0;
};

}  // namespace

Ensemble fit_ensemble(const FloatMatrix& x, std::span<const Label> y,
                      const EnsembleConfig& cfg) {
  const std::size_t n = x.rows();
  const std::size_t m = x.cols();
  if (y.size() != n) throw ShapeError("fit_ensemble: label count mismatch");
  if (n < 2) throw DomainError("fit_ensemble: need at least two observations");
  if (m == 0) throw ShapeError("fit_ensemble: no features");
  cfg.validate(m);
  std::vector<std::uint8_t> labels(n);
  std::array<std::size_t, 2> counts{};
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<std::uint8_t>(y[i]);
    ++counts[labels[i]];
  }
  if (counts[0] == 0 || counts[1] == 0) {
    throw DomainError("fit_ensemble: both classes must be present");
  }

  // Column-major copy plus a content key per column.
  std::vector<float> columns(n * m);
  std::vector<std::uint64_t> keys(m);
  for (std::size_t f = 0; f < m; ++f) {
    std::uint64_t h = 0x6A09E667F3BCC909ULL;
    for (std::size_t i = 0; i < n; ++i) {
      const float v = x(i, f);
      columns[f * n + i] = v;
      h = splitmix64(h ^ std::bit_cast<std::uint32_t>(v));
    }
    keys[f] = h;
  }

  Ensemble ensemble;
  ensemble.n_features = m;
  ensemble.trees.resize(cfg.n_trees);
  parallel_for(cfg.n_trees, cfg.workers, [&](std::size_t t) {
    const std::uint64_t tree_seed =
        splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(t)));
    TreeBuilder builder(columns, n, labels, keys, cfg, tree_seed);
    ensemble.trees[t] = builder.build();
  });
  return ensemble;
}

ImportanceVector importances(const Ensemble& ensemble) {
  const std::size_t m = ensemble.n_features;
  ImportanceVector out{std::vector<double>(m, 0.0)};
  std::vector<double> per_tree(m);
  for (const auto& tree : ensemble.trees) {
    std::fill(per_tree.begin(), per_tree.end(), 0.0);
    double total = 0.0;
    for (const auto& node : tree.nodes) {
      if (node.is_leaf()) continue;
      per_tree[node.feature] += node.impurity_decrease;
      total += node.impurity_decrease;
    }
    if (total <= 0.0) continue;
    for (std::size_t f = 0; f < m; ++f) out.scores[f] += per_tree[f] / total;
  }
  const double sum = std::accumulate(out.scores.begin(), out.scores.end(), 0.0);
  if (sum > 0.0) {
    for (auto& s : out.scores) s /= sum;
  }
  return out;
}

SelectionResult select_cumulative(const ImportanceVector& imp,
                                  double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw ConfigError("selection threshold must lie in (0, 1]");
  }
  long double total = 0.0L;
  for (const double s : imp.scores) {
    if (s < 0.0 || !std::isfinite(s)) {
      throw SelectionError("importances must be finite and nonnegative");
    }
    total += s;
  }
  if (total <= 0.0L) {
    throw SelectionError("all importances are zero; nothing to rank");
  }
  std::vector<std::size_t> order(imp.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return imp.scores[a] > imp.scores[b];
  });
  // Relative slack absorbs rounding in the running sum.
  const long double target =
      static_cast<long double>(threshold) * total * (1.0L - 1e-12L);
  SelectionResult sel;
  sel.threshold = threshold;
  long double cum = 0.0L;
  for (const auto f : order) {
    cum += imp.scores[f];
    sel.selected.push_back(f);
    sel.importance.push_back(imp.scores[f]);
    sel.cumulative.push_back(static_cast<double>(cum / total));
    if (cum >= target) break;
  }
  sel.captured = static_cast<double>(cum / total);
  return sel;
}

FeatureMatrix project(const FeatureMatrix& x,
                      std::span<const std::size_t> columns) {
  if (columns.empty()) throw SelectionError("project: empty feature selection");
  for (const auto c : columns) {
    if (c >= x.cols()) {
      throw BoundsError("project: feature index " + std::to_string(c) +
                        " out of range for " + std::to_string(x.cols()) +
                        " columns");
    }
  }
  FeatureMatrix out;
  out.values = FloatMatrix(x.rows(), columns.size());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto src = x.values.row(r);
    auto dst = out.values.row(r);
    for (std::size_t j = 0; j < columns.size(); ++j) dst[j] = src[columns[j]];
  }
  out.labels = x.labels;
  out.provenance = x.provenance;
  return out;
}

FeatureMatrix project(const FeatureMatrix& x, const SelectionResult& sel) {
  return project(x, sel.selected);
}

void write_selection_report(const std::filesystem::path& path,
                            const SelectionResult& sel) {
  std::ostringstream out;
  out.precision(17);
  out << "# threshold=" << sel.threshold << " captured=" << sel.captured
      << " selected=" << sel.selected.size() << '\n';
  out << "feature_index,importance,cumulative_importance\n";
  for (std::size_t i = 0; i < sel.selected.size(); ++i) {
    out << sel.selected[i] << ',' << sel.importance[i] << ','
        << sel.cumulative[i] << '\n';
  }
  io::atomic_write_text(path, out.str());
}

SelectionResult read_selection_report(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw DataError("selection report '" + path.string() + "' not found");
  }
  const auto text = io::read_text(path);
  SelectionResult sel;
  if (text.rfind("# threshold=", 0) == 0) {
    std::sscanf(text.c_str(), "# threshold=%lf captured=%lf", &sel.threshold,
                &sel.captured);
  }
  const auto lines = io::data_lines(path);
  if (lines.empty() ||
      lines.front() != "feature_index,importance,cumulative_importance") {
    throw ParseError("'" + path.string() + "': missing selection header");
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = io::split_csv_line(lines[i]);
    if (f.size() != 3) {
      throw ParseError("'" + path.string() + "' line " + std::to_string(i + 1) +
                       ": expected 3 fields");
    }
    sel.selected.push_back(std::stoul(f[0]));
    sel.importance.push_back(std::stod(f[1]));
    sel.cumulative.push_back(std::stod(f[2]));
  }
  if (sel.selected.empty()) {
    throw SelectionError("'" + path.string() + "' selects no features");
  }
  return sel;
}

}  // namespace mammo::trees
