#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mammo/feature_matrix.hpp"
#include "mammo/svm.hpp"

namespace mammo::eval {

inline constexpr std::size_t kGroups = 5;

// Row indices of groups A..E, each ascending.
struct FoldGroups {
  std::array<std::vector<std::size_t>, kGroups> rows;

  // Group of every row, or kGroups for rows in no group.
  std::vector<std::size_t> group_of(std::size_t n_rows) const;
};

char group_letter(std::size_t g);
std::size_t parse_group(std::string_view letter);

// Source patches (source_id, origin) of each class are shuffled with `seed`
// and dealt round-robin into A..E; augmented rows follow their source. With
// `by_rows` every row is its own unit instead. Throws DomainError when a class
// has fewer than five units.
FoldGroups partition_groups(std::span<const Label> labels,
                            std::span<const RowProvenance> provenance,
                            std::uint64_t seed, bool by_rows = false);

struct SplitCase {
  std::size_t index = 0;  // 0..4 for cases I..V
  std::array<std::size_t, 3> train_groups{};
  std::size_t validation_group = 0;
  std::size_t test_group = 0;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> validation_rows;
  std::vector<std::size_t> test_rows;

  std::string name() const;  // "I".."V"
};

// Case k trains on groups k, k+1, k+2, validates on k+3 and tests on k+4
// (mod 5).
std::array<SplitCase, kGroups> build_cases(const FoldGroups& groups);

// split.csv: row,group per row of the feature matrix.
void write_split(const std::filesystem::path& path, const FoldGroups& groups,
                 std::size_t n_rows);
FoldGroups read_split(const std::filesystem::path& path, std::size_t n_rows);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = std::numeric_limits<double>::infinity();
};

struct RocCurve {
  std::vector<RocPoint> points;
};

// One point per distinct score, highest first, after the (0,0) origin.
RocCurve roc_curve(std::span<const double> scores, std::span<const Label> labels);
double auc(const RocCurve& curve);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population convention
};

MeanStd summarize(std::span<const double> values);
// "0.989 (+/-0.015)"
std::string format_mean_std(const MeanStd& s, int digits = 3);

// Train/validation/test matrices of one case. Every accessor call is counted
// so callers can prove which partitions a procedure touched.
class CaseData {
 public:
  struct Counts {
    std::size_t train = 0;
    std::size_t validation = 0;
    std::size_t test = 0;
  };

  CaseData(std::string name, FeatureMatrix train, FeatureMatrix validation,
           FeatureMatrix test);
  CaseData(const CaseData& other);
  CaseData& operator=(const CaseData&) = delete;

  static CaseData from_split(const FeatureMatrix& all, const SplitCase& c);

  const std::string& name() const { return name_; }
  const FeatureMatrix& train() const;
  const FeatureMatrix& validation() const;
  const FeatureMatrix& test() const;

  Counts counts() const;
  void reset_counts();

 private:
  std::string name_;
  FeatureMatrix train_, validation_, test_;
  mutable std::atomic<std::size_t> n_train_{0}, n_validation_{0}, n_test_{0};
};

std::vector<CaseData> make_cases(const FeatureMatrix& all,
                                 const std::array<SplitCase, kGroups>& cases);

struct GridSpec {
  std::vector<double> c_values{1e-3, 1e-2, 1e-1, 1, 10, 100, 1000, 1e4};
  std::vector<double> nu_values{0.001, 0.005, 0.01, 0.05, 0.1,
                                0.3,   0.5,   0.7,  0.9};

  const std::vector<double>& values(svm::FormulationKind kind) const;
  void validate() const;  // throws ConfigError
};

struct GridCell {
  double value = 0.0;
  std::vector<double> validation_auc;  // per case
  double mean_auc = 0.0;
  bool ok = true;
  std::string error;  // first failure message when !ok
  std::vector<svm::SvmModel> models;  // kept on request, per case
};

struct GridResult {
  svm::FormulationKind kind = svm::FormulationKind::c_svm;
  std::vector<GridCell> cells;  // ascending parameter
  double best_value = 0.0;
  double best_mean_auc = 0.0;
};

struct SearchOptions {
  std::size_t workers = 1;
  bool keep_models = false;
};

// Trains every (parameter, case) cell on the case's training rows and scores
// its validation rows. Best is the highest mean validation AUC, ties to the
// smaller parameter. Cells whose solver fails are marked and skipped; throws
// SearchError when every cell fails.
GridResult grid_search(const std::vector<CaseData>& cases,
                       svm::FormulationKind kind,
                       std::span<const double> values,
                       const svm::KernelSpec& kernel,
                       const svm::SolverConfig& solver,
                       const SearchOptions& opts = {});

struct CaseOutcome {
  std::string name;
  double auc = 0.0;
  RocCurve roc;
};

struct CvReport {
  svm::Formulation formulation;
  std::vector<CaseOutcome> cases;
  MeanStd summary;

  std::vector<double> aucs() const;
};

// Builds a report from per-case test AUCs (used for aggregation checks).
CvReport aggregate(const svm::Formulation& f, std::span<const double> aucs);

// Retrains each case with the chosen parameter on its training rows and
// scores its test rows.
CvReport evaluate_cases(const svm::Formulation& best,
                        const std::vector<CaseData>& cases,
                        const svm::KernelSpec& kernel,
                        const svm::SolverConfig& solver,
                        std::size_t workers = 1);

void write_grid(const std::filesystem::path& path,
                std::span<const GridResult> results);
std::vector<GridResult> read_grid(const std::filesystem::path& path);

void write_report(const std::filesystem::path& path, const CvReport& report);
CvReport read_report(const std::filesystem::path& path);
void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve);
void write_roc_svg(const std::filesystem::path& path, const CvReport& report);

}  // namespace mammo::eval
