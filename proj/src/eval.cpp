#include "mammo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include "mammo/io.hpp"
#include "mammo/parallel.hpp"
#include "mammo/rng.hpp"

namespace mammo::eval {

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_num(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return HUGE_VAL;
  if (s == "-inf") return -HUGE_VAL;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) {
    throw ParseError("not a number: '" + s + "'");
  }
  return v;
}

constexpr const char* kCaseNames[kGroups] = {"I", "II", "III", "IV", "V"};

}  // namespace

std::vector<std::size_t> FoldGroups::group_of(std::size_t n_rows) const {
  std::vector<std::size_t> out(n_rows, kGroups);
  for (std::size_t g = 0; g < kGroups; ++g) {
    for (const auto r : rows[g]) {
      if (r >= n_rows) throw BoundsError("group row index out of range");
      out[r] = g;
    }
  }
  return out;
}

char group_letter(std::size_t g) { return static_cast<char>('A' + g); }

std::size_t parse_group(std::string_view letter) {
  if (letter.size() == 1 && letter[0] >= 'A' && letter[0] <= 'E') {
    return static_cast<std::size_t>(letter[0] - 'A');
  }
  throw ParseError("bad group letter '" + std::string(letter) + "'");
}

FoldGroups partition_groups(std::span<const Label> labels,
                            std::span<const RowProvenance> provenance,
                            std::uint64_t seed, bool by_rows) {
  const std::size_t n = labels.size();
  if (provenance.size() != n) {
    throw ShapeError("partition_groups: provenance and label counts differ");
  }
  using Key = std::tuple<std::string, std::size_t, std::size_t, std::size_t>;
  // Units per class, keyed so that ordering does not depend on row order.
  std::array<std::map<Key, std::vector<std::size_t>>, 2> units;
  for (std::size_t r = 0; r < n; ++r) {
    const auto& p = provenance[r];
    Key key = by_rows ? Key{"", 0, 0, r}
                      : Key{p.source_id, p.origin.row, p.origin.col, 0};
    const auto cls = static_cast<std::size_t>(labels[r]);
    const auto other = 1 - cls;
    if (!by_rows && units[other].contains(key)) {
      throw DataError("source patch '" + p.source_id + "' at (" +
                      std::to_string(p.origin.row) + "," +
                      std::to_string(p.origin.col) +
                      ") carries both labels");
    }
    units[cls][key].push_back(r);
  }
  FoldGroups groups;
  for (std::size_t cls = 0; cls < 2; ++cls) {
    if (units[cls].size() < kGroups) {
      throw DomainError("partition_groups: class " +
                        std::string(to_string(static_cast<Label>(cls))) +
                        " has " + std::to_string(units[cls].size()) +
                        " source patches, need at least 5");
    }
    std::vector<const std::vector<std::size_t>*> order;
    for (const auto& [key, rows] : units[cls]) order.push_back(&rows);
    Rng rng(splitmix64(seed ^ (0xC1A55ULL + cls)));
    rng.shuffle(std::span(order));
    for (std::size_t u = 0; u < order.size(); ++u) {
      auto& g = groups.rows[u % kGroups];
      g.insert(g.end(), order[u]->begin(), order[u]->end());
    }
  }
  for (auto& g : groups.rows) std::sort(g.begin(), g.end());
  return groups;
}

std::string SplitCase::name() const { return kCaseNames[index]; }

std::array<SplitCase, kGroups> build_cases(const FoldGroups& groups) {
  std::array<SplitCase, kGroups> cases;
  for (std::size_t k = 0; k < kGroups; ++k) {
    auto& c = cases[k];
    c.index = k;
    for (std::size_t t = 0; t < 3; ++t) {
      c.train_groups[t] = (k + t) % kGroups;
      const auto& rows = groups.rows[c.train_groups[t]];
      c.train_rows.insert(c.train_rows.end(), rows.begin(), rows.end());
    }
    std::sort(c.train_rows.begin(), c.train_rows.end());
    c.validation_group = (k + 3) % kGroups;
    c.test_group = (k + 4) % kGroups;
    c.validation_rows = groups.rows[c.validation_group];
    c.test_rows = groups.rows[c.test_group];
  }
  return cases;
}

void write_split(const std::filesystem::path& path, const FoldGroups& groups,
                 std::size_t n_rows) {
  const auto g = groups.group_of(n_rows);
  std::string out = "row,group\n";
  for (std::size_t r = 0; r < n_rows; ++r) {
    if (g[r] == kGroups) {
      throw DataError("split: row " + std::to_string(r) + " has no group");
    }
    out += std::to_string(r) + ',' + group_letter(g[r]) + '\n';
  }
  io::atomic_write_text(path, out);
}

FoldGroups read_split(const std::filesystem::path& path, std::size_t n_rows) {
  if (!std::filesystem::exists(path)) {
    throw DataError("split file '" + path.string() + "' not found");
  }
  const auto lines = io::data_lines(path);
  if (lines.empty() || lines.front() != "row,group") {
    throw ParseError("'" + path.string() + "': missing split header");
  }
  if (lines.size() - 1 != n_rows) {
    throw DataError("split file covers " + std::to_string(lines.size() - 1) +
                    " rows but the feature matrix has " +
                    std::to_string(n_rows));
  }
  FoldGroups groups;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = io::split_csv_line(lines[i]);
    if (f.size() != 2 || std::stoul(f[0]) != i - 1) {
      throw ParseError("'" + path.string() + "' line " + std::to_string(i + 1) +
                       ": malformed split row");
    }
    groups.rows[parse_group(f[1])].push_back(i - 1);
  }
  return groups;
}

RocCurve roc_curve(std::span<const double> scores,
                   std::span<const Label> labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("roc_curve: score and label counts differ");
  }
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw DomainError("roc_curve: non-finite score");
    pos += labels[i] == Label::mass;
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) {
    throw DomainError("roc_curve: both classes are required");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      if (labels[order[i]] == Label::mass) ++tp; else ++fp;
    }
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                            static_cast<double>(tp) / static_cast<double>(pos),
                            s});
  }
  return curve;
}

double auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return area;
}

MeanStd summarize(std::span<const double> values) {
  if (values.empty()) throw DomainError("summarize: no values");
  const double n = static_cast<double>(values.size());
  MeanStd s;
  for (const double v : values) s.mean += v;
  s.mean /= n;
  double ss = 0.0;
  for (const double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / n);
  return s;
}

std::string format_mean_std(const MeanStd& s, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f (+/-%.*f)", digits, s.mean, digits,
                s.std);
  return buf;
}

CaseData::CaseData(std::string name, FeatureMatrix train,
                   FeatureMatrix validation, FeatureMatrix test)
    : name_(std::move(name)),
      train_(std::move(train)),
      validation_(std::move(validation)),
      test_(std::move(test)) {}

CaseData::CaseData(const CaseData& other)
    : name_(other.name_),
      train_(other.train_),
      validation_(other.validation_),
      test_(other.test_),
      n_train_(other.n_train_.load()),
      n_validation_(other.n_validation_.load()),
      n_test_(other.n_test_.load()) {}

namespace {

FeatureMatrix take_rows(const FeatureMatrix& all,
                        const std::vector<std::size_t>& rows) {
  FeatureMatrix out;
  out.values = FloatMatrix(rows.size(), all.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = all.values.row(rows[i]);
    std::copy(src.begin(), src.end(), out.values.row(i).begin());
    out.labels.push_back(all.labels[rows[i]]);
    if (!all.provenance.empty()) out.provenance.push_back(all.provenance[rows[i]]);
  }
  return out;
}

}  // namespace

CaseData CaseData::from_split(const FeatureMatrix& all, const SplitCase& c) {
  return CaseData(c.name(), take_rows(all, c.train_rows),
                  take_rows(all, c.validation_rows),
                  take_rows(all, c.test_rows));
}

const FeatureMatrix& CaseData::train() const {
  ++n_train_;
  return train_;
}
const FeatureMatrix& CaseData::validation() const {
  ++n_validation_;
  return validation_;
}
const FeatureMatrix& CaseData::test() const {
  ++n_test_;
  return test_;
}

CaseData::Counts CaseData::counts() const {
  return {n_train_.load(), n_validation_.load(), n_test_.load()};
}

void CaseData::reset_counts() {
  n_train_ = 0;
  n_validation_ = 0;
  n_test_ = 0;
}

std::vector<CaseData> make_cases(const FeatureMatrix& all,
                                 const std::array<SplitCase, kGroups>& cases) {
  std::vector<CaseData> out;
  out.reserve(kGroups);
  for (const auto& c : cases) out.push_back(CaseData::from_split(all, c));
  return out;
}

const std::vector<double>& GridSpec::values(svm::FormulationKind kind) const {
  return kind == svm::FormulationKind::c_svm ? c_values : nu_values;
}

void GridSpec::validate() const {
  if (c_values.empty() || nu_values.empty()) {
    throw ConfigError("parameter grids must be nonempty");
  }
  for (const double c : c_values) {
    if (!(c > 0.0 && std::isfinite(c))) throw ConfigError("grid C values must be > 0");
  }
  for (const double nu : nu_values) {
    if (!(nu > 0.0 && nu < 1.0)) throw ConfigError("grid nu values must lie in (0, 1)");
  }
}

namespace {

void pick_best(GridResult& r) {
  bool any = false;
  for (const auto& cell : r.cells) {
    if (!cell.ok) continue;
    if (!any || cell.mean_auc > r.best_mean_auc) {
      r.best_value = cell.value;
      r.best_mean_auc = cell.mean_auc;
      any = true;
    }
  }
  if (!any) {
    throw SearchError(std::string("every ") +
                      std::string(svm::to_string(r.kind)) +
                      " grid cell failed to train");
  }
}

double case_auc(const svm::SvmModel& m, const FeatureMatrix& x) {
  const auto scores = svm::decision_values(m, x.values);
  return auc(roc_curve(scores, x.labels));
}

}  // namespace

GridResult grid_search(const std::vector<CaseData>& cases,
                       svm::FormulationKind kind,
                       std::span<const double> values,
                       const svm::KernelSpec& kernel,
                       const svm::SolverConfig& solver,
                       const SearchOptions& opts) {
  if (values.empty()) throw ConfigError("grid_search: empty parameter grid");
  if (cases.empty()) throw ConfigError("grid_search: no cases");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());

  GridResult r;
  r.kind = kind;
  const std::size_t n_cases = cases.size();
  r.cells.resize(sorted.size());
  std::vector<std::string> errors(sorted.size() * n_cases);
  for (std::size_t v = 0; v < sorted.size(); ++v) {
    r.cells[v].value = sorted[v];
    r.cells[v].validation_auc.assign(n_cases, std::nan(""));
    if (opts.keep_models) r.cells[v].models.resize(n_cases);
  }
  parallel_for(sorted.size() * n_cases, opts.workers, [&](std::size_t job) {
    const std::size_t v = job / n_cases;
    const std::size_t k = job % n_cases;
    const auto& train = cases[k].train();
    try {
      auto model = svm::train(train.values, train.labels,
                              {kind, sorted[v]}, kernel, solver);
      r.cells[v].validation_auc[k] = case_auc(model, cases[k].validation());
      if (opts.keep_models) r.cells[v].models[k] = std::move(model);
    } catch (const ConvergenceError& e) {
      errors[job] = e.what();
    } catch (const svm::InfeasibleNuError& e) {
      errors[job] = e.what();
    }
  });
  for (std::size_t v = 0; v < sorted.size(); ++v) {
    auto& cell = r.cells[v];
    for (std::size_t k = 0; k < n_cases; ++k) {
      if (!errors[v * n_cases + k].empty() && cell.ok) {
        cell.ok = false;
        cell.error = "case " + cases[k].name() + ": " + errors[v * n_cases + k];
      }
    }
    if (cell.ok) {
      cell.mean_auc = summarize(cell.validation_auc).mean;
    } else {
      cell.mean_auc = std::nan("");
    }
  }
  pick_best(r);
  return r;
}

std::vector<double> CvReport::aucs() const {
  std::vector<double> out;
  for (const auto& c : cases) out.push_back(c.auc);
  return out;
}

CvReport aggregate(const svm::Formulation& f, std::span<const double> aucs) {
  CvReport rep;
  rep.formulation = f;
  for (std::size_t k = 0; k < aucs.size(); ++k) {
    rep.cases.push_back({k < kGroups ? kCaseNames[k] : std::to_string(k + 1),
                         aucs[k], {}});
  }
  rep.summary = summarize(aucs);
  return rep;
}

CvReport evaluate_cases(const svm::Formulation& best,
                        const std::vector<CaseData>& cases,
                        const svm::KernelSpec& kernel,
                        const svm::SolverConfig& solver, std::size_t workers) {
  CvReport rep;
  rep.formulation = best;
  rep.cases.resize(cases.size());
  parallel_for(cases.size(), workers, [&](std::size_t k) {
    const auto& train = cases[k].train();
    const auto model =
        svm::train(train.values, train.labels, best, kernel, solver);
    const auto& test = cases[k].test();
    const auto scores = svm::decision_values(model, test.values);
    auto& out = rep.cases[k];
    out.name = cases[k].name();
    out.roc = roc_curve(scores, test.labels);
    out.auc = auc(out.roc);
  });
  rep.summary = summarize(rep.aucs());
  return rep;
}

void write_grid(const std::filesystem::path& path,
                std::span<const GridResult> results) {
  std::ostringstream out;
  out << "formulation,parameter";
  const std::size_t n_cases =
      results.empty() || results.front().cells.empty()
          ? kGroups
          : results.front().cells.front().validation_auc.size();
  for (std::size_t k = 0; k < n_cases; ++k) out << ",auc_" << kCaseNames[k];
  out << ",mean_auc,status,best\n";
  for (const auto& r : results) {
    for (const auto& cell : r.cells) {
      out << svm::to_string(r.kind) << ',' << num(cell.value);
      for (const double a : cell.validation_auc) out << ',' << num(a);
      std::string status = cell.ok ? "ok" : "failed: " + cell.error;
      std::replace(status.begin(), status.end(), ',', ';');
      out << ',' << num(cell.mean_auc) << ',' << status << ','
          << (cell.value == r.best_value ? 1 : 0) << '\n';
    }
  }
  io::atomic_write_text(path, out.str());
}

std::vector<GridResult> read_grid(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw DataError("grid table '" + path.string() + "' not found");
  }
  const auto lines = io::data_lines(path);
  if (lines.empty() || lines.front().rfind("formulation,parameter", 0) != 0) {
    throw ParseError("'" + path.string() + "': missing grid header");
  }
  const std::size_t n_cols = io::split_csv_line(lines.front()).size();
  const std::size_t n_cases = n_cols - 5;
  std::vector<GridResult> results;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = io::split_csv_line(lines[i]);
    if (f.size() != n_cols) {
      throw ParseError("'" + path.string() + "' line " + std::to_string(i + 1) +
                       ": expected " + std::to_string(n_cols) + " fields");
    }
    const auto kind = f[0] == "c_svm" ? svm::FormulationKind::c_svm
                                      : svm::FormulationKind::nu_svm;
    if (f[0] != "c_svm" && f[0] != "nu_svm") {
      throw ParseError("unknown formulation '" + f[0] + "'");
    }
    if (results.empty() || results.back().kind != kind) {
      results.push_back({});
      results.back().kind = kind;
    }
    GridCell cell;
    cell.value = parse_num(f[1]);
    for (std::size_t k = 0; k < n_cases; ++k) {
      cell.validation_auc.push_back(parse_num(f[2 + k]));
    }
    cell.mean_auc = parse_num(f[2 + n_cases]);
    cell.ok = f[3 + n_cases] == "ok";
    if (!cell.ok) cell.error = f[3 + n_cases];
    results.back().cells.push_back(std::move(cell));
  }
  for (auto& r : results) pick_best(r);
  return results;
}

void write_report(const std::filesystem::path& path, const CvReport& report) {
  std::ostringstream out;
  out << "case,auc\n";
  for (const auto& c : report.cases) out << c.name << ',' << num(c.auc) << '\n';
  out << "mean," << num(report.summary.mean) << '\n';
  out << "std," << num(report.summary.std) << '\n';
  out << "formulation," << svm::to_string(report.formulation.kind) << '\n';
  out << "parameter," << num(report.formulation.value) << '\n';
  out << "summary," << format_mean_std(report.summary) << '\n';
  io::atomic_write_text(path, out.str());
}

CvReport read_report(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw DataError("report '" + path.string() + "' not found");
  }
  const auto lines = io::data_lines(path);
  if (lines.empty() || lines.front() != "case,auc") {
    throw ParseError("'" + path.string() + "': missing report header");
  }
  CvReport rep;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = io::split_csv_line(lines[i]);
    if (f.size() != 2) throw ParseError("malformed report line " + lines[i]);
    if (f[0] == "mean") {
      rep.summary.mean = parse_num(f[1]);
    } else if (f[0] == "std") {
      rep.summary.std = parse_num(f[1]);
    } else if (f[0] == "formulation") {
      rep.formulation.kind = f[1] == "nu_svm" ? svm::FormulationKind::nu_svm
                                              : svm::FormulationKind::c_svm;
    } else if (f[0] == "parameter") {
      rep.formulation.value = parse_num(f[1]);
    } else if (f[0] != "summary") {
      rep.cases.push_back({f[0], parse_num(f[1]), {}});
    }
  }
  return rep;
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve) {
  std::ostringstream out;
  out << "fpr,tpr,threshold\n";
  for (const auto& p : curve.points) {
    out << num(p.fpr) << ',' << num(p.tpr) << ',' << num(p.threshold) << '\n';
  }
  io::atomic_write_text(path, out.str());
}

void write_roc_svg(const std::filesystem::path& path, const CvReport& report) {
  constexpr double kLeft = 60, kTop = 20, kSize = 400;
  constexpr const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c",
                                     "#d62728", "#9467bd"};
  auto px = [](double fpr) { return kLeft + fpr * kSize; };
  auto py = [](double tpr) { return kTop + (1.0 - tpr) * kSize; };
  char buf[128];
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" "
         "height=\"480\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kSize
      << "\" height=\"" << kSize
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1)
      << "\" y2=\"" << py(1)
      << "\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = t / 5.0;
    std::snprintf(buf, sizeof buf, "%.1f", v);
    out << "<text x=\"" << px(v) << "\" y=\"" << kTop + kSize + 16
        << "\" text-anchor=\"middle\">" << buf << "</text>\n";
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(v) + 4
        << "\" text-anchor=\"end\">" << buf << "</text>\n";
  }
  out << "<text x=\"" << px(0.5) << "\" y=\"" << kTop + kSize + 36
      << "\" text-anchor=\"middle\">False positive rate</text>\n";
  out << "<text transform=\"translate(16," << py(0.5)
      << ") rotate(-90)\" text-anchor=\"middle\">True positive rate</text>\n";
  for (std::size_t k = 0; k < report.cases.size(); ++k) {
    const auto& c = report.cases[k];
    const char* color = kColors[k % 5];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : c.roc.points) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(p.fpr), py(p.tpr));
      out << buf;
    }
    out << "\"/>\n";
    std::snprintf(buf, sizeof buf, "Case %s (AUC %.4f)", c.name.c_str(), c.auc);
    const double ly = kTop + 20 + 18.0 * static_cast<double>(k);
    out << "<line x1=\"475\" y1=\"" << ly - 4 << "\" x2=\"495\" y2=\"" << ly - 4
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"500\" y=\"" << ly << "\">" << buf << "</text>\n";
  }
  out << "<text x=\"475\" y=\"" << kTop + 20 + 18.0 * 5.5 << "\">"
      << svm::to_string(report.formulation.kind) << ' '
      << format_mean_std(report.summary) << "</text>\n";
  out << "</svg>\n";
  io::atomic_write_text(path, out.str());
}

}  // namespace mammo::eval
