#include "mammo/svm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <list>
#include <memory>
#include <numeric>
#include <unordered_map>

#include "mammo/io.hpp"

namespace mammo::svm {

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::rbf: return "rbf";
    case KernelKind::linear: return "linear";
    case KernelKind::polynomial: return "polynomial";
    case KernelKind::sigmoid: return "sigmoid";
  }
  return "?";
}

KernelKind parse_kernel(std::string_view text) {
  if (text == "rbf") return KernelKind::rbf;
  if (text == "linear") return KernelKind::linear;
  if (text == "polynomial" || text == "poly") return KernelKind::polynomial;
  if (text == "sigmoid") return KernelKind::sigmoid;
  throw ConfigError("unknown kernel '" + std::string(text) +
                    "' (expected rbf, linear, polynomial or sigmoid)");
}

std::string_view to_string(FormulationKind kind) {
  return kind == FormulationKind::c_svm ? "c_svm" : "nu_svm";
}

KernelSpec KernelSpec::rbf(std::optional<double> gamma) {
  return {KernelKind::rbf, gamma, 3, 0.0};
}
KernelSpec KernelSpec::linear() { return {KernelKind::linear, std::nullopt, 1, 0.0}; }
KernelSpec KernelSpec::polynomial(int degree, double gamma, double coef0) {
  return {KernelKind::polynomial, gamma, degree, coef0};
}
KernelSpec KernelSpec::sigmoid(double gamma, double coef0) {
  return {KernelKind::sigmoid, gamma, 3, coef0};
}

void KernelSpec::validate() const {
  if (gamma && !(*gamma > 0.0 && std::isfinite(*gamma))) {
    throw ConfigError("kernel gamma must be positive");
  }
  if (kind == KernelKind::polynomial && degree < 1) {
    throw ConfigError("polynomial degree must be >= 1");
  }
  if (!std::isfinite(coef0)) throw ConfigError("kernel coef0 must be finite");
}

KernelSpec resolve_gamma(const KernelSpec& k, const FloatMatrix& x) {
  KernelSpec out = k;
  if (out.gamma || out.kind == KernelKind::linear) return out;
  const auto& v = x.data();
  double mean = 0.0;
  for (const float f : v) mean += f;
  mean /= std::max<std::size_t>(1, v.size());
  double ss = 0.0;
  for (const float f : v) ss += (f - mean) * (f - mean);
  const double var = v.empty() ? 0.0 : ss / static_cast<double>(v.size());
  const double m = static_cast<double>(std::max<std::size_t>(1, x.cols()));
  out.gamma = var > 0.0 ? 1.0 / (m * var) : 1.0 / m;
  return out;
}

namespace {

double dot(std::span<const float> x, std::span<const float> z) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s += static_cast<double>(x[i]) * static_cast<double>(z[i]);
  }
  return s;
}

double required_gamma(const KernelSpec& k) {
  if (!k.gamma) {
    throw ConfigError("kernel gamma unset; resolve it from the data first");
  }
  return *k.gamma;
}

}  // namespace

double kernel_eval(const KernelSpec& k, std::span<const float> x,
                   std::span<const float> z) {
  if (x.size() != z.size()) {
    throw ShapeError("kernel_eval: vectors of length " +
                     std::to_string(x.size()) + " and " +
                     std::to_string(z.size()));
  }
  switch (k.kind) {
    case KernelKind::linear:
      return dot(x, z);
    case KernelKind::rbf: {
      const double g = required_gamma(k);
      double d2 = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(z[i]);
        d2 += d * d;
      }
      return std::exp(-g * d2);
    }
    case KernelKind::polynomial:
      return std::pow(required_gamma(k) * dot(x, z) + k.coef0, k.degree);
    case KernelKind::sigmoid:
      return std::tanh(required_gamma(k) * dot(x, z) + k.coef0);
  }
  throw ConfigError("unknown kernel kind");
}

void SolverConfig::validate() const {
  if (!(kkt_tolerance > 0.0)) throw ConfigError("kkt_tolerance must be > 0");
  if (max_iterations == 0) throw ConfigError("max_iterations must be >= 1");
}

namespace {

using Row = std::shared_ptr<const std::vector<double>>;

// Kernel rows with least-recently-used eviction. Returned rows stay valid
// after eviction because callers share ownership.
class KernelCache {
 public:
  KernelCache(const FloatMatrix& x, const KernelSpec& k, std::size_t capacity)
      : x_(x), k_(k), capacity_(capacity) {}

  Row get(std::size_t i) {
    if (auto it = index_.find(i); it != index_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      return it->second->second;
    }
    auto row = std::make_shared<std::vector<double>>(x_.rows());
    const auto xi = x_.row(i);
    for (std::size_t t = 0; t < x_.rows(); ++t) {
      (*row)[t] = kernel_eval(k_, xi, x_.row(t));
    }
    if (capacity_ == 0) return row;
    if (lru_.size() >= capacity_) {
      index_.erase(lru_.back().first);
      lru_.pop_back();
    }
    lru_.emplace_front(i, row);
    index_[i] = lru_.begin();
    return row;
  }

 private:
  const FloatMatrix& x_;
  const KernelSpec& k_;
  std::size_t capacity_;
  std::list<std::pair<std::size_t, Row>> lru_;
  std::unordered_map<std::size_t,
                     std::list<std::pair<std::size_t, Row>>::iterator>
      index_;
};

constexpr double kTau = 1e-12;

// Minimises 1/2 a'Qa + p'a over 0 <= a <= ub with y'a fixed (and, for the nu
// problem, the per-class sums fixed), Q_ij = y_i y_j K_ij.
class Smo {
 public:
  Smo(const FloatMatrix& x, std::vector<int> y, const KernelSpec& k,
      const SolverConfig& cfg, double ub, bool nu, std::vector<double> alpha,
      std::vector<double> p)
      : n_(x.rows()),
        y_(std::move(y)),
        cache_(x, k, cfg.cache_size),
        cfg_(cfg),
        ub_(ub),
        nu_(nu),
        alpha_(std::move(alpha)),
        p_(std::move(p)),
        grad_(p_),
        qd_(n_) {
    for (std::size_t i = 0; i < n_; ++i) {
      qd_[i] = kernel_eval(k, x.row(i), x.row(i));
    }
    for (std::size_t i = 0; i < n_; ++i) {
      if (alpha_[i] == 0.0) continue;
      const auto ki = cache_.get(i);
      for (std::size_t t = 0; t < n_; ++t) {
        grad_[t] += alpha_[i] * y_[i] * y_[t] * (*ki)[t];
      }
    }
  }

  // Returns false when the iteration budget ran out.
  bool run(double scale) {
    if (cfg_.check_monotone) trace_.push_back(-objective() * scale);
    while (true) {
      std::size_t i = 0, j = 0;
      if (!select(i, j)) return true;
      if (iterations_ >= cfg_.max_iterations) return false;
      ++iterations_;
      step(i, j);
      if (cfg_.check_monotone) {
        const double obj = -objective() * scale;
        const double prev = trace_.back();
        if (obj < prev - 1e-12 * std::max(1.0, std::abs(prev))) {
          throw std::logic_error("SMO dual objective decreased from " +
                                 std::to_string(prev) + " to " +
                                 std::to_string(obj));
        }
        trace_.push_back(obj);
      }
    }
  }

  const std::vector<double>& alpha() const { return alpha_; }
  const std::vector<double>& grad() const { return grad_; }
  double violation() const { return violation_; }
  std::size_t iterations() const { return iterations_; }
  std::vector<double> take_trace() { return std::move(trace_); }

  bool at_upper(std::size_t t) const { return alpha_[t] >= ub_; }
  bool at_lower(std::size_t t) const { return alpha_[t] <= 0.0; }

 private:
  bool in_up(std::size_t t) const {
    return y_[t] > 0 ? !at_upper(t) : !at_lower(t);
  }
  bool in_low(std::size_t t) const {
    return y_[t] > 0 ? !at_lower(t) : !at_upper(t);
  }

  // Maximal violating pair over `allowed` rows.
  template <class Pred>
  double pair(Pred allowed, std::size_t& i, std::size_t& j) const {
    double vmax = -HUGE_VAL, vmin = HUGE_VAL;
    bool found_i = false, found_j = false;
    for (std::size_t t = 0; t < n_; ++t) {
      if (!allowed(t)) continue;
      const double v = -y_[t] * grad_[t];
      if (in_up(t) && v > vmax) {
        vmax = v;
        i = t;
        found_i = true;
      }
      if (in_low(t) && v < vmin) {
        vmin = v;
        j = t;
        found_j = true;
      }
    }
    if (!found_i || !found_j) return -HUGE_VAL;
    return vmax - vmin;
  }

  bool select(std::size_t& i, std::size_t& j) {
    if (!nu_) {
      violation_ = pair([](std::size_t) { return true; }, i, j);
    } else {
      std::size_t ip = 0, jp = 0, in = 0, jn = 0;
      const double vp = pair([&](std::size_t t) { return y_[t] > 0; }, ip, jp);
      const double vn = pair([&](std::size_t t) { return y_[t] < 0; }, in, jn);
      if (vp >= vn) {
        violation_ = vp;
        i = ip;
        j = jp;
      } else {
        violation_ = vn;
        i = in;
        j = jn;
      }
    }
    violation_ = std::max(violation_, 0.0);
    return violation_ >= cfg_.kkt_tolerance && i != j;
  }

  void step(std::size_t i, std::size_t j) {
    const auto ki = cache_.get(i);
    const auto kj = cache_.get(j);
    const double qij = y_[i] * y_[j] * (*ki)[j];
    const double c = ub_;
    const double old_i = alpha_[i], old_j = alpha_[j];
    double& ai = alpha_[i];
    double& aj = alpha_[j];
    if (y_[i] != y_[j]) {
      double quad = qd_[i] + qd_[j] + 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad_[i] - grad_[j]) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0.0) {
        if (aj < 0.0) {
          aj = 0.0;
          ai = diff;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = -diff;
      }
      if (diff > 0.0) {
        if (ai > c) {
          ai = c;
          aj = c - diff;
        }
      } else if (aj > c) {
        aj = c;
        ai = c + diff;
      }
    } else {
      double quad = qd_[i] + qd_[j] - 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad_[i] - grad_[j]) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > c) {
        if (ai > c) {
          ai = c;
          aj = sum - c;
        }
      } else if (aj < 0.0) {
        aj = 0.0;
        ai = sum;
      }
      if (sum > c) {
        if (aj > c) {
          aj = c;
          ai = sum - c;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = sum;
      }
    }
    const double di = (ai - old_i) * y_[i];
    const double dj = (aj - old_j) * y_[j];
    for (std::size_t t = 0; t < n_; ++t) {
      grad_[t] += y_[t] * (di * (*ki)[t] + dj * (*kj)[t]);
    }
  }

  // 1/2 a'Qa + p'a, using Qa = G - p.
  double objective() const {
    double f = 0.0;
    for (std::size_t t = 0; t < n_; ++t) {
      f += alpha_[t] * (0.5 * (grad_[t] - p_[t]) + p_[t]);
    }
    return f;
  }

  std::size_t n_;
  std::vector<int> y_;
  KernelCache cache_;
  const SolverConfig& cfg_;
  double ub_;
  bool nu_;
  std::vector<double> alpha_;
  std::vector<double> p_;
  std::vector<double> grad_;
  std::vector<double> qd_;
  std::vector<double> trace_;
  double violation_ = 0.0;
  std::size_t iterations_ = 0;
};

// Midpoint of [lb, ub], falling back to whichever side is finite.
double interval_mid(double lb, double ub) {
  if (std::isinf(lb)) return ub;
  if (std::isinf(ub)) return lb;
  return 0.5 * (lb + ub);
}

std::vector<int> signs(const FloatMatrix& x, std::span<const Label> y,
                       std::size_t& n_pos) {
  if (y.size() != x.rows()) {
    throw ShapeError("svm: " + std::to_string(y.size()) + " labels for " +
                     std::to_string(x.rows()) + " rows");
  }
  std::vector<int> s(y.size());
  n_pos = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    s[i] = y[i] == Label::mass ? 1 : -1;
    n_pos += s[i] > 0;
  }
  if (n_pos == 0 || n_pos == y.size()) {
    throw DomainError("svm: training data must contain both classes");
  }
  return s;
}

SvmModel assemble(const FloatMatrix& x, const std::vector<int>& y,
                  const std::vector<double>& alpha, double scale,
                  const KernelSpec& k, const Formulation& f) {
  SvmModel m;
  m.kernel = k;
  m.formulation = f;
  m.n_train = x.rows();
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (alpha[i] > 0.0) m.support_indices.push_back(i);
  }
  m.support_vectors = FloatMatrix(m.support_indices.size(), x.cols());
  for (std::size_t s = 0; s < m.support_indices.size(); ++s) {
    const auto i = m.support_indices[s];
    std::copy_n(x.row(i).begin(), x.cols(), m.support_vectors.row(s).begin());
    m.dual_coefs.push_back(alpha[i] * scale * y[i]);
  }
  return m;
}

std::vector<double> scaled(std::vector<double> v, double s) {
  for (auto& a : v) a *= s;
  return v;
}

}  // namespace

SvmModel train_csvm(const FloatMatrix& x, std::span<const Label> y, double c,
                    const KernelSpec& kernel, const SolverConfig& cfg) {
  if (!(c > 0.0 && std::isfinite(c))) throw ConfigError("C must be positive");
  cfg.validate();
  kernel.validate();
  std::size_t n_pos = 0;
  auto ys = signs(x, y, n_pos);
  const KernelSpec k = resolve_gamma(kernel, x);
  const std::size_t n = x.rows();

  Smo smo(x, ys, k, cfg, c, false, std::vector<double>(n, 0.0),
          std::vector<double>(n, -1.0));
  if (!smo.run(1.0)) {
    throw ConvergenceError("C-SVM did not converge within " +
                               std::to_string(cfg.max_iterations) +
                               " iterations",
                           smo.alpha(), smo.violation());
  }
  const auto& a = smo.alpha();
  const auto& g = smo.grad();
  double ub = HUGE_VAL, lb = -HUGE_VAL, sum = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = ys[t] * g[t];
    if (smo.at_upper(t)) {
      if (ys[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (smo.at_lower(t)) {
      if (ys[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      sum += yg;
      ++n_free;
    }
  }
  const double rho = n_free > 0 ? sum / static_cast<double>(n_free)
                                : interval_mid(lb, ub);
  SvmModel m = assemble(x, ys, a, 1.0, k, Formulation::c(c));
  m.bias = -rho;
  m.iterations = smo.iterations();
  m.objective_trace = smo.take_trace();
  return m;
}

SvmModel train_nusvm(const FloatMatrix& x, std::span<const Label> y, double nu,
                     const KernelSpec& kernel, const SolverConfig& cfg) {
  if (!(nu > 0.0 && nu <= 1.0)) throw ConfigError("nu must lie in (0, 1]");
  cfg.validate();
  kernel.validate();
  std::size_t n_pos = 0;
  auto ys = signs(x, y, n_pos);
  const std::size_t n = x.rows();
  const std::size_t n_min = std::min(n_pos, n - n_pos);
  const double nd = static_cast<double>(n);
  if (nu * nd > 2.0 * static_cast<double>(n_min) * (1.0 + 1e-12)) {
    throw InfeasibleNuError(
        "infeasible nu: " + std::to_string(nu) + " exceeds 2*min(N+,N-)/N = " +
        std::to_string(2.0 * static_cast<double>(n_min) / nd));
  }
  const KernelSpec k = resolve_gamma(kernel, x);

  // Solved with box 1 and per-class sums nu*N/2, then rescaled by 1/N.
  std::vector<double> alpha(n, 0.0);
  double left_pos = nu * nd / 2.0, left_neg = left_pos;
  for (std::size_t t = 0; t < n; ++t) {
    double& left = ys[t] > 0 ? left_pos : left_neg;
    alpha[t] = std::min(1.0, left);
    left -= alpha[t];
  }
  Smo smo(x, ys, k, cfg, 1.0, true, std::move(alpha),
          std::vector<double>(n, 0.0));
  const double inv_n = 1.0 / nd;
  if (!smo.run(inv_n * inv_n)) {
    throw ConvergenceError("nu-SVM did not converge within " +
                               std::to_string(cfg.max_iterations) +
                               " iterations",
                           scaled(smo.alpha(), inv_n), smo.violation());
  }
  const auto& a = smo.alpha();
  const auto& g = smo.grad();
  double r[2];
  for (int cls = 0; cls < 2; ++cls) {
    const int s = cls == 0 ? 1 : -1;
    double ub = HUGE_VAL, lb = -HUGE_VAL, sum = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
      if (ys[t] != s) continue;
      if (smo.at_upper(t)) {
        lb = std::max(lb, g[t]);
      } else if (smo.at_lower(t)) {
        ub = std::min(ub, g[t]);
      } else {
        sum += g[t];
        ++n_free;
      }
    }
    r[cls] = n_free > 0 ? sum / static_cast<double>(n_free)
                        : interval_mid(lb, ub);
  }
  SvmModel m = assemble(x, ys, a, inv_n, k, Formulation::nu(nu));
  m.rho = 0.5 * (r[0] + r[1]) * inv_n;
  m.bias = 0.5 * (r[1] - r[0]) * inv_n;
  m.iterations = smo.iterations();
  m.objective_trace = smo.take_trace();
  return m;
}

SvmModel train(const FloatMatrix& x, std::span<const Label> y,
               const Formulation& f, const KernelSpec& kernel,
               const SolverConfig& cfg) {
  return f.kind == FormulationKind::c_svm
             ? train_csvm(x, y, f.value, kernel, cfg)
             : train_nusvm(x, y, f.value, kernel, cfg);
}

double decision_function(const SvmModel& model, std::span<const float> x) {
  if (x.size() != model.support_vectors.cols() &&
      model.support_vectors.rows() > 0) {
    throw ShapeError("decision_function: input has " +
                     std::to_string(x.size()) + " features, model expects " +
                     std::to_string(model.support_vectors.cols()));
  }
  double f = model.bias;
  for (std::size_t s = 0; s < model.dual_coefs.size(); ++s) {
    f += model.dual_coefs[s] *
         kernel_eval(model.kernel, model.support_vectors.row(s), x);
  }
  return f;
}

std::vector<double> decision_values(const SvmModel& model,
                                    const FloatMatrix& x) {
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    out[r] = decision_function(model, x.row(r));
  }
  return out;
}

Label predict(const SvmModel& model, std::span<const float> x) {
  return decision_function(model, x) > 0.0 ? Label::mass : Label::non_mass;
}

double dual_objective(const SvmModel& model) {
  const auto& c = model.dual_coefs;
  double quad = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = 0; j < c.size(); ++j) {
      quad += c[i] * c[j] *
              kernel_eval(model.kernel, model.support_vectors.row(i),
                          model.support_vectors.row(j));
    }
  }
  double lin = 0.0;
  if (model.formulation.kind == FormulationKind::c_svm) {
    for (const double v : c) lin += std::abs(v);
  }
  return lin - 0.5 * quad;
}

namespace {

// Alpha per training row, from the recorded indices when available and by
// matching support vectors to rows otherwise.
std::vector<double> training_alpha(const SvmModel& model, const FloatMatrix& x) {
  std::vector<double> alpha(x.rows(), 0.0);
  const auto& sv = model.support_vectors;
  const bool indexed = model.n_train == x.rows() &&
                       model.support_indices.size() == model.dual_coefs.size();
  std::vector<bool> used(x.rows(), false);
  for (std::size_t s = 0; s < model.dual_coefs.size(); ++s) {
    std::size_t row = x.rows();
    if (indexed) {
      row = model.support_indices[s];
    } else {
      for (std::size_t r = 0; r < x.rows(); ++r) {
        if (!used[r] && std::equal(sv.row(s).begin(), sv.row(s).end(),
                                   x.row(r).begin())) {
          row = r;
          break;
        }
      }
      if (row == x.rows()) {
        throw DataError("check_kkt: support vector " + std::to_string(s) +
                        " is not a training row");
      }
    }
    used[row] = true;
    alpha[row] = std::abs(model.dual_coefs[s]);
  }
  return alpha;
}

}  // namespace

KktReport kkt_report(const SvmModel& model, const FloatMatrix& x,
                     std::span<const Label> y) {
  if (y.size() != x.rows()) throw ShapeError("check_kkt: label count mismatch");
  const auto alpha = training_alpha(model, x);
  const bool nu = model.formulation.kind == FormulationKind::nu_svm;
  const double nd = static_cast<double>(x.rows());
  const double bound = nu ? 1.0 / nd : model.formulation.value;
  const double margin = nu ? model.rho : 1.0;
  const double unit = nu ? nd : 1.0;
  const double eps = 1e-12 * bound;

  KktReport rep;
  rep.point_residuals.resize(x.rows());
  double sum_ay = 0.0, sum_a = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double yi = y[i] == Label::mass ? 1.0 : -1.0;
    const double yf = yi * decision_function(model, x.row(i));
    double res;
    if (alpha[i] <= eps) {
      res = std::max(0.0, margin - yf);
    } else if (alpha[i] >= bound - eps) {
      res = std::max(0.0, yf - margin);
    } else {
      res = std::abs(yf - margin);
    }
    rep.point_residuals[i] = res * unit;
    sum_ay += alpha[i] * yi;
    sum_a += alpha[i];
  }
  rep.equality_residual = std::abs(sum_ay) * unit;
  if (nu) {
    rep.equality_residual = std::max(
        rep.equality_residual, std::abs(sum_a - model.formulation.value) * unit);
  }
  rep.max_violation = rep.equality_residual;
  for (const double r : rep.point_residuals) {
    rep.max_violation = std::max(rep.max_violation, r);
  }
  return rep;
}

double check_kkt(const SvmModel& model, const FloatMatrix& x,
                 std::span<const Label> y) {
  return kkt_report(model, x, y).max_violation;
}

void save_model(const std::filesystem::path& path, const SvmModel& m) {
  io::atomic_write(path, [&](std::ostream& out) {
    out.write("SVMM", 4);
    io::write_le<std::uint32_t>(out, 1);
    io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(m.formulation.kind));
    io::write_le<double>(out, m.formulation.value);
    io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(m.kernel.kind));
    io::write_le<double>(out, m.kernel.gamma.value_or(0.0));
    io::write_le<std::int32_t>(out, m.kernel.degree);
    io::write_le<double>(out, m.kernel.coef0);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.dual_coefs.size()));
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.support_vectors.cols()));
    io::write_le<double>(out, m.bias);
    io::write_le<double>(out, m.rho);
    io::write_le<double>(out, std::span<const double>(m.dual_coefs));
    io::write_le<float>(out, std::span<const float>(m.support_vectors.data()));
  });
}

SvmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path.string() + "'");
  io::expect_magic(in, "SVMM", "model file");
  const auto version = io::read_le<std::uint32_t>(in, "version");
  if (version != 1) {
    throw ParseError("unsupported model version " + std::to_string(version));
  }
  SvmModel m;
  const auto ftag = io::read_le<std::uint8_t>(in, "formulation");
  if (ftag > 1) throw ParseError("bad formulation tag");
  m.formulation.kind = static_cast<FormulationKind>(ftag);
  m.formulation.value = io::read_le<double>(in, "formulation parameter");
  const auto ktag = io::read_le<std::uint8_t>(in, "kernel");
  if (ktag > 3) throw ParseError("bad kernel tag");
  m.kernel.kind = static_cast<KernelKind>(ktag);
  const double gamma = io::read_le<double>(in, "gamma");
  if (gamma > 0.0) m.kernel.gamma = gamma;
  m.kernel.degree = io::read_le<std::int32_t>(in, "degree");
  m.kernel.coef0 = io::read_le<double>(in, "coef0");
  const auto n_sv = io::read_le<std::uint32_t>(in, "n_sv");
  const auto dim = io::read_le<std::uint32_t>(in, "dim");
  m.bias = io::read_le<double>(in, "bias");
  m.rho = io::read_le<double>(in, "rho");
  m.dual_coefs.resize(n_sv);
  io::read_le<double>(in, std::span<double>(m.dual_coefs), "dual coefficients");
  m.support_vectors = FloatMatrix(n_sv, dim);
  io::read_le<float>(in, std::span<float>(m.support_vectors.data()),
                     "support vectors");
  return m;
}

}  // namespace mammo::svm
