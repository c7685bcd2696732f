#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mammo/feature_matrix.hpp"

namespace mammo::svm {

enum class KernelKind : std::uint8_t { rbf = 0, linear = 1, polynomial = 2, sigmoid = 3 };

std::string_view to_string(KernelKind kind);
KernelKind parse_kernel(std::string_view text);

struct KernelSpec {
  KernelKind kind = KernelKind::rbf;
  std::optional<double> gamma;  // unset: 1 / (M * variance of all values)
  int degree = 3;
  double coef0 = 0.0;

  static KernelSpec rbf(std::optional<double> gamma = std::nullopt);
  static KernelSpec linear();
  static KernelSpec polynomial(int degree, double gamma, double coef0);
  static KernelSpec sigmoid(double gamma, double coef0);

  void validate() const;  // throws ConfigError
};

// Copy of `k` with gamma filled from the data when unset.
KernelSpec resolve_gamma(const KernelSpec& k, const FloatMatrix& x);

// Throws ShapeError on length mismatch and ConfigError when gamma is unset
// for a kernel that needs it.
double kernel_eval(const KernelSpec& k, std::span<const float> x,
                   std::span<const float> z);

enum class FormulationKind : std::uint8_t { c_svm = 0, nu_svm = 1 };

struct Formulation {
  FormulationKind kind = FormulationKind::c_svm;
  double value = 1.0;  // C or nu

  static Formulation c(double c) { return {FormulationKind::c_svm, c}; }
  static Formulation nu(double nu) { return {FormulationKind::nu_svm, nu}; }
};

std::string_view to_string(FormulationKind kind);

struct SolverConfig {
  double kkt_tolerance = 1e-3;
  std::size_t max_iterations = 10'000'000;
  // Kernel rows kept in the LRU cache. 0 disables caching.
  std::size_t cache_size = 4096;
  std::uint64_t seed = 0;
  // Verify after every step that the dual objective does not decrease and
  // record it in SvmModel::objective_trace.
  bool check_monotone = false;

  void validate() const;  // throws ConfigError
};

// Raised when nu exceeds 2 * min(N+, N-) / N.
class InfeasibleNuError : public DomainError {
 public:
  using DomainError::DomainError;
};

struct SvmModel {
  FloatMatrix support_vectors;
  std::vector<double> dual_coefs;  // alpha_i * y_i, y = +1 for mass
  double bias = 0.0;
  double rho = 0.0;  // nu-SVM margin, 0 for C-SVM
  KernelSpec kernel;
  Formulation formulation;

  // Set by training only; not persisted.
  std::vector<std::size_t> support_indices;
  std::size_t n_train = 0;
  std::size_t iterations = 0;
  std::vector<double> objective_trace;
};

SvmModel train_csvm(const FloatMatrix& x, std::span<const Label> y, double c,
                    const KernelSpec& kernel, const SolverConfig& cfg = {});
SvmModel train_nusvm(const FloatMatrix& x, std::span<const Label> y, double nu,
                     const KernelSpec& kernel, const SolverConfig& cfg = {});
SvmModel train(const FloatMatrix& x, std::span<const Label> y,
               const Formulation& f, const KernelSpec& kernel,
               const SolverConfig& cfg = {});

double decision_function(const SvmModel& model, std::span<const float> x);
std::vector<double> decision_values(const SvmModel& model, const FloatMatrix& x);
Label predict(const SvmModel& model, std::span<const float> x);

// Dual objective at the model's coefficients: sum alpha - 1/2 a'Qa for C-SVM,
// -1/2 a'Qa for nu-SVM.
double dual_objective(const SvmModel& model);

// Per-point optimality residuals of the model on its training data. For
// nu-SVM the margin is rho and residuals are expressed in units of the box
// bound (multiplied by N).
struct KktReport {
  std::vector<double> point_residuals;
  double equality_residual = 0.0;
  double max_violation = 0.0;
};

KktReport kkt_report(const SvmModel& model, const FloatMatrix& x,
                     std::span<const Label> y);
double check_kkt(const SvmModel& model, const FloatMatrix& x,
                 std::span<const Label> y);

// "SVMM" model file.
void save_model(const std::filesystem::path& path, const SvmModel& model);
SvmModel load_model(const std::filesystem::path& path);

}  // namespace mammo::svm
