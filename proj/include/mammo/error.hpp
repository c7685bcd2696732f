#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mammo {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Extents or tensor shapes disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

// Inputs are well-formed but outside the mathematical domain of the operation
// (single-class data, infeasible nu, all-zero class counts, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file contents.
class ParseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing or unreadable inputs, absent stage prerequisites.
class DataError : public Error {
 public:
  using Error::Error;
};

class SelectionError : public Error {
 public:
  using Error::Error;
};

class SearchError : public Error {
 public:
  using Error::Error;
};

// Raised when the SMO iteration budget runs out. Carries the last iterate so
// callers can inspect how far the solver got.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> best_alpha,
                   double residual)
      : Error(what), best_alpha_(std::move(best_alpha)), residual_(residual) {}

  const std::vector<double>& best_alpha() const { return best_alpha_; }
  double residual() const { return residual_; }

 private:
  std::vector<double> best_alpha_;
  double residual_;
};

}  // namespace mammo
