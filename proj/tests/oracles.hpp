#pragma once

// Independent reference implementations used only by the tests. None of them
// call into the library's algorithms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mammo/cnn.hpp"
#include "mammo/patchio.hpp"

namespace oracle {
// Patch scan written as a plain while loop, with 1-based counters and the
// column reset inside the row test.
// 1-based loop counters and the column reset inside the row test.
inline std::vector<mammo::PatchOrigin> trace_patch_scan(std::size_t rows,
                                                        std::size_t columns,
                                                        std::size_t patch_height,
                                                        std::size_t patch_width,
                                                        std::size_t stride) {
  std::vector<mammo::PatchOrigin> saved;
  std::size_t initial_row = 1, initial_column = 1;
  for (std::size_t i = 1; i <= rows; ++i) {
    const std::size_t final_row = initial_row + patch_height;
    if (final_row < rows) {
      for (std::size_t j = 1; j <= columns; ++j) {
        const std::size_t final_column = initial_column + patch_width;
        if (final_column < columns) saved.push_back({initial_row, initial_column});
        initial_column = initial_column + stride;
      }
      initial_column = 1;
    }
    initial_row = initial_row + stride;
  }
  return saved;
}

// Six nested loops, double accumulation, zero padding of one pixel.
inline mammo::cnn::Tensor3 direct_conv(const mammo::cnn::Tensor3& in,
                                       const mammo::cnn::WeightTensor& k,
                                       std::span<const float> bias) {
  const std::size_t cin = k.dims[2], cout = k.dims[3];
  mammo::cnn::Tensor3 out(in.height, in.width, cout);
  for (std::size_t y = 0; y < in.height; ++y) {
    for (std::size_t x = 0; x < in.width; ++x) {
      for (std::size_t o = 0; o < cout; ++o) {
        double acc = bias[o];
        for (std::size_t ky = 0; ky < 3; ++ky) {
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const auto sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
            const auto sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
            if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(in.height) ||
                sx >= static_cast<std::ptrdiff_t>(in.width)) {
              continue;
            }
            for (std::size_t c = 0; c < cin; ++c) {
              acc += static_cast<double>(in.at(static_cast<std::size_t>(sy),
                                               static_cast<std::size_t>(sx), c)) *
                     k.data[((ky * 3 + kx) * cin + c) * cout + o];
            }
          }
        }
        out.at(y, x, o) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

// Probability that a random positive outscores a random negative, ties 1/2,
// by enumerating every pair.
inline double mann_whitney(std::span<const double> scores,
                           std::span<const int> positive) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

// Euclidean projection onto {lo <= a <= hi, sum_i w_i a_i = target} with
// w_i in {-1, +1}, by bisection on the multiplier.
inline std::vector<double> project_box_hyperplane(const std::vector<double>& v,
                                                  const std::vector<double>& w,
                                                  double hi, double target) {
  const std::size_t n = v.size();
  auto at = [&](double lambda, std::vector<double>* out) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = std::clamp(v[i] - lambda * w[i], 0.0, hi);
      if (out) (*out)[i] = a;
      s += w[i] * a;
    }
    return s - target;
  };
  double lo_l = -1.0, hi_l = 1.0;
  while (at(lo_l, nullptr) < 0.0) lo_l *= 2.0;
  while (at(hi_l, nullptr) > 0.0) hi_l *= 2.0;
  for (int it = 0; it < 200 && hi_l - lo_l > 0.0; ++it) {
    const double mid = 0.5 * (lo_l + hi_l);
    if (mid == lo_l || mid == hi_l) break;
    if (at(mid, nullptr) > 0.0) lo_l = mid; else hi_l = mid;
  }
  std::vector<double> out(n);
  at(0.5 * (lo_l + hi_l), &out);
  return out;
}

struct QpResult {
  std::vector<double> alpha;
  double objective = 0.0;
  std::size_t iterations = 0;
};

// Accelerated projected gradient ascent with adaptive restart on
//   max  lin * sum(a) - 1/2 a'Qa,  Q_ij = y_i y_j K_ij,
// subject to 0 <= a <= hi and the linear constraints handled by `project`.
template <class Project>
QpResult accelerated_pg(const std::vector<std::vector<double>>& k,
                        const std::vector<int>& y, double lin, Project project,
                        std::vector<double> start, double tol) {
  const std::size_t n = y.size();
  std::vector<std::vector<double>> q(n, std::vector<double>(n));
  double lip = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      q[i][j] = y[i] * y[j] * k[i][j];
      row += std::abs(q[i][j]);
    }
    lip = std::max(lip, row);
  }
  const double step = 1.0 / std::max(lip, 1e-12);
  auto objective = [&](const std::vector<double>& a) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double qa = 0.0;
      for (std::size_t j = 0; j < n; ++j) qa += q[i][j] * a[j];
      f += lin * a[i] - 0.5 * a[i] * qa;
    }
    return f;
  };
  std::vector<double> x = project(start), z = x, cand(n);
  double t = 1.0, fx = objective(x);
  QpResult r;
  for (std::size_t it = 0; it < 2'000'000; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double qa = 0.0;
      for (std::size_t j = 0; j < n; ++j) qa += q[i][j] * z[j];
      cand[i] = z[i] + step * (lin - qa);
    }
    std::vector<double> next = project(cand);
    const double fn = objective(next);
    if (fn < fx) {  // restart momentum
      if (t == 1.0) break;
      z = x;
      t = 1.0;
      continue;
    }
    double move = 0.0;
    for (std::size_t i = 0; i < n; ++i) move = std::max(move, std::abs(next[i] - x[i]));
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = next[i] + (t - 1.0) / tn * (next[i] - x[i]);
    }
    t = tn;
    x = std::move(next);
    fx = fn;
    r.iterations = it + 1;
    if (move < tol) break;
  }
  r.alpha = x;
  r.objective = fx;
  return r;
}

inline QpResult csvm_dual(const std::vector<std::vector<double>>& k,
                          const std::vector<int>& y, double c,
                          double tol = 1e-12) {
  std::vector<double> w(y.begin(), y.end());
  auto project = [&](const std::vector<double>& v) {
    return project_box_hyperplane(v, w, c, 0.0);
  };
  return accelerated_pg(k, y, 1.0, project, std::vector<double>(y.size(), 0.0),
                        tol);
}

// Box 1/N, per-class sums nu/2 (equivalent to y'a = 0 and sum a = nu).
inline QpResult nusvm_dual(const std::vector<std::vector<double>>& k,
                           const std::vector<int>& y, double nu,
                           double tol = 1e-12) {
  const std::size_t n = y.size();
  const double hi = 1.0 / static_cast<double>(n);
  auto project = [&](const std::vector<double>& v) {
    std::vector<double> out(n);
    for (const int cls : {1, -1}) {
      std::vector<double> sub, ones;
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < n; ++i) {
        if (y[i] != cls) continue;
        sub.push_back(v[i]);
        ones.push_back(1.0);
        idx.push_back(i);
      }
      const auto p = project_box_hyperplane(sub, ones, hi, nu / 2.0);
      for (std::size_t t = 0; t < idx.size(); ++t) out[idx[t]] = p[t];
    }
    return out;
  };
  std::vector<double> start(n, nu / static_cast<double>(n));
  return accelerated_pg(k, y, 0.0, project, start, tol);
}

// Bias of a C-SVM dual solution from the KKT conditions: average over
// interior points of y_i - sum_j a_j y_j K_ij, else the midpoint of the
// feasible interval implied by the bounded points.
inline double csvm_bias(const std::vector<std::vector<double>>& k,
                        const std::vector<int>& y,
                        const std::vector<double>& a, double c) {
  const std::size_t n = y.size();
  const double eps = 1e-9 * c;
  double sum = 0.0, lo = -HUGE_VAL, hi = HUGE_VAL;
  std::size_t free = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double wx = 0.0;
    for (std::size_t j = 0; j < n; ++j) wx += a[j] * y[j] * k[j][i];
    const double target = y[i] - wx;  // b making y_i f_i = 1
    if (a[i] > eps && a[i] < c - eps) {
      sum += target;
      ++free;
    } else if (a[i] <= eps) {
      // y_i f_i >= 1
      if (y[i] > 0) lo = std::max(lo, target); else hi = std::min(hi, target);
    } else {
      if (y[i] > 0) hi = std::min(hi, target); else lo = std::max(lo, target);
    }
  }
  if (free) return sum / static_cast<double>(free);
  if (std::isinf(lo)) return hi;
  if (std::isinf(hi)) return lo;
  return 0.5 * (lo + hi);
}

inline double gauss(std::mt19937_64& g) {
  return std::normal_distribution<double>(0.0, 1.0)(g);
}

}  // namespace oracle
