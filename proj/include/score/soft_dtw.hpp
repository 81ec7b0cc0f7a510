// Copyright 2026 The SCORE Toolkit Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "score/core.hpp"

namespace score {

enum class DistanceKind { kSquaredEuclidean };

struct SoftDtwConfig {
  double gamma = 0.1;  // soft-min smoothing factor
  DistanceKind distance = DistanceKind::kSquaredEuclidean;

  void validate() const {
    if (!(gamma > 0.0)) throw std::invalid_argument("SoftDtwConfig: gamma must be > 0");
  }
};

// Sentinel standing in for +inf in DP boundaries. Large enough that the
// stability shift makes its exp() contribution underflow to exactly zero.
inline constexpr double kDtwInf = 1e30;

/// Soft minimum: -gamma * ln(sum_i exp(-a_i / gamma)), computed with the
/// minimum subtracted before exponentiation. Always <= min(values).
inline double soft_min(const std::vector<double>& values, double gamma) {
  if (values.empty()) throw std::invalid_argument("soft_min: empty input");
  if (!(gamma > 0.0)) throw std::invalid_argument("soft_min: gamma must be > 0");
  const double lo = *std::min_element(values.begin(), values.end());
  double sum = 0.0;
  for (double a : values) sum += std::exp((lo - a) / gamma);
  return lo - gamma * std::log(sum);
}

namespace detail {

inline double soft_min3(double a, double b, double c, double gamma) {
  const double lo = std::min(a, std::min(b, c));
  const double sum =
      std::exp((lo - a) / gamma) + std::exp((lo - b) / gamma) + std::exp((lo - c) / gamma);
  return lo - gamma * std::log(sum);
}

inline double sq_euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

inline void check_pair(const FeatureSequence& x, const FeatureSequence& y, const char* op) {
  if (x.frames == 0 || y.frames == 0) {
    throw std::invalid_argument(std::string(op) + ": empty sequence");
  }
  if (x.dim != y.dim) {
    throw std::invalid_argument(std::string(op) + ": feature dims differ (" +
                                std::to_string(x.dim) + " vs " + std::to_string(y.dim) + ")");
  }
  if (!x.all_finite() || !y.all_finite()) {
    throw std::invalid_argument(std::string(op) + ": non-finite value in input");
  }
}

// Pairwise squared-Euclidean costs, 1-based into an (m+1) x (n+1) table.
inline Matrix cost_matrix(const FeatureSequence& x, const FeatureSequence& y) {
  Matrix delta(x.frames + 1, y.frames + 1, 0.0);
  for (std::size_t i = 1; i <= x.frames; ++i) {
    for (std::size_t j = 1; j <= y.frames; ++j) {
      delta.at(i, j) = sq_euclidean(x.frame(i - 1), y.frame(j - 1));
    }
  }
  return delta;
}

// Forward accumulants R: R[0][0] = 0, first row/column +inf, and
// R[i][j] = delta[i][j] + softmin(R[i-1][j], R[i][j-1], R[i-1][j-1]).
inline Matrix forward_table(const Matrix& delta, double gamma) {
  const std::size_t m = delta.rows - 1;
  const std::size_t n = delta.cols - 1;
  Matrix r(m + 1, n + 1, kDtwInf);
  r.at(0, 0) = 0.0;
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      r.at(i, j) = delta.at(i, j) +
                   soft_min3(r.at(i - 1, j), r.at(i, j - 1), r.at(i - 1, j - 1), gamma);
    }
  }
  return r;
}

}  // namespace detail

/// Result of a soft-DTW evaluation with analytic gradients.
struct SoftDtwResult {
  double value = 0.0;
  Matrix dp_table;            // (m+1) x (n+1) forward accumulants R
  Matrix grad_x;              // m x D, d(value)/dX
  Matrix grad_y;              // n x D, d(value)/dX'
  Matrix expected_alignment;  // (m+1) x (n+1); cells [1..m][1..n] hold E
};

/// Soft-DTW between X (m x D) and X' (n x D): the soft minimum over all
/// monotonic alignment paths of the summed squared-Euclidean frame costs.
/// Gradients come from the backward expected-alignment recursion, where the
/// weight of the edge into successor (i',j') is
/// exp((R[i'][j'] - R[i][j] - delta[i'][j']) / gamma).
inline SoftDtwResult soft_dtw(const FeatureSequence& x, const FeatureSequence& y,
                              const SoftDtwConfig& cfg) {
  cfg.validate();
  detail::check_pair(x, y, "soft_dtw");
  const std::size_t m = x.frames;
  const std::size_t n = y.frames;
  const double gamma = cfg.gamma;

  const Matrix delta = detail::cost_matrix(x, y);
  Matrix r = detail::forward_table(delta, gamma);

  Matrix e(m + 1, n + 1, 0.0);
  e.at(m, n) = 1.0;
  for (std::size_t i = m; i >= 1; --i) {
    for (std::size_t j = n; j >= 1; --j) {
      if (i == m && j == n) continue;
      double acc = 0.0;
      if (i + 1 <= m) {
        acc += std::exp((r.at(i + 1, j) - r.at(i, j) - delta.at(i + 1, j)) / gamma) *
               e.at(i + 1, j);
      }
      if (j + 1 <= n) {
        acc += std::exp((r.at(i, j + 1) - r.at(i, j) - delta.at(i, j + 1)) / gamma) *
               e.at(i, j + 1);
      }
      if (i + 1 <= m && j + 1 <= n) {
        acc += std::exp((r.at(i + 1, j + 1) - r.at(i, j) - delta.at(i + 1, j + 1)) / gamma) *
               e.at(i + 1, j + 1);
      }
      e.at(i, j) = acc;
    }
  }

  SoftDtwResult res;
  res.value = r.at(m, n);
  res.grad_x = Matrix(m, x.dim, 0.0);
  res.grad_y = Matrix(n, y.dim, 0.0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      const double w = e.at(i, j);
      if (w == 0.0) continue;
      for (std::size_t d = 0; d < x.dim; ++d) {
        const double g = 2.0 * w * (x.at(i - 1, d) - y.at(j - 1, d));
        res.grad_x.at(i - 1, d) += g;
        res.grad_y.at(j - 1, d) -= g;
      }
    }
  }
  res.dp_table = std::move(r);
  res.expected_alignment = std::move(e);
  return res;
}

/// Forward pass only; cheaper when gradients are not needed.
inline double soft_dtw_value(const FeatureSequence& x, const FeatureSequence& y,
                             const SoftDtwConfig& cfg) {
  cfg.validate();
  detail::check_pair(x, y, "soft_dtw");
  const Matrix delta = detail::cost_matrix(x, y);
  const Matrix r = detail::forward_table(delta, cfg.gamma);
  return r.at(x.frames, y.frames);
}

/// All monotonic paths from (1,1) to (m,n). Exponential in m+n; callers
/// should keep m, n small.
inline std::vector<AlignmentPath> enumerate_alignment_paths(int m, int n) {
  if (m < 1 || n < 1) throw std::invalid_argument("enumerate_alignment_paths: need m, n >= 1");
  std::vector<AlignmentPath> paths;
  AlignmentPath current;
  current.steps.push_back({1, 1});
  const auto extend = [&](auto&& self, int i, int j) -> void {
    if (i == m && j == n) {
      paths.push_back(current);
      return;
    }
    static constexpr int kSteps[3][2] = {{1, 0}, {0, 1}, {1, 1}};
    for (const auto& s : kSteps) {
      const int ni = i + s[0];
      const int nj = j + s[1];
      if (ni > m || nj > n) continue;
      current.steps.push_back({ni, nj});
      self(self, ni, nj);
      current.steps.pop_back();
    }
  };
  extend(extend, 1, 1);
  return paths;
}

/// Direct evaluation of the soft-DTW definition: enumerate every alignment
/// path, sum frame costs along each, and take the soft minimum of the path
/// costs. Test oracle for the DP implementation.
inline double brute_force_soft_dtw(const FeatureSequence& x, const FeatureSequence& y,
                                   const SoftDtwConfig& cfg) {
  cfg.validate();
  detail::check_pair(x, y, "brute_force_soft_dtw");
  if (x.frames > 8 || y.frames > 8) {
    throw std::invalid_argument("brute_force_soft_dtw: sequences too long (m, n <= 8)");
  }
  const Matrix delta = detail::cost_matrix(x, y);
  const auto paths =
      enumerate_alignment_paths(static_cast<int>(x.frames), static_cast<int>(y.frames));
  std::vector<double> costs;
  costs.reserve(paths.size());
  for (const auto& path : paths) {
    double c = 0.0;
    for (const auto& [i, j] : path.steps) c += delta.at(i, j);
    costs.push_back(c);
  }
  return soft_min(costs, cfg.gamma);
}

/// Classic DTW: min-accumulation over the same step set. Returns the optimal
/// cost and one optimal path; ties during backtracking prefer the diagonal,
/// then the vertical (i-1, j), then the horizontal predecessor.
inline std::pair<double, AlignmentPath> hard_dtw(const FeatureSequence& x,
                                                 const FeatureSequence& y) {
  detail::check_pair(x, y, "hard_dtw");
  const std::size_t m = x.frames;
  const std::size_t n = y.frames;
  const Matrix delta = detail::cost_matrix(x, y);

  Matrix r(m + 1, n + 1, kDtwInf);
  r.at(0, 0) = 0.0;
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      const double best =
          std::min(r.at(i - 1, j - 1), std::min(r.at(i - 1, j), r.at(i, j - 1)));
      r.at(i, j) = delta.at(i, j) + best;
    }
  }

  AlignmentPath path;
  std::size_t i = m, j = n;
  path.steps.push_back({static_cast<int>(i), static_cast<int>(j)});
  while (i > 1 || j > 1) {
    const double diag = r.at(i - 1, j - 1);
    const double vert = r.at(i - 1, j);
    const double horiz = r.at(i, j - 1);
    const double best = std::min(diag, std::min(vert, horiz));
    if (diag == best) {
      --i;
      --j;
    } else if (vert == best) {
      --i;
    } else {
      --j;
    }
    path.steps.push_back({static_cast<int>(i), static_cast<int>(j)});
  }
  std::reverse(path.steps.begin(), path.steps.end());
  return {r.at(m, n), path};
}

/// Subsequence match of `query` inside `doc`.
struct SubsequenceMatch {
  double value = 0.0;      // best path cost divided by the query length
  std::size_t start = 0;   // matched document span, 1-based inclusive
  std::size_t end = 0;
};

/// Hard DTW with free start and free end on the document axis: R[0][j] = 0
/// for every j, and the answer is min_j R[m][j]. Ties on the end column take
/// the smallest j.
inline SubsequenceMatch subsequence_dtw(const FeatureSequence& query,
                                        const FeatureSequence& doc) {
  detail::check_pair(query, doc, "subsequence_dtw");
  const std::size_t m = query.frames;
  const std::size_t n = doc.frames;
  const Matrix delta = detail::cost_matrix(query, doc);

  Matrix r(m + 1, n + 1, kDtwInf);
  for (std::size_t j = 0; j <= n; ++j) r.at(0, j) = 0.0;
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      const double best =
          std::min(r.at(i - 1, j - 1), std::min(r.at(i - 1, j), r.at(i, j - 1)));
      r.at(i, j) = delta.at(i, j) + best;
    }
  }

  std::size_t end = 1;
  for (std::size_t j = 2; j <= n; ++j) {
    if (r.at(m, j) < r.at(m, end)) end = j;
  }

  // Backtrack to the column where the path enters row 1.
  std::size_t i = m, j = end;
  while (i > 1) {
    const double diag = r.at(i - 1, j - 1);
    const double vert = r.at(i - 1, j);
    const double horiz = r.at(i, j - 1);
    const double best = std::min(diag, std::min(vert, horiz));
    if (diag == best) {
      --i;
      --j;
    } else if (vert == best) {
      --i;
    } else {
      --j;
    }
  }

  SubsequenceMatch match;
  match.value = r.at(m, end) / static_cast<double>(m);
  match.start = j;
  match.end = end;
  return match;
}

/// Normalized soft-DTW divergence and its gradients.
struct NormalizedDivergence {
  double value = 0.0;
  Matrix grad_x;
  Matrix grad_y;
};

/// value = [L(x,y) - (L(x,x) + L(y,y)) / 2] / (m + n), zero for identical
/// sequences. The self-term gradients flow through both argument slots.
/// `length_normalize` disables the final 1/(m+n) scaling when false.
inline NormalizedDivergence normalized_divergence(const FeatureSequence& x,
                                                  const FeatureSequence& y,
                                                  const SoftDtwConfig& cfg,
                                                  bool length_normalize = true) {
  const SoftDtwResult xy = soft_dtw(x, y, cfg);
  const SoftDtwResult xx = soft_dtw(x, x, cfg);
  const SoftDtwResult yy = soft_dtw(y, y, cfg);
  const double scale =
      length_normalize ? 1.0 / static_cast<double>(x.frames + y.frames) : 1.0;

  NormalizedDivergence out;
  out.value = scale * (xy.value - 0.5 * (xx.value + yy.value));
  out.grad_x = Matrix(x.frames, x.dim, 0.0);
  out.grad_y = Matrix(y.frames, y.dim, 0.0);
  for (std::size_t i = 0; i < x.frames; ++i) {
    for (std::size_t d = 0; d < x.dim; ++d) {
      out.grad_x.at(i, d) =
          scale * (xy.grad_x.at(i, d) - 0.5 * (xx.grad_x.at(i, d) + xx.grad_y.at(i, d)));
    }
  }
  for (std::size_t j = 0; j < y.frames; ++j) {
    for (std::size_t d = 0; d < y.dim; ++d) {
      out.grad_y.at(j, d) =
          scale * (xy.grad_y.at(j, d) - 0.5 * (yy.grad_x.at(j, d) + yy.grad_y.at(j, d)));
    }
  }
  return out;
}

}  // namespace score
