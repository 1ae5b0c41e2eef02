#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "hdgam/errors.hpp"

namespace hdgam {

/// Per-feature B-spline basis. `order` is the spline order (polynomial degree
/// + 1), `num_basis` the number of basis functions, and the inner knots sit at
/// empirical quantiles of the training column. Boundary knots are repeated
/// `order` times in the padded knot vector, so num_basis = inner + order.
struct BasisSpec {
  int order = 4;
  int num_basis = 9;
  std::vector<double> inner_knots;
  double lo = 0.0;
  double hi = 1.0;
  bool collapsed = false;  // tied quantile knots were merged

  std::vector<double> padded_knots;

  void finalize() {
    padded_knots.clear();
    padded_knots.reserve(inner_knots.size() + 2 * static_cast<std::size_t>(order));
    for (int k = 0; k < order; ++k) padded_knots.push_back(lo);
    padded_knots.insert(padded_knots.end(), inner_knots.begin(), inner_knots.end());
    for (int k = 0; k < order; ++k) padded_knots.push_back(hi);
  }
};

/// Quantile by linear interpolation of order statistics (R type 7).
inline double quantile_sorted(std::span<const double> sorted, double level) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = static_cast<double>(n - 1) * level;
  const std::size_t i = static_cast<std::size_t>(std::floor(h));
  if (i + 1 >= n) return sorted[n - 1];
  const double frac = h - static_cast<double>(i);
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

/// Build a basis for one feature: inner knots at quantile levels k/(K+1),
/// boundary at the column min/max. Tied quantiles collapse to a single knot
/// (reducing num_basis and setting `collapsed`).
inline BasisSpec build_basis_spec(std::span<const double> x_col, int order, int num_basis) {
  if (order < 2) throw ConfigError("spline order must be >= 2, got " + std::to_string(order));
  if (num_basis <= order)
    throw ConfigError("num_basis (" + std::to_string(num_basis) + ") must exceed order (" +
                      std::to_string(order) + ")");
  std::vector<double> sorted(x_col.begin(), x_col.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.empty() || !std::isfinite(sorted.front()) || !std::isfinite(sorted.back()))
    throw DataError("feature column contains non-finite values");

  std::size_t distinct = sorted.empty() ? 0 : 1;
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] != sorted[i - 1]) ++distinct;
  if (distinct < static_cast<std::size_t>(num_basis))
    throw DegenerateFeature("feature has " + std::to_string(distinct) +
                            " distinct values; needs at least " + std::to_string(num_basis));

  BasisSpec spec;
  spec.order = order;
  spec.lo = sorted.front();
  spec.hi = sorted.back();

  const int n_inner = num_basis - order;
  for (int k = 1; k <= n_inner; ++k) {
    const double q = quantile_sorted(sorted, static_cast<double>(k) / (n_inner + 1));
    if (q <= spec.lo || q >= spec.hi) {
      spec.collapsed = true;
      continue;
    }
    if (!spec.inner_knots.empty() && q == spec.inner_knots.back()) {
      spec.collapsed = true;
      continue;
    }
    spec.inner_knots.push_back(q);
  }
  spec.num_basis = order + static_cast<int>(spec.inner_knots.size());
  if (spec.num_basis <= order)
    throw DegenerateFeature("all quantile knots collapsed; feature too concentrated");
  spec.finalize();
  return spec;
}

namespace detail {

/// Index s with knots[s] <= x < knots[s+1], restricted to the non-degenerate
/// spans [order-1, num_basis-1]; x == hi maps to the last span.
inline int find_span(const std::vector<double>& t, int order, int m, double x) {
  if (x >= t[static_cast<std::size_t>(m)]) return m - 1;
  int low = order - 1;
  int high = m;
  int mid = (low + high) / 2;
  while (x < t[static_cast<std::size_t>(mid)] || x >= t[static_cast<std::size_t>(mid) + 1]) {
    if (x < t[static_cast<std::size_t>(mid)])
      high = mid;
    else
      low = mid + 1;
    mid = (low + high) / 2;
  }
  return mid;
}

}  // namespace detail

/// Evaluate all num_basis functions at x (Cox-de Boor triangular recurrence).
/// Points outside [lo, hi] are clamped to the boundary. Writes spec.num_basis
/// values; only `order` of them can be nonzero.
inline void evaluate_basis(const BasisSpec& spec, double x, std::span<double> out) {
  const int m = spec.num_basis;
  const int degree = spec.order - 1;
  std::fill(out.begin(), out.begin() + m, 0.0);
  x = std::clamp(x, spec.lo, spec.hi);
  const auto& t = spec.padded_knots;
  const int span = detail::find_span(t, spec.order, m, x);

  double scratch[3 * 32];
  std::vector<double> heap;
  double* base = scratch;
  if (spec.order > 32) {
    heap.assign(3 * static_cast<std::size_t>(spec.order), 0.0);
    base = heap.data();
  }
  double* vals = base;
  double* left = base + spec.order;
  double* right = base + 2 * spec.order;

  vals[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[j] = x - t[static_cast<std::size_t>(span + 1 - j)];
    right[j] = t[static_cast<std::size_t>(span + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = vals[r] / (right[r + 1] + left[j - r]);
      vals[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    vals[j] = saved;
  }
  for (int k = 0; k <= degree; ++k) out[static_cast<std::size_t>(span - degree + k)] = vals[k];
}

inline std::vector<double> evaluate_basis(const BasisSpec& spec, double x) {
  std::vector<double> out(static_cast<std::size_t>(spec.num_basis));
  evaluate_basis(spec, x, out);
  return out;
}

/// D = R^T R for the (m-1) x m first-difference operator R, so
/// beta^T D beta = sum_k (beta_{k+1} - beta_k)^2.
inline Eigen::MatrixXd diff_penalty_matrix(int m) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(m, m);
  for (int k = 0; k + 1 < m; ++k) {
    d(k, k) += 1.0;
    d(k + 1, k + 1) += 1.0;
    d(k, k + 1) -= 1.0;
    d(k + 1, k) -= 1.0;
  }
  return d;
}

/// Column-block basis expansion of an n x p data matrix. Columns are
/// mean-centered; the removed means and the per-block Gram spectral radius
/// are kept as column statistics.
struct ExpandedDesign {
  Eigen::MatrixXd matrix;  // n x total_cols, centered
  std::vector<int> block_begin;
  std::vector<int> block_size;
  Eigen::VectorXd col_center;
  Eigen::VectorXd gram_eigmax;  // per block: eigmax(Phi_j^T Phi_j / n)
  int n = 0;
  int p = 0;
  int m = 0;  // nominal (maximum) block size

  int cols() const { return static_cast<int>(matrix.cols()); }

  Eigen::Block<const Eigen::MatrixXd> block(int j) const {
    return matrix.block(0, block_begin[static_cast<std::size_t>(j)], n,
                        block_size[static_cast<std::size_t>(j)]);
  }
};

inline ExpandedDesign expand_design(const Eigen::MatrixXd& x, std::span<const BasisSpec> specs) {
  if (static_cast<std::size_t>(x.cols()) != specs.size())
    throw ConfigError("design has " + std::to_string(x.cols()) + " columns but " +
                      std::to_string(specs.size()) + " basis specs were given");
  ExpandedDesign des;
  des.n = static_cast<int>(x.rows());
  des.p = static_cast<int>(x.cols());

  int total = 0;
  des.block_begin.resize(specs.size());
  des.block_size.resize(specs.size());
  for (std::size_t j = 0; j < specs.size(); ++j) {
    des.block_begin[j] = total;
    des.block_size[j] = specs[j].num_basis;
    des.m = std::max(des.m, specs[j].num_basis);
    total += specs[j].num_basis;
  }

  des.matrix.resize(des.n, total);
  std::vector<double> row(static_cast<std::size_t>(des.m));
  for (int j = 0; j < des.p; ++j) {
    const auto& spec = specs[static_cast<std::size_t>(j)];
    std::span<double> vals(row.data(), static_cast<std::size_t>(spec.num_basis));
    for (int i = 0; i < des.n; ++i) {
      evaluate_basis(spec, x(i, j), vals);
      for (int k = 0; k < spec.num_basis; ++k) des.matrix(i, des.block_begin[static_cast<std::size_t>(j)] + k) = vals[static_cast<std::size_t>(k)];
    }
  }

  des.col_center.resize(total);
  for (int c = 0; c < total; ++c) {
    const double mean = des.matrix.col(c).mean();
    des.col_center[c] = mean;
    des.matrix.col(c).array() -= mean;
  }

  des.gram_eigmax.resize(des.p);
  for (int j = 0; j < des.p; ++j) {
    const auto blk = des.block(j);
    Eigen::MatrixXd gram = blk.transpose() * blk / static_cast<double>(des.n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
    des.gram_eigmax[j] = es.eigenvalues().maxCoeff();
  }
  return des;
}

/// L2 norm of f(x) = sum_k beta_k phi_k(x) over [lo, hi], trapezoidal rule.
inline double function_norm(const BasisSpec& spec, std::span<const double> beta_block,
                            int grid_size) {
  if (grid_size < 2) throw ConfigError("function_norm grid_size must be >= 2");
  const double h = (spec.hi - spec.lo) / static_cast<double>(grid_size - 1);
  std::vector<double> vals(static_cast<std::size_t>(spec.num_basis));
  double acc = 0.0;
  for (int g = 0; g < grid_size; ++g) {
    const double x = spec.lo + h * static_cast<double>(g);
    evaluate_basis(spec, x, vals);
    double f = 0.0;
    for (int k = 0; k < spec.num_basis; ++k) f += beta_block[static_cast<std::size_t>(k)] * vals[static_cast<std::size_t>(k)];
    const double w = (g == 0 || g == grid_size - 1) ? 0.5 : 1.0;
    acc += w * f * f;
  }
  return std::sqrt(acc * h);
}

}  // namespace hdgam
