#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <vector>

#include "hdgam/rng.hpp"
#include "hdgam/spline_basis.hpp"

using namespace hdgam;

namespace {

BasisSpec hand_spec(int order, std::vector<double> inner, double lo, double hi) {
  BasisSpec spec;
  spec.order = order;
  spec.inner_knots = std::move(inner);
  spec.num_basis = order + static_cast<int>(spec.inner_knots.size());
  spec.lo = lo;
  spec.hi = hi;
  spec.finalize();
  return spec;
}

}  // namespace

TEST_CASE("quantile knots on a uniform grid are exact") {
  std::vector<double> x(601);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i) / 600.0;
  const auto spec = build_basis_spec(x, 4, 9);
  REQUIRE(spec.inner_knots.size() == 5);
  for (int k = 1; k <= 5; ++k)
    CHECK(spec.inner_knots[static_cast<std::size_t>(k - 1)] ==
          Catch::Approx(static_cast<double>(k) / 6.0).margin(1e-15));
  CHECK(spec.lo == 0.0);
  CHECK(spec.hi == 1.0);
  CHECK(spec.num_basis == 9);
}

TEST_CASE("quantile knots of a uniform sample sit near the population levels") {
  Rng rng(42);
  std::vector<double> x(1000);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  const auto spec = build_basis_spec(x, 4, 9);
  REQUIRE(spec.inner_knots.size() == 5);
  const double expected[] = {-2.0 / 3.0, -1.0 / 3.0, 0.0, 1.0 / 3.0, 2.0 / 3.0};
  for (int k = 0; k < 5; ++k)
    CHECK(std::abs(spec.inner_knots[static_cast<std::size_t>(k)] - expected[k]) < 0.08);
  CHECK(spec.lo == *std::min_element(x.begin(), x.end()));
  CHECK(spec.hi == *std::max_element(x.begin(), x.end()));
}

TEST_CASE("degenerate features and bad configs are rejected") {
  std::vector<double> three = {1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0};
  CHECK_THROWS_AS(build_basis_spec(three, 4, 9), DegenerateFeature);

  std::vector<double> fine(100);
  std::iota(fine.begin(), fine.end(), 0.0);
  CHECK_THROWS_AS(build_basis_spec(fine, 4, 4), ConfigError);
  CHECK_THROWS_AS(build_basis_spec(fine, 1, 9), ConfigError);
}

TEST_CASE("heavy ties collapse duplicate quantile knots") {
  // Mass concentrated at 0.5 forces several quantile levels onto the same value.
  std::vector<double> x;
  for (int i = 0; i < 200; ++i) x.push_back(0.5);
  for (int i = 0; i < 15; ++i) x.push_back(static_cast<double>(i) / 15.0);
  const auto spec = build_basis_spec(x, 4, 9);
  CHECK(spec.collapsed);
  CHECK(spec.num_basis < 9);
  CHECK(spec.num_basis == 4 + static_cast<int>(spec.inner_knots.size()));
  for (std::size_t k = 1; k < spec.inner_knots.size(); ++k)
    CHECK(spec.inner_knots[k] > spec.inner_knots[k - 1]);
}

TEST_CASE("partition of unity holds to 1e-12") {
  Rng rng(7);
  std::vector<double> x(400);
  for (auto& v : x) v = rng.uniform(-2.0, 5.0);
  for (int m : {6, 9, 12}) {
    const auto spec = build_basis_spec(x, 4, m);
    std::vector<double> vals(static_cast<std::size_t>(spec.num_basis));
    for (int trial = 0; trial < 1000; ++trial) {
      const double pt = rng.uniform(-2.5, 5.5);  // includes out-of-range clamping
      evaluate_basis(spec, pt, vals);
      const double sum = std::accumulate(vals.begin(), vals.end(), 0.0);
      REQUIRE(std::abs(sum - 1.0) <= 1e-12);
      for (double v : vals) REQUIRE((v >= 0.0 && v <= 1.0 + 1e-15));
    }
  }
}

TEST_CASE("order-1 basis functions are interval indicators") {
  const auto spec = hand_spec(1, {0.25, 0.5, 0.75}, 0.0, 1.0);
  REQUIRE(spec.num_basis == 4);
  const double pts[] = {0.1, 0.3, 0.6, 0.9};
  for (int i = 0; i < 4; ++i) {
    const auto vals = evaluate_basis(spec, pts[i]);
    for (int k = 0; k < 4; ++k) CHECK(vals[static_cast<std::size_t>(k)] == (k == i ? 1.0 : 0.0));
  }
}

TEST_CASE("at a knot a cubic basis has at most order-1 nonzero values") {
  const auto spec = hand_spec(4, {0.2, 0.4, 0.6, 0.8}, 0.0, 1.0);
  for (double knot : spec.inner_knots) {
    const auto vals = evaluate_basis(spec, knot);
    int nonzero = 0;
    for (double v : vals) nonzero += (v != 0.0);
    CHECK(nonzero <= 3);
  }
}

TEST_CASE("each basis function is supported on at most `order` knot intervals") {
  const auto spec = hand_spec(4, {0.2, 0.4, 0.6, 0.8}, 0.0, 1.0);
  std::vector<double> edges = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<double> vals(static_cast<std::size_t>(spec.num_basis));
  for (int k = 0; k < spec.num_basis; ++k) {
    int active_intervals = 0;
    for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
      bool nonzero = false;
      for (int g = 1; g < 8; ++g) {
        const double pt = edges[e] + (edges[e + 1] - edges[e]) * g / 8.0;
        evaluate_basis(spec, pt, vals);
        if (vals[static_cast<std::size_t>(k)] != 0.0) nonzero = true;
      }
      active_intervals += nonzero;
    }
    CHECK(active_intervals <= 4);
  }
}

TEST_CASE("difference penalty equals the sum of squared consecutive differences") {
  const int m = 9;
  const Eigen::MatrixXd d = diff_penalty_matrix(m);
  CHECK(d.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((d - d.transpose()).cwiseAbs().maxCoeff() == 0.0);
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd b(m);
    for (int k = 0; k < m; ++k) b[k] = rng.uniform(-5.0, 5.0);
    double direct = 0.0;
    for (int k = 0; k + 1 < m; ++k) direct += (b[k + 1] - b[k]) * (b[k + 1] - b[k]);
    REQUIRE(b.dot(d * b) == Catch::Approx(direct).margin(1e-12));
  }
}

TEST_CASE("expand_design shape, centering, and determinism") {
  Rng rng(11);
  Eigen::MatrixXd x(5, 2);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 2; ++j) x(i, j) = rng.uniform(0.0, 1.0);
  std::vector<BasisSpec> specs = {hand_spec(2, {0.4, 0.6}, 0.0, 1.0),
                                  hand_spec(2, {0.3, 0.7}, 0.0, 1.0)};
  const auto des = expand_design(x, specs);
  CHECK(des.matrix.rows() == 5);
  CHECK(des.matrix.cols() == 8);
  CHECK(des.block_begin == std::vector<int>{0, 4});
  CHECK(des.block_size == std::vector<int>{4, 4});
  for (int c = 0; c < des.cols(); ++c) CHECK(std::abs(des.matrix.col(c).sum()) <= 1e-10 * des.n);

  const auto des2 = expand_design(x, specs);
  CHECK(des.matrix == des2.matrix);
  CHECK(des.col_center == des2.col_center);

  Eigen::MatrixXd wrong(5, 3);
  CHECK_THROWS_AS(expand_design(wrong, specs), ConfigError);
}

TEST_CASE("constant feature surfaces DegenerateFeature from spec building") {
  std::vector<double> constant(50, 1.0);
  CHECK_THROWS_AS(build_basis_spec(constant, 4, 9), DegenerateFeature);
}

TEST_CASE("column norms respect the bounded-basis constraint") {
  Rng rng(23);
  Eigen::MatrixXd x(200, 3);
  for (int i = 0; i < 200; ++i)
    for (int j = 0; j < 3; ++j) x(i, j) = rng.uniform(-1.0, 1.0);
  std::vector<BasisSpec> specs;
  for (int j = 0; j < 3; ++j) {
    const auto col = x.col(j);
    specs.push_back(build_basis_spec(
        std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), 4, 9));
  }
  const auto des = expand_design(x, specs);
  for (int c = 0; c < des.cols(); ++c)
    CHECK(des.matrix.col(c).norm() <= std::sqrt(static_cast<double>(des.n)) * 1.0);
}

TEST_CASE("function_norm basics") {
  const auto flat = hand_spec(1, {0.25, 0.5, 0.75}, 0.0, 1.0);
  std::vector<double> zeros(4, 0.0);
  CHECK(function_norm(flat, zeros, 200) == 0.0);
  std::vector<double> ones(4, 1.0);
  CHECK(function_norm(flat, ones, 2001) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("function_norm of a projected linear function matches the closed form") {
  // f(x) = 4x lies inside the cubic spline space, so its least-squares
  // projection onto the basis is exact and ||f||_2 = 4 sqrt(2/3) on [-1, 1].
  std::vector<double> x(801);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = -1.0 + 2.0 * static_cast<double>(i) / 800.0;
  const auto spec = build_basis_spec(x, 4, 9);

  Eigen::MatrixXd phi(static_cast<Eigen::Index>(x.size()), spec.num_basis);
  Eigen::VectorXd target(static_cast<Eigen::Index>(x.size()));
  std::vector<double> vals(static_cast<std::size_t>(spec.num_basis));
  for (std::size_t i = 0; i < x.size(); ++i) {
    evaluate_basis(spec, x[i], vals);
    for (int k = 0; k < spec.num_basis; ++k) phi(static_cast<Eigen::Index>(i), k) = vals[static_cast<std::size_t>(k)];
    target[static_cast<Eigen::Index>(i)] = 4.0 * x[i];
  }
  const Eigen::VectorXd beta = phi.colPivHouseholderQr().solve(target);
  const double norm = function_norm(
      spec, std::span<const double>(beta.data(), static_cast<std::size_t>(beta.size())), 4001);
  CHECK(norm == Catch::Approx(4.0 * std::sqrt(2.0 / 3.0)).margin(1e-4));
}
