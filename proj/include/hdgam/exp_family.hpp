#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include "hdgam/errors.hpp"

namespace hdgam {

enum class Family { bernoulli, poisson, gamma, gaussian };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::bernoulli: return "bernoulli";
    case Family::poisson: return "poisson";
    case Family::gamma: return "gamma";
    case Family::gaussian: return "gaussian";
  }
  return "unknown";
}

inline Family family_from_name(std::string_view s) {
  if (s == "bernoulli") return Family::bernoulli;
  if (s == "poisson") return Family::poisson;
  if (s == "gamma") return Family::gamma;
  if (s == "gaussian") return Family::gaussian;
  throw ConfigError("unknown family '" + std::string(s) +
                    "'; expected bernoulli|poisson|gamma|gaussian");
}

namespace detail {
inline double log1pexp(double x) {
  // log(1 + e^x) without overflow.
  if (x > 33.0) return x;
  if (x < -37.0) return std::exp(x);
  return std::log1p(std::exp(x));
}
inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace detail

/// Exponential-family definition with dispersion fixed at 1. The link is
/// canonical for bernoulli/poisson/gaussian; gamma uses the log link
/// (mean = exp(eta), shape 1). The link chain rule is folded into the
/// residual and curvature so callers stay link-agnostic.
struct FamilySpec {
  Family tag = Family::gaussian;

  static FamilySpec bernoulli() { return {Family::bernoulli}; }
  static FamilySpec poisson() { return {Family::poisson}; }
  static FamilySpec gamma() { return {Family::gamma}; }
  static FamilySpec gaussian() { return {Family::gaussian}; }
  static FamilySpec of(Family f) { return {f}; }

  const char* name() const { return family_name(tag); }
  double dispersion() const { return 1.0; }

  /// Linear predictors are clamped to +-30 before exponentiation.
  static constexpr double kEtaClamp = 30.0;

  /// Inverse link: mean as a function of the linear predictor.
  double mean(double eta) const {
    switch (tag) {
      case Family::bernoulli: return detail::logistic(eta);
      case Family::poisson: return std::exp(std::clamp(eta, -kEtaClamp, kEtaClamp));
      case Family::gamma: return std::exp(std::clamp(eta, -kEtaClamp, kEtaClamp));
      case Family::gaussian: return eta;
    }
    return eta;
  }

  Eigen::VectorXd mean(const Eigen::VectorXd& eta) const {
    Eigen::VectorXd out(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) out[i] = mean(eta[i]);
    return out;
  }

  void check_support(const Eigen::VectorXd& y) const {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double v = y[i];
      if (!std::isfinite(v)) throw DataError("row " + std::to_string(i + 1) + ": non-finite response");
      switch (tag) {
        case Family::bernoulli:
          if (v != 0.0 && v != 1.0)
            throw DataError("row " + std::to_string(i + 1) + ": bernoulli response must be 0 or 1, got " +
                            std::to_string(v));
          break;
        case Family::poisson:
          if (v < 0.0 || v != std::floor(v))
            throw DataError("row " + std::to_string(i + 1) +
                            ": poisson response must be a nonnegative integer, got " + std::to_string(v));
          break;
        case Family::gamma:
          if (v <= 0.0)
            throw DataError("row " + std::to_string(i + 1) + ": gamma response must be positive, got " +
                            std::to_string(v));
          break;
        case Family::gaussian:
          break;
      }
    }
  }

  /// Per-observation negative log-likelihood contribution (c(y) dropped).
  double unit_nll(double eta, double y) const {
    switch (tag) {
      case Family::bernoulli:
        return detail::log1pexp(eta) - y * eta;
      case Family::poisson: {
        const double ec = std::clamp(eta, -kEtaClamp, kEtaClamp);
        return std::exp(ec) - y * eta;
      }
      case Family::gamma: {
        const double ec = std::clamp(eta, -kEtaClamp, kEtaClamp);
        return y * std::exp(-ec) + ec;
      }
      case Family::gaussian:
        return 0.5 * eta * eta - y * eta;
    }
    return 0.0;
  }

  /// -(1/n) sum_i [y_i theta_i - b(theta_i)] (gamma: log-link form).
  /// Validates the response support (DataError names the offending row).
  double neg_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) const {
    if (eta.size() != y.size()) throw ConfigError("eta and y length mismatch");
    check_support(y);
    return neg_loglik_unchecked(eta, y);
  }

  double neg_loglik_unchecked(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) const {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) acc += unit_nll(eta[i], y[i]);
    return acc / static_cast<double>(eta.size());
  }

  /// d/deta of the per-observation log-likelihood, so the block gradient of
  /// the averaged negative log-likelihood is -Phi_j^T residual / n.
  double unit_residual(double eta, double y) const {
    switch (tag) {
      case Family::bernoulli: return y - detail::logistic(eta);
      case Family::poisson: return y - std::exp(std::clamp(eta, -kEtaClamp, kEtaClamp));
      case Family::gamma: return y * std::exp(-std::clamp(eta, -kEtaClamp, kEtaClamp)) - 1.0;
      case Family::gaussian: return y - eta;
    }
    return 0.0;
  }

  /// Working second derivative of the per-observation negative log-likelihood.
  double unit_curvature(double eta, double y) const {
    switch (tag) {
      case Family::bernoulli: {
        const double p = detail::logistic(eta);
        return p * (1.0 - p);
      }
      case Family::poisson: return std::exp(std::clamp(eta, -kEtaClamp, kEtaClamp));
      case Family::gamma: return y * std::exp(-std::clamp(eta, -kEtaClamp, kEtaClamp));
      case Family::gaussian: return 1.0;
    }
    return 1.0;
  }

  struct GradCurv {
    Eigen::VectorXd residual;
    double curvature_bound = 1.0;
    int clamp_count = 0;
  };

  /// Residual vector plus an upper bound on the working curvature at the
  /// current linear predictor (0.25 for bernoulli; the max of the working
  /// second derivative otherwise).
  GradCurv gradient_and_curvature(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) const {
    GradCurv out;
    out.residual.resize(eta.size());
    double curv = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      if ((tag == Family::poisson || tag == Family::gamma) && std::abs(eta[i]) > kEtaClamp)
        ++out.clamp_count;
      out.residual[i] = unit_residual(eta[i], y[i]);
      curv = std::max(curv, unit_curvature(eta[i], y[i]));
    }
    switch (tag) {
      case Family::bernoulli: out.curvature_bound = 0.25; break;
      case Family::gaussian: out.curvature_bound = 1.0; break;
      default: out.curvature_bound = std::max(curv, 1e-10); break;
    }
    return out;
  }

  /// 2 { l(y; y) - l(mu; y) }. Means at the support boundary are clamped;
  /// `clamped` (when given) counts how many entries needed it.
  double deviance(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& y,
                  int* clamped = nullptr) const {
    if (mu_hat.size() != y.size()) throw ConfigError("mu and y length mismatch");
    int nclamp = 0;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double yi = y[i];
      double mu = mu_hat[i];
      switch (tag) {
        case Family::bernoulli: {
          // 0 log 0 = 0, so the saturated fit contributes exactly zero;
          // the floor only guards log of a mean at the wrong boundary.
          double term = 0.0;
          if (yi > 0.0) {
            if (mu < 1e-10) ++nclamp;
            term += yi * std::log(std::clamp(mu, 1e-10, 1.0));
          }
          if (yi < 1.0) {
            if (mu > 1.0 - 1e-10) ++nclamp;
            term += (1.0 - yi) * std::log(std::clamp(1.0 - mu, 1e-10, 1.0));
          }
          acc += -2.0 * term;
          break;
        }
        case Family::poisson: {
          const double mc = std::max(mu, 1e-10);
          if (mc != mu) ++nclamp;
          const double ylog = (yi > 0.0) ? yi * std::log(yi / mc) : 0.0;
          acc += 2.0 * (ylog - (yi - mc));
          break;
        }
        case Family::gamma: {
          const double mc = std::max(mu, 1e-10);
          if (mc != mu) ++nclamp;
          acc += 2.0 * (-std::log(yi / mc) + (yi - mc) / mc);
          break;
        }
        case Family::gaussian: {
          const double d = yi - mu;
          acc += d * d;
          break;
        }
      }
    }
    if (clamped) *clamped = nclamp;
    return acc;
  }

  /// Intercept-only maximum likelihood estimate of the linear predictor.
  double null_intercept(const Eigen::VectorXd& y) const {
    const double ybar = y.mean();
    switch (tag) {
      case Family::bernoulli: {
        const double p = std::clamp(ybar, 1e-10, 1.0 - 1e-10);
        return std::log(p / (1.0 - p));
      }
      case Family::poisson: return std::log(std::max(ybar, 1e-10));
      case Family::gamma: return std::log(std::max(ybar, 1e-10));
      case Family::gaussian: return ybar;
    }
    return ybar;
  }
};

}  // namespace hdgam
