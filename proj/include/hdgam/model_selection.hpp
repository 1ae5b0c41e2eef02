#pragma once

#include <cmath>
#include <vector>

#include "hdgam/errors.hpp"
#include "hdgam/gmd_solver.hpp"

namespace hdgam {

/// GIC model-size multiplier: m * log(log n) * log p.
inline double a_n(int n, int p, int m) {
  if (n < 3) throw ConfigError("a_n requires n >= 3");
  if (p < 2) throw ConfigError("a_n requires p >= 2");
  return static_cast<double>(m) * std::log(std::log(static_cast<double>(n))) *
         std::log(static_cast<double>(p));
}

/// GIC(lambda) = (deviance + a_n * |support|) / n. The support counts selected
/// groups (functions), not basis coefficients.
inline double gic(double deviance, int support_size, double a_n_val, int n) {
  return (deviance + a_n_val * static_cast<double>(support_size)) / static_cast<double>(n);
}

struct PathEntry {
  double lambda = 0.0;
  CoefBlocks coef;
  double deviance = 0.0;
  int support_size = 0;
  double gic = 0.0;
  double kkt = 0.0;
  bool converged = true;
};

/// Regularization path in decreasing lambda order. `a_n_used` records the
/// model-size multiplier the stored GIC values were computed with.
struct FitPath {
  std::vector<PathEntry> entries;
  double a_n_used = 0.0;
};

/// Index of the minimum-GIC entry; ties break toward larger lambda (the
/// sparser model, which comes first on the path).
inline int select(const FitPath& path) {
  if (path.entries.empty()) throw ConfigError("cannot select from an empty path");
  int best = 0;
  for (int i = 1; i < static_cast<int>(path.entries.size()); ++i)
    if (path.entries[static_cast<std::size_t>(i)].gic <
        path.entries[static_cast<std::size_t>(best)].gic)
      best = i;
  return best;
}

}  // namespace hdgam
