#pragma once

#include "projkit/common.hpp"

namespace projkit {

struct GpdFit {
  double k = 0.0;      // shape (weakly-informative adjusted)
  double sigma = 0.0;  // scale
};

/// Generalized Pareto fit to positive exceedances sorted ascending, using
/// the profile-posterior estimator of Zhang and Stephens (prior 3, 30 + sqrt(N)
/// grid points) followed by shrinkage of k toward 0.5 with 10 pseudo-samples.
GpdFit gpd_fit(const VectorXd& sorted_x);

/// Quantile function of the generalized Pareto distribution with location 0.
double gpd_quantile(double p, double k, double sigma);

struct PsisResult {
  VectorXd weights;  // normalized, sum 1
  double khat = 0.0;
};

/// Pareto-smoothed importance weights from raw log ratios. The M =
/// ceil(min(0.2 S, 3 sqrt(S))) largest ratios are replaced by expected order
/// statistics of a generalized Pareto fit to their exceedances over the next
/// largest ratio; every weight is then truncated at the raw maximum.
/// khat is +inf when M < 5 (no smoothing) and -inf for a constant tail.
PsisResult psis_smooth(const VectorXd& log_raw_weights);

/// Pareto-k reliability threshold.
inline constexpr double kKhatBad = 0.7;

}  // namespace projkit
