#pragma once

#include "projkit/projection.hpp"

namespace projkit {

enum class SearchMethod { forward, l1 };

struct SearchConfig {
  SearchMethod method = SearchMethod::l1;
  double alpha = 1.0;  // elastic-net mixing, (0, 1]
  int nlambda = 100;
  /// Defaults to 1e-3 when n > p and 1e-2 otherwise.
  std::optional<double> lambda_min_ratio;
  std::optional<VectorXd> penalty_factors;
  int max_size = 20;
  bool relax = true;
  double relax_ridge = 0.0;
  /// Ridge used inside forward-search projections.
  double search_ridge = 0.0;
  double cd_tol = 1e-7;
  int cd_max_sweeps = 10000;
  int max_outer = 100;

  void validate(Index p) const;
};

struct SelectionPath {
  std::vector<int> order;
  std::vector<ProjectedSubmodel> submodels;  // sizes 0..max_size
  std::vector<double> losses;
};

/// Elastic-net projection path computed on standardized candidates.
struct L1Path {
  std::vector<int> order;
  VectorXd lambdas;
  MatrixXd coefs;           // p x L, raw feature scale
  VectorXd intercepts;      // L, raw scale
  std::vector<int> entry;   // first grid index with a nonzero coefficient, -1 if never
  bool converged = true;
  int failed_step = -1;     // grid index where coordinate descent gave up
  double lambda_max = 0.0;
};

/// Greedy forward selection under the projection loss, starting from the
/// intercept-only model. Ties go to the lowest feature index.
SelectionPath forward_search(const MatrixXd& X_candidates, const ReferenceFit& ref, int max_size, double ridge = 0.0);

/// Orders features by when they first become nonzero along a decreasing
/// log-spaced lambda grid of the penalized single-point projection
///   -(1/n) sum_i (mu*_i eta_i - B(eta_i)) + lambda sum_j g_j ((1-a)/2 b_j^2 + a |b_j|)
/// solved by warm-started cyclic coordinate descent on the IRLS quadratic.
/// Entry ties at one grid point go to the larger standardized |coefficient|,
/// then the lower index. Features that never enter follow, ranked by the
/// magnitude of their gradient at the last solution.
L1Path l1_path(const MatrixXd& X_candidates, const ReferenceFit& ref, const SearchConfig& config);

/// Smallest lambda with all penalized coefficients zero.
double l1_lambda_max(const MatrixXd& X_candidates, const ReferenceFit& ref, const SearchConfig& config);

/// Orders features with `ref_select` (single cluster) and projects
/// `ref_predict` onto each prefix of the order. With relax == false the
/// penalized path coefficients are kept instead (l1 only).
SelectionPath build_path(const MatrixXd& X_candidates, const ReferenceFit& ref_select, const ReferenceFit& ref_predict,
                         const SearchConfig& config);

/// Projects `ref` onto the first k features of a fixed order for k = 0..max_size.
SelectionPath project_along(const MatrixXd& X_candidates, const std::vector<int>& order, const ReferenceFit& ref,
                            int max_size, double ridge);

}  // namespace projkit
