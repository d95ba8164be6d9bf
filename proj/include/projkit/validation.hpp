#pragma once

#include "projkit/psis.hpp"
#include "projkit/reference.hpp"
#include "projkit/search.hpp"

namespace projkit {

/// Per-point log predictive densities of each path size (rows) and of the
/// reference, with the estimator weights v_i.
struct PointwiseUtilities {
  MatrixXd u_sub;   // sizes x n
  VectorXd u_ref;   // n
  VectorXd weights;  // n, nonnegative, sum 1
  std::optional<VectorXd> khat;

  void validate() const;
};

struct UtilitySummary {
  std::vector<int> sizes;  // label of each row of u_sub
  VectorXd delta_mean;
  VectorXd delta_se;
  VectorXd abs_mean;
  VectorXd abs_se;
  double ref_mean = 0.0;
  double ref_se = 0.0;
  /// Kept for the best-submodel rule, which needs pointwise differences.
  std::optional<PointwiseUtilities> pointwise;
};

/// Weighted mean and standard error of u_k - u_ref per size. The variance is
/// the weighted sample variance with an m / (m - 1) correction, m being the
/// number of points with positive weight; the standard error divides it by m.
/// Sizes default to 0, 1, ..., rows - 1.
UtilitySummary relative_utility(const PointwiseUtilities& pw, std::vector<int> sizes = {});

enum class SizeRule { ref_1se, best_1se };

/// Smallest size whose utility is within one standard error of the
/// reference (ref_1se) or of the best size (best_1se). ref_1se falls back to
/// best_1se when no size qualifies.
int select_size(const UtilitySummary& summary, SizeRule rule);

struct LooReference {
  ReferenceFit fit;
  double khat = 0.0;
  double log_pred = 0.0;  // PSIS-LOO reference log predictive density of y_i
  VectorXd weights;       // smoothed draw weights
};

/// Reweights the draws by PSIS-smoothed 1 / p(y_i | theta_s) and rebuilds
/// the cluster summaries of `full` (same assignment) with those weights.
LooReference loo_reference_fit(const PosteriorDraws& draws, Family family, const VectorXd& y, Index i,
                               const ReferenceFit& full);

struct Subsample {
  std::vector<int> selected;  // ascending
  VectorXd weights;           // n; zero off the sample
};

/// Stratifies points by khat (< 0.5, 0.5..0.7, > 0.7), takes
/// min(floor(m/3), n_j) from each stratum at random, tops up to m from the
/// rest, and assigns v_i = n_j / (n m_j) within stratum j.
Subsample stratified_subsample(const VectorXd& khat, int m, std::uint64_t seed);

enum class CvSchemeKind { kfold, loo, loo_subsample };

struct CvScheme {
  CvSchemeKind kind = CvSchemeKind::loo;
  int folds = 10;
  int subsample = 0;
  std::uint64_t subsample_seed = 1;

  static CvScheme kfold(int K) { return {CvSchemeKind::kfold, K, 0, 1}; }
  static CvScheme loo() { return {CvSchemeKind::loo, 0, 0, 1}; }
  static CvScheme loo_subsample(int m, std::uint64_t seed) { return {CvSchemeKind::loo_subsample, 0, m, seed}; }
};

struct CvConfig {
  SearchConfig search;
  int clusters_select = 1;
  int clusters_predict = 10;
  /// false: order features once on the full data and only re-project per
  /// fold (the optimistic select-then-validate shortcut).
  bool validate_search = true;
  int threads = 1;
  std::uint64_t seed = 1;
  double max_failed_fraction = 0.2;
};

/// Training and evaluation rows of one fold (one point for LOO).
struct FoldRecord {
  std::vector<int> train;
  std::vector<int> test;
  std::vector<int> order;
  bool failed = false;
};

struct CvResult {
  SelectionPath full_path;
  PointwiseUtilities pointwise;
  UtilitySummary summary;
  std::vector<FoldRecord> folds;
  int failed_folds = 0;
};

/// Validates the whole selection procedure. K-fold refits the reference
/// with `builder` on each training fold and reruns the search there; LOO
/// variants reweight the full-data draws per left-out point. The full-data
/// path is always returned for reporting.
CvResult cv_varsel(const MatrixXd& X, const VectorXd& y, const ReferenceModel& ref, const ReferenceBuilder* builder,
                   const CvScheme& scheme, const CvConfig& config);

/// Path length used by cv_varsel for n training rows.
int effective_max_size(const SearchConfig& search, Index n_train, Index p);

struct TestEvaluation {
  VectorXd mlpd;      // per size
  VectorXd mse;       // gaussian
  VectorXd accuracy;  // bernoulli
  std::optional<double> ref_mlpd;
  MatrixXd pointwise;  // sizes x m log densities
};

TestEvaluation eval_test(Family family, const SelectionPath& path, const MatrixXd& X_test, const VectorXd& y_test,
                         const ReferenceModel* ref = nullptr);

}  // namespace projkit
