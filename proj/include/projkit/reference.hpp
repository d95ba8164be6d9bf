#pragma once

#include "projkit/projection.hpp"

#include <filesystem>
#include <functional>

namespace projkit {

/// Raised when correlation screening leaves no feature.
class EmptyScreenError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Linear map from raw features to reference-model predictors:
/// scores = (X(:, mask) - center') * rotation. An empty rotation means the
/// identity (the reference regresses on the masked raw features directly).
struct FeatureMap {
  std::vector<int> mask;
  VectorXd center;
  MatrixXd rotation;

  MatrixXd apply(const MatrixXd& X) const;
};

/// Bayesian head-model settings. The coefficient prior is N(0, sigma^2 tau^2)
/// (gaussian) or N(0, tau^2) (bernoulli) per non-intercept coefficient; tau
/// is marginalized on a log-spaced grid under a half-Student-t(4) hyperprior.
struct HeadConfig {
  int n_draws = 4000;
  std::uint64_t seed = 1;
  int tau_grid = 30;
  /// Grid spans [base / span, base * span].
  double tau_span = 1e3;
  /// Overrides the grid with a single fixed tau.
  std::optional<double> fixed_tau;
  /// Overrides the hyperprior scale (default: s_max^-2, s_max = sd of the
  /// widest predictor column).
  std::optional<double> tau_scale;
  double intercept_sd = 10.0;  // bernoulli intercept prior sd
  int predictive_draws = 1000;  // Monte Carlo draws for bernoulli predictive densities
};

/// Posterior of the Bayesian head over a fixed design: a mixture over the
/// tau grid of normal-inverse-gamma (gaussian) or Laplace-approximated
/// (bernoulli) components.
class BayesHead {
 public:
  static BayesHead fit(const DesignMatrix& Z, const VectorXd& y, Family family, const HeadConfig& config);

  /// S posterior draws over the fitted design.
  PosteriorDraws sample(int S, std::uint64_t seed) const;
  /// log p(y_new | data) per row of Z_new.
  VectorXd log_predictive(const DesignMatrix& Z_new, const VectorXd& y_new) const;
  /// Posterior mean of the coefficients.
  VectorXd posterior_mean() const;

  const VectorXd& tau_values() const { return taus_; }
  const VectorXd& tau_weights() const { return weights_; }
  Family family() const { return family_; }

 private:
  struct Component {
    VectorXd mean;
    MatrixXd chol;  // lower Cholesky factor of the (scaled) posterior precision
    double a = 0.0, b = 0.0;
  };

  Family family_ = Family::gaussian();
  DesignMatrix design_;
  VectorXd taus_;
  VectorXd weights_;
  std::vector<Component> components_;
  MatrixXd mc_betas_;  // bernoulli predictive draws
};

struct SpcConfig {
  int n_components = 3;
  int n_gamma = 7;
  int cv_folds = 5;
  int n_draws = 4000;
  std::uint64_t seed = 1;
  HeadConfig head;

  void validate() const;
};

/// Fitted reference model: posterior draws over its own design plus the map
/// from raw features to that design.
struct ReferenceModel {
  Family family = Family::gaussian();
  PosteriorDraws draws;
  std::optional<FeatureMap> feature_map;  // absent for externally supplied draws
  /// Exact posterior mean coefficients when the model came from the head.
  std::optional<VectorXd> posterior_mean;
  double gamma_chosen = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> gamma_grid;
  std::vector<double> gamma_cv_mlpd;

  /// Reference design rows for raw features X (intercept included).
  DesignMatrix design_for(const MatrixXd& X) const;
  /// log p(y_i | theta_s) as an S x m matrix over the rows of Z.
  MatrixXd draw_log_lik(const DesignMatrix& Z, const VectorXd& y) const;
  /// log (1/S) sum_s p(y_i | theta_s) per row.
  VectorXd log_predictive(const DesignMatrix& Z, const VectorXd& y) const;
  /// Posterior mean of the latent fit at the training points (exact when
  /// available, otherwise averaged over the draws).
  VectorXd mean_fit() const;
};

/// |sample correlation(x_j, y)|; zero-variance columns yield NaN.
VectorXd abs_correlations(const MatrixXd& X, const VectorXd& y);

/// Features with |R(x_j, y)| >= gamma. Zero-variance columns are dropped.
/// Throws EmptyScreenError when nothing survives.
std::vector<int> screen(const MatrixXd& X, const VectorXd& y, double gamma);

struct SpcResult {
  FeatureMap map;
  MatrixXd scores;  // n x n_c
};

/// Screens at gamma, centers the surviving columns and returns the leading
/// principal component scores (decreasing singular value; each loading
/// vector's largest-magnitude entry is positive).
SpcResult supervised_pcs(const MatrixXd& X, const VectorXd& y, double gamma, int n_components);

/// Evenly spaced screening thresholds from the largest value keeping every
/// feature to a value keeping exactly one.
std::vector<double> gamma_grid(const VectorXd& abs_corr, int n_gamma);

ReferenceModel fit_spc_reference(const MatrixXd& X, const VectorXd& y, Family family, const SpcConfig& config);

/// Bayesian head directly on [1, X].
ReferenceModel fit_linear_reference(const MatrixXd& X, const VectorXd& y, Family family, const HeadConfig& config);

/// Builds a reference model from training data; used inside K-fold CV.
using ReferenceBuilder = std::function<ReferenceModel(const MatrixXd& X, const VectorXd& y, std::uint64_t seed)>;

/// Reads a design CSV (optional leading "_intercept" column) and an NDJSON
/// draws file ({"beta": [...], "sigma": sd} per line; sigma iff gaussian).
ReferenceModel ingest_draws(const std::filesystem::path& design_csv, const std::filesystem::path& draws_ndjson,
                            Family family);
void export_draws(const ReferenceModel& model, const std::filesystem::path& design_csv,
                  const std::filesystem::path& draws_ndjson);

/// Prior guess for the global shrinkage scale given p0 expected nonzeros.
double tau0(double p0, double p, double sigma, double n);

}  // namespace projkit
