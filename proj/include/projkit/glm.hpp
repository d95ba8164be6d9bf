#pragma once

#include "projkit/common.hpp"

#include <optional>
#include <span>
#include <string_view>

namespace projkit {

enum class FamilyKind { gaussian, bernoulli, poisson };

/// Exponential-family observation model with its canonical link
/// (gaussian/identity, bernoulli/logit, poisson/log). The canonical
/// parameter is the linear predictor itself.
class Family {
 public:
  constexpr explicit Family(FamilyKind kind) : kind_(kind) {}

  static constexpr Family gaussian() { return Family(FamilyKind::gaussian); }
  static constexpr Family bernoulli() { return Family(FamilyKind::bernoulli); }
  static constexpr Family poisson() { return Family(FamilyKind::poisson); }
  static Family from_name(std::string_view name);

  constexpr FamilyKind kind() const { return kind_; }
  std::string_view name() const;
  std::string_view link_name() const;
  constexpr bool has_dispersion() const { return kind_ == FamilyKind::gaussian; }

  double inverse_link(double eta) const;
  double link(double mu) const;
  /// Cumulant function B(eta).
  double cumulant(double eta) const;
  /// B''(eta), the IRLS working weight.
  double variance_at(double eta) const;
  bool valid_response(double y) const;
  /// True if mu is a finite mean for this family (bernoulli: [0,1], poisson: > 0).
  bool valid_mean(double mu) const;

  friend constexpr bool operator==(Family a, Family b) { return a.kind_ == b.kind_; }

 private:
  FamilyKind kind_;
};

/// Bernoulli targets are clamped to this margin before IRLS so the working
/// response stays finite.
inline constexpr double kBernoulliClamp = 1e-9;

/// n x q design. When `intercept` is set, column 0 is all ones and is never
/// penalized.
struct DesignMatrix {
  MatrixXd values;
  bool intercept = false;

  DesignMatrix() = default;
  DesignMatrix(MatrixXd v, bool has_intercept);

  /// [1, features].
  static DesignMatrix with_intercept(const MatrixXd& features);
  /// [1, features(:, cols)].
  static DesignMatrix with_intercept(const MatrixXd& features, std::span<const int> cols);

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
};

struct FitResult {
  VectorXd beta;
  std::optional<double> dispersion;
  bool converged = false;
  int iterations = 0;
  /// Penalized objective after each accepted iteration (starting point first).
  std::vector<double> objective_trace;
};

struct IrlsOptions {
  double tol = 1e-9;
  int max_iter = 100;
  int max_halvings = 10;
};

/// log p(y | eta, dispersion) with canonical parameter eta. `dispersion` is
/// the gaussian noise variance and must be supplied iff the family has one.
double log_lik(Family family, double y, double eta, std::optional<double> dispersion = std::nullopt);

/// Penalized expected log-likelihood sum_i (mu_i eta_i - B(eta_i)) - ridge/2 |beta_pen|^2.
double irls_objective(Family family, const DesignMatrix& X, const VectorXd& targets, const VectorXd& beta,
                      double ridge);

/// Maximizes the penalized objective above by Newton/IRLS with step halving.
/// Targets are mean-space pseudo-observations ("fitting to the fit").
/// Throws SingularSystemError for a rank-deficient design with ridge == 0;
/// non-convergence is reported through FitResult::converged.
FitResult irls_fit(Family family, const DesignMatrix& X, const VectorXd& targets, double ridge = 0.0,
                   const IrlsOptions& options = {});

}  // namespace projkit
