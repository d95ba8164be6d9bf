#pragma once

#include "projkit/common.hpp"

#include <filesystem>
#include <string>

namespace projkit {

/// Squared norms under the orthogonal projector onto col(X), computed from a
/// thin QR factorization (P itself is never formed).
class ColumnProjector {
 public:
  /// Throws SingularSystemError unless X has full column rank.
  explicit ColumnProjector(const MatrixXd& X);
  double sq_norm(const VectorXd& v) const;
  /// tr(P K) = tr(Q1' K Q1).
  double trace_of(const MatrixXd& K) const;
  /// Least-squares coefficients (X'X)^-1 X' v.
  VectorXd solve(const VectorXd& v) const;
  Index rank() const { return q1_.cols(); }
  const MatrixXd& basis() const { return q1_; }

 private:
  Eigen::HouseholderQR<MatrixXd> qr_;
  MatrixXd q1_;
};

struct GainInstance {
  MatrixXd X;
  VectorXd mu;
  double sigma2 = 1.0;
  VectorXd mu_star;
  VectorXd y;

  void validate() const;
};

/// Delta(beta) = (1/n) |X beta - mu|^2 + sigma2.
double expected_error(const GainInstance& inst, const VectorXd& beta);

/// Delta(beta_hat) - Delta(beta_perp) from the two least-squares fits.
double gain_direct(const GainInstance& inst);
/// (1/n)(|y - mu|_P^2 - |mu* - mu|_P^2).
double gain_lemma(const GainInstance& inst);

/// (1/n)(sigma2 p - tr(P K) - |b|_P^2) for reference error mu* - mu with
/// mean b and covariance K. When K is a multiple of the identity the result
/// is cross-checked against the uncorrelated-error form.
double expected_gain_formula(const MatrixXd& X, double sigma2, const MatrixXd& K, const VectorXd& b);

struct McEstimate {
  double mean = 0.0;
  double se = 0.0;
};

/// Monte Carlo mean of gain_lemma over y = mu + eps, eps ~ N(0, sigma2 I),
/// mu* = mu + e, e ~ N(b, K). Replications are generated in blocks of 1024,
/// each block with its own stream, so the estimate does not depend on threads.
McEstimate expected_gain_mc(const MatrixXd& X, double sigma2, const MatrixXd& K, const VectorXd& b, const VectorXd& mu,
                            int replications, std::uint64_t seed, int threads = 1);

/// Random full-rank instance with n in [5, 100] and p in [1, n - 1].
GainInstance random_gain_instance(std::mt19937_64& rng);

struct IdentityCheck {
  std::string identity;
  int instances = 0;
  double max_abs_discrepancy = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_abs_discrepancy < tolerance; }
};

struct ExpectationCheck {
  int instance = 0;
  double formula = 0.0;
  double mc_mean = 0.0;
  double mc_se = 0.0;
  bool passed() const { return std::abs(formula - mc_mean) <= 3.0 * mc_se; }
};

struct TheoryReport {
  std::vector<IdentityCheck> identities;
  std::vector<ExpectationCheck> expectations;
  bool passed() const;
};

/// Exact identities over `instances` random instances, plus (when
/// mc_instances > 0) Monte Carlo checks of the expected-gain formula, the
/// first of which is the break-even case b = 0, K = sigma2 I.
TheoryReport theory_check(int instances, int mc_instances, int mc_replications, std::uint64_t seed, int threads = 1);

void write_theory_report(const std::filesystem::path& path, const TheoryReport& report);

}  // namespace projkit
