#pragma once

#include "projkit/glm.hpp"

namespace projkit {

/// S joint posterior draws of a reference GLM over its own design Z.
/// `sigmas` holds the per-draw gaussian noise standard deviation; the
/// variance used throughout the projection formulas is sigmas^2.
struct PosteriorDraws {
  MatrixXd betas;                 // S x q
  std::optional<VectorXd> sigmas;  // length S, gaussian only
  DesignMatrix ref_design;        // n x q

  Index num_draws() const { return betas.rows(); }
  Index num_obs() const { return ref_design.rows(); }
  /// Latent fits f_s = Z beta_s as rows (S x n).
  MatrixXd latent() const { return betas * ref_design.values.transpose(); }
  std::optional<VectorXd> variances() const;
  /// Throws std::invalid_argument when the invariants do not hold for `family`.
  void validate(Family family) const;
};

/// Reference predictive summaries per cluster: mean-space means mu*^c and,
/// for gaussian, predictive variances V^c, together with cluster weights and
/// the index sets partitioning the draws.
struct ReferenceFit {
  Family family = Family::gaussian();
  MatrixXd cluster_means;                  // C x n
  std::optional<MatrixXd> cluster_vars;    // C x n, gaussian only
  VectorXd weights;                        // C
  std::vector<std::vector<int>> clusters;  // I_1..I_C

  Index num_clusters() const { return cluster_means.rows(); }
  Index num_obs() const { return cluster_means.cols(); }

  /// Point reference from raw targets with zero predictive variance.
  static ReferenceFit from_targets(Family family, const VectorXd& targets);
};

/// Projection of a ReferenceFit onto a feature subset. Column 0 of `coeffs`
/// is the intercept; column j+1 belongs to feature_set[j]. `dispersions`
/// are gaussian noise variances, one per cluster.
struct ProjectedSubmodel {
  std::vector<int> feature_set;
  MatrixXd coeffs;                       // C x (k+1)
  std::optional<VectorXd> dispersions;  // C
  VectorXd weights;                      // C
  double loss = 0.0;

  Index num_clusters() const { return coeffs.rows(); }
};

/// Summarizes draws into clusters given an assignment and (optionally) per
/// draw importance weights. Cluster means average inverse-link(f_s); gaussian
/// variances are the weighted mean of sigma_s^2 plus the weighted variance
/// of f_s within the cluster. Cluster weights are the total draw weight.
ReferenceFit summarize_clusters(Family family, const PosteriorDraws& draws, std::vector<std::vector<int>> clusters,
                                const VectorXd* draw_weights = nullptr);

/// Clusters draws by their latent fits (k-means) and summarizes each cluster.
/// C == 1 and C == S bypass k-means (single cluster / one draw per cluster).
ReferenceFit cluster_draws(const PosteriorDraws& draws, Family family, int num_clusters, std::uint64_t seed);

VectorXd project_gaussian_coeffs(const DesignMatrix& X_sub, const VectorXd& mu_star, double ridge = 0.0);

double project_gaussian_dispersion(const DesignMatrix& X_sub, const VectorXd& beta, const VectorXd& mu_star,
                                   const VectorXd& vars);

struct ClusterProjection {
  VectorXd coeffs;
  std::optional<double> dispersion;
};

ClusterProjection project_cluster(const DesignMatrix& X_sub, const ReferenceFit& ref, Index cluster,
                                  double ridge = 0.0);

/// Projects every cluster of `ref` onto [1, X_candidates(:, feature_set)]
/// and records the projection loss.
ProjectedSubmodel project(const MatrixXd& X_candidates, const std::vector<int>& feature_set, const ReferenceFit& ref,
                          double ridge = 0.0);

/// KL divergence between one-dimensional predictive distributions.
double kl_gaussian(double mean1, double var1, double mean2, double var2);
double kl_bernoulli(double p, double q);
double kl_poisson(double lambda1, double lambda2);

/// sum_c w_c (1/n) sum_i KL(reference_c,i || submodel_c,i). Bernoulli and
/// poisson clusters are compared through their plug-in mean distribution
/// (exact for bernoulli, an approximation of the poisson mixture).
double projection_loss(const ReferenceFit& ref, const ProjectedSubmodel& sub, const DesignMatrix& X_sub);

/// log sum_c w_c p(y | theta_c) at one candidate-feature row x (length p).
double predictive_log_density(Family family, const ProjectedSubmodel& sub, const VectorXd& x_candidate, double y);

/// Mixture predictive mean sum_c w_c inverse-link(eta_c) at x.
double predictive_mean(Family family, const ProjectedSubmodel& sub, const VectorXd& x_candidate);

}  // namespace projkit
