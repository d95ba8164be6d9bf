#include "projkit/projection.hpp"

#include "projkit/kmeans.hpp"

namespace projkit {

std::optional<VectorXd> PosteriorDraws::variances() const {
  if (!sigmas) return std::nullopt;
  return VectorXd(sigmas->array().square());
}

void PosteriorDraws::validate(Family family) const {
  if (betas.rows() < 1) throw std::invalid_argument("posterior needs at least one draw");
  if (betas.cols() != ref_design.cols())
    throw std::invalid_argument("draw length differs from reference design columns");
  if (!betas.allFinite()) throw std::invalid_argument("posterior draws contain non-finite values");
  if (family.has_dispersion() != sigmas.has_value())
    throw std::invalid_argument(family.has_dispersion() ? "gaussian draws need sigma values"
                                                        : "sigma given for a family without dispersion");
  if (sigmas) {
    if (sigmas->size() != betas.rows()) throw std::invalid_argument("sigma count differs from draw count");
    if (!sigmas->allFinite() || (sigmas->array() <= 0.0).any())
      throw std::invalid_argument("sigma values must be finite and positive");
  }
}

ReferenceFit ReferenceFit::from_targets(Family family, const VectorXd& targets) {
  ReferenceFit fit;
  fit.family = family;
  fit.cluster_means = targets.transpose();
  if (family.has_dispersion()) fit.cluster_vars = MatrixXd::Zero(1, targets.size());
  fit.weights = VectorXd::Ones(1);
  fit.clusters = {{0}};
  return fit;
}

ReferenceFit summarize_clusters(Family family, const PosteriorDraws& draws, std::vector<std::vector<int>> clusters,
                                const VectorXd* draw_weights) {
  const Index S = draws.num_draws();
  const Index n = draws.num_obs();
  const Index C = static_cast<Index>(clusters.size());
  VectorXd w = draw_weights ? *draw_weights : VectorXd::Constant(S, 1.0 / static_cast<double>(S));
  if (w.size() != S) throw std::invalid_argument("draw weight count differs from draw count");
  w /= w.sum();

  const MatrixXd latent = draws.latent();
  const auto vars = draws.variances();

  ReferenceFit fit;
  fit.family = family;
  fit.cluster_means.resize(C, n);
  if (family.has_dispersion()) fit.cluster_vars = MatrixXd(C, n);
  fit.weights.resize(C);

  for (Index c = 0; c < C; ++c) {
    const auto& members = clusters[c];
    if (members.empty()) throw std::invalid_argument("empty cluster");
    double total = 0.0;
    for (int s : members) total += w(s);
    // Uniform draws get the exact |I_c| / S rather than a rounded sum.
    fit.weights(c) = draw_weights ? total : static_cast<double>(members.size()) / static_cast<double>(S);

    VectorXd mean_latent = VectorXd::Zero(n);
    VectorXd mean_mu = VectorXd::Zero(n);
    double mean_var = 0.0;
    for (int s : members) {
      const double ws = total > 0.0 ? w(s) / total : 1.0 / static_cast<double>(members.size());
      mean_latent += ws * latent.row(s).transpose();
      for (Index i = 0; i < n; ++i) mean_mu(i) += ws * family.inverse_link(latent(s, i));
      if (vars) mean_var += ws * (*vars)(s);
    }
    fit.cluster_means.row(c) = mean_mu.transpose();
    if (fit.cluster_vars) {
      VectorXd spread = VectorXd::Zero(n);
      for (int s : members) {
        const double ws = total > 0.0 ? w(s) / total : 1.0 / static_cast<double>(members.size());
        spread += ws * (latent.row(s).transpose() - mean_latent).array().square().matrix();
      }
      fit.cluster_vars->row(c) = (spread.array() + mean_var).transpose();
    }
  }
  fit.clusters = std::move(clusters);
  return fit;
}

ReferenceFit cluster_draws(const PosteriorDraws& draws, Family family, int num_clusters, std::uint64_t seed) {
  draws.validate(family);
  const Index S = draws.num_draws();
  if (num_clusters < 1 || num_clusters > S) throw std::invalid_argument("cluster count must lie in [1, S]");

  std::vector<std::vector<int>> clusters(static_cast<std::size_t>(num_clusters));
  if (num_clusters == 1) {
    clusters[0].resize(static_cast<std::size_t>(S));
    for (Index s = 0; s < S; ++s) clusters[0][s] = static_cast<int>(s);
  } else if (num_clusters == S) {
    for (Index s = 0; s < S; ++s) clusters[s] = {static_cast<int>(s)};
  } else {
    const KMeansResult km = kmeans(draws.latent(), num_clusters, seed);
    for (Index s = 0; s < S; ++s) clusters[km.assignment[s]].push_back(static_cast<int>(s));
  }
  return summarize_clusters(family, draws, std::move(clusters));
}

VectorXd project_gaussian_coeffs(const DesignMatrix& X_sub, const VectorXd& mu_star, double ridge) {
  if (mu_star.size() != X_sub.rows()) throw std::invalid_argument("target length differs from design rows");
  if (ridge < 0.0) throw std::invalid_argument("ridge must be nonnegative");
  if (ridge == 0.0) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(X_sub.values);
    if (qr.rank() < X_sub.cols()) throw SingularSystemError("projection design is not of full column rank");
    return qr.solve(mu_star);
  }
  MatrixXd gram = X_sub.values.transpose() * X_sub.values;
  VectorXd d = VectorXd::Ones(X_sub.cols());
  if (X_sub.intercept) d(0) = 0.0;
  gram.diagonal() += ridge * d;
  Eigen::LDLT<MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) throw SingularSystemError("ridge system is singular");
  return ldlt.solve(X_sub.values.transpose() * mu_star);
}

double project_gaussian_dispersion(const DesignMatrix& X_sub, const VectorXd& beta, const VectorXd& mu_star,
                                   const VectorXd& vars) {
  const Index n = X_sub.rows();
  if (mu_star.size() != n || vars.size() != n || beta.size() != X_sub.cols())
    throw std::invalid_argument("dispersion projection shape mismatch");
  if ((vars.array() < 0.0).any()) throw std::invalid_argument("predictive variances must be nonnegative");
  const double mismatch = (X_sub.values * beta - mu_star).squaredNorm();
  return vars.mean() + mismatch / static_cast<double>(n);
}

ClusterProjection project_cluster(const DesignMatrix& X_sub, const ReferenceFit& ref, Index cluster, double ridge) {
  if (cluster < 0 || cluster >= ref.num_clusters()) throw std::out_of_range("cluster index out of range");
  const VectorXd mu = ref.cluster_means.row(cluster).transpose();
  ClusterProjection out;
  if (ref.family.kind() == FamilyKind::gaussian) {
    out.coeffs = project_gaussian_coeffs(X_sub, mu, ridge);
    const VectorXd vars = ref.cluster_vars ? VectorXd(ref.cluster_vars->row(cluster).transpose())
                                           : VectorXd::Zero(mu.size());
    out.dispersion = project_gaussian_dispersion(X_sub, out.coeffs, mu, vars);
  } else {
    FitResult fit = irls_fit(ref.family, X_sub, mu, ridge);
    if (!fit.converged) throw NumericalError("IRLS did not converge during projection");
    out.coeffs = std::move(fit.beta);
  }
  return out;
}

ProjectedSubmodel project(const MatrixXd& X_candidates, const std::vector<int>& feature_set, const ReferenceFit& ref,
                          double ridge) {
  if (X_candidates.rows() != ref.num_obs()) throw std::invalid_argument("candidate rows differ from reference size");
  const DesignMatrix X_sub = DesignMatrix::with_intercept(X_candidates, feature_set);
  const Index C = ref.num_clusters();
  ProjectedSubmodel sub;
  sub.feature_set = feature_set;
  sub.coeffs.resize(C, X_sub.cols());
  sub.weights = ref.weights;
  if (ref.family.has_dispersion()) sub.dispersions = VectorXd(C);
  for (Index c = 0; c < C; ++c) {
    ClusterProjection cp = project_cluster(X_sub, ref, c, ridge);
    sub.coeffs.row(c) = cp.coeffs.transpose();
    if (sub.dispersions) (*sub.dispersions)(c) = *cp.dispersion;
  }
  sub.loss = projection_loss(ref, sub, X_sub);
  return sub;
}

namespace {

double xlogy_ratio(double x, double a, double b) {
  // x * log(a / b) with the 0 * log(0) = 0 convention.
  if (x == 0.0) return 0.0;
  return x * (std::log(a) - std::log(b));
}

}  // namespace

double kl_gaussian(double mean1, double var1, double mean2, double var2) {
  if (!(var2 > 0.0)) throw std::invalid_argument("submodel variance must be positive");
  if (var1 <= 0.0) return std::numeric_limits<double>::infinity();
  const double d = mean1 - mean2;
  return 0.5 * (std::log(var2) - std::log(var1)) + (var1 + d * d) / (2.0 * var2) - 0.5;
}

double kl_bernoulli(double p, double q) {
  q = std::clamp(q, std::numeric_limits<double>::min(), 1.0 - std::numeric_limits<double>::epsilon() / 2);
  return xlogy_ratio(p, p, q) + xlogy_ratio(1.0 - p, 1.0 - p, 1.0 - q);
}

double kl_poisson(double lambda1, double lambda2) { return xlogy_ratio(lambda1, lambda1, lambda2) - lambda1 + lambda2; }

double projection_loss(const ReferenceFit& ref, const ProjectedSubmodel& sub, const DesignMatrix& X_sub) {
  const Index C = ref.num_clusters();
  const Index n = ref.num_obs();
  if (sub.num_clusters() != C || X_sub.rows() != n || X_sub.cols() != sub.coeffs.cols())
    throw std::invalid_argument("projection loss shape mismatch");
  double loss = 0.0;
  for (Index c = 0; c < C; ++c) {
    const VectorXd eta = X_sub.values * sub.coeffs.row(c).transpose();
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double mu_ref = ref.cluster_means(c, i);
      switch (ref.family.kind()) {
        case FamilyKind::gaussian: {
          const double v_ref = ref.cluster_vars ? (*ref.cluster_vars)(c, i) : 0.0;
          acc += kl_gaussian(mu_ref, v_ref, eta(i), (*sub.dispersions)(c));
          break;
        }
        case FamilyKind::bernoulli: acc += kl_bernoulli(mu_ref, ref.family.inverse_link(eta(i))); break;
        case FamilyKind::poisson: acc += kl_poisson(mu_ref, std::exp(eta(i))); break;
      }
    }
    loss += ref.weights(c) * acc / static_cast<double>(n);
  }
  return std::max(loss, 0.0);
}

namespace {

VectorXd submodel_row(const ProjectedSubmodel& sub, const VectorXd& x_candidate) {
  VectorXd z(static_cast<Index>(sub.feature_set.size()) + 1);
  z(0) = 1.0;
  for (std::size_t j = 0; j < sub.feature_set.size(); ++j) {
    const int f = sub.feature_set[j];
    if (f < 0 || f >= x_candidate.size()) throw std::out_of_range("feature index out of range");
    z(static_cast<Index>(j) + 1) = x_candidate(f);
  }
  return z;
}

}  // namespace

double predictive_log_density(Family family, const ProjectedSubmodel& sub, const VectorXd& x_candidate, double y) {
  if (!family.valid_response(y)) throw std::invalid_argument("response not valid for family");
  const VectorXd z = submodel_row(sub, x_candidate);
  const VectorXd eta = sub.coeffs * z;
  VectorXd terms(sub.num_clusters());
  for (Index c = 0; c < sub.num_clusters(); ++c) {
    const std::optional<double> disp =
        sub.dispersions ? std::optional<double>((*sub.dispersions)(c)) : std::nullopt;
    terms(c) = std::log(sub.weights(c)) + log_lik(family, y, eta(c), disp);
  }
  return log_sum_exp(terms);
}

double predictive_mean(Family family, const ProjectedSubmodel& sub, const VectorXd& x_candidate) {
  const VectorXd eta = sub.coeffs * submodel_row(sub, x_candidate);
  double m = 0.0;
  for (Index c = 0; c < sub.num_clusters(); ++c) m += sub.weights(c) * family.inverse_link(eta(c));
  return m;
}

}  // namespace projkit
