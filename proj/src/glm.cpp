#include "projkit/glm.hpp"

#include <numbers>

namespace projkit {

Family Family::from_name(std::string_view name) {
  if (name == "gaussian") return gaussian();
  if (name == "bernoulli" || name == "binomial") return bernoulli();
  if (name == "poisson") return poisson();
  throw std::invalid_argument("unknown family '" + std::string(name) + "'");
}

std::string_view Family::name() const {
  switch (kind_) {
    case FamilyKind::gaussian: return "gaussian";
    case FamilyKind::bernoulli: return "bernoulli";
    case FamilyKind::poisson: return "poisson";
  }
  return "?";
}

std::string_view Family::link_name() const {
  switch (kind_) {
    case FamilyKind::gaussian: return "identity";
    case FamilyKind::bernoulli: return "logit";
    case FamilyKind::poisson: return "log";
  }
  return "?";
}

double Family::inverse_link(double eta) const {
  switch (kind_) {
    case FamilyKind::gaussian: return eta;
    case FamilyKind::bernoulli:
      if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
      else {
        const double e = std::exp(eta);
        return e / (1.0 + e);
      }
    case FamilyKind::poisson: return std::exp(eta);
  }
  return eta;
}

double Family::link(double mu) const {
  switch (kind_) {
    case FamilyKind::gaussian: return mu;
    case FamilyKind::bernoulli: return std::log(mu) - std::log1p(-mu);
    case FamilyKind::poisson: return std::log(mu);
  }
  return mu;
}

double Family::cumulant(double eta) const {
  switch (kind_) {
    case FamilyKind::gaussian: return 0.5 * eta * eta;
    case FamilyKind::bernoulli: return log1p_exp(eta);
    case FamilyKind::poisson: return std::exp(eta);
  }
  return 0.0;
}

double Family::variance_at(double eta) const {
  switch (kind_) {
    case FamilyKind::gaussian: return 1.0;
    case FamilyKind::bernoulli: {
      const double mu = inverse_link(eta);
      return mu * (1.0 - mu);
    }
    case FamilyKind::poisson: return std::exp(eta);
  }
  return 1.0;
}

bool Family::valid_response(double y) const {
  if (!std::isfinite(y)) return false;
  switch (kind_) {
    case FamilyKind::gaussian: return true;
    case FamilyKind::bernoulli: return y == 0.0 || y == 1.0;
    case FamilyKind::poisson: return y >= 0.0 && std::floor(y) == y;
  }
  return false;
}

bool Family::valid_mean(double mu) const {
  if (!std::isfinite(mu)) return false;
  switch (kind_) {
    case FamilyKind::gaussian: return true;
    case FamilyKind::bernoulli: return mu >= 0.0 && mu <= 1.0;
    case FamilyKind::poisson: return mu > 0.0;
  }
  return false;
}

DesignMatrix::DesignMatrix(MatrixXd v, bool has_intercept) : values(std::move(v)), intercept(has_intercept) {
  if (values.rows() < 1) throw std::invalid_argument("design matrix needs at least one row");
  if (!values.allFinite()) throw std::invalid_argument("design matrix has non-finite entries");
  if (intercept && (values.cols() == 0 || (values.col(0).array() != 1.0).any()))
    throw std::invalid_argument("intercept design must have a leading all-ones column");
}

DesignMatrix DesignMatrix::with_intercept(const MatrixXd& features) {
  MatrixXd v(features.rows(), features.cols() + 1);
  v.col(0).setOnes();
  v.rightCols(features.cols()) = features;
  return DesignMatrix(std::move(v), true);
}

DesignMatrix DesignMatrix::with_intercept(const MatrixXd& features, std::span<const int> cols) {
  MatrixXd v(features.rows(), static_cast<Index>(cols.size()) + 1);
  v.col(0).setOnes();
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] < 0 || cols[j] >= features.cols()) throw std::out_of_range("feature index out of range");
    v.col(static_cast<Index>(j) + 1) = features.col(cols[j]);
  }
  return DesignMatrix(std::move(v), true);
}

double log_lik(Family family, double y, double eta, std::optional<double> dispersion) {
  if (!family.valid_response(y)) throw std::invalid_argument("response not valid for family " + std::string(family.name()));
  if (family.has_dispersion() != dispersion.has_value())
    throw std::invalid_argument(family.has_dispersion() ? "gaussian log_lik needs a dispersion"
                                                        : "dispersion given for a family without one");
  switch (family.kind()) {
    case FamilyKind::gaussian: {
      const double s2 = *dispersion;
      if (!(s2 > 0.0)) throw std::invalid_argument("dispersion must be positive");
      const double r = y - eta;
      return -0.5 * std::log(2.0 * std::numbers::pi * s2) - 0.5 * r * r / s2;
    }
    case FamilyKind::bernoulli:
      // y*eta - log(1+e^eta), arranged so neither branch overflows.
      return y == 1.0 ? -log1p_exp(-eta) : -log1p_exp(eta);
    case FamilyKind::poisson: return y * eta - std::exp(eta) - std::lgamma(y + 1.0);
  }
  return 0.0;
}

namespace {

VectorXd penalty_mask(const DesignMatrix& X) {
  VectorXd d = VectorXd::Ones(X.cols());
  if (X.intercept && X.cols() > 0) d(0) = 0.0;
  return d;
}

VectorXd prepare_targets(Family family, const VectorXd& targets) {
  VectorXd t = targets;
  for (Index i = 0; i < t.size(); ++i) {
    if (!family.valid_mean(t(i))) throw std::invalid_argument("target outside the family's mean space");
    if (family.kind() == FamilyKind::bernoulli) t(i) = std::clamp(t(i), kBernoulliClamp, 1.0 - kBernoulliClamp);
  }
  return t;
}

}  // namespace

double irls_objective(Family family, const DesignMatrix& X, const VectorXd& targets, const VectorXd& beta,
                      double ridge) {
  const VectorXd eta = X.values * beta;
  double obj = 0.0;
  for (Index i = 0; i < eta.size(); ++i) obj += targets(i) * eta(i) - family.cumulant(eta(i));
  const VectorXd d = penalty_mask(X);
  obj -= 0.5 * ridge * (d.array() * beta.array().square()).sum();
  return obj;
}

FitResult irls_fit(Family family, const DesignMatrix& X, const VectorXd& targets, double ridge,
                   const IrlsOptions& options) {
  const Index n = X.rows();
  const Index q = X.cols();
  if (targets.size() != n) throw std::invalid_argument("targets length differs from design rows");
  if (ridge < 0.0) throw std::invalid_argument("ridge must be nonnegative");
  const VectorXd mu_star = prepare_targets(family, targets);

  if (ridge == 0.0 && q > 0) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(X.values);
    if (qr.rank() < q) throw SingularSystemError("design is rank deficient and ridge is zero");
  }

  const VectorXd d = penalty_mask(X);
  VectorXd beta = VectorXd::Zero(q);
  if (X.intercept && q > 0) {
    const double mean = mu_star.mean();
    if (family.valid_mean(mean) && (family.kind() != FamilyKind::bernoulli || (mean > 0 && mean < 1)))
      beta(0) = family.link(mean);
  }

  FitResult result;
  double obj = irls_objective(family, X, mu_star, beta, ridge);
  result.objective_trace.push_back(obj);

  for (int it = 1; it <= options.max_iter; ++it) {
    const VectorXd eta = X.values * beta;
    VectorXd w(n), resid(n);
    for (Index i = 0; i < n; ++i) {
      w(i) = family.variance_at(eta(i));
      resid(i) = mu_star(i) - family.inverse_link(eta(i));
    }
    const VectorXd grad = X.values.transpose() * resid - ridge * (d.array() * beta.array()).matrix();
    MatrixXd hess = X.values.transpose() * w.asDiagonal() * X.values;
    hess.diagonal() += ridge * d;
    Eigen::LDLT<MatrixXd> ldlt(hess);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw NumericalError("IRLS Hessian is not positive definite");
    VectorXd step = ldlt.solve(grad);
    if (!step.allFinite()) throw NumericalError("IRLS produced a non-finite step");
    // Predicted objective gain of the full Newton step.
    const double decrement = 0.5 * grad.dot(step);

    double new_obj = irls_objective(family, X, mu_star, beta + step, ridge);
    int halvings = 0;
    while (new_obj < obj && halvings < options.max_halvings) {
      step *= 0.5;
      new_obj = irls_objective(family, X, mu_star, beta + step, ridge);
      ++halvings;
    }
    if (new_obj < obj) {
      // No ascent left at double precision. Converged if the step is tiny or
      // the predicted gain is below what the objective can resolve (flat
      // directions where fitted means sit at the clamp).
      result.iterations = it;
      result.converged = step.cwiseAbs().maxCoeff() < options.tol ||
                         decrement <= 1e-12 * (1.0 + std::abs(obj));
      break;
    }
    beta += step;
    obj = new_obj;
    result.objective_trace.push_back(obj);
    result.iterations = it;
    if (step.size() == 0 || step.cwiseAbs().maxCoeff() < options.tol) {
      result.converged = true;
      break;
    }
  }
  if (!beta.allFinite()) throw NumericalError("IRLS diverged");
  result.beta = std::move(beta);
  return result;
}

}  // namespace projkit
