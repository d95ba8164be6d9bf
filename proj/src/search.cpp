#include "projkit/search.hpp"

#include <algorithm>
#include <numeric>

namespace projkit {

void SearchConfig::validate(Index p) const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
  if (nlambda < 2) throw std::invalid_argument("nlambda must be at least 2");
  if (lambda_min_ratio && !(*lambda_min_ratio > 0.0 && *lambda_min_ratio < 1.0))
    throw std::invalid_argument("lambda_min_ratio must lie in (0, 1)");
  if (max_size < 0) throw std::invalid_argument("max_size must be nonnegative");
  if (relax_ridge < 0.0 || search_ridge < 0.0) throw std::invalid_argument("ridge must be nonnegative");
  if (penalty_factors) {
    if (penalty_factors->size() != p) throw std::invalid_argument("penalty_factors length differs from p");
    if ((penalty_factors->array() < 0.0).any() || !penalty_factors->allFinite())
      throw std::invalid_argument("penalty factors must be finite and nonnegative");
    if (!(penalty_factors->array() > 0.0).any())
      throw std::invalid_argument("at least one penalty factor must be positive");
  }
}

SelectionPath project_along(const MatrixXd& X_candidates, const std::vector<int>& order, const ReferenceFit& ref,
                            int max_size, double ridge) {
  SelectionPath path;
  path.order = order;
  const int kmax = std::min<int>(max_size, static_cast<int>(order.size()));
  for (int k = 0; k <= kmax; ++k) {
    std::vector<int> subset(order.begin(), order.begin() + k);
    path.submodels.push_back(project(X_candidates, subset, ref, ridge));
    path.losses.push_back(path.submodels.back().loss);
  }
  return path;
}

SelectionPath forward_search(const MatrixXd& X_candidates, const ReferenceFit& ref, int max_size, double ridge) {
  if (ref.num_clusters() != 1) throw std::invalid_argument("forward search expects a single-cluster reference");
  const int p = static_cast<int>(X_candidates.cols());
  const int kmax = std::min(max_size, p);
  SelectionPath path;
  std::vector<int> current;
  std::vector<bool> used(static_cast<std::size_t>(p), false);
  path.submodels.push_back(project(X_candidates, current, ref, ridge));
  path.losses.push_back(path.submodels.back().loss);
  for (int k = 1; k <= kmax; ++k) {
    int best = -1;
    ProjectedSubmodel best_sub;
    for (int j = 0; j < p; ++j) {
      if (used[j]) continue;
      std::vector<int> trial = current;
      trial.push_back(j);
      ProjectedSubmodel sub;
      try {
        sub = project(X_candidates, trial, ref, ridge);
      } catch (const SingularSystemError&) {
        continue;
      }
      if (best < 0 || sub.loss < best_sub.loss) {
        best = j;
        best_sub = std::move(sub);
      }
    }
    if (best < 0) break;
    used[best] = true;
    current.push_back(best);
    path.order.push_back(best);
    path.submodels.push_back(std::move(best_sub));
    path.losses.push_back(path.submodels.back().loss);
  }
  return path;
}

namespace {

struct Standardized {
  MatrixXd x;      // centered and scaled columns
  VectorXd mean;
  VectorXd scale;  // population sd; zero marks a constant column
};

Standardized standardize(const MatrixXd& X) {
  Standardized s;
  const double n = static_cast<double>(X.rows());
  s.mean = X.colwise().mean().transpose();
  s.x = X.rowwise() - s.mean.transpose();
  s.scale = (s.x.colwise().squaredNorm().transpose() / n).cwiseSqrt();
  for (Index j = 0; j < X.cols(); ++j) {
    if (s.scale(j) > 1e-12 * std::max(1.0, std::abs(s.mean(j))))
      s.x.col(j) /= s.scale(j);
    else {
      s.scale(j) = 0.0;
      s.x.col(j).setZero();
    }
  }
  return s;
}

double soft_threshold(double z, double g) {
  if (z > g) return z - g;
  if (z < -g) return z + g;
  return 0.0;
}

class CoordinateDescent {
 public:
  CoordinateDescent(Family family, const Standardized& std_x, VectorXd targets, VectorXd gamma, double alpha,
                    const SearchConfig& cfg)
      : family_(family), x_(std_x), mu_star_(std::move(targets)), gamma_(std::move(gamma)), alpha_(alpha), cfg_(cfg) {
    n_ = x_.x.rows();
    p_ = x_.x.cols();
    beta_ = VectorXd::Zero(p_);
    usable_.resize(static_cast<std::size_t>(p_));
    for (Index j = 0; j < p_; ++j) usable_[j] = x_.scale(j) > 0.0;
    const double m = mu_star_.mean();
    b0_ = family_.link(family_.kind() == FamilyKind::bernoulli ? std::clamp(m, kBernoulliClamp, 1 - kBernoulliClamp)
                                                               : m);
  }

  // Solves at one lambda, warm-started from the current state.
  bool solve(double lambda) {
    if (family_.kind() == FamilyKind::gaussian) {
      w_ = VectorXd::Ones(n_);
      z_ = mu_star_;
      return inner(lambda);
    }
    for (int outer = 0; outer < cfg_.max_outer; ++outer) {
      const VectorXd prev_beta = beta_;
      const double prev_b0 = b0_;
      const VectorXd eta = linear_predictor();
      w_.resize(n_);
      z_.resize(n_);
      for (Index i = 0; i < n_; ++i) {
        const double mu = family_.inverse_link(eta(i));
        w_(i) = std::max(family_.variance_at(eta(i)), 1e-5);
        z_(i) = eta(i) + (mu_star_(i) - mu) / w_(i);
      }
      if (!inner(lambda)) return false;
      double change = (w_.sum() / static_cast<double>(n_)) * (b0_ - prev_b0) * (b0_ - prev_b0);
      for (Index j = 0; j < p_; ++j) {
        const double d = beta_(j) - prev_beta(j);
        if (d != 0.0) change = std::max(change, xw_(j) * d * d);
      }
      if (change < cfg_.cd_tol) return true;
    }
    return false;
  }

  // (1/n) x_j' (mu* - mu) at the current state.
  VectorXd gradient() const {
    const VectorXd eta = linear_predictor();
    VectorXd resid(n_);
    for (Index i = 0; i < n_; ++i) resid(i) = mu_star_(i) - family_.inverse_link(eta(i));
    return x_.x.transpose() * resid / static_cast<double>(n_);
  }

  // Fits the unpenalized block (intercept and gamma_j == 0 features) with all
  // penalized coefficients held at zero.
  bool fit_unpenalized() { return solve(std::numeric_limits<double>::infinity()); }

  const VectorXd& beta() const { return beta_; }
  double intercept() const { return b0_; }

 private:
  VectorXd linear_predictor() const { return (x_.x * beta_).array() + b0_; }

  bool inner(double lambda) {
    const double nd = static_cast<double>(n_);
    xw_ = (x_.x.array().square().colwise() * w_.array()).colwise().sum().transpose() / nd;
    VectorXd r = z_ - linear_predictor();
    const double wsum = w_.sum();
    std::vector<bool> active(static_cast<std::size_t>(p_), false);
    for (Index j = 0; j < p_; ++j) active[j] = beta_(j) != 0.0;

    auto sweep = [&](bool active_only) {
      double max_change = 0.0;
      const double d0 = w_.dot(r) / wsum;
      if (d0 != 0.0) {
        b0_ += d0;
        r.array() -= d0;
        max_change = std::max(max_change, (wsum / nd) * d0 * d0);
      }
      for (Index j = 0; j < p_; ++j) {
        if (!usable_[j] || (active_only && !active[j])) continue;
        const double g = (x_.x.col(j).array() * w_.array() * r.array()).sum() / nd + xw_(j) * beta_(j);
        const double pen = gamma_(j);
        double updated;
        if (std::isinf(lambda)) {
          updated = pen == 0.0 ? g / xw_(j) : 0.0;
        } else {
          updated = soft_threshold(g, lambda * alpha_ * pen) / (xw_(j) + lambda * (1.0 - alpha_) * pen);
        }
        const double d = updated - beta_(j);
        if (d != 0.0) {
          r -= d * x_.x.col(j);
          beta_(j) = updated;
          max_change = std::max(max_change, xw_(j) * d * d);
          if (updated != 0.0) active[j] = true;
        }
      }
      return max_change;
    };

    for (int sweeps = 0; sweeps < cfg_.cd_max_sweeps;) {
      ++sweeps;
      if (sweep(false) < cfg_.cd_tol) return true;
      while (sweeps < cfg_.cd_max_sweeps) {
        ++sweeps;
        if (sweep(true) < cfg_.cd_tol) break;
      }
    }
    return false;
  }

  Family family_;
  const Standardized& x_;
  VectorXd mu_star_;
  VectorXd gamma_;
  double alpha_;
  const SearchConfig& cfg_;
  Index n_ = 0, p_ = 0;
  VectorXd beta_, w_, z_, xw_;
  double b0_ = 0.0;
  std::vector<bool> usable_;
};

VectorXd reference_targets(const ReferenceFit& ref) {
  if (ref.num_clusters() != 1) throw std::invalid_argument("l1 search expects a single-cluster reference");
  VectorXd t = ref.cluster_means.row(0).transpose();
  if (ref.family.kind() == FamilyKind::bernoulli)
    t = t.cwiseMax(kBernoulliClamp).cwiseMin(1.0 - kBernoulliClamp);
  return t;
}

VectorXd penalty_vector(const SearchConfig& config, Index p) {
  return config.penalty_factors ? *config.penalty_factors : VectorXd::Ones(p);
}

double compute_lambda_max(const Standardized& sx, CoordinateDescent& cd, const VectorXd& gamma, double alpha) {
  if (!cd.fit_unpenalized()) throw NumericalError("unpenalized fit did not converge");
  const VectorXd g = cd.gradient();
  double lmax = 0.0;
  for (Index j = 0; j < g.size(); ++j)
    if (gamma(j) > 0.0 && sx.scale(j) > 0.0) lmax = std::max(lmax, std::abs(g(j)) / (alpha * gamma(j)));
  return lmax;
}

}  // namespace

double l1_lambda_max(const MatrixXd& X_candidates, const ReferenceFit& ref, const SearchConfig& config) {
  config.validate(X_candidates.cols());
  const Standardized sx = standardize(X_candidates);
  const VectorXd gamma = penalty_vector(config, X_candidates.cols());
  CoordinateDescent cd(ref.family, sx, reference_targets(ref), gamma, config.alpha, config);
  return compute_lambda_max(sx, cd, gamma, config.alpha);
}

L1Path l1_path(const MatrixXd& X_candidates, const ReferenceFit& ref, const SearchConfig& config) {
  const Index n = X_candidates.rows();
  const Index p = X_candidates.cols();
  config.validate(p);
  if (ref.num_obs() != n) throw std::invalid_argument("candidate rows differ from reference size");

  const Standardized sx = standardize(X_candidates);
  const VectorXd gamma = penalty_vector(config, p);
  CoordinateDescent cd(ref.family, sx, reference_targets(ref), gamma, config.alpha, config);

  L1Path path;
  path.lambda_max = compute_lambda_max(sx, cd, gamma, config.alpha);
  const double ratio = config.lambda_min_ratio.value_or(n > p ? 1e-3 : 1e-2);
  const int L = config.nlambda;
  path.lambdas.resize(L);
  for (int l = 0; l < L; ++l)
    path.lambdas(l) = path.lambda_max * std::pow(ratio, static_cast<double>(l) / static_cast<double>(L - 1));
  path.coefs = MatrixXd::Zero(p, L);
  path.intercepts = VectorXd::Zero(L);
  path.entry.assign(static_cast<std::size_t>(p), -1);
  VectorXd entry_size = VectorXd::Zero(p);

  auto record = [&](int l) {
    const VectorXd& b = cd.beta();
    double shift = 0.0;
    for (Index j = 0; j < p; ++j) {
      if (b(j) == 0.0) continue;
      path.coefs(j, l) = b(j) / sx.scale(j);
      shift += path.coefs(j, l) * sx.mean(j);
      if (path.entry[j] < 0) {
        path.entry[j] = l;
        entry_size(j) = std::abs(b(j));
      }
    }
    path.intercepts(l) = cd.intercept() - shift;
  };
  // At lambda_max the unpenalized fit (intercept plus zero-penalty features)
  // is already the exact solution; re-solving there only adds rounding noise.
  record(0);
  int solved = 1;
  if (path.lambda_max > 0.0) {
    for (int l = 1; l < L; ++l) {
      if (!cd.solve(path.lambdas(l))) {
        path.converged = false;
        path.failed_step = l;
        break;
      }
      record(l);
      solved = l + 1;
    }
  }
  // Unsolved grid points keep the last solution so the path stays usable.
  for (int l = solved; l < L && solved > 0; ++l) {
    path.coefs.col(l) = path.coefs.col(solved - 1);
    path.intercepts(l) = path.intercepts(solved - 1);
  }

  const VectorXd grad = cd.gradient().cwiseAbs();
  std::vector<int> idx(static_cast<std::size_t>(p));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    const int ea = path.entry[a] < 0 ? L : path.entry[a];
    const int eb = path.entry[b] < 0 ? L : path.entry[b];
    if (ea != eb) return ea < eb;
    if (ea < L) {
      if (entry_size(a) != entry_size(b)) return entry_size(a) > entry_size(b);
    } else {
      const double ga = sx.scale(a) > 0.0 ? grad(a) : -1.0;
      const double gb = sx.scale(b) > 0.0 ? grad(b) : -1.0;
      if (ga != gb) return ga > gb;
    }
    return a < b;
  });
  path.order = std::move(idx);
  return path;
}

namespace {

// Penalized (non-relaxed) submodel of size k: coefficients at the smallest
// lambda whose support lies within the first k features of the order.
ProjectedSubmodel penalized_submodel(const MatrixXd& X, const L1Path& path, int k, const ReferenceFit& ref) {
  const Index L = path.lambdas.size();
  std::vector<bool> allowed(static_cast<std::size_t>(X.cols()), false);
  for (int j = 0; j < k; ++j) allowed[path.order[j]] = true;
  Index chosen = 0;
  for (Index l = L - 1; l >= 0; --l) {
    bool ok = true;
    for (Index j = 0; j < X.cols() && ok; ++j)
      if (path.coefs(j, l) != 0.0 && !allowed[j]) ok = false;
    if (ok) {
      chosen = l;
      break;
    }
  }
  ProjectedSubmodel sub;
  sub.feature_set.assign(path.order.begin(), path.order.begin() + k);
  sub.coeffs.resize(1, k + 1);
  sub.coeffs(0, 0) = path.intercepts(chosen);
  for (int j = 0; j < k; ++j) sub.coeffs(0, j + 1) = path.coefs(path.order[j], chosen);
  sub.weights = VectorXd::Ones(1);
  const DesignMatrix X_sub = DesignMatrix::with_intercept(X, sub.feature_set);
  if (ref.family.has_dispersion()) {
    const VectorXd mu = ref.cluster_means.row(0).transpose();
    const VectorXd vars = ref.cluster_vars ? VectorXd(ref.cluster_vars->row(0).transpose()) : VectorXd::Zero(mu.size());
    sub.dispersions = VectorXd::Constant(1, project_gaussian_dispersion(X_sub, sub.coeffs.row(0).transpose(), mu, vars));
  }
  sub.loss = projection_loss(ref, sub, X_sub);
  return sub;
}

}  // namespace

SelectionPath build_path(const MatrixXd& X_candidates, const ReferenceFit& ref_select, const ReferenceFit& ref_predict,
                         const SearchConfig& config) {
  const Index n = X_candidates.rows();
  const Index p = X_candidates.cols();
  config.validate(p);
  if (ref_select.num_obs() != n || ref_predict.num_obs() != n)
    throw std::invalid_argument("reference fits must match the candidate rows");
  int max_size = std::min<int>(config.max_size, static_cast<int>(p));
  if (config.relax_ridge == 0.0) max_size = std::min<int>(max_size, static_cast<int>(n) - 1);
  max_size = std::max(max_size, 0);

  if (config.method == SearchMethod::forward) {
    SelectionPath fwd = forward_search(X_candidates, ref_select, max_size, config.search_ridge);
    if (!config.relax) return fwd;
    return project_along(X_candidates, fwd.order, ref_predict, max_size, config.relax_ridge);
  }

  const L1Path l1 = l1_path(X_candidates, ref_select, config);
  if (config.relax) {
    SelectionPath path = project_along(X_candidates, l1.order, ref_predict, max_size, config.relax_ridge);
    path.order = l1.order;
    return path;
  }
  SelectionPath path;
  path.order = l1.order;
  for (int k = 0; k <= max_size; ++k) {
    path.submodels.push_back(penalized_submodel(X_candidates, l1, k, ref_select));
    path.losses.push_back(path.submodels.back().loss);
  }
  return path;
}

}  // namespace projkit
