#include "projkit/reference.hpp"

#include "projkit/folds.hpp"
#include "projkit/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>

namespace projkit {

// ---------------------------------------------------------------------------
// Feature map and reference model

MatrixXd FeatureMap::apply(const MatrixXd& X) const {
  MatrixXd sub(X.rows(), static_cast<Index>(mask.size()));
  for (std::size_t j = 0; j < mask.size(); ++j) {
    if (mask[j] < 0 || mask[j] >= X.cols()) throw std::out_of_range("feature map index out of range");
    sub.col(static_cast<Index>(j)) = X.col(mask[j]);
  }
  if (center.size() == sub.cols()) sub.rowwise() -= center.transpose();
  if (rotation.size() == 0) return sub;
  return sub * rotation;
}

DesignMatrix ReferenceModel::design_for(const MatrixXd& X) const {
  if (!feature_map) throw std::invalid_argument("reference model has no feature map (externally supplied draws)");
  return DesignMatrix::with_intercept(feature_map->apply(X));
}

MatrixXd ReferenceModel::draw_log_lik(const DesignMatrix& Z, const VectorXd& y) const {
  if (Z.cols() != draws.betas.cols()) throw std::invalid_argument("design width differs from draw length");
  if (Z.rows() != y.size()) throw std::invalid_argument("design rows differ from response length");
  const MatrixXd eta = draws.betas * Z.values.transpose();  // S x m
  const auto vars = draws.variances();
  MatrixXd ll(eta.rows(), eta.cols());
  for (Index s = 0; s < eta.rows(); ++s)
    for (Index i = 0; i < eta.cols(); ++i)
      ll(s, i) = log_lik(family, y(i), eta(s, i), vars ? std::optional<double>((*vars)(s)) : std::nullopt);
  return ll;
}

VectorXd ReferenceModel::log_predictive(const DesignMatrix& Z, const VectorXd& y) const {
  const MatrixXd ll = draw_log_lik(Z, y);
  VectorXd out(ll.cols());
  const double logS = std::log(static_cast<double>(ll.rows()));
  for (Index i = 0; i < ll.cols(); ++i) out(i) = log_sum_exp(ll.col(i)) - logS;
  return out;
}

VectorXd ReferenceModel::mean_fit() const {
  if (posterior_mean) return draws.ref_design.values * *posterior_mean;
  return draws.ref_design.values * draws.betas.colwise().mean().transpose();
}

// ---------------------------------------------------------------------------
// Bayesian head

namespace {

VectorXd penalized_mask(const DesignMatrix& Z) {
  VectorXd d = VectorXd::Ones(Z.cols());
  if (Z.intercept && Z.cols() > 0) d(0) = 0.0;
  return d;
}

double default_tau_scale(const DesignMatrix& Z) {
  double s_max = 0.0;
  for (Index j = Z.intercept ? 1 : 0; j < Z.cols(); ++j) {
    const VectorXd c = Z.values.col(j).array() - Z.values.col(j).mean();
    s_max = std::max(s_max, std::sqrt(c.squaredNorm() / std::max<double>(1.0, static_cast<double>(Z.rows()) - 1.0)));
  }
  return s_max > 0.0 ? 1.0 / (s_max * s_max) : 1.0;
}

double log_half_t4(double tau, double scale) {
  const double z = tau / scale;
  return -2.5 * std::log1p(z * z / 4.0) - std::log(scale);
}

double student_t_logpdf(double y, double nu, double loc, double scale2) {
  const double z2 = (y - loc) * (y - loc) / (nu * scale2);
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi * scale2) -
         0.5 * (nu + 1.0) * std::log1p(z2);
}

// L^-T xi for a lower Cholesky factor L.
VectorXd upper_solve(const MatrixXd& L, const VectorXd& xi) {
  return L.transpose().triangularView<Eigen::Upper>().solve(xi);
}

}  // namespace

BayesHead BayesHead::fit(const DesignMatrix& Z, const VectorXd& y, Family family, const HeadConfig& config) {
  const Index n = Z.rows();
  const Index q = Z.cols();
  if (y.size() != n) throw std::invalid_argument("response length differs from design rows");
  if (family.kind() == FamilyKind::poisson) throw std::invalid_argument("head model supports gaussian and bernoulli");
  for (Index i = 0; i < n; ++i)
    if (!family.valid_response(y(i))) throw std::invalid_argument("response not valid for family");

  BayesHead head;
  head.family_ = family;
  head.design_ = Z;
  const VectorXd d = penalized_mask(Z);
  const double k = d.sum();
  const double scale = config.tau_scale.value_or(default_tau_scale(Z));

  if (config.fixed_tau) {
    head.taus_ = VectorXd::Constant(1, *config.fixed_tau);
  } else {
    if (config.tau_grid < 2) throw std::invalid_argument("tau grid needs at least two points");
    head.taus_.resize(config.tau_grid);
    const double lo = std::log(scale / config.tau_span), hi = std::log(scale * config.tau_span);
    for (int g = 0; g < config.tau_grid; ++g)
      head.taus_(g) = std::exp(lo + (hi - lo) * g / static_cast<double>(config.tau_grid - 1));
  }

  const Index G = head.taus_.size();
  VectorXd log_w(G);
  for (Index g = 0; g < G; ++g) {
    const double tau = head.taus_(g);
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
    Component comp;
    double log_evidence = 0.0;
    if (family.kind() == FamilyKind::gaussian) {
      const double r0 = static_cast<double>(q) - k;
      if (static_cast<double>(n) <= r0) throw std::invalid_argument("gaussian head needs more rows than flat coefficients");
      MatrixXd prec = Z.values.transpose() * Z.values;
      prec.diagonal() += d / (tau * tau);
      Eigen::LLT<MatrixXd> llt(prec);
      if (llt.info() != Eigen::Success) throw SingularSystemError("head posterior precision is singular");
      comp.mean = llt.solve(Z.values.transpose() * y);
      comp.chol = llt.matrixL();
      const double quad = (y - Z.values * comp.mean).squaredNorm() +
                          (d.array() * comp.mean.array().square()).sum() / (tau * tau);
      comp.a = 0.5 * (static_cast<double>(n) - r0);
      comp.b = std::max(0.5 * quad, 1e-300);
      log_evidence = -k * std::log(tau) - comp.chol.diagonal().array().log().sum() - comp.a * std::log(comp.b);
    } else {
      VectorXd prior_prec = d / (tau * tau);
      if (Z.intercept) prior_prec(0) = 1.0 / (config.intercept_sd * config.intercept_sd);
      VectorXd beta = VectorXd::Zero(q);
      auto log_post = [&](const VectorXd& b) {
        const VectorXd eta = Z.values * b;
        double lp = 0.0;
        for (Index i = 0; i < n; ++i) lp += log_lik(family, y(i), eta(i));
        return lp - 0.5 * (prior_prec.array() * b.array().square()).sum();
      };
      double current = log_post(beta);
      Eigen::LLT<MatrixXd> llt;
      for (int it = 0; it < 200; ++it) {
        const VectorXd eta = Z.values * beta;
        VectorXd w(n), r(n);
        for (Index i = 0; i < n; ++i) {
          const double mu = family.inverse_link(eta(i));
          w(i) = mu * (1.0 - mu);
          r(i) = y(i) - mu;
        }
        MatrixXd H = Z.values.transpose() * w.asDiagonal() * Z.values;
        H.diagonal() += prior_prec;
        llt.compute(H);
        if (llt.info() != Eigen::Success) throw NumericalError("Laplace Hessian not positive definite");
        VectorXd step = llt.solve(Z.values.transpose() * r - (prior_prec.array() * beta.array()).matrix());
        double next = log_post(beta + step);
        for (int h = 0; h < 30 && next < current; ++h) {
          step *= 0.5;
          next = log_post(beta + step);
        }
        if (next < current) break;
        beta += step;
        current = next;
        if (step.cwiseAbs().maxCoeff() < 1e-10) break;
      }
      {
        const VectorXd eta = Z.values * beta;
        VectorXd w(n);
        for (Index i = 0; i < n; ++i) w(i) = family.variance_at(eta(i));
        MatrixXd H = Z.values.transpose() * w.asDiagonal() * Z.values;
        H.diagonal() += prior_prec;
        llt.compute(H);
        if (llt.info() != Eigen::Success) throw NumericalError("Laplace Hessian not positive definite");
      }
      comp.mean = beta;
      comp.chol = llt.matrixL();
      log_evidence = current + 0.5 * prior_prec.array().log().sum() - comp.chol.diagonal().array().log().sum();
    }
    log_w(g) = log_evidence + (config.fixed_tau ? 0.0 : log_half_t4(tau, scale) + std::log(tau));
    head.components_.push_back(std::move(comp));
  }
  head.weights_ = (log_w.array() - log_sum_exp(log_w)).exp();

  if (family.kind() == FamilyKind::bernoulli) {
    head.mc_betas_ = head.sample(config.predictive_draws, derive_seed(config.seed, 0x9e3)).betas;
  }
  return head;
}

PosteriorDraws BayesHead::sample(int S, std::uint64_t seed) const {
  if (S < 1) throw std::invalid_argument("need at least one draw");
  auto rng = make_rng(seed, 0x5a);
  std::discrete_distribution<int> pick(weights_.data(), weights_.data() + weights_.size());
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index q = design_.cols();
  PosteriorDraws draws;
  draws.ref_design = design_;
  draws.betas.resize(S, q);
  if (family_.has_dispersion()) draws.sigmas = VectorXd(S);
  for (int s = 0; s < S; ++s) {
    const Component& c = components_[static_cast<std::size_t>(pick(rng))];
    VectorXd xi(q);
    for (Index j = 0; j < q; ++j) xi(j) = normal(rng);
    double sd = 1.0;
    if (family_.has_dispersion()) {
      std::gamma_distribution<double> gamma(c.a, 1.0);
      const double sigma2 = c.b / gamma(rng);
      sd = std::sqrt(sigma2);
      (*draws.sigmas)(s) = sd;
    }
    draws.betas.row(s) = (c.mean + sd * upper_solve(c.chol, xi)).transpose();
  }
  return draws;
}

VectorXd BayesHead::log_predictive(const DesignMatrix& Z_new, const VectorXd& y_new) const {
  if (Z_new.cols() != design_.cols() || Z_new.rows() != y_new.size())
    throw std::invalid_argument("predictive design shape mismatch");
  VectorXd out(Z_new.rows());
  if (family_.kind() == FamilyKind::gaussian) {
    VectorXd terms(static_cast<Index>(components_.size()));
    for (Index i = 0; i < Z_new.rows(); ++i) {
      const VectorXd z = Z_new.values.row(i).transpose();
      for (std::size_t g = 0; g < components_.size(); ++g) {
        const Component& c = components_[g];
        const VectorXd v = c.chol.triangularView<Eigen::Lower>().solve(z);
        const double scale2 = (c.b / c.a) * (1.0 + v.squaredNorm());
        terms(static_cast<Index>(g)) = std::log(weights_(static_cast<Index>(g))) +
                                       student_t_logpdf(y_new(i), 2.0 * c.a, z.dot(c.mean), scale2);
      }
      out(i) = log_sum_exp(terms);
    }
    return out;
  }
  const MatrixXd eta = mc_betas_ * Z_new.values.transpose();
  const double logS = std::log(static_cast<double>(eta.rows()));
  for (Index i = 0; i < Z_new.rows(); ++i) {
    VectorXd ll(eta.rows());
    for (Index s = 0; s < eta.rows(); ++s) ll(s) = log_lik(family_, y_new(i), eta(s, i));
    out(i) = log_sum_exp(ll) - logS;
  }
  return out;
}

VectorXd BayesHead::posterior_mean() const {
  VectorXd m = VectorXd::Zero(design_.cols());
  for (std::size_t g = 0; g < components_.size(); ++g) m += weights_(static_cast<Index>(g)) * components_[g].mean;
  return m;
}

// ---------------------------------------------------------------------------
// Screening and supervised principal components

VectorXd abs_correlations(const MatrixXd& X, const VectorXd& y) {
  if (X.rows() != y.size()) throw std::invalid_argument("X rows differ from y length");
  const VectorXd yc = y.array() - y.mean();
  const double ynorm = yc.norm();
  VectorXd r(X.cols());
  for (Index j = 0; j < X.cols(); ++j) {
    const VectorXd xc = X.col(j).array() - X.col(j).mean();
    const double xn = xc.norm();
    if (xn <= 1e-300 || ynorm <= 1e-300)
      r(j) = std::numeric_limits<double>::quiet_NaN();
    else
      r(j) = std::min(1.0, std::abs(xc.dot(yc)) / (xn * ynorm));
  }
  return r;
}

namespace {

std::vector<int> screen_from(const VectorXd& r, double gamma) {
  std::vector<int> mask;
  for (Index j = 0; j < r.size(); ++j)
    if (std::isfinite(r(j)) && r(j) >= gamma) mask.push_back(static_cast<int>(j));
  return mask;
}

SpcResult pcs_from_mask(const MatrixXd& X, std::vector<int> mask, int n_components) {
  if (mask.empty()) throw EmptyScreenError("screening left no features");
  SpcResult out;
  MatrixXd sub(X.rows(), static_cast<Index>(mask.size()));
  for (std::size_t j = 0; j < mask.size(); ++j) sub.col(static_cast<Index>(j)) = X.col(mask[j]);
  out.map.center = sub.colwise().mean().transpose();
  sub.rowwise() -= out.map.center.transpose();
  const Index max_rank = std::min<Index>(sub.cols(), std::max<Index>(1, X.rows() - 1));
  const Index nc = std::min<Index>(n_components, max_rank);
  Eigen::BDCSVD<MatrixXd> svd(sub, Eigen::ComputeThinV);
  MatrixXd rot = svd.matrixV().leftCols(nc);
  for (Index c = 0; c < nc; ++c) {
    Index arg;
    rot.col(c).cwiseAbs().maxCoeff(&arg);
    if (rot(arg, c) < 0.0) rot.col(c) *= -1.0;
  }
  out.map.mask = std::move(mask);
  out.map.rotation = rot;
  out.scores = sub * rot;
  return out;
}

}  // namespace

std::vector<int> screen(const MatrixXd& X, const VectorXd& y, double gamma) {
  const VectorXd r = abs_correlations(X, y);
  const auto dropped = std::count_if(r.data(), r.data() + r.size(), [](double v) { return !std::isfinite(v); });
  if (dropped > 0) std::clog << "warning: " << dropped << " zero-variance feature(s) dropped from screening\n";
  std::vector<int> mask = screen_from(r, gamma);
  if (mask.empty()) throw EmptyScreenError("no feature has |R(x_j, y)| >= gamma");
  return mask;
}

SpcResult supervised_pcs(const MatrixXd& X, const VectorXd& y, double gamma, int n_components) {
  if (n_components < 1) throw std::invalid_argument("n_components must be at least 1");
  return pcs_from_mask(X, screen(X, y, gamma), n_components);
}

std::vector<double> gamma_grid(const VectorXd& abs_corr, int n_gamma) {
  if (n_gamma < 2) throw std::invalid_argument("n_gamma must be at least 2");
  std::vector<double> r;
  for (Index j = 0; j < abs_corr.size(); ++j)
    if (std::isfinite(abs_corr(j))) r.push_back(abs_corr(j));
  if (r.empty()) throw EmptyScreenError("no feature has a defined correlation with y");
  std::sort(r.begin(), r.end(), std::greater<>());
  const double lo = r.back();
  // Midway between the two largest keeps exactly one feature (barring ties).
  const double hi = r.size() > 1 ? 0.5 * (r[0] + r[1]) : r[0];
  std::vector<double> grid(static_cast<std::size_t>(n_gamma));
  for (int g = 0; g < n_gamma; ++g) grid[g] = lo + (hi - lo) * g / static_cast<double>(n_gamma - 1);
  grid.front() = lo;
  return grid;
}

void SpcConfig::validate() const {
  if (n_components < 1) throw std::invalid_argument("n_components must be at least 1");
  if (n_gamma < 2) throw std::invalid_argument("n_gamma must be at least 2");
  if (cv_folds < 2) throw std::invalid_argument("cv_folds must be at least 2");
  if (n_draws < 1) throw std::invalid_argument("n_draws must be at least 1");
}

ReferenceModel fit_spc_reference(const MatrixXd& X, const VectorXd& y, Family family, const SpcConfig& config) {
  config.validate();
  const Index n = X.rows();
  if (n < config.cv_folds) throw std::invalid_argument("need at least cv_folds observations");
  const VectorXd r_full = abs_correlations(X, y);
  const std::vector<double> grid = gamma_grid(r_full, config.n_gamma);

  HeadConfig head_cfg = config.head;
  head_cfg.seed = derive_seed(config.seed, 2);
  const std::vector<int> folds = make_folds(y, family, config.cv_folds, derive_seed(config.seed, 1));
  std::vector<double> total(grid.size(), 0.0);
  std::vector<bool> ok(grid.size(), true);
  for (int k = 0; k < config.cv_folds; ++k) {
    const auto train = fold_members(folds, k, false);
    const auto test = fold_members(folds, k, true);
    const MatrixXd Xtr = select_rows(X, train), Xte = select_rows(X, test);
    const VectorXd ytr = select_rows(y, train), yte = select_rows(y, test);
    const VectorXd r_tr = abs_correlations(Xtr, ytr);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      if (!ok[g]) continue;
      try {
        std::vector<int> mask = screen_from(r_tr, grid[g]);
        if (mask.empty()) {
          // The training fold's correlations can all fall below a threshold
          // set on the full data; keep the fold's strongest feature.
          Index best = 0;
          double bv = -1.0;
          for (Index j = 0; j < r_tr.size(); ++j)
            if (std::isfinite(r_tr(j)) && r_tr(j) > bv) bv = r_tr(j), best = j;
          mask = {static_cast<int>(best)};
        }
        const SpcResult spc = pcs_from_mask(Xtr, std::move(mask), config.n_components);
        const BayesHead head = BayesHead::fit(DesignMatrix::with_intercept(spc.scores), ytr, family, head_cfg);
        const VectorXd lp = head.log_predictive(DesignMatrix::with_intercept(spc.map.apply(Xte)), yte);
        if (!lp.allFinite()) throw NumericalError("non-finite CV predictive density");
        total[g] += lp.sum();
      } catch (const std::exception&) {
        ok[g] = false;
      }
    }
  }
  int chosen = -1;
  for (std::size_t g = 0; g < grid.size(); ++g)
    if (ok[g] && (chosen < 0 || total[g] > total[static_cast<std::size_t>(chosen)])) chosen = static_cast<int>(g);
  if (chosen < 0) throw NumericalError("reference CV failed for every screening threshold");

  const SpcResult spc = supervised_pcs(X, y, grid[static_cast<std::size_t>(chosen)], config.n_components);
  const DesignMatrix Z = DesignMatrix::with_intercept(spc.scores);
  const BayesHead head = BayesHead::fit(Z, y, family, head_cfg);

  ReferenceModel model;
  model.family = family;
  model.draws = head.sample(config.n_draws, derive_seed(config.seed, 3));
  model.posterior_mean = head.posterior_mean();
  model.feature_map = spc.map;
  model.gamma_chosen = grid[static_cast<std::size_t>(chosen)];
  model.gamma_grid = grid;
  for (std::size_t g = 0; g < grid.size(); ++g)
    model.gamma_cv_mlpd.push_back(ok[g] ? total[g] / static_cast<double>(n) : -std::numeric_limits<double>::infinity());
  return model;
}

ReferenceModel fit_linear_reference(const MatrixXd& X, const VectorXd& y, Family family, const HeadConfig& config) {
  FeatureMap map;
  map.mask.resize(static_cast<std::size_t>(X.cols()));
  std::iota(map.mask.begin(), map.mask.end(), 0);
  const DesignMatrix Z = DesignMatrix::with_intercept(X);
  const BayesHead head = BayesHead::fit(Z, y, family, config);
  ReferenceModel model;
  model.family = family;
  model.draws = head.sample(config.n_draws, derive_seed(config.seed, 3));
  model.posterior_mean = head.posterior_mean();
  model.feature_map = std::move(map);
  return model;
}

// ---------------------------------------------------------------------------
// Draw files

ReferenceModel ingest_draws(const std::filesystem::path& design_csv, const std::filesystem::path& draws_ndjson,
                            Family family) {
  const CsvTable table = read_csv(design_csv);
  if (table.values.rows() < 1) throw ParseError(design_csv.string() + ": design has no rows");
  if (!table.values.allFinite()) throw ParseError(design_csv.string() + ": non-finite design entries");
  const bool intercept = !table.header.empty() && table.header.front() == "_intercept";
  if (intercept && (table.values.col(0).array() != 1.0).any())
    throw ParseError(design_csv.string() + ": _intercept column must be all ones");
  const Index q = table.values.cols();

  std::ifstream in(draws_ndjson);
  if (!in) throw ParseError("cannot open " + draws_ndjson.string());
  std::vector<VectorXd> betas;
  std::vector<double> sigmas;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::string where = draws_ndjson.string() + ":" + std::to_string(lineno) + ": ";
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + "invalid JSON (" + e.what() + ")");
    }
    if (!rec.is_object() || !rec.contains("beta") || !rec["beta"].is_array())
      throw ParseError(where + "missing \"beta\" array");
    const auto& b = rec["beta"];
    if (static_cast<Index>(b.size()) != q)
      throw ParseError(where + "beta has " + std::to_string(b.size()) + " entries, design has " + std::to_string(q));
    VectorXd beta(q);
    for (Index j = 0; j < q; ++j) {
      if (!b[static_cast<std::size_t>(j)].is_number()) throw ParseError(where + "non-numeric beta entry");
      beta(j) = b[static_cast<std::size_t>(j)].get<double>();
    }
    if (!beta.allFinite()) throw ParseError(where + "non-finite beta entry");
    betas.push_back(std::move(beta));
    const bool has_sigma = rec.contains("sigma");
    if (family.has_dispersion() && !has_sigma) throw ParseError(where + "missing \"sigma\" for gaussian draws");
    if (!family.has_dispersion() && has_sigma)
      throw ParseError(where + "\"sigma\" given for a family without dispersion");
    if (has_sigma) {
      if (!rec["sigma"].is_number()) throw ParseError(where + "non-numeric sigma");
      const double s = rec["sigma"].get<double>();
      if (!(std::isfinite(s) && s > 0.0)) throw ParseError(where + "sigma must be finite and positive");
      sigmas.push_back(s);
    }
  }
  if (betas.empty()) throw ParseError(draws_ndjson.string() + ": no draws");

  ReferenceModel model;
  model.family = family;
  model.draws.ref_design = DesignMatrix(table.values, intercept);
  model.draws.betas.resize(static_cast<Index>(betas.size()), q);
  for (std::size_t s = 0; s < betas.size(); ++s) model.draws.betas.row(static_cast<Index>(s)) = betas[s].transpose();
  if (family.has_dispersion()) model.draws.sigmas = Eigen::Map<VectorXd>(sigmas.data(), static_cast<Index>(sigmas.size()));
  model.draws.validate(family);
  return model;
}

void export_draws(const ReferenceModel& model, const std::filesystem::path& design_csv,
                  const std::filesystem::path& draws_ndjson) {
  const DesignMatrix& Z = model.draws.ref_design;
  std::vector<std::string> header;
  for (Index j = 0; j < Z.cols(); ++j)
    header.push_back(Z.intercept && j == 0 ? std::string("_intercept") : "z" + std::to_string(j + (Z.intercept ? 0 : 1)));
  write_csv(design_csv, header, Z.values);
  std::ofstream out(draws_ndjson, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + draws_ndjson.string());
  for (Index s = 0; s < model.draws.num_draws(); ++s) {
    out << "{\"beta\":[";
    for (Index j = 0; j < Z.cols(); ++j) out << (j ? "," : "") << format_double(model.draws.betas(s, j));
    out << "]";
    if (model.draws.sigmas) out << ",\"sigma\":" << format_double((*model.draws.sigmas)(s));
    out << "}\n";
  }
}

double tau0(double p0, double p, double sigma, double n) {
  if (!(p0 > 0.0) || p0 >= p) throw std::invalid_argument("tau0 needs 0 < p0 < p");
  if (!(sigma > 0.0)) throw std::invalid_argument("tau0 needs sigma > 0");
  if (!(n >= 1.0)) throw std::invalid_argument("tau0 needs n >= 1");
  return p0 / (p - p0) * sigma / std::sqrt(n);
}

}  // namespace projkit
