#include "projkit/validation.hpp"

#include "projkit/folds.hpp"

#include <algorithm>
#include <array>
#include <iostream>
#include <numeric>

namespace projkit {

void PointwiseUtilities::validate() const {
  const Index n = u_ref.size();
  if (u_sub.cols() != n || weights.size() != n) throw std::invalid_argument("pointwise utility shapes disagree");
  if (khat && khat->size() != n) throw std::invalid_argument("khat length differs from point count");
  if ((weights.array() < 0.0).any()) throw std::invalid_argument("negative point weight");
  if (std::abs(weights.sum() - 1.0) > 1e-10) throw std::invalid_argument("point weights must sum to 1");
  for (Index i = 0; i < n; ++i) {
    if (weights(i) == 0.0) continue;
    if (!std::isfinite(u_ref(i)) || !u_sub.col(i).allFinite())
      throw std::invalid_argument("non-finite utility at a weighted point");
  }
}

namespace {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe weighted_mean_se(const VectorXd& d, const VectorXd& v, double m) {
  MeanSe out;
  for (Index i = 0; i < d.size(); ++i)
    if (v(i) > 0.0) out.mean += v(i) * d(i);
  double var = 0.0;
  for (Index i = 0; i < d.size(); ++i)
    if (v(i) > 0.0) var += v(i) * (d(i) - out.mean) * (d(i) - out.mean);
  var *= m / (m - 1.0);
  out.se = std::sqrt(var / m);
  return out;
}

double positive_count(const VectorXd& v) { return static_cast<double>((v.array() > 0.0).count()); }

}  // namespace

UtilitySummary relative_utility(const PointwiseUtilities& pw, std::vector<int> sizes) {
  pw.validate();
  const double m = positive_count(pw.weights);
  if (m < 2.0) throw std::invalid_argument("need at least two points with positive weight");
  const Index K = pw.u_sub.rows();
  if (sizes.empty()) {
    sizes.resize(static_cast<std::size_t>(K));
    std::iota(sizes.begin(), sizes.end(), 0);
  }
  if (static_cast<Index>(sizes.size()) != K) throw std::invalid_argument("size labels differ from utility rows");

  UtilitySummary s;
  s.sizes = std::move(sizes);
  s.delta_mean.resize(K);
  s.delta_se.resize(K);
  s.abs_mean.resize(K);
  s.abs_se.resize(K);
  for (Index k = 0; k < K; ++k) {
    const VectorXd u = pw.u_sub.row(k).transpose();
    const MeanSe rel = weighted_mean_se(u - pw.u_ref, pw.weights, m);
    const MeanSe abs = weighted_mean_se(u, pw.weights, m);
    s.delta_mean(k) = rel.mean;
    s.delta_se(k) = rel.se;
    s.abs_mean(k) = abs.mean;
    s.abs_se(k) = abs.se;
  }
  const MeanSe ref = weighted_mean_se(pw.u_ref, pw.weights, m);
  s.ref_mean = ref.mean;
  s.ref_se = ref.se;
  s.pointwise = pw;
  return s;
}

int select_size(const UtilitySummary& summary, SizeRule rule) {
  const Index K = summary.delta_mean.size();
  if (K == 0) throw std::invalid_argument("empty utility summary");
  if (rule == SizeRule::ref_1se) {
    for (Index k = 0; k < K; ++k)
      if (summary.delta_mean(k) + summary.delta_se(k) >= 0.0) return summary.sizes[static_cast<std::size_t>(k)];
  }
  Index best = 0;
  summary.delta_mean.maxCoeff(&best);
  if (summary.pointwise) {
    const PointwiseUtilities& pw = *summary.pointwise;
    const double m = positive_count(pw.weights);
    const VectorXd ub = pw.u_sub.row(best).transpose();
    for (Index k = 0; k < K; ++k) {
      const MeanSe d = weighted_mean_se(VectorXd(pw.u_sub.row(k).transpose()) - ub, pw.weights, m);
      if (d.mean + d.se >= 0.0) return summary.sizes[static_cast<std::size_t>(k)];
    }
    return summary.sizes[static_cast<std::size_t>(best)];
  }
  for (Index k = 0; k < K; ++k)
    if (summary.delta_mean(k) + summary.delta_se(k) >= summary.delta_mean(best))
      return summary.sizes[static_cast<std::size_t>(k)];
  return summary.sizes[static_cast<std::size_t>(best)];
}

LooReference loo_reference_fit(const PosteriorDraws& draws, Family family, const VectorXd& y, Index i,
                               const ReferenceFit& full) {
  if (y.size() != draws.num_obs()) throw std::invalid_argument("response length differs from draw design rows");
  if (i < 0 || i >= y.size()) throw std::out_of_range("left-out index out of range");
  const VectorXd eta = draws.betas * draws.ref_design.values.row(i).transpose();
  const auto vars = draws.variances();
  VectorXd ll(eta.size());
  for (Index s = 0; s < eta.size(); ++s)
    ll(s) = log_lik(family, y(i), eta(s), vars ? std::optional<double>((*vars)(s)) : std::nullopt);
  const PsisResult psis = psis_smooth(-ll);
  LooReference out;
  out.fit = summarize_clusters(family, draws, full.clusters, &psis.weights);
  out.khat = psis.khat;
  out.weights = psis.weights;
  out.log_pred = log_sum_exp(VectorXd(ll.array() + psis.weights.array().log()));
  return out;
}

Subsample stratified_subsample(const VectorXd& khat, int m, std::uint64_t seed) {
  const Index n = khat.size();
  if (m < 1 || m > n) throw std::invalid_argument("subsample size must lie in [1, n]");
  std::array<std::vector<int>, 3> strata;
  for (Index i = 0; i < n; ++i) {
    const double k = khat(i);
    const int s = std::isnan(k) || k > kKhatBad ? 2 : (k < 0.5 ? 0 : 1);
    strata[s].push_back(static_cast<int>(i));
  }
  auto rng = make_rng(seed, 0x55b);
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  const int per = m / 3;
  int taken = 0;
  for (auto& s : strata) {
    std::vector<int> pool = s;
    std::shuffle(pool.begin(), pool.end(), rng);
    const int take = std::min<int>(per, static_cast<int>(pool.size()));
    for (int t = 0; t < take; ++t) chosen[pool[t]] = 1;
    taken += take;
  }
  std::vector<int> rest;
  for (Index i = 0; i < n; ++i)
    if (!chosen[i]) rest.push_back(static_cast<int>(i));
  std::shuffle(rest.begin(), rest.end(), rng);
  for (int t = 0; t < m - taken; ++t) chosen[rest[t]] = 1;

  Subsample out;
  out.weights = VectorXd::Zero(n);
  bool missing = false;
  for (const auto& s : strata) {
    const auto mj = std::count_if(s.begin(), s.end(), [&](int i) { return chosen[i] != 0; });
    if (mj == 0) {
      missing = !s.empty() || missing;
      continue;
    }
    for (int i : s)
      if (chosen[i])
        out.weights(i) = static_cast<double>(s.size()) / (static_cast<double>(n) * static_cast<double>(mj));
  }
  // Only happens for m < 3: an unsampled stratum leaves mass unassigned.
  if (missing) out.weights /= out.weights.sum();
  for (Index i = 0; i < n; ++i)
    if (chosen[i]) out.selected.push_back(static_cast<int>(i));
  return out;
}

int effective_max_size(const SearchConfig& search, Index n_train, Index p) {
  int k = std::min<int>(search.max_size, static_cast<int>(p));
  if (search.relax_ridge == 0.0) k = std::min<int>(k, static_cast<int>(n_train) - 1);
  return std::max(k, 0);
}

namespace {

// A reference that regresses on every raw feature unchanged. Projecting it
// onto all of its own features returns the reference itself.
bool is_raw_linear(const ReferenceModel& ref, Index p) {
  if (!ref.feature_map) return false;
  const FeatureMap& fm = *ref.feature_map;
  if (fm.rotation.size() != 0 || static_cast<Index>(fm.mask.size()) != p) return false;
  if (fm.center.size() != 0 && !fm.center.isZero(0.0)) return false;
  for (Index j = 0; j < p; ++j)
    if (fm.mask[static_cast<std::size_t>(j)] != j) return false;
  return true;
}

bool covers_all(const std::vector<int>& features, Index p) {
  if (static_cast<Index>(features.size()) != p) return false;
  std::vector<int> s = features;
  std::sort(s.begin(), s.end());
  for (Index j = 0; j < p; ++j)
    if (s[static_cast<std::size_t>(j)] != j) return false;
  return true;
}

SelectionPath fold_path(const MatrixXd& X, const ReferenceFit& sel, const ReferenceFit& pred, const SearchConfig& s,
                        const CvConfig& config, const SelectionPath& full_path) {
  if (config.validate_search) return build_path(X, sel, pred, s);
  SelectionPath path = project_along(X, full_path.order, pred, s.max_size, s.relax_ridge);
  path.order = full_path.order;
  return path;
}

struct Slot {
  MatrixXd u_sub;  // sizes x (points in this work item)
  VectorXd u_ref;
  std::vector<int> order;
  bool failed = false;
};

}  // namespace

CvResult cv_varsel(const MatrixXd& X, const VectorXd& y, const ReferenceModel& ref, const ReferenceBuilder* builder,
                   const CvScheme& scheme, const CvConfig& config) {
  const Index n = X.rows();
  const Index p = X.cols();
  const Family family = ref.family;
  if (y.size() != n) throw std::invalid_argument("response length differs from X rows");
  if (ref.draws.num_obs() != n) throw std::invalid_argument("reference draws do not match the data rows");
  ref.draws.validate(family);
  const Index S = ref.draws.num_draws();
  const int c_sel = static_cast<int>(std::min<Index>(config.clusters_select, S));
  const int c_pred = static_cast<int>(std::min<Index>(config.clusters_predict, S));
  if (c_sel < 1 || c_pred < 1) throw std::invalid_argument("cluster counts must be positive");

  std::vector<int> folds;
  Index n_train = n;
  if (scheme.kind == CvSchemeKind::kfold) {
    if (builder == nullptr) throw std::invalid_argument("k-fold validation needs a reference builder");
    folds = make_folds(y, family, scheme.folds, derive_seed(config.seed, 13));
    for (int k = 0; k < scheme.folds; ++k)
      n_train = std::min<Index>(n_train, static_cast<Index>(fold_members(folds, k, false).size()));
  } else if (S < 5) {
    throw std::invalid_argument("PSIS-LOO needs at least 5 draws");
  }
  SearchConfig search = config.search;
  search.max_size = effective_max_size(config.search, n_train, p);
  const Index sizes = search.max_size + 1;

  CvResult result;
  const ReferenceFit full_sel = cluster_draws(ref.draws, family, c_sel, derive_seed(config.seed, 11));
  const ReferenceFit full_pred = cluster_draws(ref.draws, family, c_pred, derive_seed(config.seed, 12));
  result.full_path = build_path(X, full_sel, full_pred, search);

  PointwiseUtilities& pw = result.pointwise;
  pw.u_sub = MatrixXd::Zero(sizes, n);
  pw.u_ref = VectorXd::Zero(n);
  pw.weights = VectorXd::Zero(n);

  std::vector<std::vector<int>> work_test;
  std::vector<Slot> slots;
  auto warn = [](const std::string& what, const std::exception& e) {
    std::clog << "warning: " << what << " failed: " << e.what() << '\n';
  };

  if (scheme.kind == CvSchemeKind::kfold) {
    for (int k = 0; k < scheme.folds; ++k) work_test.push_back(fold_members(folds, k, true));
    slots.resize(work_test.size());
    result.folds.resize(work_test.size());
    parallel_for(work_test.size(), config.threads, [&](std::size_t k) {
      FoldRecord& rec = result.folds[k];
      rec.train = fold_members(folds, static_cast<int>(k), false);
      rec.test = work_test[k];
      Slot& slot = slots[k];
      try {
        const MatrixXd Xtr = select_rows(X, rec.train), Xte = select_rows(X, rec.test);
        const VectorXd ytr = select_rows(y, rec.train), yte = select_rows(y, rec.test);
        const ReferenceModel ref_k = (*builder)(Xtr, ytr, derive_seed(config.seed, 100 + k));
        const ReferenceFit sel = cluster_draws(ref_k.draws, family, c_sel, derive_seed(config.seed, 200 + k));
        const ReferenceFit pred = cluster_draws(ref_k.draws, family, c_pred, derive_seed(config.seed, 300 + k));
        const SelectionPath path = fold_path(Xtr, sel, pred, search, config, result.full_path);
        slot.u_ref = ref_k.log_predictive(ref_k.design_for(Xte), yte);
        slot.u_sub.resize(sizes, Xte.rows());
        const bool self = is_raw_linear(ref_k, p);
        for (Index kk = 0; kk < sizes; ++kk) {
          const ProjectedSubmodel& sub = path.submodels[static_cast<std::size_t>(kk)];
          for (Index t = 0; t < Xte.rows(); ++t)
            slot.u_sub(kk, t) = self && covers_all(sub.feature_set, p)
                                    ? slot.u_ref(t)
                                    : predictive_log_density(family, sub, Xte.row(t).transpose(), yte(t));
        }
        slot.order = path.order;
      } catch (const std::exception& e) {
        warn("fold " + std::to_string(k), e);
        slot.failed = true;
      }
    });
  } else {
    std::vector<int> points(static_cast<std::size_t>(n));
    std::iota(points.begin(), points.end(), 0);
    VectorXd khat(n);
    for (Index i = 0; i < n; ++i) khat(i) = loo_reference_fit(ref.draws, family, y, i, full_sel).khat;
    pw.khat = khat;
    VectorXd v = VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    if (scheme.kind == CvSchemeKind::loo_subsample) {
      const Subsample sub = stratified_subsample(khat, scheme.subsample, scheme.subsample_seed);
      points = sub.selected;
      v = sub.weights;
    }
    pw.weights = v;
    for (int i : points) work_test.push_back({i});
    slots.resize(work_test.size());
    result.folds.resize(work_test.size());
    const bool self = is_raw_linear(ref, p);
    parallel_for(work_test.size(), config.threads, [&](std::size_t w) {
      const int i = work_test[w][0];
      FoldRecord& rec = result.folds[w];
      rec.test = {i};
      // The search sees every row; row i enters only through reweighted draws.
      rec.train.resize(static_cast<std::size_t>(n));
      std::iota(rec.train.begin(), rec.train.end(), 0);
      Slot& slot = slots[w];
      try {
        const LooReference loo_sel = loo_reference_fit(ref.draws, family, y, i, full_sel);
        const LooReference loo_pred = loo_reference_fit(ref.draws, family, y, i, full_pred);
        const SelectionPath path = fold_path(X, loo_sel.fit, loo_pred.fit, search, config, result.full_path);
        slot.u_ref = VectorXd::Constant(1, loo_pred.log_pred);
        slot.u_sub.resize(sizes, 1);
        for (Index kk = 0; kk < sizes; ++kk) {
          const ProjectedSubmodel& sub = path.submodels[static_cast<std::size_t>(kk)];
          slot.u_sub(kk, 0) = self && covers_all(sub.feature_set, p)
                                  ? slot.u_ref(0)
                                  : predictive_log_density(family, sub, X.row(i).transpose(), y(i));
        }
        slot.order = path.order;
      } catch (const std::exception& e) {
        warn("point " + std::to_string(i), e);
        slot.failed = true;
      }
    });
  }

  bool any_failed = false;
  for (std::size_t w = 0; w < slots.size(); ++w) {
    FoldRecord& rec = result.folds[w];
    rec.failed = slots[w].failed;
    rec.order = slots[w].order;
    if (rec.failed) {
      ++result.failed_folds;
      any_failed = true;
      for (int i : rec.test) pw.weights(i) = 0.0;
      continue;
    }
    for (std::size_t t = 0; t < rec.test.size(); ++t) {
      const int i = rec.test[t];
      pw.u_ref(i) = slots[w].u_ref(static_cast<Index>(t));
      pw.u_sub.col(i) = slots[w].u_sub.col(static_cast<Index>(t));
      if (scheme.kind == CvSchemeKind::kfold) pw.weights(i) = 1.0 / static_cast<double>(n);
    }
  }
  if (static_cast<double>(result.failed_folds) > config.max_failed_fraction * static_cast<double>(slots.size()))
    throw NumericalError(std::to_string(result.failed_folds) + " of " + std::to_string(slots.size()) +
                         " validation folds failed");
  if (any_failed) pw.weights /= pw.weights.sum();

  std::vector<int> labels(static_cast<std::size_t>(sizes));
  std::iota(labels.begin(), labels.end(), 0);
  result.summary = relative_utility(pw, labels);
  return result;
}

TestEvaluation eval_test(Family family, const SelectionPath& path, const MatrixXd& X_test, const VectorXd& y_test,
                         const ReferenceModel* ref) {
  const Index m = X_test.rows();
  if (y_test.size() != m || m == 0) throw std::invalid_argument("test data shapes disagree");
  const auto K = static_cast<Index>(path.submodels.size());
  TestEvaluation out;
  out.mlpd = VectorXd::Zero(K);
  out.pointwise.resize(K, m);
  if (family.kind() == FamilyKind::bernoulli)
    out.accuracy = VectorXd::Zero(K);
  else
    out.mse = VectorXd::Zero(K);
  // Probability exactly 0.5 carries no information; such points are
  // assigned to the majority class of the evaluated labels.
  const double ones = y_test.sum();
  const double majority = ones > static_cast<double>(m) - ones ? 1.0 : 0.0;
  for (Index k = 0; k < K; ++k) {
    const ProjectedSubmodel& sub = path.submodels[static_cast<std::size_t>(k)];
    for (Index i = 0; i < m; ++i) {
      const VectorXd x = X_test.row(i).transpose();
      out.pointwise(k, i) = predictive_log_density(family, sub, x, y_test(i));
      const double mean = predictive_mean(family, sub, x);
      if (family.kind() == FamilyKind::bernoulli) {
        const double label = mean > 0.5 ? 1.0 : (mean < 0.5 ? 0.0 : majority);
        out.accuracy(k) += label == y_test(i) ? 1.0 : 0.0;
      } else {
        out.mse(k) += (mean - y_test(i)) * (mean - y_test(i));
      }
    }
    out.mlpd(k) = out.pointwise.row(k).mean();
    if (out.accuracy.size()) out.accuracy(k) /= static_cast<double>(m);
    if (out.mse.size()) out.mse(k) /= static_cast<double>(m);
  }
  if (ref) out.ref_mlpd = ref->log_predictive(ref->design_for(X_test), y_test).mean();
  return out;
}

}  // namespace projkit
