#include "doctest.h"
#include "helpers.hpp"

#include "projkit/reference.hpp"
#include "projkit/search.hpp"
#include "projkit/simdata.hpp"
#include "projkit/validation.hpp"

#include <numeric>

using namespace projkit;
using namespace projkit::testing;

namespace {

ReferenceFit gaussian_point(const VectorXd& mu, double v) {
  ReferenceFit f = ReferenceFit::from_targets(Family::gaussian(), mu);
  f.cluster_vars = MatrixXd::Constant(1, mu.size(), v);
  return f;
}

VectorXd standardized_col(const MatrixXd& X, Index j) {
  VectorXd c = X.col(j).array() - X.col(j).mean();
  return c / std::sqrt(c.squaredNorm() / static_cast<double>(X.rows()));
}

}  // namespace

TEST_CASE("forward search picks an exact column first") {
  std::mt19937_64 rng(1);
  const MatrixXd X = random_matrix(30, 6, rng);
  const ReferenceFit ref = gaussian_point(X.col(4), 0.5);
  const SelectionPath path = forward_search(X, ref, 3);
  CHECK(path.order[0] == 4);
  CHECK(path.losses[1] < 1e-12);
}

TEST_CASE("forward search ends at zero loss on the reference design") {
  std::mt19937_64 rng(2);
  const MatrixXd X = random_matrix(25, 4, rng);
  // One draw: constant predictive variance, so the full model is exact.
  const PosteriorDraws d = gaussian_draws(X, 1, rng);
  const ReferenceFit fit = cluster_draws(d, Family::gaussian(), 1, 1);
  const SelectionPath path = forward_search(X, fit, 4);
  CHECK(path.losses[4] < 1e-10);
  for (std::size_t k = 1; k < path.losses.size(); ++k) CHECK(path.losses[k] <= path.losses[k - 1] + 1e-12);
}

TEST_CASE("forward search matches a brute-force greedy oracle") {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    std::mt19937_64 rng(seed);
    const MatrixXd X = random_matrix(20, 5, rng);
    const PosteriorDraws d = gaussian_draws(X.leftCols(3), 25, rng);
    const ReferenceFit fit = cluster_draws(d, Family::gaussian(), 1, 1);
    const SelectionPath path = forward_search(X, fit, 5);
    std::vector<int> chosen;
    for (int step = 0; step < 5; ++step) {
      int best = -1;
      double best_loss = std::numeric_limits<double>::infinity();
      for (int j = 0; j < 5; ++j) {
        if (std::find(chosen.begin(), chosen.end(), j) != chosen.end()) continue;
        std::vector<int> trial = chosen;
        trial.push_back(j);
        const double l = project(X, trial, fit).loss;
        if (l < best_loss) best_loss = l, best = j;
      }
      chosen.push_back(best);
      CHECK(path.order[step] == best);
      CHECK(path.losses[step + 1] == doctest::Approx(best_loss).epsilon(1e-10));
    }
  }
}

TEST_CASE("lambda_max zeroes the path and matches the gradient formula") {
  std::mt19937_64 rng(6);
  const MatrixXd X = random_matrix(40, 8, rng) * 3.0;
  const VectorXd mu = X.col(1) * 0.7 - X.col(5) * 0.2 + random_vector(40, rng);
  const ReferenceFit ref = gaussian_point(mu, 1.0);
  SearchConfig cfg;
  cfg.alpha = 0.5;
  double oracle = 0;
  const VectorXd centered = mu.array() - mu.mean();
  for (Index j = 0; j < 8; ++j)
    oracle = std::max(oracle, std::abs(standardized_col(X, j).dot(centered) / 40.0) / cfg.alpha);
  CHECK(l1_lambda_max(X, ref, cfg) == doctest::Approx(oracle).epsilon(1e-10));
  const L1Path path = l1_path(X, ref, cfg);
  CHECK(path.lambdas(0) == doctest::Approx(oracle));
  CHECK(path.coefs.col(0).cwiseAbs().maxCoeff() == 0.0);
  // Subgradient condition at lambda_max for the null solution.
  for (Index j = 0; j < 8; ++j)
    CHECK(std::abs(standardized_col(X, j).dot(centered) / 40.0) <= cfg.alpha * oracle * (1 + 1e-12));
}

TEST_CASE("l1 first entry is the feature most correlated with the centered fit") {
  for (std::uint64_t seed : {7u, 8u, 9u, 10u}) {
    std::mt19937_64 rng(seed);
    const MatrixXd X = random_matrix(30, 12, rng);
    const VectorXd mu = X.leftCols(4).rowwise().sum() + 0.5 * random_vector(30, rng);
    const ReferenceFit ref = gaussian_point(mu, 1.0);
    const L1Path path = l1_path(X, ref, SearchConfig{});
    const VectorXd centered = mu.array() - mu.mean();
    Index arg = 0;
    double best = -1;
    for (Index j = 0; j < 12; ++j) {
      const double v = std::abs(standardized_col(X, j).dot(centered));
      if (v > best) best = v, arg = j;
    }
    CHECK(path.order[0] == arg);
  }
}

TEST_CASE("l1 path approaches the unpenalized projection") {
  std::mt19937_64 rng(11);
  const MatrixXd X = random_matrix(40, 5, rng);
  const VectorXd mu = random_vector(40, rng) + X.col(2);
  const ReferenceFit ref = gaussian_point(mu, 1.0);
  SearchConfig cfg;
  cfg.lambda_min_ratio = 1e-7;
  cfg.nlambda = 150;
  cfg.cd_tol = 1e-12;
  const L1Path path = l1_path(X, ref, cfg);
  const Index L = path.lambdas.size() - 1;
  const VectorXd oracle = project_gaussian_coeffs(DesignMatrix::with_intercept(X), mu);
  CHECK(std::abs(path.intercepts(L) - oracle(0)) < 1e-4);
  for (Index j = 0; j < 5; ++j) CHECK(std::abs(path.coefs(j, L) - oracle(j + 1)) < 1e-4);
}

TEST_CASE("penalty factors force inclusion or exclusion") {
  std::mt19937_64 rng(12);
  const MatrixXd X = random_matrix(40, 5, rng);
  const VectorXd mu = X * VectorXd::LinSpaced(5, 1.0, 0.2) + 0.3 * random_vector(40, rng);
  const ReferenceFit ref = gaussian_point(mu, 1.0);
  SearchConfig cfg;
  cfg.penalty_factors = VectorXd::Ones(5);
  (*cfg.penalty_factors)(3) = 0.0;
  const L1Path forced = l1_path(X, ref, cfg);
  CHECK(forced.entry[3] == 0);
  CHECK(forced.order[0] == 3);
  (*cfg.penalty_factors)(3) = 1.0;
  (*cfg.penalty_factors)(0) = 1e6;
  const L1Path last = l1_path(X, ref, cfg);
  CHECK(last.order.back() == 0);
}

TEST_CASE("search ordering commutes with column permutations") {
  std::mt19937_64 rng(13);
  const MatrixXd X = random_matrix(30, 7, rng);
  const VectorXd mu = X.col(0) - 0.6 * X.col(3) + 0.3 * X.col(6) + 0.2 * random_vector(30, rng);
  const ReferenceFit ref = gaussian_point(mu, 1.0);
  for (int t = 0; t < 5; ++t) {
    std::vector<int> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    MatrixXd Xp(30, 7);
    for (int j = 0; j < 7; ++j) Xp.col(j) = X.col(perm[j]);
    for (const SearchMethod m : {SearchMethod::forward, SearchMethod::l1}) {
      SearchConfig cfg;
      cfg.method = m;
      cfg.max_size = 7;
      const SelectionPath a = build_path(X, ref, ref, cfg);
      const SelectionPath b = build_path(Xp, ref, ref, cfg);
      for (int k = 0; k < 7; ++k) CHECK(perm[b.order[k]] == a.order[k]);
    }
  }
}

TEST_CASE("relaxed submodels are exact least-squares projections") {
  std::mt19937_64 rng(14);
  const MatrixXd X = random_matrix(30, 8, rng);
  const PosteriorDraws d = gaussian_draws(X.leftCols(4), 40, rng);
  const ReferenceFit sel = cluster_draws(d, Family::gaussian(), 1, 1);
  const ReferenceFit pred = cluster_draws(d, Family::gaussian(), 5, 1);
  SearchConfig cfg;
  cfg.max_size = 6;
  const SelectionPath path = build_path(X, sel, pred, cfg);
  REQUIRE(path.submodels.size() == 7);
  for (int k = 0; k <= 6; ++k) {
    const ProjectedSubmodel& s = path.submodels[k];
    CHECK(s.feature_set == std::vector<int>(path.order.begin(), path.order.begin() + k));
    const DesignMatrix D = DesignMatrix::with_intercept(X, s.feature_set);
    for (int c = 0; c < 5; ++c) {
      const VectorXd oracle = normal_equations(D.values, pred.cluster_means.row(c).transpose());
      CHECK((s.coeffs.row(c).transpose() - oracle).cwiseAbs().maxCoeff() < 1e-9);
    }
    if (k > 0) CHECK(path.losses[k] <= path.losses[k - 1] + 1e-10);
  }
}

TEST_CASE("max_size zero yields only the intercept model") {
  std::mt19937_64 rng(15);
  const MatrixXd X = random_matrix(20, 4, rng);
  const ReferenceFit ref = gaussian_point(random_vector(20, rng), 1.0);
  for (const SearchMethod m : {SearchMethod::forward, SearchMethod::l1}) {
    SearchConfig cfg;
    cfg.method = m;
    cfg.max_size = 0;
    const SelectionPath path = build_path(X, ref, ref, cfg);
    REQUIRE(path.submodels.size() == 1);
    CHECK(path.submodels[0].feature_set.empty());
  }
}

TEST_CASE("order has no duplicates") {
  std::mt19937_64 rng(16);
  const MatrixXd X = random_matrix(25, 40, rng);
  const ReferenceFit ref = gaussian_point(X.col(0) + random_vector(25, rng), 1.0);
  const L1Path path = l1_path(X, ref, SearchConfig{});
  std::vector<int> o = path.order;
  REQUIRE(o.size() == 40);
  std::sort(o.begin(), o.end());
  CHECK(std::adjacent_find(o.begin(), o.end()) == o.end());
}

TEST_CASE("search config validation") {
  SearchConfig cfg;
  cfg.alpha = 0.0;
  CHECK_THROWS(cfg.validate(3));
  cfg.alpha = 1.0;
  cfg.penalty_factors = VectorXd::Zero(3);
  CHECK_THROWS(cfg.validate(3));
}

TEST_CASE("relevant features are ranked ahead of irrelevant ones") {
  double rel = 0, irr = 0;
  for (int r = 0; r < 20; ++r) {
    const ToyData data = generate_toy({50, 20, 10, 0.8, derive_seed(77, r), ToyTask::regression});
    SpcConfig spc;
    spc.n_draws = 400;
    spc.seed = derive_seed(78, r);
    const ReferenceModel ref = fit_spc_reference(data.X, data.y, Family::gaussian(), spc);
    const ReferenceFit fit = cluster_draws(ref.draws, Family::gaussian(), 1, 1);
    SearchConfig cfg;
    cfg.max_size = 20;
    const L1Path path = l1_path(data.X, fit, cfg);
    for (int pos = 0; pos < 20; ++pos) (path.order[pos] < 10 ? rel : irr) += pos + 1;
  }
  CHECK(rel / 200.0 < irr / 200.0);
}

TEST_CASE("relaxed path reaches the reference before the penalized path") {
  const int reps = 10, max_size = 20;
  VectorXd relax = VectorXd::Zero(max_size + 1), pen = VectorXd::Zero(max_size + 1);
  for (int r = 0; r < reps; ++r) {
    const ToyData tr = generate_toy({60, 40, 10, 0.5, derive_seed(90, r), ToyTask::regression});
    const ToyData te = generate_toy({1000, 40, 10, 0.5, derive_seed(91, r), ToyTask::regression});
    SpcConfig spc;
    spc.n_draws = 400;
    spc.seed = derive_seed(92, r);
    const ReferenceModel ref = fit_spc_reference(tr.X, tr.y, Family::gaussian(), spc);
    const ReferenceFit fit = cluster_draws(ref.draws, Family::gaussian(), 1, 1);
    SearchConfig cfg;
    cfg.max_size = max_size;
    const SelectionPath a = build_path(tr.X, fit, fit, cfg);
    cfg.relax = false;
    const SelectionPath b = build_path(tr.X, fit, fit, cfg);
    const TestEvaluation ea = eval_test(Family::gaussian(), a, te.X, te.y, &ref);
    const TestEvaluation eb = eval_test(Family::gaussian(), b, te.X, te.y);
    relax += (ea.mlpd.array() - *ea.ref_mlpd).matrix() / reps;
    pen += (eb.mlpd.array() - *ea.ref_mlpd).matrix() / reps;
  }
  auto reach = [&](const VectorXd& d) {
    for (int k = 0; k <= max_size; ++k)
      if (d(k) >= -0.02) return k;
    return max_size + 1;
  };
  CHECK(reach(relax) <= max_size);
  CHECK(reach(relax) < reach(pen));
}
