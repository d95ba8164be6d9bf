#include "doctest.h"
#include "helpers.hpp"

#include "projkit/projection.hpp"
#include "projkit/reference.hpp"
#include "projkit/simdata.hpp"

using namespace projkit;
using namespace projkit::testing;

TEST_CASE("cluster_draws with one cluster per draw") {
  std::mt19937_64 rng(1);
  const MatrixXd X = random_matrix(15, 3, rng);
  const PosteriorDraws d = gaussian_draws(X, 12, rng);
  const ReferenceFit fit = cluster_draws(d, Family::gaussian(), 12, 1);
  REQUIRE(fit.num_clusters() == 12);
  const MatrixXd f = d.latent();
  for (int c = 0; c < 12; ++c) {
    REQUIRE(fit.clusters[c].size() == 1);
    const int s = fit.clusters[c][0];
    CHECK(fit.weights(c) == doctest::Approx(1.0 / 12));
    CHECK((fit.cluster_means.row(c) - f.row(s)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((fit.cluster_vars->row(c).array() - (*d.sigmas)(s) * (*d.sigmas)(s)).abs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("cluster_draws with a single cluster") {
  std::mt19937_64 rng(2);
  const MatrixXd X = random_matrix(10, 2, rng);
  const PosteriorDraws d = gaussian_draws(X, 20, rng);
  const ReferenceFit fit = cluster_draws(d, Family::gaussian(), 1, 1);
  REQUIRE(fit.num_clusters() == 1);
  CHECK(fit.weights(0) == 1.0);
  CHECK(fit.clusters[0].size() == 20);
  // mixture mean and law-of-total-variance oracle
  const MatrixXd f = d.latent();
  const VectorXd m = f.colwise().mean().transpose();
  for (Index i = 0; i < X.rows(); ++i) {
    double v = 0;
    for (int s = 0; s < 20; ++s) v += ((*d.sigmas)(s) * (*d.sigmas)(s) + (f(s, i) - m(i)) * (f(s, i) - m(i))) / 20;
    CHECK(fit.cluster_means(0, i) == doctest::Approx(m(i)));
    CHECK((*fit.cluster_vars)(0, i) == doctest::Approx(v));
  }
}

TEST_CASE("identical draws with different noise average their variances") {
  PosteriorDraws d;
  d.ref_design = DesignMatrix::with_intercept(MatrixXd::Constant(4, 1, 2.0));
  d.betas = MatrixXd(2, 2);
  d.betas << 0.5, 1.0, 0.5, 1.0;
  d.sigmas = VectorXd(2);
  *d.sigmas << 1.0, std::sqrt(3.0);
  const ReferenceFit fit = cluster_draws(d, Family::gaussian(), 1, 1);
  for (Index i = 0; i < 4; ++i) CHECK((*fit.cluster_vars)(0, i) == doctest::Approx(2.0));
}

TEST_CASE("cluster weights and partition invariants") {
  std::mt19937_64 rng(3);
  const MatrixXd X = random_matrix(12, 3, rng);
  const PosteriorDraws d = gaussian_draws(X, 50, rng);
  for (int C : {1, 3, 7, 50}) {
    const ReferenceFit fit = cluster_draws(d, Family::gaussian(), C, 9);
    CHECK(fit.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<int> seen;
    for (int c = 0; c < C; ++c) {
      CHECK(fit.weights(c) == doctest::Approx(static_cast<double>(fit.clusters[c].size()) / 50));
      seen.insert(seen.end(), fit.clusters[c].begin(), fit.clusters[c].end());
    }
    std::sort(seen.begin(), seen.end());
    for (int s = 0; s < 50; ++s) CHECK(seen[s] == s);
  }
  CHECK_THROWS(cluster_draws(d, Family::gaussian(), 51, 1));
  CHECK_THROWS(cluster_draws(d, Family::gaussian(), 0, 1));
}

TEST_CASE("gaussian coefficient projection examples") {
  VectorXd t(2);
  t << 2, 4;
  CHECK(project_gaussian_coeffs(DesignMatrix(MatrixXd::Ones(2, 1), true), t)(0) == doctest::Approx(3.0));
  VectorXd t2(2);
  t2 << 1, 2;
  const VectorXd b = project_gaussian_coeffs(DesignMatrix(MatrixXd::Identity(2, 2), false), t2);
  CHECK(b(0) == doctest::Approx(1.0));
  CHECK(b(1) == doctest::Approx(2.0));
  std::mt19937_64 rng(4);
  for (int r = 0; r < 10; ++r) {
    const MatrixXd X = random_matrix(8, 3, rng);
    const VectorXd mu = random_vector(8, rng);
    CHECK((project_gaussian_coeffs(DesignMatrix(X, false), mu) - normal_equations(X, mu)).cwiseAbs().maxCoeff() <
          1e-10);
  }
}

TEST_CASE("projected dispersion examples") {
  std::mt19937_64 rng(5);
  const MatrixXd X = random_matrix(6, 2, rng);
  const VectorXd beta = random_vector(2, rng);
  const DesignMatrix D(X, false);
  CHECK(project_gaussian_dispersion(D, beta, X * beta, VectorXd::Constant(6, 0.7)) == doctest::Approx(0.7));

  const DesignMatrix ones(MatrixXd::Ones(2, 1), true);
  VectorXd b0(1);
  b0 << 0.0;
  CHECK(project_gaussian_dispersion(ones, b0, VectorXd::Ones(2), VectorXd::Zero(2)) == doctest::Approx(1.0));

  const VectorXd mu = random_vector(6, rng);
  VectorXd v = random_vector(6, rng).cwiseAbs();
  double direct = 0;
  for (int i = 0; i < 6; ++i) {
    const double r = mu(i) - X.row(i).dot(beta);
    direct += (v(i) + r * r) / 6;
  }
  CHECK(project_gaussian_dispersion(D, beta, mu, v) == doctest::Approx(direct).epsilon(1e-13));
}

TEST_CASE("bernoulli cluster projection") {
  ReferenceFit half = ReferenceFit::from_targets(Family::bernoulli(), VectorXd::Constant(5, 0.5));
  const ClusterProjection cp = project_cluster(DesignMatrix(MatrixXd::Ones(5, 1), true), half, 0);
  CHECK(std::abs(cp.coeffs(0)) < 1e-12);
  CHECK_FALSE(cp.dispersion.has_value());
}

TEST_CASE("bernoulli projection maximizes the expected log-likelihood") {
  std::mt19937_64 rng(6);
  const MatrixXd x = random_matrix(20, 1, rng);
  const DesignMatrix D = DesignMatrix::with_intercept(x);
  VectorXd mu(20);
  for (int i = 0; i < 20; ++i) mu(i) = 1.0 / (1.0 + std::exp(-(0.3 + 1.2 * x(i, 0) + 0.8 * std::sin(3.0 * i))));
  const ReferenceFit ref = ReferenceFit::from_targets(Family::bernoulli(), mu);
  const VectorXd beta = project_cluster(D, ref, 0).coeffs;

  auto objective = [&](double b0, double b1) {
    double s = 0;
    for (int i = 0; i < 20; ++i) {
      const double eta = b0 + b1 * x(i, 0);
      s += mu(i) * eta - log1p_exp(eta);
    }
    return s;
  };
  // Successively refined grid search over [-5, 5]^2.
  double c0 = 0, c1 = 0, half_width = 5.0;
  for (int level = 0; level < 6; ++level) {
    const int steps = 200;
    double best = -std::numeric_limits<double>::infinity(), n0 = c0, n1 = c1;
    for (int i = 0; i <= steps; ++i)
      for (int j = 0; j <= steps; ++j) {
        const double b0 = c0 - half_width + 2 * half_width * i / steps;
        const double b1 = c1 - half_width + 2 * half_width * j / steps;
        const double v = objective(b0, b1);
        if (v > best) best = v, n0 = b0, n1 = b1;
      }
    c0 = n0;
    c1 = n1;
    half_width *= 0.05;
  }
  CHECK(std::abs(beta(0) - c0) < 1e-4);
  CHECK(std::abs(beta(1) - c1) < 1e-4);
}

TEST_CASE("self projection reproduces the draws") {
  std::mt19937_64 rng(7);
  const MatrixXd X = random_matrix(25, 4, rng);
  const PosteriorDraws d = gaussian_draws(X, 8, rng);
  const ReferenceFit fit = cluster_draws(d, Family::gaussian(), 8, 1);
  const ProjectedSubmodel sub = project(X, {0, 1, 2, 3}, fit);
  CHECK(sub.weights == fit.weights);
  CHECK(std::abs(sub.loss) < 1e-10);
  for (int c = 0; c < 8; ++c) {
    const int s = fit.clusters[c][0];
    CHECK((sub.coeffs.row(c) - d.betas.row(s)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((*sub.dispersions)(c) == doctest::Approx((*d.sigmas)(s) * (*d.sigmas)(s)).epsilon(1e-10));
  }
}

TEST_CASE("intercept-only single-point projection") {
  std::mt19937_64 rng(8);
  const MatrixXd X = random_matrix(30, 3, rng);
  const PosteriorDraws d = gaussian_draws(X, 40, rng);
  const ReferenceFit fit = cluster_draws(d, Family::gaussian(), 1, 1);
  const ProjectedSubmodel sub = project(X, {}, fit);
  const VectorXd mu = fit.cluster_means.row(0).transpose();
  const double m = mu.mean();
  CHECK(sub.coeffs(0, 0) == doctest::Approx(m));
  const double second = (mu.array() - m).square().mean();
  CHECK((*sub.dispersions)(0) == doctest::Approx(fit.cluster_vars->row(0).mean() + second));
  CHECK(sub.loss > 0.0);
}

TEST_CASE("projection loss is nonnegative and weights carry over") {
  std::mt19937_64 rng(9);
  const MatrixXd X = random_matrix(30, 5, rng);
  const PosteriorDraws d = gaussian_draws(X, 40, rng);
  const ReferenceFit fit = cluster_draws(d, Family::gaussian(), 5, 2);
  for (const std::vector<int>& fs : std::vector<std::vector<int>>{{}, {2}, {0, 4}, {1, 2, 3}}) {
    const ProjectedSubmodel sub = project(X, fs, fit);
    CHECK(sub.loss >= 0.0);
    CHECK(sub.weights == fit.weights);
    CHECK(sub.feature_set == fs);
  }
}

TEST_CASE("kl closed forms") {
  CHECK(kl_gaussian(0.3, 1.0, 0.3, std::exp(2.0)) == doctest::Approx(1.0 + 1.0 / (2 * std::exp(2.0)) - 0.5));
  CHECK(kl_gaussian(1.0, 2.0, 1.0, 2.0) == doctest::Approx(0.0));
  CHECK(kl_bernoulli(0.5, 0.5) == doctest::Approx(0.0));
  CHECK(kl_bernoulli(0.9, 0.1) == doctest::Approx(0.9 * std::log(9.0) + 0.1 * std::log(1.0 / 9.0)));
  CHECK(kl_bernoulli(0.9, 0.1) == doctest::Approx(1.757780).epsilon(1e-6));
  CHECK(kl_poisson(2.0, 2.0) == doctest::Approx(0.0));
  CHECK(kl_poisson(2.0, 3.0) == doctest::Approx(2.0 * std::log(2.0 / 3.0) - 2.0 + 3.0));
}

TEST_CASE("predictive log density mixtures") {
  ProjectedSubmodel one;
  one.coeffs = MatrixXd(1, 2);
  one.coeffs << 0.5, 2.0;
  one.dispersions = VectorXd::Constant(1, 0.4);
  one.weights = VectorXd::Ones(1);
  one.feature_set = {1};
  VectorXd x(3);
  x << 9.0, 0.25, -4.0;
  CHECK(predictive_log_density(Family::gaussian(), one, x, 1.3) ==
        doctest::Approx(log_lik(Family::gaussian(), 1.3, 1.0, 0.4)));

  ProjectedSubmodel twin = one;
  twin.coeffs = MatrixXd(2, 2);
  twin.coeffs << 0.5, 2.0, 0.5, 2.0;
  twin.dispersions = VectorXd::Constant(2, 0.4);
  twin.weights = VectorXd::Constant(2, 0.5);
  CHECK(predictive_log_density(Family::gaussian(), twin, x, 1.3) ==
        doctest::Approx(predictive_log_density(Family::gaussian(), one, x, 1.3)));

  ProjectedSubmodel mix = twin;
  mix.coeffs << -1.0, 1.0, 2.0, -0.5;
  *mix.dispersions << 0.5, 2.0;
  mix.weights << 0.3, 0.7;
  const double m1 = -1.0 + 0.25, m2 = 2.0 - 0.125, y = 0.9;
  auto npdf = [](double y, double m, double v) { return std::exp(-(y - m) * (y - m) / (2 * v)) / std::sqrt(2 * M_PI * v); };
  const double direct = std::log(0.3 * npdf(y, m1, 0.5) + 0.7 * npdf(y, m2, 2.0));
  CHECK(std::abs(predictive_log_density(Family::gaussian(), mix, x, y) - direct) < 1e-12);
  CHECK(predictive_mean(Family::gaussian(), mix, x) == doctest::Approx(0.3 * m1 + 0.7 * m2));
}

TEST_CASE("clustered projection is close to draw-by-draw projection") {
  const ToyData data = generate_toy({80, 30, 10, 0.5, 21, ToyTask::classification});
  HeadConfig head;
  head.n_draws = 400;
  head.seed = 3;
  const ReferenceModel ref = fit_linear_reference(data.X, data.y, Family::bernoulli(), head);
  const ReferenceFit clustered = cluster_draws(ref.draws, Family::bernoulli(), 10, 5);
  const ReferenceFit each = cluster_draws(ref.draws, Family::bernoulli(), ref.draws.num_draws(), 5);
  const ProjectedSubmodel a = project(data.X, {0, 1}, clustered);
  const ProjectedSubmodel b = project(data.X, {0, 1}, each);
  double worst = 0;
  for (Index i = 0; i < data.X.rows(); ++i) {
    const VectorXd x = data.X.row(i).transpose();
    worst = std::max(worst, std::abs(predictive_mean(Family::bernoulli(), a, x) -
                                     predictive_mean(Family::bernoulli(), b, x)));
  }
  CHECK(worst < 0.01);
}
