#include "doctest.h"
#include "helpers.hpp"

#include "projkit/io.hpp"
#include "projkit/reference.hpp"
#include "projkit/simdata.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace projkit;
using namespace projkit::testing;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("projkit_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

double corr(const VectorXd& a, const VectorXd& b) {
  const VectorXd x = a.array() - a.mean(), y = b.array() - b.mean();
  return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

}  // namespace

TEST_CASE("screening thresholds") {
  std::mt19937_64 rng(1);
  const MatrixXd X = random_matrix(40, 15, rng);
  const VectorXd y = X.col(2) + random_vector(40, rng);
  CHECK(screen(X, y, 0.0).size() == 15);
  const VectorXd r = abs_correlations(X, y);
  CHECK_THROWS_AS(screen(X, y, r.maxCoeff() + 1e-9), EmptyScreenError);
  const std::vector<double> gammas{0.0, 0.05, 0.1, 0.2, 0.3, 0.5};
  for (std::size_t a = 1; a < gammas.size(); ++a) {
    const std::vector<int> lo = screen(X, y, gammas[a - 1]), hi = screen(X, y, gammas[a]);
    for (int j : hi) CHECK(std::find(lo.begin(), lo.end(), j) != lo.end());
  }
  for (Index j = 0; j < 15; ++j) CHECK(r(j) == doctest::Approx(std::abs(corr(X.col(j), y))));
}

TEST_CASE("zero-variance columns are dropped from screening") {
  std::mt19937_64 rng(2);
  MatrixXd X = random_matrix(20, 4, rng);
  X.col(1).setConstant(3.0);
  const VectorXd y = random_vector(20, rng);
  CHECK(std::isnan(abs_correlations(X, y)(1)));
  const std::vector<int> kept = screen(X, y, 0.0);
  CHECK(kept == std::vector<int>{0, 2, 3});
}

TEST_CASE("relevant correlations concentrate near sqrt(rho/2)") {
  const ToyData d = generate_toy({20000, 10, 5, 0.8, 3, ToyTask::regression});
  const VectorXd r = abs_correlations(d.X, d.y);
  for (Index j = 0; j < 5; ++j) CHECK(std::abs(r(j) - std::sqrt(0.4)) < 0.02);
  for (Index j = 5; j < 10; ++j) CHECK(r(j) < 0.03);
  CHECK(screen(d.X, d.y, 0.3).size() == 5);
}

TEST_CASE("supervised components of a single feature") {
  std::mt19937_64 rng(4);
  const MatrixXd X = random_matrix(30, 6, rng);
  const VectorXd y = X.col(3) * 2.0 + 0.01 * random_vector(30, rng);
  const VectorXd r = abs_correlations(X, y);
  std::vector<double> sorted(r.data(), r.data() + r.size());
  std::sort(sorted.begin(), sorted.end());
  const SpcResult s = supervised_pcs(X, y, 0.5 * (sorted[4] + sorted[5]), 1);
  REQUIRE(s.map.mask == std::vector<int>{3});
  CHECK(std::abs(s.map.rotation(0, 0)) == doctest::Approx(1.0));
  const VectorXd centered = X.col(3).array() - X.col(3).mean();
  CHECK(std::abs(corr(s.scores.col(0), centered)) == doctest::Approx(1.0));
}

TEST_CASE("supervised components are orthogonal and shift invariant") {
  std::mt19937_64 rng(5);
  const MatrixXd X = random_matrix(40, 20, rng);
  const VectorXd y = X.leftCols(6).rowwise().sum() + random_vector(40, rng);
  const SpcResult s = supervised_pcs(X, y, 0.0, 3);
  REQUIRE(s.scores.cols() == 3);
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) CHECK(std::abs(s.scores.col(a).dot(s.scores.col(b))) < 1e-8);
  const MatrixXd R = s.map.rotation;
  CHECK((R.transpose() * R - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
  for (int c = 0; c < 3; ++c) {
    Index arg;
    R.col(c).cwiseAbs().maxCoeff(&arg);
    CHECK(R(arg, c) > 0.0);
  }
  MatrixXd shifted = X;
  shifted.col(4).array() += 7.5;
  const SpcResult t = supervised_pcs(shifted, y, 0.0, 3);
  for (int c = 0; c < 3; ++c)
    CHECK(std::min((s.scores.col(c) - t.scores.col(c)).norm(), (s.scores.col(c) + t.scores.col(c)).norm()) < 1e-8);
  // The feature map reproduces the scores on the training rows.
  CHECK((s.map.apply(X) - s.scores).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("gamma grid spans all features down to one") {
  for (std::uint64_t seed = 6; seed < 16; ++seed) {
    std::mt19937_64 rng(seed);
    const MatrixXd X = random_matrix(25, 30, rng);
    const VectorXd y = X.col(0) + random_vector(25, rng);
    const std::vector<double> g = gamma_grid(abs_correlations(X, y), 7);
    REQUIRE(g.size() == 7);
    CHECK(screen(X, y, g.front()).size() == 30);
    CHECK(screen(X, y, g.back()).size() == 1);
    for (std::size_t a = 1; a < g.size(); ++a) CHECK(g[a] > g[a - 1]);
  }
}

TEST_CASE("chosen gamma lies on the grid") {
  const ToyData d = generate_toy({30, 40, 10, 0.5, 17, ToyTask::regression});
  SpcConfig cfg;
  cfg.n_draws = 200;
  const ReferenceModel ref = fit_spc_reference(d.X, d.y, Family::gaussian(), cfg);
  CHECK(std::find(ref.gamma_grid.begin(), ref.gamma_grid.end(), ref.gamma_chosen) != ref.gamma_grid.end());
  CHECK(ref.draws.num_draws() == 200);
  CHECK(ref.draws.ref_design.cols() <= 4);
  ref.draws.validate(Family::gaussian());
}

TEST_CASE("spc config validation") {
  SpcConfig c;
  c.n_components = 0;
  CHECK_THROWS(c.validate());
  c.n_components = 3;
  c.n_gamma = 1;
  CHECK_THROWS(c.validate());
}

TEST_CASE("noiseless linear response is reproduced") {
  std::mt19937_64 rng(18);
  const MatrixXd X = random_matrix(30, 10, rng);
  const VectorXd y = (1.0 + 2.0 * X.col(3).array()).matrix();
  SpcConfig cfg;
  cfg.n_draws = 200;
  const ReferenceModel ref = fit_spc_reference(X, y, Family::gaussian(), cfg);
  CHECK((ref.mean_fit() - y).cwiseAbs().maxCoeff() < 1e-6);
  const double best = *std::max_element(ref.gamma_cv_mlpd.begin(), ref.gamma_cv_mlpd.end());
  CHECK(best > 5.0);
}

TEST_CASE("pure-noise reference predicts like the intercept-only model") {
  std::vector<double> diff;
  for (int r = 0; r < 20; ++r) {
    const ToyData tr = generate_toy({50, 20, 0, 0.5, derive_seed(19, r), ToyTask::regression});
    const ToyData te = generate_toy({500, 20, 0, 0.5, derive_seed(20, r), ToyTask::regression});
    SpcConfig cfg;
    cfg.n_draws = 400;
    cfg.seed = derive_seed(21, r);
    const ReferenceModel ref = fit_spc_reference(tr.X, tr.y, Family::gaussian(), cfg);
    const double ref_mlpd = ref.log_predictive(ref.design_for(te.X), te.y).mean();
    // Flat-prior intercept-only model: Student-t predictive.
    const double n = 50, m = tr.y.mean(), s2 = (tr.y.array() - m).square().sum() / (n - 1);
    const double nu = n - 1, scale2 = s2 * (1 + 1 / n);
    double lp = 0;
    for (Index i = 0; i < te.y.size(); ++i) {
      const double z2 = (te.y(i) - m) * (te.y(i) - m) / scale2;
      lp += std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2) - 0.5 * std::log(nu * M_PI * scale2) -
            (nu + 1) / 2 * std::log1p(z2 / nu);
    }
    diff.push_back(ref_mlpd - lp / static_cast<double>(te.y.size()));
  }
  CHECK(std::abs(mean_of(diff)) <= 2.0 * se_of(diff));
}

TEST_CASE("conjugate head posterior mean") {
  std::mt19937_64 rng(22);
  const MatrixXd Z = with_ones(random_matrix(40, 3, rng));
  VectorXd b(4);
  b << 1.0, 0.5, -1.0, 0.0;
  const VectorXd y = Z * b + 0.7 * random_vector(40, rng);
  HeadConfig cfg;
  cfg.fixed_tau = 0.8;
  const BayesHead head = BayesHead::fit(DesignMatrix(Z, true), y, Family::gaussian(), cfg);
  MatrixXd D = MatrixXd::Identity(4, 4) / (0.8 * 0.8);
  D(0, 0) = 0.0;
  const VectorXd analytic = (Z.transpose() * Z + D).ldlt().solve(Z.transpose() * y);
  CHECK((head.posterior_mean() - analytic).cwiseAbs().maxCoeff() < 1e-10);
  const PosteriorDraws d = head.sample(10000, 5);
  for (Index j = 0; j < 4; ++j) {
    const VectorXd c = d.betas.col(j);
    const double se = std::sqrt((c.array() - c.mean()).square().sum() / (c.size() - 1) / c.size());
    CHECK(std::abs(c.mean() - analytic(j)) < 3.0 * se);
  }
  CHECK(d.sigmas.has_value());
}

TEST_CASE("tau grid weights form a distribution") {
  std::mt19937_64 rng(23);
  const MatrixXd Z = with_ones(random_matrix(30, 2, rng));
  const VectorXd y = Z.col(1) + random_vector(30, rng);
  const BayesHead head = BayesHead::fit(DesignMatrix(Z, true), y, Family::gaussian(), HeadConfig{});
  CHECK(head.tau_values().size() == 30);
  CHECK(head.tau_weights().sum() == doctest::Approx(1.0));
  CHECK(head.tau_values().maxCoeff() / head.tau_values().minCoeff() == doctest::Approx(1e6));
}

TEST_CASE("bernoulli reference draws") {
  const ToyData d = generate_toy({60, 30, 10, 0.6, 24, ToyTask::classification});
  SpcConfig cfg;
  cfg.n_draws = 300;
  const ReferenceModel ref = fit_spc_reference(d.X, d.y, Family::bernoulli(), cfg);
  ref.draws.validate(Family::bernoulli());
  CHECK_FALSE(ref.draws.sigmas.has_value());
  const VectorXd lp = ref.log_predictive(ref.design_for(d.X), d.y);
  CHECK(lp.allFinite());
  CHECK(lp.mean() > std::log(0.5));
}

TEST_CASE("tau0 prior guess") {
  CHECK(tau0(1, 10, 1, 100) == doctest::Approx(1.0 / 90.0));
  CHECK(tau0(5, 10, 2, 16) == doctest::Approx(0.5));
  CHECK(tau0(3, 20, 1.5, 200) / tau0(3, 20, 1.5, 400) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS(tau0(10, 10, 1, 5));
}

TEST_CASE("draw export and ingest round trip") {
  const ToyData d = generate_toy({30, 20, 5, 0.5, 25, ToyTask::regression});
  SpcConfig cfg;
  cfg.n_draws = 50;
  const ReferenceModel ref = fit_spc_reference(d.X, d.y, Family::gaussian(), cfg);
  const fs::path dir = scratch_dir("roundtrip");
  export_draws(ref, dir / "design.csv", dir / "draws.ndjson");
  const ReferenceModel back = ingest_draws(dir / "design.csv", dir / "draws.ndjson", Family::gaussian());
  CHECK(back.draws.betas == ref.draws.betas);
  CHECK(*back.draws.sigmas == *ref.draws.sigmas);
  CHECK(back.draws.ref_design.values == ref.draws.ref_design.values);
  CHECK(back.draws.ref_design.intercept);
  const ReferenceFit a = cluster_draws(ref.draws, Family::gaussian(), 5, 3);
  const ReferenceFit b = cluster_draws(back.draws, Family::gaussian(), 5, 3);
  CHECK(a.cluster_means == b.cluster_means);
  CHECK(*a.cluster_vars == *b.cluster_vars);
  export_draws(back, dir / "design2.csv", dir / "draws2.ndjson");
  CHECK(slurp(dir / "design.csv") == slurp(dir / "design2.csv"));
  CHECK(slurp(dir / "draws.ndjson") == slurp(dir / "draws2.ndjson"));
}

TEST_CASE("single-draw file") {
  const fs::path dir = scratch_dir("single");
  std::ofstream(dir / "design.csv") << "_intercept,z1\n1,0.5\n1,-1\n1,2\n";
  std::ofstream(dir / "draws.ndjson") << "{\"beta\": [0.1, 0.2], \"sigma\": 0.9}\n";
  const ReferenceModel ref = ingest_draws(dir / "design.csv", dir / "draws.ndjson", Family::gaussian());
  CHECK(ref.draws.num_draws() == 1);
  const ReferenceFit fit = cluster_draws(ref.draws, Family::gaussian(), 1, 1);
  CHECK(fit.cluster_means(0, 2) == doctest::Approx(0.5));
  CHECK((*fit.cluster_vars)(0, 0) == doctest::Approx(0.81));
}

TEST_CASE("malformed draw files report the line") {
  const fs::path dir = scratch_dir("malformed");
  std::ofstream(dir / "design.csv") << "_intercept,z1\n1,0.5\n1,-1\n";
  std::ofstream(dir / "draws.ndjson") << "{\"beta\": [0.1, 0.2], \"sigma\": 0.9}\n{\"beta\": [0.1, 0.3]}\n";
  try {
    ingest_draws(dir / "design.csv", dir / "draws.ndjson", Family::gaussian());
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  std::ofstream(dir / "short.ndjson") << "{\"beta\": [0.1], \"sigma\": 1}\n";
  CHECK_THROWS_AS(ingest_draws(dir / "design.csv", dir / "short.ndjson", Family::gaussian()), ParseError);
  std::ofstream(dir / "extra.ndjson") << "{\"beta\": [0.1, 0.2], \"sigma\": 1}\n";
  CHECK_THROWS_AS(ingest_draws(dir / "design.csv", dir / "extra.ndjson", Family::bernoulli()), ParseError);
}

TEST_CASE("first supervised component tracks the latent signal") {
  double total = 0;
  for (int r = 0; r < 20; ++r) {
    const ToyData d = generate_toy({30, 500, 150, 0.5, derive_seed(26, r), ToyTask::regression});
    SpcConfig cfg;
    cfg.n_draws = 100;
    cfg.seed = derive_seed(27, r);
    const ReferenceModel ref = fit_spc_reference(d.X, d.y, Family::gaussian(), cfg);
    total += std::abs(corr(ref.draws.ref_design.values.col(1), d.f));
  }
  CHECK(total / 20 > 0.8);
}
