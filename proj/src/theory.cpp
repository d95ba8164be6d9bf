#include "projkit/theory.hpp"

#include "projkit/io.hpp"

#include <fstream>

namespace projkit {

ColumnProjector::ColumnProjector(const MatrixXd& X) : qr_(X) {
  if (X.rows() < X.cols() || X.cols() < 1) throw SingularSystemError("design must have 1 <= p <= n");
  Eigen::ColPivHouseholderQR<MatrixXd> rank_check(X);
  rank_check.setThreshold(1e-10);
  if (rank_check.rank() < X.cols()) throw SingularSystemError("design is not of full column rank");
  q1_ = qr_.householderQ() * MatrixXd::Identity(X.rows(), X.cols());
}

double ColumnProjector::sq_norm(const VectorXd& v) const { return (q1_.transpose() * v).squaredNorm(); }

double ColumnProjector::trace_of(const MatrixXd& K) const { return (q1_.transpose() * K * q1_).trace(); }

VectorXd ColumnProjector::solve(const VectorXd& v) const { return qr_.solve(v); }

void GainInstance::validate() const {
  const Index n = X.rows();
  if (mu.size() != n || mu_star.size() != n || y.size() != n) throw std::invalid_argument("gain instance shapes disagree");
  if (!(sigma2 >= 0.0)) throw std::invalid_argument("sigma2 must be nonnegative");
}

double expected_error(const GainInstance& inst, const VectorXd& beta) {
  return (inst.X * beta - inst.mu).squaredNorm() / static_cast<double>(inst.X.rows()) + inst.sigma2;
}

double gain_direct(const GainInstance& inst) {
  inst.validate();
  const ColumnProjector proj(inst.X);
  return expected_error(inst, proj.solve(inst.y)) - expected_error(inst, proj.solve(inst.mu_star));
}

double gain_lemma(const GainInstance& inst) {
  inst.validate();
  const ColumnProjector proj(inst.X);
  return (proj.sq_norm(inst.y - inst.mu) - proj.sq_norm(inst.mu_star - inst.mu)) / static_cast<double>(inst.X.rows());
}

namespace {

void check_covariance(const MatrixXd& K, Index n) {
  if (K.rows() != n || K.cols() != n) throw std::invalid_argument("K must be n x n");
  const double scale = std::max(1.0, K.cwiseAbs().maxCoeff());
  if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) throw std::invalid_argument("K is not symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(K, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10) throw std::invalid_argument("K is not positive semidefinite");
}

}  // namespace

double expected_gain_formula(const MatrixXd& X, double sigma2, const MatrixXd& K, const VectorXd& b) {
  const Index n = X.rows();
  const auto p = static_cast<double>(X.cols());
  if (b.size() != n) throw std::invalid_argument("b must have length n");
  check_covariance(K, n);
  const ColumnProjector proj(X);
  const double bP = proj.sq_norm(b);
  const double value = (sigma2 * p - proj.trace_of(K) - bP) / static_cast<double>(n);
  const double s = K(0, 0);
  if ((K - s * MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() == 0.0) {
    const double corollary = p / static_cast<double>(n) * (sigma2 - s - bP / p);
    if (std::abs(corollary - value) > 1e-10 * std::max(1.0, std::abs(value)))
      throw std::logic_error("expected gain disagrees with its uncorrelated-error form");
  }
  return value;
}

McEstimate expected_gain_mc(const MatrixXd& X, double sigma2, const MatrixXd& K, const VectorXd& b, const VectorXd& mu,
                            int replications, std::uint64_t seed, int threads) {
  const Index n = X.rows();
  if (replications < 100) throw std::invalid_argument("need at least 100 replications");
  if (b.size() != n || mu.size() != n) throw std::invalid_argument("b and mu must have length n");
  check_covariance(K, n);
  const ColumnProjector proj(X);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(K);
  const MatrixXd A = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  const double sd = std::sqrt(sigma2);

  constexpr int kBlock = 1024;
  const std::size_t blocks = (static_cast<std::size_t>(replications) + kBlock - 1) / kBlock;
  std::vector<double> sums(blocks, 0.0), sqs(blocks, 0.0);
  parallel_for(blocks, threads, [&](std::size_t blk) {
    auto rng = make_rng(seed, blk);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int start = static_cast<int>(blk) * kBlock;
    const int stop = std::min(replications, start + kBlock);
    VectorXd eps(n), z(n);
    for (int r = start; r < stop; ++r) {
      for (Index i = 0; i < n; ++i) eps(i) = sd * normal(rng);
      for (Index i = 0; i < n; ++i) z(i) = normal(rng);
      const VectorXd y = mu + eps;
      const VectorXd mu_star = mu + b + A * z;
      const double g = (proj.sq_norm(y - mu) - proj.sq_norm(mu_star - mu)) / static_cast<double>(n);
      sums[blk] += g;
      sqs[blk] += g * g;
    }
  });
  double sum = 0.0, sq = 0.0;
  for (std::size_t k = 0; k < blocks; ++k) {
    sum += sums[k];
    sq += sqs[k];
  }
  const double R = replications;
  McEstimate est;
  est.mean = sum / R;
  const double var = std::max(0.0, (sq - R * est.mean * est.mean) / (R - 1.0));
  est.se = std::sqrt(var / R);
  return est;
}

GainInstance random_gain_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_dist(5, 100);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.1, 2.0);
  GainInstance inst;
  const int n = n_dist(rng);
  const int p = std::uniform_int_distribution<int>(1, n - 1)(rng);
  inst.X.resize(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) inst.X(i, j) = normal(rng);
  inst.sigma2 = unif(rng);
  inst.mu.resize(n);
  inst.y.resize(n);
  inst.mu_star.resize(n);
  const double ref_sd = std::sqrt(unif(rng));
  for (int i = 0; i < n; ++i) {
    inst.mu(i) = 2.0 * normal(rng);
    inst.y(i) = inst.mu(i) + std::sqrt(inst.sigma2) * normal(rng);
    inst.mu_star(i) = inst.mu(i) + ref_sd * normal(rng);
  }
  return inst;
}

bool TheoryReport::passed() const {
  for (const auto& c : identities)
    if (!c.passed()) return false;
  for (const auto& c : expectations)
    if (!c.passed()) return false;
  return true;
}

TheoryReport theory_check(int instances, int mc_instances, int mc_replications, std::uint64_t seed, int threads) {
  if (instances < 1) throw std::invalid_argument("instances must be positive");
  TheoryReport report;
  IdentityCheck lemma{"gain_direct_vs_lemma", 0, 0.0, 1e-10};
  IdentityCheck trace{"trace_P_equals_p", 0, 0.0, 1e-10};
  IdentityCheck scale{"gain_scale_invariance", 0, 0.0, 1e-10};
  auto rng = make_rng(seed, 0x7e0);
  std::uniform_real_distribution<double> factor(0.1, 10.0);
  for (int t = 0; t < instances; ++t) {
    GainInstance inst = random_gain_instance(rng);
    const double g = gain_lemma(inst);
    lemma.max_abs_discrepancy = std::max(lemma.max_abs_discrepancy, std::abs(gain_direct(inst) - g));
    const ColumnProjector proj(inst.X);
    const Index n = inst.X.rows();
    trace.max_abs_discrepancy = std::max(
        trace.max_abs_discrepancy, std::abs(proj.trace_of(MatrixXd::Identity(n, n)) - static_cast<double>(inst.X.cols())));
    GainInstance scaled = inst;
    scaled.X *= factor(rng) * (t % 2 ? -1.0 : 1.0);
    scale.max_abs_discrepancy = std::max(scale.max_abs_discrepancy, std::abs(gain_lemma(scaled) - g));
    ++lemma.instances;
    ++trace.instances;
    ++scale.instances;
  }
  report.identities = {lemma, trace, scale};

  std::normal_distribution<double> normal(0.0, 1.0);
  for (int t = 0; t < mc_instances; ++t) {
    const int n = std::uniform_int_distribution<int>(5, 20)(rng);
    const int p = std::uniform_int_distribution<int>(1, n - 1)(rng);
    MatrixXd X(n, p);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) X(i, j) = normal(rng);
    const double sigma2 = std::uniform_real_distribution<double>(0.2, 2.0)(rng);
    MatrixXd K;
    VectorXd b = VectorXd::Zero(n);
    if (t == 0) {
      K = sigma2 * MatrixXd::Identity(n, n);
    } else {
      MatrixXd L(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) L(i, j) = normal(rng);
      K = 0.5 * sigma2 * L * L.transpose() / n;
      for (int i = 0; i < n; ++i) b(i) = 0.5 * normal(rng);
    }
    VectorXd mu(n);
    for (int i = 0; i < n; ++i) mu(i) = normal(rng);
    ExpectationCheck c;
    c.instance = t;
    c.formula = expected_gain_formula(X, sigma2, K, b);
    const McEstimate mc = expected_gain_mc(X, sigma2, K, b, mu, mc_replications, derive_seed(seed, 1000 + t), threads);
    c.mc_mean = mc.mean;
    c.mc_se = mc.se;
    report.expectations.push_back(c);
  }
  return report;
}

void write_theory_report(const std::filesystem::path& path, const TheoryReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "check,instances,max_abs_discrepancy,tolerance,passed\n";
  for (const auto& c : report.identities)
    out << c.identity << ',' << c.instances << ',' << format_double(c.max_abs_discrepancy) << ','
        << format_double(c.tolerance) << ',' << (c.passed() ? "true" : "false") << '\n';
  for (const auto& c : report.expectations)
    out << "expected_gain_instance_" << c.instance << ",1," << format_double(std::abs(c.formula - c.mc_mean)) << ','
        << format_double(3.0 * c.mc_se) << ',' << (c.passed() ? "true" : "false") << '\n';
}

}  // namespace projkit
