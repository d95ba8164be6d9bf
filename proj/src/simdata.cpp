#include "projkit/simdata.hpp"

#include "projkit/io.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iostream>
#include <numeric>

namespace projkit {

void ToyConfig::validate() const {
  if (n < 1) throw std::invalid_argument("n must be positive");
  if (p < 1) throw std::invalid_argument("p must be positive");
  if (p_rel < 0 || p_rel > p) throw std::invalid_argument("p_rel must lie in [0, p]");
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in [0, 1)");
}

ToyData generate_toy(const ToyConfig& config) {
  config.validate();
  auto rng = make_rng(config.seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double a = std::sqrt(config.rho), b = std::sqrt(1.0 - config.rho);
  ToyData d;
  d.X.resize(config.n, config.p);
  d.y.resize(config.n);
  d.f.resize(config.n);
  for (int i = 0; i < config.n; ++i) {
    d.f(i) = normal(rng);
    d.y(i) = d.f(i) + normal(rng);
    for (int j = 0; j < config.p; ++j) d.X(i, j) = j < config.p_rel ? a * d.f(i) + b * normal(rng) : normal(rng);
    if (config.task == ToyTask::classification) d.y(i) = d.y(i) > 0.0 ? 1.0 : 0.0;
  }
  return d;
}

double mean_relevant_rank(const VectorXd& abs_scores, int p_rel) {
  const auto p = static_cast<int>(abs_scores.size());
  if (p_rel < 1 || p_rel > p) throw std::invalid_argument("p_rel must lie in [1, p]");
  std::vector<int> idx(static_cast<std::size_t>(p));
  std::iota(idx.begin(), idx.end(), 0);
  auto key = [&](int j) { return std::isnan(abs_scores(j)) ? -1.0 : abs_scores(j); };
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return key(a) > key(b); });
  double total = 0.0;
  for (int r = 0; r < p; ++r)
    if (idx[r] < p_rel) total += r + 1;
  return total / p_rel;
}

std::vector<RankRow> rank_experiment(const RankExperimentConfig& config) {
  if (config.replications < 1) throw std::invalid_argument("replications must be at least 1");
  std::vector<RankRow> rows;
  const char* variants[3] = {"y", "reference", "f"};
  for (std::size_t g = 0; g < config.rhos.size(); ++g) {
    const auto R = static_cast<std::size_t>(config.replications);
    std::vector<std::array<double, 3>> ranks(R);
    std::vector<char> ok(R, 1);
    parallel_for(R, config.threads, [&](std::size_t r) {
      ToyConfig tc{config.n, config.p, config.p_rel, config.rhos[g],
                   derive_seed(config.seed, (static_cast<std::uint64_t>(g) << 32) + r), ToyTask::regression};
      const ToyData d = generate_toy(tc);
      try {
        SpcConfig spc = config.spc;
        spc.seed = derive_seed(tc.seed, 1);
        const ReferenceModel ref = fit_spc_reference(d.X, d.y, Family::gaussian(), spc);
        ranks[r] = {mean_relevant_rank(abs_correlations(d.X, d.y), config.p_rel),
                    mean_relevant_rank(abs_correlations(d.X, ref.mean_fit()), config.p_rel),
                    mean_relevant_rank(abs_correlations(d.X, d.f), config.p_rel)};
      } catch (const std::exception& e) {
        std::clog << "warning: replication " << r << " at rho " << config.rhos[g] << " dropped: " << e.what() << '\n';
        ok[r] = 0;
      }
    });
    const auto used = static_cast<int>(std::count(ok.begin(), ok.end(), 1));
    for (int v = 0; v < 3; ++v) {
      RankRow row;
      row.rho = config.rhos[g];
      row.variant = variants[v];
      row.replications = used;
      row.dropped = config.replications - used;
      double sum = 0.0, sq = 0.0;
      for (std::size_t r = 0; r < R; ++r)
        if (ok[r]) sum += ranks[r][v];
      row.mean_rank = used > 0 ? sum / used : std::numeric_limits<double>::quiet_NaN();
      for (std::size_t r = 0; r < R; ++r)
        if (ok[r]) sq += (ranks[r][v] - row.mean_rank) * (ranks[r][v] - row.mean_rank);
      row.se = used > 1 ? std::sqrt(sq / (used - 1) / used) : std::numeric_limits<double>::quiet_NaN();
      rows.push_back(row);
    }
  }
  return rows;
}

void write_rank_csv(const std::filesystem::path& path, const std::vector<RankRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "rho,variant,mean_rank,se\n";
  for (const auto& r : rows)
    out << format_double(r.rho) << ',' << r.variant << ',' << format_double(r.mean_rank) << ',' << format_double(r.se)
        << '\n';
}

}  // namespace projkit
