#pragma once

#include "projkit/reference.hpp"

#include <filesystem>
#include <string>

namespace projkit {

enum class ToyTask { regression, classification };

struct ToyConfig {
  int n = 30;
  int p = 500;
  int p_rel = 150;
  double rho = 0.5;
  std::uint64_t seed = 1;
  ToyTask task = ToyTask::regression;

  void validate() const;
};

struct ToyData {
  MatrixXd X;  // n x p
  VectorXd y;  // n
  VectorXd f;  // n latent values
};

/// f ~ N(0,1), y | f ~ N(f, 1), x_j | f ~ N(sqrt(rho) f, 1 - rho) for the
/// first p_rel features and N(0, 1) for the rest. Classification replaces y
/// by 1{y > 0}. Observations are drawn row by row from one seeded stream.
ToyData generate_toy(const ToyConfig& config);

/// Mean (1-based) rank of features 0..p_rel-1 when all features are sorted by
/// decreasing |score|; ties go to the lower index.
double mean_relevant_rank(const VectorXd& abs_scores, int p_rel);

struct RankRow {
  double rho = 0.0;
  std::string variant;  // "y", "reference" or "f"
  double mean_rank = 0.0;
  double se = 0.0;
  int replications = 0;
  int dropped = 0;
};

struct RankExperimentConfig {
  int n = 30;
  int p = 500;
  int p_rel = 150;
  std::vector<double> rhos{0.3, 0.5, 0.7};
  int replications = 100;
  std::uint64_t seed = 1;
  int threads = 1;
  SpcConfig spc;
};

/// Replication r at rho index g uses data seed derive_seed(seed, g * 2^32 + r),
/// so any replication can be rerun on its own.
std::vector<RankRow> rank_experiment(const RankExperimentConfig& config);

void write_rank_csv(const std::filesystem::path& path, const std::vector<RankRow>& rows);

}  // namespace projkit
