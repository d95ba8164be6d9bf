#pragma once

#include "projkit/common.hpp"

namespace projkit {

struct KMeansOptions {
  int restarts = 10;
  int max_iter = 100;
};

struct KMeansResult {
  std::vector<int> assignment;  // per point, in [0, k)
  MatrixXd centroids;           // k x dim
  double inertia = 0.0;         // sum of squared distances to assigned centroid
  int iterations = 0;
};

/// Lloyd's k-means with k-means++ seeding on the rows of `points`.
/// Squared-Euclidean metric; assignment ties go to the lowest cluster index;
/// a cluster that empties is re-seeded with the point farthest from its
/// current centroid. The restart with the lowest inertia wins (earliest on
/// ties), so the result is a deterministic function of `seed`.
KMeansResult kmeans(const MatrixXd& points, int k, std::uint64_t seed, const KMeansOptions& options = {});

}  // namespace projkit
