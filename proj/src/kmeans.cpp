#include "projkit/kmeans.hpp"

namespace projkit {

namespace {

// Squared distances from every point to every centroid (n x k).
MatrixXd squared_distances(const MatrixXd& points, const MatrixXd& centroids) {
  const VectorXd pn = points.rowwise().squaredNorm();
  const VectorXd cn = centroids.rowwise().squaredNorm();
  MatrixXd d = -2.0 * points * centroids.transpose();
  d.colwise() += pn;
  d.rowwise() += cn.transpose();
  return d.cwiseMax(0.0);
}

MatrixXd seed_plus_plus(const MatrixXd& points, int k, std::mt19937_64& rng) {
  const Index n = points.rows();
  MatrixXd centroids(k, points.cols());
  std::uniform_int_distribution<Index> first(0, n - 1);
  centroids.row(0) = points.row(first(rng));
  VectorXd best = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    const double total = best.sum();
    Index pick = 0;
    if (total > 0.0) {
      double u = unif(rng) * total;
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        u -= best(i);
        if (u <= 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    centroids.row(c) = points.row(pick);
    best = best.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }
  return centroids;
}

KMeansResult lloyd(const MatrixXd& points, MatrixXd centroids, int max_iter) {
  const Index n = points.rows();
  const int k = static_cast<int>(centroids.rows());
  KMeansResult r;
  r.assignment.assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iter; ++it) {
    r.iterations = it + 1;
    const MatrixXd d = squared_distances(points, centroids);
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index best;
      d.row(i).minCoeff(&best);  // first minimum = lowest index on ties
      if (r.assignment[i] != static_cast<int>(best)) {
        r.assignment[i] = static_cast<int>(best);
        changed = true;
      }
    }
    // Re-seed empty clusters from the point farthest from its centroid.
    for (int c = 0; c < k; ++c) {
      if (std::find(r.assignment.begin(), r.assignment.end(), c) != r.assignment.end()) continue;
      Index far = 0;
      double far_d = -1.0;
      for (Index i = 0; i < n; ++i) {
        const int a = r.assignment[i];
        const auto size_a = std::count(r.assignment.begin(), r.assignment.end(), a);
        if (size_a <= 1) continue;
        const double di = d(i, a);
        if (di > far_d) {
          far_d = di;
          far = i;
        }
      }
      r.assignment[far] = c;
      changed = true;
    }
    MatrixXd next = MatrixXd::Zero(k, points.cols());
    std::vector<int> counts(k, 0);
    for (Index i = 0; i < n; ++i) {
      next.row(r.assignment[i]) += points.row(i);
      ++counts[r.assignment[i]];
    }
    for (int c = 0; c < k; ++c) next.row(c) /= static_cast<double>(counts[c]);
    centroids = std::move(next);
    if (!changed && it > 0) break;
  }
  r.centroids = centroids;
  const MatrixXd d = squared_distances(points, centroids);
  r.inertia = 0.0;
  for (Index i = 0; i < n; ++i) r.inertia += d(i, r.assignment[i]);
  return r;
}

}  // namespace

KMeansResult kmeans(const MatrixXd& points, int k, std::uint64_t seed, const KMeansOptions& options) {
  const Index n = points.rows();
  if (k < 1 || k > n) throw std::invalid_argument("k-means cluster count out of range");
  if (options.restarts < 1) throw std::invalid_argument("k-means needs at least one restart");
  KMeansResult best;
  bool have = false;
  for (int r = 0; r < options.restarts; ++r) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(r));
    KMeansResult cand = lloyd(points, seed_plus_plus(points, k, rng), options.max_iter);
    if (!have || cand.inertia < best.inertia) {
      best = std::move(cand);
      have = true;
    }
  }
  return best;
}

}  // namespace projkit
