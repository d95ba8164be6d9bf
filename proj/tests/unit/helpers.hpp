#pragma once

#include "projkit/projection.hpp"

#include <random>

namespace projkit::testing {

inline MatrixXd random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = z(rng);
  return m;
}

inline VectorXd random_vector(Index n, std::mt19937_64& rng) { return random_matrix(n, 1, rng).col(0); }

inline MatrixXd with_ones(const MatrixXd& X) {
  MatrixXd Z(X.rows(), X.cols() + 1);
  Z.col(0).setOnes();
  Z.rightCols(X.cols()) = X;
  return Z;
}

// Independent least-squares oracle: normal equations through a Cholesky solve.
inline VectorXd normal_equations(const MatrixXd& Z, const VectorXd& t) {
  return (Z.transpose() * Z).llt().solve(Z.transpose() * t);
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double se_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

/// Gaussian draws over [1, X] with small random perturbations.
inline PosteriorDraws gaussian_draws(const MatrixXd& X, int S, std::mt19937_64& rng) {
  PosteriorDraws d;
  d.ref_design = DesignMatrix::with_intercept(X);
  d.betas = random_matrix(S, X.cols() + 1, rng) * 0.3;
  d.betas.col(0).array() += 0.5;
  std::uniform_real_distribution<double> u(0.5, 1.5);
  VectorXd s(S);
  for (int i = 0; i < S; ++i) s(i) = u(rng);
  d.sigmas = s;
  return d;
}

}  // namespace projkit::testing
