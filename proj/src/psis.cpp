#include "projkit/psis.hpp"

#include <algorithm>
#include <numeric>

namespace projkit {

GpdFit gpd_fit(const VectorXd& x) {
  const Index N = x.size();
  if (N < 1) throw std::invalid_argument("gpd_fit needs data");
  constexpr double prior = 3.0;
  const Index M = 30 + static_cast<Index>(std::floor(std::sqrt(static_cast<double>(N))));
  const double xstar = x(static_cast<Index>(std::floor(static_cast<double>(N) / 4.0 + 0.5)) - 1);
  VectorXd theta(M), l_theta(M);
  for (Index j = 0; j < M; ++j) {
    theta(j) = 1.0 / x(N - 1) + (1.0 - std::sqrt(static_cast<double>(M) / (static_cast<double>(j) + 0.5))) / prior / xstar;
    const double a = -theta(j);
    const double kk = (a * x.array()).log1p().mean();
    l_theta(j) = static_cast<double>(N) * (std::log(a / kk) - kk - 1.0);
  }
  const VectorXd w = (l_theta.array() - log_sum_exp(l_theta)).exp();
  const double theta_hat = theta.dot(w);
  double k = (-theta_hat * x.array()).log1p().mean();
  const double sigma = -k / theta_hat;
  const double a = 10.0;
  k = k * static_cast<double>(N) / (static_cast<double>(N) + a) + a * 0.5 / (static_cast<double>(N) + a);
  if (std::isnan(k)) k = std::numeric_limits<double>::infinity();
  return {k, sigma};
}

double gpd_quantile(double p, double k, double sigma) {
  if (!(sigma > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  if (k == 0.0) return -sigma * std::log1p(-p);
  return sigma * std::expm1(-k * std::log1p(-p)) / k;
}

PsisResult psis_smooth(const VectorXd& log_raw) {
  const Index S = log_raw.size();
  if (S < 5) throw std::invalid_argument("psis_smooth needs at least 5 draws");
  if (!log_raw.allFinite()) throw NumericalError("non-finite log importance ratio");
  const double max_raw = log_raw.maxCoeff();
  VectorXd lw = log_raw.array() - max_raw;
  const auto M = static_cast<Index>(
      std::ceil(std::min(0.2 * static_cast<double>(S), 3.0 * std::sqrt(static_cast<double>(S)))));
  double khat = std::numeric_limits<double>::infinity();
  if (M >= 5) {
    std::vector<Index> ord(static_cast<std::size_t>(S));
    std::iota(ord.begin(), ord.end(), Index{0});
    std::stable_sort(ord.begin(), ord.end(), [&](Index a, Index b) { return lw(a) < lw(b); });
    const std::size_t first = static_cast<std::size_t>(S - M);
    const double tail_lo = lw(ord[first]), tail_hi = lw(ord.back());
    if (std::abs(tail_hi - tail_lo) < std::numeric_limits<double>::epsilon() / 100.0) {
      khat = -std::numeric_limits<double>::infinity();
    } else {
      const double cutoff = lw(ord[first - 1]);
      const double exp_cutoff = std::exp(cutoff);
      VectorXd exceed(M);
      for (Index t = 0; t < M; ++t) exceed(t) = std::exp(lw(ord[first + static_cast<std::size_t>(t)])) - exp_cutoff;
      const GpdFit fit = gpd_fit(exceed);
      khat = fit.k;
      if (std::isfinite(fit.k) && fit.sigma > 0.0) {
        for (Index t = 0; t < M; ++t) {
          const double p = (static_cast<double>(t) + 0.5) / static_cast<double>(M);
          lw(ord[first + static_cast<std::size_t>(t)]) = std::log(gpd_quantile(p, fit.k, fit.sigma) + exp_cutoff);
        }
      }
    }
  }
  lw = lw.cwiseMin(0.0);
  PsisResult out;
  out.weights = (lw.array() - log_sum_exp(lw)).exp();
  out.khat = khat;
  return out;
}

}  // namespace projkit
