#include "projkit/folds.hpp"

#include <algorithm>
#include <numeric>

namespace projkit {

std::vector<int> make_folds(const VectorXd& y, Family family, int K, std::uint64_t seed) {
  const auto n = static_cast<int>(y.size());
  if (K < 2 || K > n) throw std::invalid_argument("fold count must lie in [2, n]");
  auto rng = make_rng(seed, 0xf01d);
  std::vector<int> folds(static_cast<std::size_t>(n), 0);
  std::vector<std::vector<int>> strata;
  if (family.kind() == FamilyKind::bernoulli) {
    strata.resize(2);
    for (int i = 0; i < n; ++i) strata[y(i) == 1.0 ? 1 : 0].push_back(i);
  } else {
    strata.resize(1);
    strata[0].resize(static_cast<std::size_t>(n));
    std::iota(strata[0].begin(), strata[0].end(), 0);
  }
  int next = 0;
  for (auto& s : strata) {
    std::shuffle(s.begin(), s.end(), rng);
    for (int i : s) {
      folds[i] = next;
      next = (next + 1) % K;
    }
  }
  return folds;
}

std::vector<int> fold_members(const std::vector<int>& folds, int k, bool in_fold) {
  std::vector<int> out;
  for (std::size_t i = 0; i < folds.size(); ++i)
    if ((folds[i] == k) == in_fold) out.push_back(static_cast<int>(i));
  return out;
}

MatrixXd select_rows(const MatrixXd& m, const std::vector<int>& rows) {
  MatrixXd out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
  return out;
}

VectorXd select_rows(const VectorXd& v, const std::vector<int>& rows) {
  VectorXd out(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r)) = v(rows[r]);
  return out;
}

}  // namespace projkit
