#pragma once

#include "projkit/glm.hpp"

namespace projkit {

/// Assigns each of the n observations to one of K folds (values in [0, K)).
/// Bernoulli responses are stratified so every fold keeps the class balance;
/// other families get a seeded random shuffle dealt round-robin.
std::vector<int> make_folds(const VectorXd& y, Family family, int K, std::uint64_t seed);

/// Row indices with fold[i] == k (test) or != k (train).
std::vector<int> fold_members(const std::vector<int>& folds, int k, bool in_fold);

MatrixXd select_rows(const MatrixXd& m, const std::vector<int>& rows);
VectorXd select_rows(const VectorXd& v, const std::vector<int>& rows);

}  // namespace projkit
