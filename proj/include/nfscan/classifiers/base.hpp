#pragma once

// Shared types for the binary classifiers. Labels are 0 (closed) and 1 (open).

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "../binary_io.hpp"
#include "../common.hpp"

namespace nfscan {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using FeatureVector = Eigen::VectorXd;
using Labels = std::vector<int>;

struct Prediction {
  int label = 0;
  /// Margin kinds: score > 0 <=> label 1. Probabilistic kinds: score > 0.5 <=> label 1.
  double score = 0.0;
};

struct TrainingInfo {
  std::uint64_t iterations = 0;
  bool converged = true;
  double objective = 0.0;

  void save(BinaryWriter& w) const {
    w.put(iterations);
    w.put<std::uint8_t>(converged ? 1 : 0);
    w.put(objective);
  }
  static TrainingInfo load(BinaryReader& r) {
    TrainingInfo t;
    t.iterations = r.get<std::uint64_t>();
    t.converged = r.get<std::uint8_t>() != 0;
    t.objective = r.get<double>();
    return t;
  }
};

/// Rejects empty, single-class, mismatched or non-finite training data.
inline void check_training_set(const FeatureMatrix& X, const Labels& y) {
  if (X.rows() != static_cast<long>(y.size())) throw TrainingError("feature rows and label count differ");
  if (X.rows() < 2) throw TrainingError("training needs at least two samples");
  bool has0 = false, has1 = false;
  for (int v : y) {
    if (v != 0 && v != 1) throw TrainingError("labels must be 0 or 1");
    has0 |= v == 0;
    has1 |= v == 1;
  }
  if (!has0 || !has1) throw TrainingError("training set contains a single class");
  if (!X.allFinite()) throw TrainingError("training features contain non-finite values");
}

/// Symmetric matrix of squared Euclidean distances between rows.
inline Eigen::MatrixXd pairwise_sq_dists(const FeatureMatrix& X) {
  const long n = X.rows();
  Eigen::MatrixXd D(n, n);
  for (long i = 0; i < n; ++i) {
    D(i, i) = 0.0;
    for (long j = i + 1; j < n; ++j) D(i, j) = D(j, i) = (X.row(i) - X.row(j)).squaredNorm();
  }
  return D;
}

inline Eigen::VectorXd sq_dists_to(const FeatureMatrix& X, const Eigen::Ref<const FeatureVector>& x) {
  Eigen::VectorXd d(X.rows());
  for (long i = 0; i < X.rows(); ++i) d[i] = (X.row(i).transpose() - x).squaredNorm();
  return d;
}

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace nfscan
