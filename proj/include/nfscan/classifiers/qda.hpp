#pragma once

// Quadratic discriminant analysis with each class covariance regularized to
// (1 - r) diag(S) + r mean(diag(S)) I.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "gnb.hpp"

namespace nfscan {

struct QdaParams {
  double shrinkage = 0.1;

  /// Calls f(name, field) for every tunable field.
  template <class Self, class F>
  static void fields(Self& self, F&& f) {
    f("shrinkage", self.shrinkage);
  }
  void validate() const {
    if (!(shrinkage > 0 && shrinkage <= 1)) throw ConfigError("qda: shrinkage must be in (0, 1]");
  }
  void save(BinaryWriter& w) const { w.put(shrinkage); }
  static QdaParams load(BinaryReader& r) { return {r.get<double>()}; }
};

struct QdaModel {
  std::array<double, 2> log_prior{};
  std::array<Eigen::VectorXd, 2> mean;
  /// Diagonal of the regularized covariance.
  std::array<Eigen::VectorXd, 2> cov;

  double discriminant(int c, const Eigen::Ref<const FeatureVector>& x) const {
    const auto k = static_cast<std::size_t>(c);
    return log_prior[k] - 0.5 * cov[k].array().log().sum() -
           0.5 * ((x - mean[k]).array().square() / cov[k].array()).sum();
  }

  Prediction predict(const Eigen::Ref<const FeatureVector>& x) const {
    const double p = sigmoid(discriminant(1, x) - discriminant(0, x));
    return {p > 0.5 ? 1 : 0, p};
  }

  void save(BinaryWriter& w) const {
    for (std::size_t c = 0; c < 2; ++c) {
      w.put(log_prior[c]);
      w.put_matrix(mean[c]);
      w.put_matrix(cov[c]);
    }
  }
  static QdaModel load(BinaryReader& r) {
    QdaModel m;
    for (std::size_t c = 0; c < 2; ++c) {
      m.log_prior[c] = r.get<double>();
      m.mean[c] = r.get_matrix<Eigen::MatrixXd>();
      m.cov[c] = r.get_matrix<Eigen::MatrixXd>();
    }
    return m;
  }
};

inline QdaModel train_qda(const QdaParams& p, const FeatureMatrix& X, const Labels& y, TrainingInfo& info) {
  QdaModel m;
  const double n = static_cast<double>(X.rows());
  for (int c = 0; c < 2; ++c) {
    const auto k = static_cast<std::size_t>(c);
    const auto count = std::count(y.begin(), y.end(), c);
    if (count < 2) throw TrainingError("qda: each class needs at least two samples");
    auto [mean, var] = class_moments(X, y, c, 1);
    const double avg = var.mean();
    if (!(avg > 0)) throw TrainingError("qda: class " + std::to_string(c) + " has zero variance in every feature");
    m.log_prior[k] = std::log(static_cast<double>(count) / n);
    m.mean[k] = mean;
    m.cov[k] = (1.0 - p.shrinkage) * var.array() + p.shrinkage * avg;
  }
  info = {};
  return m;
}

}  // namespace nfscan
