#pragma once

// Gaussian naive Bayes with per-class diagonal moments.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "base.hpp"

namespace nfscan {

struct GnbParams {
  double var_smoothing = 1e-9;

  /// Calls f(name, field) for every tunable field.
  template <class Self, class F>
  static void fields(Self& self, F&& f) {
    f("var_smoothing", self.var_smoothing);
  }
  void validate() const {
    if (!(var_smoothing >= 0)) throw ConfigError("gnb: var_smoothing must be non-negative");
  }
  void save(BinaryWriter& w) const { w.put(var_smoothing); }
  static GnbParams load(BinaryReader& r) { return {r.get<double>()}; }
};

/// Column means and variances (divisor n - ddof) of the rows labelled `cls`.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> class_moments(const FeatureMatrix& X, const Labels& y, int cls,
                                                                 int ddof) {
  const long d = X.cols();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d), var = Eigen::VectorXd::Zero(d);
  long n = 0;
  for (long i = 0; i < X.rows(); ++i) {
    if (y[static_cast<std::size_t>(i)] != cls) continue;
    mean += X.row(i).transpose();
    ++n;
  }
  mean /= static_cast<double>(n);
  for (long i = 0; i < X.rows(); ++i) {
    if (y[static_cast<std::size_t>(i)] != cls) continue;
    var += (X.row(i).transpose() - mean).array().square().matrix();
  }
  var /= static_cast<double>(std::max<long>(n - ddof, 1));
  return {mean, var};
}

struct GnbModel {
  std::array<double, 2> log_prior{};
  std::array<Eigen::VectorXd, 2> mean, var;
  double epsilon = 0.0;

  double joint_log_likelihood(int c, const Eigen::Ref<const FeatureVector>& x) const {
    const auto& m = mean[static_cast<std::size_t>(c)];
    const auto& v = var[static_cast<std::size_t>(c)];
    return log_prior[static_cast<std::size_t>(c)] - 0.5 * (2.0 * std::numbers::pi * v.array()).log().sum() -
           0.5 * ((x - m).array().square() / v.array()).sum();
  }

  Prediction predict(const Eigen::Ref<const FeatureVector>& x) const {
    const double p = sigmoid(joint_log_likelihood(1, x) - joint_log_likelihood(0, x));
    return {p > 0.5 ? 1 : 0, p};
  }

  void save(BinaryWriter& w) const {
    for (int c = 0; c < 2; ++c) {
      w.put(log_prior[static_cast<std::size_t>(c)]);
      w.put_matrix(mean[static_cast<std::size_t>(c)]);
      w.put_matrix(var[static_cast<std::size_t>(c)]);
    }
    w.put(epsilon);
  }
  static GnbModel load(BinaryReader& r) {
    GnbModel m;
    for (std::size_t c = 0; c < 2; ++c) {
      m.log_prior[c] = r.get<double>();
      m.mean[c] = r.get_matrix<Eigen::MatrixXd>();
      m.var[c] = r.get_matrix<Eigen::MatrixXd>();
    }
    m.epsilon = r.get<double>();
    return m;
  }
};

inline GnbModel train_gnb(const GnbParams& p, const FeatureMatrix& X, const Labels& y, TrainingInfo& info) {
  const Eigen::RowVectorXd mu = X.colwise().mean();
  const double max_var = (X.rowwise() - mu).array().square().colwise().sum().maxCoeff() / static_cast<double>(X.rows());
  GnbModel m;
  m.epsilon = p.var_smoothing * max_var;
  const double n = static_cast<double>(X.rows());
  for (int c = 0; c < 2; ++c) {
    auto [mean, var] = class_moments(X, y, c, 0);
    const auto k = static_cast<double>(std::count(y.begin(), y.end(), c));
    m.log_prior[static_cast<std::size_t>(c)] = std::log(k / n);
    m.mean[static_cast<std::size_t>(c)] = mean;
    m.var[static_cast<std::size_t>(c)] = var.array() + m.epsilon;
  }
  info = {};
  return m;
}

}  // namespace nfscan
