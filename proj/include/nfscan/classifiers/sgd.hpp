#pragma once

// Linear classifier trained by stochastic gradient descent on the L2-regularized
// hinge loss with an inverse-scaling step size.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "../random.hpp"
#include "base.hpp"

namespace nfscan {

struct SgdParams {
  double alpha = 1e-4;
  double eta0 = 0.01;
  double power_t = 0.25;
  int epochs = 1000;

  /// Calls f(name, field) for every tunable field.
  template <class Self, class F>
  static void fields(Self& self, F&& f) {
    f("alpha", self.alpha);
    f("eta0", self.eta0);
    f("power_t", self.power_t);
    f("epochs", self.epochs);
  }
  void validate() const {
    if (!(alpha >= 0)) throw ConfigError("sgd: alpha must be non-negative");
    if (!(eta0 > 0)) throw ConfigError("sgd: eta0 must be positive");
    if (!(power_t >= 0)) throw ConfigError("sgd: power_t must be non-negative");
    if (epochs < 1) throw ConfigError("sgd: epochs must be >= 1");
  }
  void save(BinaryWriter& w) const {
    w.put(alpha);
    w.put(eta0);
    w.put(power_t);
    w.put<std::int32_t>(epochs);
  }
  static SgdParams load(BinaryReader& r) {
    SgdParams p;
    p.alpha = r.get<double>();
    p.eta0 = r.get<double>();
    p.power_t = r.get<double>();
    p.epochs = r.get<std::int32_t>();
    return p;
  }
};

struct SgdModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;

  Prediction predict(const Eigen::Ref<const FeatureVector>& x) const {
    const double f = weights.dot(x) + intercept;
    return {f > 0 ? 1 : 0, f};
  }
  void save(BinaryWriter& w) const {
    w.put_matrix(weights);
    w.put(intercept);
  }
  static SgdModel load(BinaryReader& r) {
    SgdModel m;
    m.weights = r.get_matrix<Eigen::MatrixXd>();
    m.intercept = r.get<double>();
    return m;
  }
};

/// The weight vector is kept as scale * X^T c so each step costs O(n) through the
/// Gram matrix instead of O(features).
inline SgdModel train_sgd(const SgdParams& p, std::uint64_t seed, const FeatureMatrix& X, const Labels& y,
                          TrainingInfo& info) {
  const long n = X.rows();
  const Eigen::MatrixXd G = X * X.transpose();
  std::vector<double> ys(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) ys[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  // Gc = G * c, maintained incrementally.
  Eigen::VectorXd Gc = Eigen::VectorXd::Zero(n);
  double scale = 1.0, b = 0.0;
  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0L);
  Rng rng(seed);
  double t = 1.0;
  for (int epoch = 0; epoch < p.epochs; ++epoch) {
    rng.shuffle(order);
    for (long i : order) {
      const double eta = p.eta0 / std::pow(t, p.power_t);
      const double yi = ys[static_cast<std::size_t>(i)];
      const double margin = yi * (scale * Gc[i] + b);
      scale *= 1.0 - eta * p.alpha;
      if (scale < 1e-9) {
        c *= scale;
        Gc *= scale;
        scale = 1.0;
      }
      if (margin < 1.0) {
        const double dc = eta * yi / scale;
        c[i] += dc;
        Gc += dc * G.col(i);
        b += eta * yi;
      }
      t += 1.0;
    }
  }
  SgdModel m;
  m.weights = scale * (X.transpose() * c);
  m.intercept = b;
  double hinge = 0.0;
  for (long i = 0; i < n; ++i)
    hinge += std::max(0.0, 1.0 - ys[static_cast<std::size_t>(i)] * (scale * Gc[i] + b));
  info.iterations = static_cast<std::uint64_t>(p.epochs);
  info.converged = true;
  info.objective = 0.5 * p.alpha * m.weights.squaredNorm() + hinge / static_cast<double>(n);
  return m;
}

}  // namespace nfscan
