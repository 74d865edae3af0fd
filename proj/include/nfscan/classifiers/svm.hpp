#pragma once

// C-SVM with an RBF kernel, dual solved by sequential minimal optimization
// using second-order working-set selection.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "base.hpp"

namespace nfscan {

struct SvmParams {
  double gamma = 0.001;
  double C = 1.0;
  double tolerance = 1e-3;
  std::uint64_t max_iterations = 100000;

  /// Calls f(name, field) for every tunable field.
  template <class Self, class F>
  static void fields(Self& self, F&& f) {
    f("gamma", self.gamma);
    f("C", self.C);
    f("tolerance", self.tolerance);
    f("max_iterations", self.max_iterations);
  }
  void validate() const {
    if (!(gamma > 0)) throw ConfigError("svm: gamma must be positive");
    if (!(C > 0)) throw ConfigError("svm: C must be positive");
    if (!(tolerance > 0)) throw ConfigError("svm: tolerance must be positive");
    if (max_iterations == 0) throw ConfigError("svm: max_iterations must be positive");
  }
  void save(BinaryWriter& w) const {
    w.put(gamma);
    w.put(C);
    w.put(tolerance);
    w.put(max_iterations);
  }
  static SvmParams load(BinaryReader& r) {
    SvmParams p;
    p.gamma = r.get<double>();
    p.C = r.get<double>();
    p.tolerance = r.get<double>();
    p.max_iterations = r.get<std::uint64_t>();
    return p;
  }
};

struct SvmDual {
  Eigen::VectorXd alpha;
  double rho = 0.0;
  std::uint64_t iterations = 0;
  bool converged = false;
  double objective = 0.0;
};

/// Minimizes 1/2 a'Qa - e'a s.t. 0 <= a <= C, y'a = 0 with Q_ij = y_i y_j K_ij.
/// `y` holds +1 / -1.
inline SvmDual solve_svm_dual(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, double C, double tol,
                              std::uint64_t max_iter) {
  const long n = K.rows();
  constexpr double tau = 1e-12;
  SvmDual out;
  Eigen::VectorXd& a = out.alpha;
  a = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd G = Eigen::VectorXd::Constant(n, -1.0);
  auto at_upper = [&](long t) { return a[t] >= C; };
  auto at_lower = [&](long t) { return a[t] <= 0; };

  for (;;) {
    long i = -1;
    double gmax = -std::numeric_limits<double>::infinity();
    for (long t = 0; t < n; ++t) {
      if (y[t] > 0) {
        if (!at_upper(t) && -G[t] >= gmax) gmax = -G[t], i = t;
      } else if (!at_lower(t) && G[t] >= gmax) {
        gmax = G[t], i = t;
      }
    }
    long j = -1;
    double gmax2 = -std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    for (long t = 0; t < n; ++t) {
      double grad_diff, g;
      if (y[t] > 0) {
        if (at_lower(t)) continue;
        g = G[t];
        grad_diff = gmax + G[t];
      } else {
        if (at_upper(t)) continue;
        g = -G[t];
        grad_diff = gmax - G[t];
      }
      gmax2 = std::max(gmax2, g);
      if (i >= 0 && grad_diff > 0) {
        double quad = K(i, i) + K(t, t) - 2.0 * K(i, t);
        if (quad <= 0) quad = tau;
        const double obj = -(grad_diff * grad_diff) / quad;
        if (obj <= best) best = obj, j = t;
      }
    }
    if (i < 0 || j < 0 || gmax + gmax2 < tol) {
      out.converged = true;
      break;
    }
    if (out.iterations >= max_iter) break;
    ++out.iterations;

    const double ai = a[i], aj = a[j];
    if (y[i] != y[j]) {
      double quad = K(i, i) + K(j, j) - 2.0 * K(i, j);
      if (quad <= 0) quad = tau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0) {
        if (a[j] < 0) a[j] = 0, a[i] = diff;
      } else if (a[i] < 0) {
        a[i] = 0, a[j] = -diff;
      }
      if (diff > 0) {
        if (a[i] > C) a[i] = C, a[j] = C - diff;
      } else if (a[j] > C) {
        a[j] = C, a[i] = C + diff;
      }
    } else {
      double quad = K(i, i) + K(j, j) - 2.0 * K(i, j);
      if (quad <= 0) quad = tau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (sum > C) {
        if (a[i] > C) a[i] = C, a[j] = sum - C;
      } else if (a[j] < 0) {
        a[j] = 0, a[i] = sum;
      }
      if (sum > C) {
        if (a[j] > C) a[j] = C, a[i] = sum - C;
      } else if (a[i] < 0) {
        a[i] = 0, a[j] = sum;
      }
    }
    const double dai = a[i] - ai, daj = a[j] - aj;
    for (long t = 0; t < n; ++t) G[t] += y[t] * (y[i] * K(i, t) * dai + y[j] * K(j, t) * daj);
  }

  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0;
  long nr_free = 0;
  for (long t = 0; t < n; ++t) {
    const double yg = y[t] * G[t];
    if (at_upper(t)) {
      if (y[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (at_lower(t)) {
      if (y[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++nr_free;
      sum_free += yg;
    }
  }
  out.rho = nr_free > 0 ? sum_free / nr_free : 0.5 * (ub + lb);
  out.objective = 0.5 * a.dot(G - Eigen::VectorXd::Ones(n));
  return out;
}

/// Largest KKT violation of a dual solution: for f_i = sum_j a_j y_j K_ij - rho,
/// a_i = 0 needs y_i f_i >= 1, a_i = C needs y_i f_i <= 1, otherwise y_i f_i = 1.
inline double svm_kkt_residual(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, const SvmDual& d, double C) {
  const Eigen::VectorXd f = K * d.alpha.cwiseProduct(y) - Eigen::VectorXd::Constant(y.size(), d.rho);
  double worst = 0;
  for (long i = 0; i < y.size(); ++i) {
    const double m = y[i] * f[i];
    double r;
    if (d.alpha[i] <= 0) r = std::max(0.0, 1.0 - m);
    else if (d.alpha[i] >= C) r = std::max(0.0, m - 1.0);
    else r = std::abs(m - 1.0);
    worst = std::max(worst, r);
  }
  return worst;
}

struct SvmModel {
  double gamma = 0.001;
  FeatureMatrix support_vectors;
  /// a_i * y_i for each support vector.
  Eigen::VectorXd coefficients;
  double rho = 0.0;

  double decision(const Eigen::Ref<const FeatureVector>& x) const {
    const Eigen::VectorXd d2 = sq_dists_to(support_vectors, x);
    return coefficients.dot((-gamma * d2).array().exp().matrix()) - rho;
  }
  Prediction predict(const Eigen::Ref<const FeatureVector>& x) const {
    const double f = decision(x);
    return {f > 0 ? 1 : 0, f};
  }
  void save(BinaryWriter& w) const {
    w.put(gamma);
    w.put_matrix(support_vectors);
    w.put_matrix(coefficients);
    w.put(rho);
  }
  static SvmModel load(BinaryReader& r) {
    SvmModel m;
    m.gamma = r.get<double>();
    m.support_vectors = r.get_matrix<FeatureMatrix>();
    m.coefficients = r.get_matrix<Eigen::MatrixXd>();
    m.rho = r.get<double>();
    return m;
  }
};

inline Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& sq_dists, double gamma) {
  return (-gamma * sq_dists).array().exp().matrix();
}

inline Eigen::VectorXd signed_labels(const Labels& y) {
  Eigen::VectorXd s(static_cast<long>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) s[static_cast<long>(i)] = y[i] == 1 ? 1.0 : -1.0;
  return s;
}

inline SvmModel train_svm(const SvmParams& p, const FeatureMatrix& X, const Labels& y, TrainingInfo& info) {
  const Eigen::MatrixXd K = rbf_kernel(pairwise_sq_dists(X), p.gamma);
  const Eigen::VectorXd ys = signed_labels(y);
  const SvmDual d = solve_svm_dual(K, ys, p.C, p.tolerance, p.max_iterations);
  SvmModel m;
  m.gamma = p.gamma;
  m.rho = d.rho;
  std::vector<long> sv;
  for (long i = 0; i < X.rows(); ++i)
    if (d.alpha[i] > 0) sv.push_back(i);
  m.support_vectors.resize(static_cast<long>(sv.size()), X.cols());
  m.coefficients.resize(static_cast<long>(sv.size()));
  for (std::size_t k = 0; k < sv.size(); ++k) {
    m.support_vectors.row(static_cast<long>(k)) = X.row(sv[k]);
    m.coefficients[static_cast<long>(k)] = d.alpha[sv[k]] * ys[sv[k]];
  }
  info.iterations = d.iterations;
  info.converged = d.converged;
  info.objective = d.objective;
  return m;
}

}  // namespace nfscan
