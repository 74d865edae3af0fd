#pragma once

// Binary Gaussian-process classifier: logistic likelihood, Laplace
// approximation, kernel sigma_f^2 * exp(-|x - x'|^2 / (2 l^2)) with both
// hyperparameters fitted by maximizing the approximate log marginal likelihood.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Cholesky>

#include "../random.hpp"
#include "base.hpp"

namespace nfscan {

struct GpcParams {
  int restarts = 3;
  int max_newton = 100;
  double newton_tol = 1e-8;
  int max_ascent = 200;
  double ascent_tol = 1e-6;

  /// Calls f(name, field) for every tunable field.
  template <class Self, class F>
  static void fields(Self& self, F&& f) {
    f("restarts", self.restarts);
    f("max_newton", self.max_newton);
    f("newton_tol", self.newton_tol);
    f("max_ascent", self.max_ascent);
    f("ascent_tol", self.ascent_tol);
  }
  void validate() const {
    if (restarts < 1) throw ConfigError("gpc: restarts must be >= 1");
    if (max_newton < 1) throw ConfigError("gpc: max_newton must be >= 1");
    if (!(newton_tol > 0)) throw ConfigError("gpc: newton_tol must be positive");
    if (max_ascent < 0) throw ConfigError("gpc: max_ascent must be >= 0");
    if (!(ascent_tol > 0)) throw ConfigError("gpc: ascent_tol must be positive");
  }
  void save(BinaryWriter& w) const {
    w.put<std::int32_t>(restarts);
    w.put<std::int32_t>(max_newton);
    w.put(newton_tol);
    w.put<std::int32_t>(max_ascent);
    w.put(ascent_tol);
  }
  static GpcParams load(BinaryReader& r) {
    GpcParams p;
    p.restarts = r.get<std::int32_t>();
    p.max_newton = r.get<std::int32_t>();
    p.newton_tol = r.get<double>();
    p.max_ascent = r.get<std::int32_t>();
    p.ascent_tol = r.get<double>();
    return p;
  }
};

/// theta = (log sigma_f, log l).
using GpcTheta = std::array<double, 2>;

inline Eigen::MatrixXd gpc_kernel(const Eigen::MatrixXd& sq_dists, const GpcTheta& theta) {
  const double sf2 = std::exp(2 * theta[0]);
  const double inv = 1.0 / (2.0 * std::exp(2 * theta[1]));
  return sf2 * (-inv * sq_dists).array().exp().matrix();
}

struct LaplaceMode {
  Eigen::VectorXd f;
  /// K^-1 f at the mode.
  Eigen::VectorXd a;
  Eigen::VectorXd pi;
  Eigen::VectorXd sqrt_w;
  Eigen::MatrixXd L;
  double log_marginal = 0.0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

// sum_i log p(t_i | f_i) for t in {0, 1}.
inline double logistic_log_lik(const Eigen::VectorXd& f, const Eigen::VectorXd& t) {
  double s = 0;
  for (long i = 0; i < f.size(); ++i) {
    const double z = (2 * t[i] - 1) * f[i];
    s += z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
  }
  return s;
}

inline Eigen::VectorXd logistic_pi(const Eigen::VectorXd& f) {
  Eigen::VectorXd p(f.size());
  for (long i = 0; i < f.size(); ++i) p[i] = sigmoid(f[i]);
  return p;
}

}  // namespace detail

/// Newton iterations for the posterior mode; `t` holds 0/1 targets.
inline LaplaceMode laplace_mode(const Eigen::MatrixXd& K, const Eigen::VectorXd& t, int max_iter, double tol) {
  const long n = K.rows();
  LaplaceMode m;
  m.f = Eigen::VectorXd::Zero(n);
  m.a = Eigen::VectorXd::Zero(n);
  double psi = detail::logistic_log_lik(m.f, t);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  for (m.iterations = 0; m.iterations < max_iter;) {
    const Eigen::VectorXd pi = detail::logistic_pi(m.f);
    const Eigen::VectorXd w = pi.array() * (1.0 - pi.array());
    const Eigen::VectorXd sw = w.array().sqrt();
    const Eigen::MatrixXd B = I + sw.asDiagonal() * K * sw.asDiagonal();
    const Eigen::LLT<Eigen::MatrixXd> llt(B);
    const Eigen::VectorXd b = w.cwiseProduct(m.f) + (t - pi);
    const Eigen::VectorXd c = llt.solve(sw.cwiseProduct(K * b));
    Eigen::VectorXd a_new = b - sw.cwiseProduct(c);
    Eigen::VectorXd f_new = K * a_new;
    double psi_new = -0.5 * a_new.dot(f_new) + detail::logistic_log_lik(f_new, t);
    // Halve the step while the objective drops.
    for (int h = 0; h < 30 && psi_new < psi - 1e-12 * std::abs(psi); ++h) {
      a_new = 0.5 * (a_new + m.a);
      f_new = K * a_new;
      psi_new = -0.5 * a_new.dot(f_new) + detail::logistic_log_lik(f_new, t);
    }
    const double step = (f_new - m.f).cwiseAbs().maxCoeff();
    m.f = f_new;
    m.a = a_new;
    psi = psi_new;
    ++m.iterations;
    if (step < tol) {
      m.converged = true;
      break;
    }
  }
  m.pi = detail::logistic_pi(m.f);
  const Eigen::VectorXd w = m.pi.array() * (1.0 - m.pi.array());
  m.sqrt_w = w.array().sqrt();
  const Eigen::MatrixXd B = I + m.sqrt_w.asDiagonal() * K * m.sqrt_w.asDiagonal();
  m.L = Eigen::LLT<Eigen::MatrixXd>(B).matrixL();
  m.log_marginal = -0.5 * m.a.dot(m.f) + detail::logistic_log_lik(m.f, t) - m.L.diagonal().array().log().sum();
  return m;
}

/// Max-norm of grad log p(t|f) - K^-1 f at the mode; zero at exact stationarity.
inline double laplace_stationarity(const LaplaceMode& m, const Eigen::VectorXd& t) {
  return ((t - m.pi) - m.a).cwiseAbs().maxCoeff();
}

struct GpcObjective {
  double value = 0.0;
  GpcTheta gradient{};
  LaplaceMode mode;
};

/// Approximate log marginal likelihood and its gradient in log hyperparameters.
inline GpcObjective gpc_log_marginal(const Eigen::MatrixXd& sq_dists, const Eigen::VectorXd& t, const GpcTheta& theta,
                                     int max_newton = 100, double newton_tol = 1e-8) {
  const Eigen::MatrixXd K = gpc_kernel(sq_dists, theta);
  GpcObjective out;
  out.mode = laplace_mode(K, t, max_newton, newton_tol);
  const LaplaceMode& m = out.mode;
  out.value = m.log_marginal;

  const auto Lv = m.L.triangularView<Eigen::Lower>();
  // R = W^1/2 B^-1 W^1/2
  Eigen::MatrixXd R = m.L.transpose().triangularView<Eigen::Upper>().solve(Lv.solve(Eigen::MatrixXd(m.sqrt_w.asDiagonal())));
  R = m.sqrt_w.asDiagonal() * R;
  const Eigen::MatrixXd C = Lv.solve(Eigen::MatrixXd(m.sqrt_w.asDiagonal() * K));
  const Eigen::VectorXd third = -(m.pi.array() * (1.0 - m.pi.array()) * (1.0 - 2.0 * m.pi.array())).matrix();
  // d(-1/2 log|B|)/df at the mode; W = -grad^2 log p, so dW/df = -third.
  const Eigen::VectorXd s2 =
      0.5 * ((K.diagonal() - C.colwise().squaredNorm().transpose()).cwiseProduct(third));
  const Eigen::VectorXd dlogp = t - m.pi;

  const double inv_l2 = std::exp(-2 * theta[1]);
  const std::array<Eigen::MatrixXd, 2> dK{2.0 * K, K.cwiseProduct(sq_dists) * inv_l2};
  for (int j = 0; j < 2; ++j) {
    const Eigen::MatrixXd& Cj = dK[static_cast<std::size_t>(j)];
    const double s1 = 0.5 * m.a.dot(Cj * m.a) - 0.5 * R.cwiseProduct(Cj).sum();
    const Eigen::VectorXd b = Cj * dlogp;
    const Eigen::VectorXd s3 = b - K * (R * b);
    out.gradient[static_cast<std::size_t>(j)] = s1 + s2.dot(s3);
  }
  return out;
}

struct GpcModel {
  GpcTheta theta{};
  FeatureMatrix train_x;
  /// t - pi at the mode.
  Eigen::VectorXd residual;
  Eigen::VectorXd sqrt_w;
  Eigen::MatrixXd L;

  Prediction predict(const Eigen::Ref<const FeatureVector>& x) const {
    const double sf2 = std::exp(2 * theta[0]);
    const double inv = 1.0 / (2.0 * std::exp(2 * theta[1]));
    const Eigen::VectorXd ks = sf2 * (-inv * sq_dists_to(train_x, x)).array().exp();
    const double mean = ks.dot(residual);
    const Eigen::VectorXd v = L.triangularView<Eigen::Lower>().solve(sqrt_w.cwiseProduct(ks));
    const double var = std::max(0.0, sf2 - v.squaredNorm());
    const double p = sigmoid(mean / std::sqrt(1.0 + std::numbers::pi * var / 8.0));
    return {p > 0.5 ? 1 : 0, p};
  }

  void save(BinaryWriter& w) const {
    w.put(theta[0]);
    w.put(theta[1]);
    w.put_matrix(train_x);
    w.put_matrix(residual);
    w.put_matrix(sqrt_w);
    w.put_matrix(L);
  }
  static GpcModel load(BinaryReader& r) {
    GpcModel m;
    m.theta[0] = r.get<double>();
    m.theta[1] = r.get<double>();
    m.train_x = r.get_matrix<FeatureMatrix>();
    m.residual = r.get_matrix<Eigen::MatrixXd>();
    m.sqrt_w = r.get_matrix<Eigen::MatrixXd>();
    m.L = r.get_matrix<Eigen::MatrixXd>();
    return m;
  }
};

namespace detail {

inline double median_offdiag(const Eigen::MatrixXd& D) {
  std::vector<double> v;
  for (long i = 0; i < D.rows(); ++i)
    for (long j = i + 1; j < D.cols(); ++j) v.push_back(D(i, j));
  if (v.empty()) return 1.0;
  const auto mid = v.begin() + static_cast<long>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid > 0 ? *mid : 1.0;
}

struct GpcBounds {
  GpcTheta lo, hi;
  GpcTheta clamp(GpcTheta t) const {
    for (int j = 0; j < 2; ++j) t[j] = std::clamp(t[j], lo[j], hi[j]);
    return t;
  }
};

}  // namespace detail

struct GpcFit {
  GpcTheta theta{};
  double log_marginal = -std::numeric_limits<double>::infinity();
  std::uint64_t iterations = 0;
  bool converged = false;
};

/// Projected gradient ascent with backtracking from several seeded starts.
inline GpcFit fit_gpc_hyperparameters(const Eigen::MatrixXd& sq_dists, const Eigen::VectorXd& t, const GpcParams& p,
                                      std::uint64_t seed) {
  const double l0 = 0.5 * std::log(detail::median_offdiag(sq_dists));
  const detail::GpcBounds bounds{{std::log(1e-2), l0 - 5.0}, {std::log(1e3), l0 + 5.0}};
  Rng rng(seed);
  GpcFit best;
  for (int r = 0; r < p.restarts; ++r) {
    GpcTheta theta{0.0, l0};
    if (r > 0) theta = bounds.clamp({rng.uniform(-1.0, 2.0), l0 + rng.uniform(-1.5, 1.5)});
    GpcObjective cur = gpc_log_marginal(sq_dists, t, theta, p.max_newton, p.newton_tol);
    double step = 0.1;
    bool converged = false;
    int it = 0;
    for (; it < p.max_ascent; ++it) {
      const double gnorm = std::hypot(cur.gradient[0], cur.gradient[1]);
      if (gnorm < p.ascent_tol) {
        converged = true;
        break;
      }
      bool moved = false;
      for (int bt = 0; bt < 40; ++bt) {
        const GpcTheta trial = bounds.clamp({theta[0] + step * cur.gradient[0] / gnorm,
                                             theta[1] + step * cur.gradient[1] / gnorm});
        const double moved_by = std::hypot(trial[0] - theta[0], trial[1] - theta[1]);
        if (moved_by == 0.0) break;
        GpcObjective next = gpc_log_marginal(sq_dists, t, trial, p.max_newton, p.newton_tol);
        if (next.value >= cur.value + 1e-4 * cur.gradient[0] * (trial[0] - theta[0]) +
                              1e-4 * cur.gradient[1] * (trial[1] - theta[1])) {
          const double gain = next.value - cur.value;
          theta = trial;
          cur = std::move(next);
          step = std::min(2.0 * step, 2.0);
          moved = true;
          if (gain < 1e-10 * (1.0 + std::abs(cur.value))) converged = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved || converged) {
        converged = true;
        break;
      }
    }
    best.iterations += static_cast<std::uint64_t>(it);
    if (cur.value > best.log_marginal) {
      best.theta = theta;
      best.log_marginal = cur.value;
      best.converged = converged && cur.mode.converged;
    }
  }
  return best;
}

inline GpcModel train_gpc(const GpcParams& p, std::uint64_t seed, const FeatureMatrix& X, const Labels& y,
                          TrainingInfo& info) {
  const Eigen::MatrixXd D = pairwise_sq_dists(X);
  Eigen::VectorXd t(X.rows());
  for (long i = 0; i < X.rows(); ++i) t[i] = y[static_cast<std::size_t>(i)];
  const GpcFit fit = fit_gpc_hyperparameters(D, t, p, seed);
  const LaplaceMode m = laplace_mode(gpc_kernel(D, fit.theta), t, p.max_newton, p.newton_tol);
  GpcModel model;
  model.theta = fit.theta;
  model.train_x = X;
  model.residual = t - m.pi;
  model.sqrt_w = m.sqrt_w;
  model.L = m.L;
  info.iterations = fit.iterations;
  info.converged = fit.converged;
  info.objective = m.log_marginal;
  return model;
}

}  // namespace nfscan
