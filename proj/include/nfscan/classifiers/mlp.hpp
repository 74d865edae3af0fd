#pragma once

// One-hidden-layer perceptron: ReLU hidden units, two-way softmax output,
// cross-entropy with L2 penalty, full-batch Adam. Single precision.

#include <algorithm>
#include <cmath>
#include <limits>

#include "../random.hpp"
#include "base.hpp"

namespace nfscan {

struct MlpParams {
  int hidden = 100;
  int epochs = 500;
  double learning_rate = 1e-3;
  double alpha = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Calls f(name, field) for every tunable field.
  template <class Self, class F>
  static void fields(Self& self, F&& f) {
    f("hidden", self.hidden);
    f("epochs", self.epochs);
    f("learning_rate", self.learning_rate);
    f("alpha", self.alpha);
    f("beta1", self.beta1);
    f("beta2", self.beta2);
    f("epsilon", self.epsilon);
  }
  void validate() const {
    if (hidden < 1) throw ConfigError("mlp: hidden must be >= 1");
    if (epochs < 1) throw ConfigError("mlp: epochs must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("mlp: learning_rate must be positive");
    if (!(alpha >= 0)) throw ConfigError("mlp: alpha must be non-negative");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("mlp: betas must be in [0, 1)");
    if (!(epsilon > 0)) throw ConfigError("mlp: epsilon must be positive");
  }
  void save(BinaryWriter& w) const {
    w.put<std::int32_t>(hidden);
    w.put<std::int32_t>(epochs);
    w.put(learning_rate);
    w.put(alpha);
    w.put(beta1);
    w.put(beta2);
    w.put(epsilon);
  }
  static MlpParams load(BinaryReader& r) {
    MlpParams p;
    p.hidden = r.get<std::int32_t>();
    p.epochs = r.get<std::int32_t>();
    p.learning_rate = r.get<double>();
    p.alpha = r.get<double>();
    p.beta1 = r.get<double>();
    p.beta2 = r.get<double>();
    p.epsilon = r.get<double>();
    return p;
  }
};

struct MlpModel {
  Eigen::MatrixXf w1;  // d x h
  Eigen::RowVectorXf b1;
  Eigen::MatrixXf w2;  // h x 2
  Eigen::RowVectorXf b2;

  Prediction predict(const Eigen::Ref<const FeatureVector>& x) const {
    const Eigen::RowVectorXf h = ((x.transpose().cast<float>() * w1) + b1).cwiseMax(0.0f);
    const Eigen::RowVectorXf o = h * w2 + b2;
    const double p = sigmoid(static_cast<double>(o[1]) - static_cast<double>(o[0]));
    return {p > 0.5 ? 1 : 0, p};
  }

  void save(BinaryWriter& w) const {
    w.put_matrix(w1);
    w.put_matrix(b1);
    w.put_matrix(w2);
    w.put_matrix(b2);
  }
  static MlpModel load(BinaryReader& r) {
    MlpModel m;
    m.w1 = r.get_matrix<Eigen::MatrixXf>();
    m.b1 = r.get_matrix<Eigen::MatrixXf>();
    m.w2 = r.get_matrix<Eigen::MatrixXf>();
    m.b2 = r.get_matrix<Eigen::MatrixXf>();
    return m;
  }
};

namespace detail {

struct AdamState {
  Eigen::MatrixXf m, v;
  explicit AdamState(long rows = 0, long cols = 0)
      : m(Eigen::MatrixXf::Zero(rows, cols)), v(Eigen::MatrixXf::Zero(rows, cols)) {}

  template <class P, class G>
  void step(P& param, const G& grad, float lr_t, float b1, float b2, float eps) {
    m = b1 * m + (1.0f - b1) * grad;
    v = b2 * v + (1.0f - b2) * grad.cwiseProduct(grad);
    param.array() -= lr_t * m.array() / (v.array().sqrt() + eps);
  }
};

inline Eigen::MatrixXf glorot(long fan_in, long fan_out, long rows, long cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Eigen::MatrixXf w(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) w(r, c) = static_cast<float>(rng.uniform(-limit, limit));
  return w;
}

}  // namespace detail

inline MlpModel train_mlp(const MlpParams& p, std::uint64_t seed, const FeatureMatrix& X, const Labels& y,
                          TrainingInfo& info) {
  const long n = X.rows(), d = X.cols(), h = p.hidden;
  const Eigen::MatrixXf Xf = X.cast<float>();
  Eigen::MatrixXf Y = Eigen::MatrixXf::Zero(n, 2);
  for (long i = 0; i < n; ++i) Y(i, y[static_cast<std::size_t>(i)]) = 1.0f;

  Rng rng(seed);
  MlpModel m;
  m.w1 = detail::glorot(d, h, d, h, rng);
  m.b1 = detail::glorot(d, h, 1, h, rng);
  m.w2 = detail::glorot(h, 2, h, 2, rng);
  m.b2 = detail::glorot(h, 2, 1, 2, rng);

  detail::AdamState s_w1(d, h), s_b1(1, h), s_w2(h, 2), s_b2(1, 2);
  const auto b1 = static_cast<float>(p.beta1), b2 = static_cast<float>(p.beta2), eps = static_cast<float>(p.epsilon);
  const float reg = static_cast<float>(p.alpha / static_cast<double>(n));
  double loss = 0.0, best_loss = std::numeric_limits<double>::infinity();
  int stall = 0;
  Eigen::MatrixXf H(n, h), O(n, 2), P(n, 2), dO(n, 2), dH(n, h), g_w1(d, h);
  for (int epoch = 1; epoch <= p.epochs; ++epoch) {
    H.noalias() = Xf * m.w1;
    H = (H.rowwise() + m.b1).cwiseMax(0.0f);
    O.noalias() = H * m.w2;
    O.rowwise() += m.b2;
    loss = 0.0;
    for (long i = 0; i < n; ++i) {
      const float mx = O.row(i).maxCoeff();
      const float e0 = std::exp(O(i, 0) - mx), e1 = std::exp(O(i, 1) - mx);
      P(i, 0) = e0 / (e0 + e1);
      P(i, 1) = e1 / (e0 + e1);
      loss -= std::log(std::max(static_cast<double>(P(i, y[static_cast<std::size_t>(i)])), 1e-300));
    }
    loss = loss / static_cast<double>(n) +
           0.5 * p.alpha / static_cast<double>(n) * (m.w1.squaredNorm() + m.w2.squaredNorm());

    dO = (P - Y) / static_cast<float>(n);
    const Eigen::MatrixXf g_w2 = H.transpose() * dO + reg * m.w2;
    const Eigen::RowVectorXf g_b2 = dO.colwise().sum();
    dH.noalias() = dO * m.w2.transpose();
    dH = dH.cwiseProduct((H.array() > 0.0f).cast<float>().matrix());
    g_w1.noalias() = Xf.transpose() * dH;
    g_w1 += reg * m.w1;
    const Eigen::RowVectorXf g_b1 = dH.colwise().sum();

    const double corr = std::sqrt(1.0 - std::pow(p.beta2, epoch)) / (1.0 - std::pow(p.beta1, epoch));
    const auto lr_t = static_cast<float>(p.learning_rate * corr);
    s_w1.step(m.w1, g_w1, lr_t, b1, b2, eps);
    s_b1.step(m.b1, g_b1, lr_t, b1, b2, eps);
    s_w2.step(m.w2, g_w2, lr_t, b1, b2, eps);
    s_b2.step(m.b2, g_b2, lr_t, b1, b2, eps);

    if (loss > best_loss - 1e-4) {
      ++stall;
    } else {
      stall = 0;
    }
    best_loss = std::min(best_loss, loss);
  }
  info.iterations = static_cast<std::uint64_t>(p.epochs);
  info.converged = stall >= 10;
  info.objective = loss;
  return m;
}

}  // namespace nfscan
