#pragma once

// AdaBoost-SAMME over depth-1 Gini stumps for two classes.

#include <cmath>
#include <vector>

#include "tree.hpp"

namespace nfscan {

struct AdaBoostParams {
  int rounds = 50;
  double learning_rate = 1.0;

  /// Calls f(name, field) for every tunable field.
  template <class Self, class F>
  static void fields(Self& self, F&& f) {
    f("rounds", self.rounds);
    f("learning_rate", self.learning_rate);
  }
  void validate() const {
    if (rounds < 1) throw ConfigError("adaboost: rounds must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("adaboost: learning_rate must be positive");
  }
  void save(BinaryWriter& w) const {
    w.put<std::int32_t>(rounds);
    w.put(learning_rate);
  }
  static AdaBoostParams load(BinaryReader& r) {
    AdaBoostParams p;
    p.rounds = r.get<std::int32_t>();
    p.learning_rate = r.get<double>();
    return p;
  }
};

struct AdaBoostModel {
  std::vector<DecisionTree> stumps;
  std::vector<double> alphas;

  /// Normalized vote in [-1, 1] of the first `rounds` stumps (all when 0).
  double decision(const Eigen::Ref<const FeatureVector>& x, std::size_t rounds = 0) const {
    const std::size_t m = rounds == 0 ? stumps.size() : std::min(rounds, stumps.size());
    double s = 0, total = 0;
    for (std::size_t k = 0; k < m; ++k) {
      s += alphas[k] * (stumps[k].value(x) > 0.5 ? 1.0 : -1.0);
      total += alphas[k];
    }
    return total > 0 ? s / total : 0.0;
  }
  Prediction predict(const Eigen::Ref<const FeatureVector>& x) const {
    const double f = decision(x);
    return {f > 0 ? 1 : 0, f};
  }
  void save(BinaryWriter& w) const {
    w.put<std::uint64_t>(stumps.size());
    for (const auto& s : stumps) s.save(w);
    w.put(alphas);
  }
  static AdaBoostModel load(BinaryReader& r) {
    AdaBoostModel m;
    const auto count = r.get<std::uint64_t>();
    if (count > 1000000) throw FormatError(r.name() + ": implausible ensemble size");
    for (std::uint64_t k = 0; k < count; ++k) m.stumps.push_back(DecisionTree::load(r));
    m.alphas = r.get_vector<double>();
    if (m.alphas.size() != m.stumps.size()) throw FormatError(r.name() + ": stump/weight count mismatch");
    return m;
  }
};

inline AdaBoostModel train_adaboost(const AdaBoostParams& p, std::uint64_t seed, const FeatureMatrix& X,
                                    const Labels& y, TrainingInfo& info) {
  const Presorted sorted(X);
  const auto n = static_cast<std::size_t>(X.rows());
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  Rng master(seed);
  AdaBoostModel m;
  info = {};
  for (int round = 0; round < p.rounds; ++round) {
    Rng rng = master.fork(static_cast<std::uint64_t>(round));
    DecisionTree stump = grow_tree(X, y, w, sorted, {1, 0}, rng);
    std::vector<bool> miss(n);
    double err = 0, total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      miss[i] = (stump.value(X.row(static_cast<long>(i)).transpose()) > 0.5 ? 1 : 0) != y[i];
      if (miss[i]) err += w[i];
      total += w[i];
    }
    err /= total;
    info.iterations = static_cast<std::uint64_t>(round + 1);
    if (err <= 0) {
      m.stumps.push_back(std::move(stump));
      m.alphas.push_back(1.0);
      break;
    }
    if (err >= 0.5) {
      if (m.stumps.empty()) {
        m.stumps.push_back(std::move(stump));
        m.alphas.push_back(1.0);
      }
      info.converged = false;
      break;
    }
    const double alpha = p.learning_rate * std::log((1.0 - err) / err);
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (miss[i]) w[i] *= std::exp(alpha);
      sum += w[i];
    }
    for (auto& v : w) v /= sum;
    m.stumps.push_back(std::move(stump));
    m.alphas.push_back(alpha);
  }
  return m;
}

}  // namespace nfscan
