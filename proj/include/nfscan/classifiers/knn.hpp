#pragma once

// k-nearest neighbours with uniform voting and Euclidean distance.

#include <algorithm>
#include <numeric>
#include <vector>

#include "base.hpp"

namespace nfscan {

struct KnnParams {
  int k = 3;

  /// Calls f(name, field) for every tunable field.
  template <class Self, class F>
  static void fields(Self& self, F&& f) {
    f("k", self.k);
  }
  void validate() const {
    if (k < 1 || k % 2 == 0) throw ConfigError("knn: k must be odd and >= 1");
  }
  void save(BinaryWriter& w) const { w.put<std::int32_t>(k); }
  static KnnParams load(BinaryReader& r) { return {r.get<std::int32_t>()}; }
};

struct KnnModel {
  int k = 3;
  FeatureMatrix exemplars;
  Labels labels;

  /// Indices of the k nearest exemplars; equal distances go to the lower index.
  std::vector<long> neighbours(const Eigen::Ref<const FeatureVector>& x) const {
    const Eigen::VectorXd d = sq_dists_to(exemplars, x);
    std::vector<long> idx(static_cast<std::size_t>(d.size()));
    std::iota(idx.begin(), idx.end(), 0L);
    const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(kk), idx.end(),
                      [&](long a, long b) { return d[a] < d[b] || (d[a] == d[b] && a < b); });
    idx.resize(kk);
    return idx;
  }

  Prediction predict(const Eigen::Ref<const FeatureVector>& x) const {
    const auto nb = neighbours(x);
    int votes = 0;
    for (long i : nb) votes += labels[static_cast<std::size_t>(i)];
    const double frac = static_cast<double>(votes) / static_cast<double>(nb.size());
    return {frac > 0.5 ? 1 : 0, frac};
  }

  void save(BinaryWriter& w) const {
    w.put<std::int32_t>(k);
    w.put_matrix(exemplars);
    w.put(labels);
  }
  static KnnModel load(BinaryReader& r) {
    KnnModel m;
    m.k = r.get<std::int32_t>();
    m.exemplars = r.get_matrix<FeatureMatrix>();
    m.labels = r.get_vector<int>();
    return m;
  }
};

inline KnnModel train_knn(const KnnParams& p, const FeatureMatrix& X, const Labels& y, TrainingInfo& info) {
  info = {};
  return {p.k, X, y};
}

}  // namespace nfscan
