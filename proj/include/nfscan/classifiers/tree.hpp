#pragma once

// CART trees with Gini impurity over presorted features, plus the random
// forest built from them. Sample weights let the same builder serve
// bootstrap counts and boosting weights.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "../random.hpp"
#include "base.hpp"

namespace nfscan {

/// Per-feature sample orders, ascending by value with ties by sample index,
/// with the matching values stored alongside.
class Presorted {
 public:
  explicit Presorted(const FeatureMatrix& X) : n_(X.rows()), d_(X.cols()) {
    order_.resize(static_cast<std::size_t>(n_ * d_));
    values_.resize(order_.size());
    const Eigen::MatrixXd cols = X;  // column-major copy
    std::vector<std::int32_t> idx(static_cast<std::size_t>(n_));
    for (long f = 0; f < d_; ++f) {
      const double* v = cols.col(f).data();
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](std::int32_t a, std::int32_t b) { return v[a] < v[b]; });
      for (long k = 0; k < n_; ++k) {
        order_[static_cast<std::size_t>(f * n_ + k)] = idx[static_cast<std::size_t>(k)];
        values_[static_cast<std::size_t>(f * n_ + k)] = v[idx[static_cast<std::size_t>(k)]];
      }
    }
  }
  const std::int32_t* feature(long f) const { return order_.data() + f * n_; }
  const double* values(long f) const { return values_.data() + f * n_; }
  long rows() const { return n_; }
  long cols() const { return d_; }

 private:
  long n_, d_;
  std::vector<std::int32_t> order_;
  std::vector<double> values_;
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1, right = -1;
  /// Weighted fraction of class 1 among the node's training samples.
  double value = 0.0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  std::size_t leaf_index(const Eigen::Ref<const FeatureVector>& x) const {
    std::size_t k = 0;
    while (nodes[k].feature >= 0)
      k = static_cast<std::size_t>(x[nodes[k].feature] <= nodes[k].threshold ? nodes[k].left : nodes[k].right);
    return k;
  }
  double value(const Eigen::Ref<const FeatureVector>& x) const { return nodes[leaf_index(x)].value; }
  std::size_t depth() const {
    std::vector<std::size_t> d(nodes.size(), 0);
    std::size_t best = 0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      best = std::max(best, d[k]);
      if (nodes[k].feature >= 0) {
        d[static_cast<std::size_t>(nodes[k].left)] = d[k] + 1;
        d[static_cast<std::size_t>(nodes[k].right)] = d[k] + 1;
      }
    }
    return best;
  }

  void save(BinaryWriter& w) const {
    w.put<std::uint64_t>(nodes.size());
    for (const auto& n : nodes) {
      w.put(n.feature);
      w.put(n.threshold);
      w.put(n.left);
      w.put(n.right);
      w.put(n.value);
    }
  }
  static DecisionTree load(BinaryReader& r) {
    DecisionTree t;
    const auto count = r.get<std::uint64_t>();
    if (count > (1u << 26)) throw FormatError(r.name() + ": implausible tree size");
    t.nodes.resize(static_cast<std::size_t>(count));
    for (auto& n : t.nodes) {
      n.feature = r.get<std::int32_t>();
      n.threshold = r.get<double>();
      n.left = r.get<std::int32_t>();
      n.right = r.get<std::int32_t>();
      n.value = r.get<double>();
      const auto lim = static_cast<std::int32_t>(count);
      if (n.feature >= 0 && (n.left <= 0 || n.right <= 0 || n.left >= lim || n.right >= lim))
        throw FormatError(r.name() + ": corrupt tree links");
    }
    return t;
  }
};

struct TreeGrowth {
  /// 0 = unlimited.
  int max_depth = 0;
  /// Number of non-constant candidate features examined per split; 0 = all.
  int max_features = 0;
};

/// Grows a tree on the samples with positive weight. At each node features are
/// visited in a fresh seeded permutation; the first strictly best split wins, so
/// ties resolve by permuted feature order and then by ascending threshold.
inline DecisionTree grow_tree(const FeatureMatrix& X, const Labels& y, const std::vector<double>& w,
                              const Presorted& sorted, const TreeGrowth& growth, Rng& rng) {
  const long n = X.rows(), d = X.cols();
  DecisionTree tree;
  std::vector<std::int32_t> node_of(static_cast<std::size_t>(n), -1);
  for (long i = 0; i < n; ++i)
    if (w[static_cast<std::size_t>(i)] > 0) node_of[static_cast<std::size_t>(i)] = 0;

  struct Pending {
    std::int32_t id;
    int depth;
  };
  std::vector<Pending> stack{{0, 0}};
  tree.nodes.emplace_back();
  std::vector<std::size_t> perm;
  while (!stack.empty()) {
    const Pending cur = stack.back();
    stack.pop_back();
    double w0 = 0, w1 = 0;
    long count = 0;
    for (long i = 0; i < n; ++i) {
      if (node_of[static_cast<std::size_t>(i)] != cur.id) continue;
      ++count;
      (y[static_cast<std::size_t>(i)] == 1 ? w1 : w0) += w[static_cast<std::size_t>(i)];
    }
    TreeNode& node = tree.nodes[static_cast<std::size_t>(cur.id)];
    node.value = w1 / (w0 + w1);
    if (count < 2 || w0 == 0 || w1 == 0 || (growth.max_depth > 0 && cur.depth >= growth.max_depth)) continue;

    perm = rng.permutation(static_cast<std::size_t>(d));
    double best = -std::numeric_limits<double>::infinity();
    long best_f = -1;
    double best_thr = 0;
    int examined = 0;
    for (std::size_t pf : perm) {
      const long f = static_cast<long>(pf);
      const std::int32_t* ord = sorted.feature(f);
      const double* val = sorted.values(f);
      double lo = 0, hi = 0;
      bool first = true;
      for (long k = 0; k < n; ++k) {
        if (node_of[static_cast<std::size_t>(ord[k])] != cur.id) continue;
        if (first) lo = val[k], first = false;
        hi = val[k];
      }
      if (!(hi > lo)) continue;
      ++examined;
      double l0 = 0, l1 = 0;
      long prev = -1;
      for (long k = 0; k < n; ++k) {
        const auto s = ord[k];
        if (node_of[static_cast<std::size_t>(s)] != cur.id) continue;
        if (prev >= 0 && val[k] > val[prev]) {
          const double wl = l0 + l1, r0 = w0 - l0, r1 = w1 - l1, wr = r0 + r1;
          const double score = (l0 * l0 + l1 * l1) / wl + (r0 * r0 + r1 * r1) / wr;
          if (score > best) {
            best = score;
            best_f = f;
            const double a = val[prev], b = val[k];
            double thr = a + (b - a) / 2.0;
            if (!(thr < b)) thr = a;
            best_thr = thr;
          }
        }
        (y[static_cast<std::size_t>(s)] == 1 ? l1 : l0) += w[static_cast<std::size_t>(s)];
        prev = k;
      }
      if (growth.max_features > 0 && examined >= growth.max_features) break;
    }
    if (best_f < 0) continue;

    const auto left = static_cast<std::int32_t>(tree.nodes.size());
    const auto right = left + 1;
    node.feature = static_cast<std::int32_t>(best_f);
    node.threshold = best_thr;
    node.left = left;
    node.right = right;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    for (long i = 0; i < n; ++i) {
      auto& id = node_of[static_cast<std::size_t>(i)];
      if (id == cur.id) id = X(i, best_f) <= best_thr ? left : right;
    }
    stack.push_back({right, cur.depth + 1});
    stack.push_back({left, cur.depth + 1});
  }
  return tree;
}

struct DtcParams {
  int max_depth = 0;

  /// Calls f(name, field) for every tunable field.
  template <class Self, class F>
  static void fields(Self& self, F&& f) {
    f("max_depth", self.max_depth);
  }
  void validate() const {
    if (max_depth < 0) throw ConfigError("dtc: max_depth must be >= 0 (0 = unlimited)");
  }
  void save(BinaryWriter& w) const { w.put<std::int32_t>(max_depth); }
  static DtcParams load(BinaryReader& r) { return {r.get<std::int32_t>()}; }
};

struct DtcModel {
  DecisionTree tree;

  Prediction predict(const Eigen::Ref<const FeatureVector>& x) const {
    const double v = tree.value(x);
    return {v > 0.5 ? 1 : 0, v};
  }
  void save(BinaryWriter& w) const { tree.save(w); }
  static DtcModel load(BinaryReader& r) { return {DecisionTree::load(r)}; }
};

inline DtcModel train_dtc(const DtcParams& p, std::uint64_t seed, const FeatureMatrix& X, const Labels& y,
                          TrainingInfo& info) {
  Rng rng(seed);
  const std::vector<double> w(static_cast<std::size_t>(X.rows()), 1.0);
  DtcModel m{grow_tree(X, y, w, Presorted(X), {p.max_depth, 0}, rng)};
  info = {};
  info.iterations = m.tree.nodes.size();
  return m;
}

struct RfParams {
  int trees = 100;
  int max_features = 100;
  int max_depth = 0;

  /// Calls f(name, field) for every tunable field.
  template <class Self, class F>
  static void fields(Self& self, F&& f) {
    f("trees", self.trees);
    f("max_features", self.max_features);
    f("max_depth", self.max_depth);
  }
  void validate() const {
    if (trees < 1) throw ConfigError("rf: trees must be >= 1");
    if (max_features < 1) throw ConfigError("rf: max_features must be >= 1");
    if (max_depth < 0) throw ConfigError("rf: max_depth must be >= 0 (0 = unlimited)");
  }
  void save(BinaryWriter& w) const {
    w.put<std::int32_t>(trees);
    w.put<std::int32_t>(max_features);
    w.put<std::int32_t>(max_depth);
  }
  static RfParams load(BinaryReader& r) {
    RfParams p;
    p.trees = r.get<std::int32_t>();
    p.max_features = r.get<std::int32_t>();
    p.max_depth = r.get<std::int32_t>();
    return p;
  }
};

struct RfModel {
  std::vector<DecisionTree> trees;
  /// Bootstrap multiplicity of each training row, per tree.
  std::vector<std::vector<std::uint32_t>> bootstrap;

  /// score = fraction of trees voting 1.
  Prediction predict(const Eigen::Ref<const FeatureVector>& x) const {
    std::size_t votes = 0;
    for (const auto& t : trees) votes += t.value(x) > 0.5 ? 1 : 0;
    const double s = static_cast<double>(votes) / static_cast<double>(trees.size());
    return {s > 0.5 ? 1 : 0, s};
  }
  void save(BinaryWriter& w) const {
    w.put<std::uint64_t>(trees.size());
    for (std::size_t k = 0; k < trees.size(); ++k) {
      trees[k].save(w);
      w.put(bootstrap[k]);
    }
  }
  static RfModel load(BinaryReader& r) {
    RfModel m;
    const auto count = r.get<std::uint64_t>();
    if (count > 100000) throw FormatError(r.name() + ": implausible forest size");
    for (std::uint64_t k = 0; k < count; ++k) {
      m.trees.push_back(DecisionTree::load(r));
      m.bootstrap.push_back(r.get_vector<std::uint32_t>());
    }
    return m;
  }
};

inline RfModel train_rf(const RfParams& p, std::uint64_t seed, const FeatureMatrix& X, const Labels& y,
                        TrainingInfo& info) {
  const Presorted sorted(X);
  const auto n = static_cast<std::size_t>(X.rows());
  Rng master(seed);
  RfModel m;
  for (int t = 0; t < p.trees; ++t) {
    Rng rng = master.fork(static_cast<std::uint64_t>(t));
    std::vector<std::uint32_t> counts(n, 0);
    for (std::size_t k = 0; k < n; ++k) ++counts[rng.index(n)];
    std::vector<double> w(counts.begin(), counts.end());
    m.trees.push_back(grow_tree(X, y, w, sorted, {p.max_depth, p.max_features}, rng));
    m.bootstrap.push_back(std::move(counts));
  }
  info = {};
  info.iterations = static_cast<std::uint64_t>(p.trees);
  return m;
}

}  // namespace nfscan
