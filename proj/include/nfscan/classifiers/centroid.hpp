#pragma once

// Nearest class centroid under Euclidean distance.

#include <array>

#include "base.hpp"

namespace nfscan {

struct CentroidParams {
  template <class Self, class F>
  static void fields(Self&, F&&) {}
  void validate() const {}
  void save(BinaryWriter&) const {}
  static CentroidParams load(BinaryReader&) { return {}; }
};

struct CentroidModel {
  std::array<Eigen::VectorXd, 2> centroid;

  /// score = d0^2 - d1^2; an exact tie (score 0) gives label 0.
  Prediction predict(const Eigen::Ref<const FeatureVector>& x) const {
    const double s = (x - centroid[0]).squaredNorm() - (x - centroid[1]).squaredNorm();
    return {s > 0 ? 1 : 0, s};
  }

  void save(BinaryWriter& w) const {
    w.put_matrix(centroid[0]);
    w.put_matrix(centroid[1]);
  }
  static CentroidModel load(BinaryReader& r) {
    CentroidModel m;
    m.centroid[0] = r.get_matrix<Eigen::MatrixXd>();
    m.centroid[1] = r.get_matrix<Eigen::MatrixXd>();
    return m;
  }
};

inline CentroidModel train_centroid(const CentroidParams&, const FeatureMatrix& X, const Labels& y,
                                    TrainingInfo& info) {
  CentroidModel m;
  std::array<long, 2> count{};
  for (auto& c : m.centroid) c = Eigen::VectorXd::Zero(X.cols());
  for (long i = 0; i < X.rows(); ++i) {
    const auto c = static_cast<std::size_t>(y[static_cast<std::size_t>(i)]);
    m.centroid[c] += X.row(i).transpose();
    ++count[c];
  }
  for (std::size_t c = 0; c < 2; ++c) m.centroid[c] /= static_cast<double>(count[c]);
  info = {};
  return m;
}

}  // namespace nfscan
