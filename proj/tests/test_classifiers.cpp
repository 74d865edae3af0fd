#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "nfscan/classifiers/classifier.hpp"

using namespace nfscan;

namespace {

struct Blobs {
  FeatureMatrix X;
  Labels y;
};

/// Two Gaussian clouds in d dimensions, centres `gap` apart along every axis.
Blobs blobs(long n, long d, double gap, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Blobs b;
  b.X.resize(n, d);
  b.y.resize(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    b.y[static_cast<std::size_t>(i)] = label;
    for (long j = 0; j < d; ++j) b.X(i, j) = g(gen) + (label ? gap : 0.0);
  }
  return b;
}

FeatureMatrix permute_rows(const FeatureMatrix& X, const std::vector<long>& p) {
  FeatureMatrix out(X.rows(), X.cols());
  for (long i = 0; i < X.rows(); ++i) out.row(i) = X.row(p[static_cast<std::size_t>(i)]);
  return out;
}

FeatureMatrix permute_cols(const FeatureMatrix& X, const std::vector<long>& p) {
  FeatureMatrix out(X.rows(), X.cols());
  for (long j = 0; j < X.cols(); ++j) out.col(j) = X.col(p[static_cast<std::size_t>(j)]);
  return out;
}

std::vector<long> shuffled(long n, unsigned seed) {
  std::vector<long> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0L);
  std::shuffle(p.begin(), p.end(), std::mt19937(seed));
  return p;
}

double training_accuracy(const TrainedModel& m, const Blobs& b) {
  int ok = 0;
  for (long i = 0; i < b.X.rows(); ++i) ok += predict(m, b.X.row(i).transpose()).label == b.y[static_cast<std::size_t>(i)];
  return static_cast<double>(ok) / static_cast<double>(b.X.rows());
}

}  // namespace

TEST(Names, RoundTripAndRejectUnknown) {
  for (auto k : kAllClassifiers) {
    EXPECT_EQ(parse_classifier_kind(to_string(k)), k);
    EXPECT_EQ(parse_classifier_kind(display_name(k)), k);
  }
  EXPECT_THROW(parse_classifier_kind("perceptron"), ConfigError);
}

TEST(Training, RejectsDegenerateSets) {
  const auto b = blobs(10, 3, 2.0, 1);
  Labels one(10, 1);
  for (auto k : kAllClassifiers) {
    EXPECT_THROW(train(ClassifierSpec::defaults(k), b.X, one), TrainingError) << to_string(k);
    EXPECT_THROW(train(ClassifierSpec::defaults(k), b.X, Labels(9, 0)), TrainingError) << to_string(k);
  }
  FeatureMatrix bad = b.X;
  bad(3, 1) = std::nan("");
  EXPECT_THROW(train(ClassifierSpec::defaults(ClassifierKind::Svm), bad, b.y), TrainingError);
}

TEST(Training, InvalidHyperparametersAreConfigErrors) {
  auto spec = ClassifierSpec::defaults(ClassifierKind::Knn);
  spec.get<KnnParams>().k = 4;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = ClassifierSpec::defaults(ClassifierKind::Svm);
  spec.get<SvmParams>().C = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec.params = KnnParams{};
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Svm, TwoPointProblemMatchesClosedForm) {
  FeatureMatrix X(2, 2);
  X << 0, 0, 1, 2;
  const double gamma = 0.3, k12 = std::exp(-gamma * 5.0);
  const Eigen::MatrixXd K = rbf_kernel(pairwise_sq_dists(X), gamma);
  const Eigen::VectorXd y = signed_labels({0, 1});
  const SvmDual d = solve_svm_dual(K, y, 100.0, 1e-10, 1000);
  ASSERT_TRUE(d.converged);
  const double alpha = 1.0 / (1.0 - k12);
  EXPECT_NEAR(d.alpha[0], alpha, 1e-8);
  EXPECT_NEAR(d.alpha[1], alpha, 1e-8);
  EXPECT_NEAR(d.rho, 0.0, 1e-8);
  EXPECT_NEAR(d.objective, -alpha, 1e-8);
}

TEST(Svm, BoxConstraintCapsMultipliers) {
  FeatureMatrix X(2, 1);
  X << 0, 0.1;
  const Eigen::MatrixXd K = rbf_kernel(pairwise_sq_dists(X), 1.0);
  const SvmDual d = solve_svm_dual(K, signed_labels({0, 1}), 0.5, 1e-10, 1000);
  EXPECT_DOUBLE_EQ(d.alpha[0], 0.5);
  EXPECT_DOUBLE_EQ(d.alpha[1], 0.5);
  EXPECT_LT(svm_kkt_residual(K, signed_labels({0, 1}), d, 0.5), 1e-9);
}

TEST(ClassifierProperties, SvmSatisfiesKktConditions) {
  for (unsigned seed = 1; seed <= 4; ++seed) {
    const auto b = blobs(40, 15, 0.6, seed);
    for (double C : {0.1, 1.0, 10.0}) {
      const Eigen::MatrixXd K = rbf_kernel(pairwise_sq_dists(b.X), 0.02);
      const Eigen::VectorXd y = signed_labels(b.y);
      const SvmDual d = solve_svm_dual(K, y, C, 1e-6, 100000);
      ASSERT_TRUE(d.converged);
      EXPECT_LT(svm_kkt_residual(K, y, d, C), 1e-3) << "seed " << seed << " C " << C;
      EXPECT_NEAR(d.alpha.dot(y), 0.0, 1e-9);
      EXPECT_GE(d.alpha.minCoeff(), 0.0);
      EXPECT_LE(d.alpha.maxCoeff(), C);
    }
  }
}

TEST(ClassifierProperties, SvmIsInvariantToTrainingOrder) {
  const auto b = blobs(30, 10, 0.8, 5);
  auto spec = ClassifierSpec::defaults(ClassifierKind::Svm);
  spec.get<SvmParams>().gamma = 0.05;
  spec.get<SvmParams>().tolerance = 1e-8;
  const auto p = shuffled(30, 9);
  Labels yp(30);
  for (std::size_t i = 0; i < 30; ++i) yp[i] = b.y[static_cast<std::size_t>(p[i])];
  const auto m1 = train(spec, b.X, b.y);
  const auto m2 = train(spec, permute_rows(b.X, p), yp);
  const auto q = blobs(20, 10, 0.8, 6);
  for (long i = 0; i < q.X.rows(); ++i)
    EXPECT_NEAR(predict(m1, q.X.row(i).transpose()).score, predict(m2, q.X.row(i).transpose()).score, 1e-6);
}

TEST(Knn, MatchesBruteForceOnRandomQueries) {
  const auto train_set = blobs(60, 12, 0.5, 7);
  const auto queries = blobs(200, 12, 0.5, 8);
  for (int k : {1, 3, 5, 7}) {
    auto spec = ClassifierSpec::defaults(ClassifierKind::Knn);
    spec.get<KnnParams>().k = k;
    const auto m = train(spec, train_set.X, train_set.y);
    for (long q = 0; q < queries.X.rows(); ++q) {
      std::vector<std::pair<double, long>> d;
      for (long i = 0; i < train_set.X.rows(); ++i) {
        double s = 0;
        for (long j = 0; j < train_set.X.cols(); ++j) s += std::pow(train_set.X(i, j) - queries.X(q, j), 2);
        d.emplace_back(s, i);
      }
      std::sort(d.begin(), d.end());
      int votes = 0;
      for (int r = 0; r < k; ++r) votes += train_set.y[static_cast<std::size_t>(d[static_cast<std::size_t>(r)].second)];
      const auto pred = predict(m, queries.X.row(q).transpose());
      EXPECT_EQ(pred.label, 2 * votes > k ? 1 : 0);
      EXPECT_DOUBLE_EQ(pred.score, static_cast<double>(votes) / k);
    }
  }
}

TEST(Knn, EqualDistancesPreferLowerIndex) {
  FeatureMatrix X(4, 1);
  X << 1, -1, 1, -1;
  KnnModel m{1, X, {1, 0, 0, 1}};
  Eigen::VectorXd q(1);
  q << 0;
  EXPECT_EQ(m.neighbours(q), std::vector<long>{0});
  m.k = 3;
  EXPECT_EQ(m.neighbours(q), (std::vector<long>{0, 1, 2}));
}

TEST(Gpc, GradientMatchesFiniteDifferences) {
  const auto b = blobs(8, 5, 0.7, 11);
  const Eigen::MatrixXd D = pairwise_sq_dists(b.X);
  Eigen::VectorXd t(8);
  for (long i = 0; i < 8; ++i) t[i] = b.y[static_cast<std::size_t>(i)];
  for (const GpcTheta& theta : {GpcTheta{0.0, 1.0}, GpcTheta{1.2, 0.4}, GpcTheta{-0.5, 2.0}}) {
    const auto obj = gpc_log_marginal(D, t, theta, 200, 1e-13);
    for (int j = 0; j < 2; ++j) {
      const double h = 1e-5;
      GpcTheta up = theta, dn = theta;
      up[j] += h;
      dn[j] -= h;
      const double fd = (gpc_log_marginal(D, t, up, 200, 1e-13).value - gpc_log_marginal(D, t, dn, 200, 1e-13).value) / (2 * h);
      EXPECT_NEAR(obj.gradient[j], fd, 1e-4 * std::max(1.0, std::abs(fd))) << "theta " << theta[0] << "," << theta[1];
    }
  }
}

TEST(ClassifierProperties, GpcLaplaceModeIsStationary) {
  const auto b = blobs(30, 6, 0.5, 12);
  Eigen::VectorXd t(30);
  for (long i = 0; i < 30; ++i) t[i] = b.y[static_cast<std::size_t>(i)];
  const auto K = gpc_kernel(pairwise_sq_dists(b.X), {1.5, 1.0});
  const auto m = laplace_mode(K, t, 100, 1e-10);
  EXPECT_TRUE(m.converged);
  EXPECT_LT(laplace_stationarity(m, t), 1e-6);
  EXPECT_LT((K * m.a - m.f).norm(), 1e-8 * (1 + m.f.norm()));
}

TEST(Gpc, HyperparameterFitImprovesEvidence) {
  const auto b = blobs(24, 6, 0.8, 13);
  const Eigen::MatrixXd D = pairwise_sq_dists(b.X);
  Eigen::VectorXd t(24);
  for (long i = 0; i < 24; ++i) t[i] = b.y[static_cast<std::size_t>(i)];
  const auto fit = fit_gpc_hyperparameters(D, t, GpcParams{}, 3);
  const double l0 = 0.5 * std::log(detail::median_offdiag(D));
  EXPECT_GE(fit.log_marginal, gpc_log_marginal(D, t, {0.0, l0}).value - 1e-9);
  const auto m = train(ClassifierSpec::defaults(ClassifierKind::Gpc, 3), b.X, b.y);
  for (long i = 0; i < b.X.rows(); ++i) {
    const double p = predict(m, b.X.row(i).transpose()).score;
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST(ClassifierProperties, GnbMomentsAndPosteriorMatchDirectFormulas) {
  const auto b = blobs(21, 4, 1.0, 14);
  const auto m = train(ClassifierSpec::defaults(ClassifierKind::Gnb), b.X, b.y);
  const auto& g = std::get<GnbModel>(m.state);
  double max_var = 0;
  for (long j = 0; j < 4; ++j) {
    const double mu = b.X.col(j).mean();
    max_var = std::max(max_var, (b.X.col(j).array() - mu).square().sum() / 21.0);
  }
  EXPECT_NEAR(g.epsilon, 1e-9 * max_var, 1e-24);
  Eigen::VectorXd q(4);
  q << 0.3, -0.2, 1.1, 0.5;
  double jll[2];
  for (int c = 0; c < 2; ++c) {
    std::vector<long> rows;
    for (long i = 0; i < 21; ++i)
      if (b.y[static_cast<std::size_t>(i)] == c) rows.push_back(i);
    const double nc = static_cast<double>(rows.size());
    jll[c] = std::log(nc / 21.0);
    for (long j = 0; j < 4; ++j) {
      double mean = 0, var = 0;
      for (long i : rows) mean += b.X(i, j);
      mean /= nc;
      for (long i : rows) var += (b.X(i, j) - mean) * (b.X(i, j) - mean);
      var = var / nc + g.epsilon;
      EXPECT_NEAR(g.mean[static_cast<std::size_t>(c)][j], mean, 1e-12);
      EXPECT_NEAR(g.var[static_cast<std::size_t>(c)][j], var, 1e-12);
      jll[c] += -0.5 * std::log(2 * std::numbers::pi * var) - 0.5 * (q[j] - mean) * (q[j] - mean) / var;
    }
  }
  const double post = std::exp(jll[1]) / (std::exp(jll[0]) + std::exp(jll[1]));
  EXPECT_NEAR(predict(m, q).score, post, 1e-12);
}

TEST(ClassifierProperties, QdaShrunkDiagonalCovariance) {
  const auto b = blobs(20, 3, 1.0, 15);
  auto spec = ClassifierSpec::defaults(ClassifierKind::Qda);
  spec.get<QdaParams>().shrinkage = 0.25;
  const auto& q = std::get<QdaModel>(train(spec, b.X, b.y).state);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd var(3);
    for (long j = 0; j < 3; ++j) {
      double mean = 0, s = 0;
      int n = 0;
      for (long i = 0; i < 20; ++i)
        if (b.y[static_cast<std::size_t>(i)] == c) mean += b.X(i, j), ++n;
      mean /= n;
      for (long i = 0; i < 20; ++i)
        if (b.y[static_cast<std::size_t>(i)] == c) s += std::pow(b.X(i, j) - mean, 2);
      var[j] = s / (n - 1);
    }
    const Eigen::VectorXd expect = 0.75 * var.array() + 0.25 * var.mean();
    EXPECT_LT((q.cov[static_cast<std::size_t>(c)] - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
  FeatureMatrix X(3, 1);
  X << 0, 1, 2;
  EXPECT_THROW(train(spec, X, {0, 1, 1}), TrainingError);
}

TEST(Centroid, ExactTieGivesLabelZero) {
  FeatureMatrix X(2, 1);
  X << -1, 1;
  const auto m = train(ClassifierSpec::defaults(ClassifierKind::NearestCentroid), X, {0, 1});
  Eigen::VectorXd q(1);
  q << 0;
  EXPECT_EQ(predict(m, q).label, 0);
  EXPECT_DOUBLE_EQ(predict(m, q).score, 0.0);
  q << 0.1;
  EXPECT_EQ(predict(m, q).label, 1);
}

TEST(ClassifierProperties, AdaBoostExponentialLossNeverIncreases) {
  const auto b = blobs(40, 8, 0.5, 16);
  auto spec = ClassifierSpec::defaults(ClassifierKind::AdaBoost, 4);
  const auto m = train(spec, b.X, b.y);
  const auto& a = std::get<AdaBoostModel>(m.state);
  ASSERT_GT(a.stumps.size(), 3u);
  double prev = static_cast<double>(b.X.rows());
  double alpha_sum = 0;
  for (std::size_t r = 1; r <= a.stumps.size(); ++r) {
    alpha_sum += a.alphas[r - 1];
    double loss = 0;
    for (long i = 0; i < b.X.rows(); ++i) {
      const double F = a.decision(b.X.row(i).transpose(), r) * alpha_sum;
      loss += std::exp(-(b.y[static_cast<std::size_t>(i)] ? 1.0 : -1.0) * F / 2.0);
    }
    EXPECT_LE(loss, prev * (1 + 1e-12)) << "round " << r;
    prev = loss;
  }
}

TEST(ClassifierProperties, AdaBoostTrainingErrorNeverIncreasesOnSeparableData) {
  auto errors = [](const AdaBoostModel& a, const Blobs& b, std::size_t r) {
    long wrong = 0;
    for (long i = 0; i < b.X.rows(); ++i)
      wrong += (a.decision(b.X.row(i).transpose(), r) > 0 ? 1 : 0) != b.y[static_cast<std::size_t>(i)];
    return wrong;
  };
  // Separable by one coordinate threshold.
  for (unsigned seed = 30; seed < 34; ++seed) {
    const auto b = blobs(60, 4, 3.0, seed);
    const auto m = train(ClassifierSpec::defaults(ClassifierKind::AdaBoost, seed), b.X, b.y);
    const auto& a = std::get<AdaBoostModel>(m.state);
    long prev = b.X.rows();
    for (std::size_t r = 1; r <= a.stumps.size(); ++r) {
      const long wrong = errors(a, b, r);
      EXPECT_LE(wrong, prev) << "seed " << seed << " round " << r;
      prev = wrong;
    }
    EXPECT_EQ(prev, 0);
  }
  // Separable by an oblique plane: the error count itself may rise for a round,
  // but stays under the exponential bound and ends at zero.
  for (unsigned seed = 30; seed < 34; ++seed) {
    auto b = blobs(60, 4, 0.0, seed);
    for (long i = 0; i < b.X.rows(); ++i) b.y[static_cast<std::size_t>(i)] = b.X(i, 0) + 0.5 * b.X(i, 1) > 0.0 ? 1 : 0;
    const auto m = train(ClassifierSpec::defaults(ClassifierKind::AdaBoost, seed), b.X, b.y);
    const auto& a = std::get<AdaBoostModel>(m.state);
    double alpha_sum = 0;
    for (std::size_t r = 1; r <= a.stumps.size(); ++r) {
      alpha_sum += a.alphas[r - 1];
      double bound = 0;
      for (long i = 0; i < b.X.rows(); ++i)
        bound += std::exp(-(b.y[static_cast<std::size_t>(i)] ? 1.0 : -1.0) * a.decision(b.X.row(i).transpose(), r) *
                          alpha_sum / 2.0);
      EXPECT_LE(static_cast<double>(errors(a, b, r)), bound + 1e-9) << "seed " << seed << " round " << r;
    }
    EXPECT_EQ(errors(a, b, a.stumps.size()), 0) << "seed " << seed;
  }
}

TEST(ClassifierProperties, FullyGrownTreesHavePureLeaves) {
  for (unsigned seed = 20; seed < 24; ++seed) {
    const auto b = blobs(40, 10, 0.3, seed);
    const auto dtc = train(ClassifierSpec::defaults(ClassifierKind::Dtc, seed), b.X, b.y);
    EXPECT_DOUBLE_EQ(training_accuracy(dtc, b), 1.0);
    for (const auto& n : std::get<DtcModel>(dtc.state).tree.nodes)
      if (n.feature < 0) {
        EXPECT_TRUE(n.value == 0.0 || n.value == 1.0);
      }

    auto spec = ClassifierSpec::defaults(ClassifierKind::Rf, seed);
    spec.get<RfParams>().trees = 15;
    spec.get<RfParams>().max_features = 3;
    const auto rf = train(spec, b.X, b.y);
    const auto& forest = std::get<RfModel>(rf.state);
    ASSERT_EQ(forest.trees.size(), 15u);
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
      for (long i = 0; i < b.X.rows(); ++i) {
        if (forest.bootstrap[t][static_cast<std::size_t>(i)] == 0) continue;
        EXPECT_EQ(forest.trees[t].value(b.X.row(i).transpose()), b.y[static_cast<std::size_t>(i)]);
      }
    }
  }
}

TEST(Trees, DepthLimitIsRespected) {
  const auto b = blobs(50, 6, 0.2, 30);
  for (int depth : {1, 2, 4}) {
    auto spec = ClassifierSpec::defaults(ClassifierKind::Dtc);
    spec.get<DtcParams>().max_depth = depth;
    EXPECT_LE(std::get<DtcModel>(train(spec, b.X, b.y).state).tree.depth(), static_cast<std::size_t>(depth));
  }
}

TEST(ClassifierProperties, DistanceModelsIgnoreFeatureOrder) {
  const auto b = blobs(30, 9, 0.7, 31);
  const auto q = blobs(10, 9, 0.7, 32);
  const auto p = shuffled(9, 33);
  const FeatureMatrix Xp = permute_cols(b.X, p), Qp = permute_cols(q.X, p);
  for (auto k : {ClassifierKind::Svm, ClassifierKind::Knn, ClassifierKind::Gnb, ClassifierKind::Qda,
                 ClassifierKind::NearestCentroid, ClassifierKind::Gpc}) {
    const auto m1 = train(ClassifierSpec::defaults(k, 1), b.X, b.y);
    const auto m2 = train(ClassifierSpec::defaults(k, 1), Xp, b.y);
    for (long i = 0; i < q.X.rows(); ++i) {
      const auto a = predict(m1, q.X.row(i).transpose()), c = predict(m2, Qp.row(i).transpose());
      EXPECT_EQ(a.label, c.label) << to_string(k);
      EXPECT_NEAR(a.score, c.score, 1e-6 * (1 + std::abs(a.score))) << to_string(k);
    }
  }
}

TEST(ClassifierProperties, SeededTrainingIsDeterministicAndSerializable) {
  const auto b = blobs(30, 12, 1.0, 40);
  const auto q = blobs(15, 12, 1.0, 41);
  for (auto k : kAllClassifiers) {
    const auto spec = ClassifierSpec::defaults(k, 99);
    const auto m1 = train(spec, b.X, b.y);
    const auto m2 = train(spec, b.X, b.y);
    std::stringstream ss;
    save_model(ss, m1);
    const auto m3 = load_model(ss);
    EXPECT_EQ(m3.spec.kind, k);
    EXPECT_EQ(m3.spec.seed, 99u);
    EXPECT_EQ(m3.info.converged, m1.info.converged);
    for (long i = 0; i < q.X.rows(); ++i) {
      const auto x = q.X.row(i).transpose();
      const auto p1 = predict(m1, x), p2 = predict(m2, x), p3 = predict(m3, x);
      EXPECT_EQ(p1.score, p2.score) << to_string(k);
      EXPECT_EQ(p1.score, p3.score) << to_string(k);
      EXPECT_EQ(p1.label, p3.label) << to_string(k);
      const bool high = probabilistic_score(k) ? p1.score > 0.5 : p1.score > 0;
      EXPECT_EQ(p1.label, high ? 1 : 0) << to_string(k);
    }
  }
}

TEST(Models, SeparableDataIsLearnedByEveryClassifier) {
  const auto b = blobs(40, 10, 3.0, 50);
  for (auto k : kAllClassifiers) {
    auto spec = ClassifierSpec::defaults(k, 5);
    if (k == ClassifierKind::Svm) spec.get<SvmParams>().gamma = 0.02;
    EXPECT_GE(training_accuracy(train(spec, b.X, b.y), b), 0.95) << to_string(k);
  }
}

TEST(Models, CorruptFilesAreRejected) {
  const auto b = blobs(10, 3, 1.0, 60);
  std::stringstream ss;
  save_model(ss, train(ClassifierSpec::defaults(ClassifierKind::Rf, 1), b.X, b.y));
  const std::string bytes = ss.str();
  std::string bad = bytes;
  bad[1] = '?';
  std::stringstream s1(bad);
  EXPECT_THROW(load_model(s1, "m"), FormatError);
  std::stringstream s2(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_model(s2, "m"), FormatError);
  std::stringstream s3(bytes + "zz");
  EXPECT_THROW(load_model(s3, "m"), FormatError);
  bad = bytes;
  bad[12] = 42;
  std::stringstream s4(bad);
  EXPECT_THROW(load_model(s4, "m"), FormatError);
}
