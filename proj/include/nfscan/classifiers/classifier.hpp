#pragma once

// Uniform train/predict/save/load front end over the eleven classifier kinds.

#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>

#include "adaboost.hpp"
#include "base.hpp"
#include "centroid.hpp"
#include "gnb.hpp"
#include "gpc.hpp"
#include "knn.hpp"
#include "mlp.hpp"
#include "qda.hpp"
#include "sgd.hpp"
#include "svm.hpp"
#include "tree.hpp"

namespace nfscan {

/// Order matches the report table rows and the variant alternatives below.
enum class ClassifierKind : std::uint8_t { Svm, Knn, Gpc, Gnb, Mlp, Sgd, AdaBoost, Dtc, Rf, Qda, NearestCentroid };

inline constexpr std::array<ClassifierKind, 11> kAllClassifiers{
    ClassifierKind::Svm, ClassifierKind::Knn,      ClassifierKind::Gpc, ClassifierKind::Gnb,
    ClassifierKind::Mlp, ClassifierKind::Sgd,      ClassifierKind::AdaBoost, ClassifierKind::Dtc,
    ClassifierKind::Rf,  ClassifierKind::Qda,      ClassifierKind::NearestCentroid};

/// Short machine name, as used on the command line and in CSV files.
inline std::string_view to_string(ClassifierKind k) {
  constexpr std::array<std::string_view, 11> names{"svm", "knn", "gpc",  "gnb", "mlp",     "sgd",
                                                   "adaboost", "dtc", "rf", "qda", "centroid"};
  return names[static_cast<std::size_t>(k)];
}

/// Row label used in the report table.
inline std::string_view display_name(ClassifierKind k) {
  constexpr std::array<std::string_view, 11> names{"SVM",  "k-NN", "GPC", "GNB", "MLP",           "SGD",
                                                   "AdaBoost", "DTC", "RF", "QDA", "NearestCentroid"};
  return names[static_cast<std::size_t>(k)];
}

inline ClassifierKind parse_classifier_kind(std::string_view s) {
  for (auto k : kAllClassifiers)
    if (s == to_string(k) || s == display_name(k)) return k;
  if (s == "nearest_centroid" || s == "nc") return ClassifierKind::NearestCentroid;
  throw ConfigError("unknown classifier '" + std::string(s) + "'");
}

using Hyperparameters = std::variant<SvmParams, KnnParams, GpcParams, GnbParams, MlpParams, SgdParams, AdaBoostParams,
                                     DtcParams, RfParams, QdaParams, CentroidParams>;
using ModelState = std::variant<SvmModel, KnnModel, GpcModel, GnbModel, MlpModel, SgdModel, AdaBoostModel, DtcModel,
                                RfModel, QdaModel, CentroidModel>;

namespace detail {

template <std::size_t... I>
Hyperparameters default_params(std::size_t index, std::index_sequence<I...>) {
  Hyperparameters out;
  ((index == I ? (out = std::variant_alternative_t<I, Hyperparameters>{}, 0) : 0), ...);
  return out;
}

template <std::size_t... I>
Hyperparameters load_params(std::size_t index, BinaryReader& r, std::index_sequence<I...>) {
  Hyperparameters out;
  ((index == I ? (out = std::variant_alternative_t<I, Hyperparameters>::load(r), 0) : 0), ...);
  return out;
}

template <std::size_t... I>
ModelState load_state(std::size_t index, BinaryReader& r, std::index_sequence<I...>) {
  ModelState out;
  ((index == I ? (out = std::variant_alternative_t<I, ModelState>::load(r), 0) : 0), ...);
  return out;
}

}  // namespace detail

struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::Svm;
  Hyperparameters params;
  std::uint64_t seed = 0;

  static ClassifierSpec defaults(ClassifierKind kind, std::uint64_t seed = 0) {
    return {kind,
            detail::default_params(static_cast<std::size_t>(kind),
                                   std::make_index_sequence<std::variant_size_v<Hyperparameters>>{}),
            seed};
  }

  template <class P>
  P& get() {
    return std::get<P>(params);
  }
  template <class P>
  const P& get() const {
    return std::get<P>(params);
  }

  void validate() const {
    if (params.index() != static_cast<std::size_t>(kind))
      throw ConfigError("hyperparameters do not belong to classifier " + std::string(to_string(kind)));
    std::visit([](const auto& p) { p.validate(); }, params);
  }
};

struct TrainedModel {
  ClassifierSpec spec;
  ModelState state;
  TrainingInfo info;
};

inline TrainedModel train(const ClassifierSpec& spec, const FeatureMatrix& X, const Labels& y) {
  spec.validate();
  check_training_set(X, y);
  TrainedModel m;
  m.spec = spec;
  const std::uint64_t seed = spec.seed;
  TrainingInfo& info = m.info;
  m.state = std::visit(
      [&](const auto& p) -> ModelState {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, SvmParams>) return train_svm(p, X, y, info);
        else if constexpr (std::is_same_v<P, KnnParams>) return train_knn(p, X, y, info);
        else if constexpr (std::is_same_v<P, GpcParams>) return train_gpc(p, seed, X, y, info);
        else if constexpr (std::is_same_v<P, GnbParams>) return train_gnb(p, X, y, info);
        else if constexpr (std::is_same_v<P, MlpParams>) return train_mlp(p, seed, X, y, info);
        else if constexpr (std::is_same_v<P, SgdParams>) return train_sgd(p, seed, X, y, info);
        else if constexpr (std::is_same_v<P, AdaBoostParams>) return train_adaboost(p, seed, X, y, info);
        else if constexpr (std::is_same_v<P, DtcParams>) return train_dtc(p, seed, X, y, info);
        else if constexpr (std::is_same_v<P, RfParams>) return train_rf(p, seed, X, y, info);
        else if constexpr (std::is_same_v<P, QdaParams>) return train_qda(p, X, y, info);
        else return train_centroid(p, X, y, info);
      },
      spec.params);
  return m;
}

inline Prediction predict(const TrainedModel& model, const Eigen::Ref<const FeatureVector>& x) {
  return std::visit([&](const auto& s) { return s.predict(x); }, model.state);
}

/// Whether the score is a probability-like value thresholded at 0.5 rather than a margin.
inline bool probabilistic_score(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::Svm:
    case ClassifierKind::Sgd:
    case ClassifierKind::AdaBoost:
    case ClassifierKind::NearestCentroid:
      return false;
    default:
      return true;
  }
}

inline constexpr char kModelMagic[8] = {'N', 'F', 'S', 'M', 'O', 'D', 'E', 'L'};
inline constexpr std::uint32_t kModelVersion = 1;

inline void save_model(std::ostream& os, const TrainedModel& m) {
  os.write(kModelMagic, sizeof kModelMagic);
  BinaryWriter w(os);
  w.put(kModelVersion);
  w.put(static_cast<std::uint8_t>(m.spec.kind));
  w.put(m.spec.seed);
  std::visit([&](const auto& p) { p.save(w); }, m.spec.params);
  m.info.save(w);
  std::visit([&](const auto& s) { s.save(w); }, m.state);
}

inline TrainedModel load_model(std::istream& is, const std::string& name = "model") {
  char magic[sizeof kModelMagic];
  if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kModelMagic))
    throw FormatError(name + ": not an nfscan model file");
  BinaryReader r(is, name);
  const auto version = r.get<std::uint32_t>();
  if (version != kModelVersion) throw FormatError(name + ": unsupported model version " + std::to_string(version));
  const auto kind = r.get<std::uint8_t>();
  if (kind >= kAllClassifiers.size()) throw FormatError(name + ": unknown classifier kind");
  TrainedModel m;
  m.spec.kind = static_cast<ClassifierKind>(kind);
  m.spec.seed = r.get<std::uint64_t>();
  m.spec.params =
      detail::load_params(kind, r, std::make_index_sequence<std::variant_size_v<Hyperparameters>>{});
  m.info = TrainingInfo::load(r);
  m.state = detail::load_state(kind, r, std::make_index_sequence<std::variant_size_v<ModelState>>{});
  if (is.peek() != EOF) throw FormatError(name + ": trailing bytes after model");
  return m;
}

inline void save_model(const std::filesystem::path& path, const TrainedModel& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(path.string() + ": cannot create");
  save_model(os, m);
  if (!os) throw FormatError(path.string() + ": write failed");
}

inline TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(path.string() + ": cannot open");
  return load_model(is, path.string());
}

}  // namespace nfscan
