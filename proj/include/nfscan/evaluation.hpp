#pragma once

// Leave-one-out evaluation, confusion-matrix metrics and the F1 report table.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "classifiers/classifier.hpp"
#include "imaging.hpp"
#include "parallel.hpp"

namespace nfscan {

/// Positive class is label 1 (open wire).
struct ConfusionMatrix {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  void add(int truth, int predicted) {
    if (truth == 1) (predicted == 1 ? tp : fn) += 1;
    else (predicted == 1 ? fp : tn) += 1;
  }
  std::uint64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

struct Metrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

/// Undefined precision or recall counts as 0, and f1 is 0 when both are 0.
inline Metrics f1_from_confusion(const ConfusionMatrix& cm) {
  Metrics m;
  if (cm.tp + cm.fp > 0) m.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
  if (cm.tp + cm.fn > 0) m.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  if (m.precision + m.recall > 0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

struct FoldRecord {
  std::string shape_id;
  int truth = 0;
  int predicted = 0;
  double score = 0.0;
  /// The training split lacked a class; no prediction was made.
  bool skipped = false;
};

struct EvaluationReport {
  std::string classifier;
  ProbeKind probe_kind = ProbeKind::H;
  std::uint64_t seed = 0;
  ConfusionMatrix confusion;
  Metrics metrics;
  std::vector<FoldRecord> folds;
  std::optional<double> seconds;
  std::size_t skipped_folds = 0;
  std::size_t nonconverged_folds = 0;

  bool flagged() const { return skipped_folds > 0; }
};

inline ConfusionMatrix confusion_from_folds(const std::vector<FoldRecord>& folds) {
  ConfusionMatrix cm;
  for (const auto& f : folds)
    if (!f.skipped) cm.add(f.truth, f.predicted);
  return cm;
}

inline FeatureMatrix dataset_features(const Dataset& d) {
  FeatureMatrix X(static_cast<long>(d.images.size()), static_cast<long>(kImagePixels));
  for (std::size_t i = 0; i < d.images.size(); ++i) {
    const auto& px = d.images[i].pixels;
    if (px.size() != kImagePixels) throw FormatError("image " + d.images[i].shape_id + " is not 100 x 100");
    for (std::size_t j = 0; j < kImagePixels; ++j) X(static_cast<long>(i), static_cast<long>(j)) = px[j];
  }
  return X;
}

inline Labels dataset_labels(const Dataset& d) {
  Labels y;
  for (const auto& im : d.images) y.push_back(im.label);
  return y;
}

struct LooOptions {
  std::size_t jobs = 1;
  bool record_timing = false;
};

struct FoldOutcome {
  Prediction prediction;
  bool converged = true;
};

/// Runs leave-one-out with an arbitrary `fit(X, y)` returning a callable
/// `(x) -> FoldOutcome` (or `Prediction`).
template <class Fit>
EvaluationReport loo_evaluate_with(const std::string& name, std::uint64_t seed, const Dataset& dataset, Fit&& fit,
                                   const LooOptions& opt = {}) {
  const std::size_t n = dataset.images.size();
  if (n < 2) throw TrainingError("leave-one-out needs at least two images");
  if (dataset.count(0) == 0 || dataset.count(1) == 0) throw TrainingError("dataset contains a single class");
  const FeatureMatrix X = dataset_features(dataset);
  const Labels y = dataset_labels(dataset);
  const auto start = std::chrono::steady_clock::now();

  EvaluationReport rep;
  rep.classifier = name;
  rep.probe_kind = dataset.probe_kind;
  rep.seed = seed;
  rep.folds.resize(n);
  std::vector<char> converged(n, 1);
  parallel_for(n, opt.jobs, [&](std::size_t i) {
    FoldRecord& rec = rep.folds[i];
    rec.shape_id = dataset.images[i].shape_id;
    rec.truth = y[i];
    FeatureMatrix Xt(static_cast<long>(n - 1), X.cols());
    Labels yt;
    yt.reserve(n - 1);
    for (std::size_t k = 0, r = 0; k < n; ++k) {
      if (k == i) continue;
      Xt.row(static_cast<long>(r++)) = X.row(static_cast<long>(k));
      yt.push_back(y[k]);
    }
    if (std::find(yt.begin(), yt.end(), 0) == yt.end() || std::find(yt.begin(), yt.end(), 1) == yt.end()) {
      rec.skipped = true;
      return;
    }
    const auto predictor = fit(Xt, yt);
    const auto out = predictor(FeatureVector(X.row(static_cast<long>(i)).transpose()));
    if constexpr (std::is_same_v<std::decay_t<decltype(out)>, FoldOutcome>) {
      rec.predicted = out.prediction.label;
      rec.score = out.prediction.score;
      converged[i] = out.converged;
    } else {
      rec.predicted = out.label;
      rec.score = out.score;
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    rep.skipped_folds += rep.folds[i].skipped ? 1 : 0;
    rep.nonconverged_folds += converged[i] ? 0 : 1;
  }
  rep.confusion = confusion_from_folds(rep.folds);
  rep.metrics = f1_from_confusion(rep.confusion);
  if (opt.record_timing)
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

/// Every fold trains with the same spec, seed included.
inline EvaluationReport loo_evaluate(const ClassifierSpec& spec, const Dataset& dataset, const LooOptions& opt = {}) {
  spec.validate();
  auto fit = [&spec](const FeatureMatrix& X, const Labels& y) {
    return [model = train(spec, X, y)](const FeatureVector& x) {
      return FoldOutcome{predict(model, x), model.info.converged};
    };
  };
  return loo_evaluate_with(std::string(to_string(spec.kind)), spec.seed, dataset, fit, opt);
}

// ---------------------------------------------------------------------------
// Text formats

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& context) {
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw FormatError(context + ": bad number '" + s + "'");
  return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline constexpr const char* kFoldLogHeader = "shape_id,true,predicted,score";

inline void write_fold_log(std::ostream& os, const EvaluationReport& rep) {
  os << kFoldLogHeader << '\n';
  for (const auto& f : rep.folds) {
    os << f.shape_id << ',' << f.truth << ',';
    if (f.skipped) os << "skipped,";
    else os << f.predicted << ',' << format_double(f.score);
    os << '\n';
  }
}

inline std::vector<FoldRecord> read_fold_log(std::istream& is, const std::string& name = "fold log") {
  std::string line;
  if (!std::getline(is, line) || line != kFoldLogHeader) throw FormatError(name + ": missing header");
  std::vector<FoldRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    const std::string where = name + ":" + std::to_string(lineno);
    if (f.size() != 4) throw FormatError(where + ": expected 4 fields");
    FoldRecord r;
    r.shape_id = f[0];
    if (f[1] != "0" && f[1] != "1") throw FormatError(where + ": bad label");
    r.truth = f[1] == "1";
    if (f[2] == "skipped") {
      r.skipped = true;
    } else {
      if (f[2] != "0" && f[2] != "1") throw FormatError(where + ": bad prediction");
      r.predicted = f[2] == "1";
      r.score = parse_double(f[3], where);
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline constexpr const char* kReportCsvHeader = "classifier,probe_kind,tp,fp,tn,fn,precision,recall,f1,seconds";

inline void write_report_csv_row(std::ostream& os, const EvaluationReport& r) {
  os << r.classifier << ',' << to_char(r.probe_kind) << ',' << r.confusion.tp << ',' << r.confusion.fp << ','
     << r.confusion.tn << ',' << r.confusion.fn << ',' << format_double(r.metrics.precision) << ','
     << format_double(r.metrics.recall) << ',' << format_double(r.metrics.f1) << ',';
  if (r.seconds) os << format_double(*r.seconds);
  os << '\n';
}

inline void write_report_csv(std::ostream& os, const std::vector<EvaluationReport>& reports) {
  os << kReportCsvHeader << '\n';
  for (const auto& r : reports) write_report_csv_row(os, r);
}

/// Reads the summary rows back (fold logs are not part of the CSV).
inline std::vector<EvaluationReport> read_report_csv(std::istream& is, const std::string& name = "report") {
  std::string line;
  if (!std::getline(is, line) || line != kReportCsvHeader) throw FormatError(name + ": missing header");
  std::vector<EvaluationReport> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    const std::string where = name + ":" + std::to_string(lineno);
    if (f.size() != 10) throw FormatError(where + ": expected 10 fields");
    EvaluationReport r;
    r.classifier = f[0];
    try {
      r.probe_kind = parse_probe_kind(f[1]);
    } catch (const Error& e) {
      throw FormatError(where + ": " + e.what());
    }
    auto count = [&](const std::string& s) {
      std::uint64_t v = 0;
      const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw FormatError(where + ": bad count '" + s + "'");
      return v;
    };
    r.confusion = {count(f[2]), count(f[3]), count(f[4]), count(f[5])};
    r.metrics = {parse_double(f[6], where), parse_double(f[7], where), parse_double(f[8], where)};
    if (!f[9].empty()) r.seconds = parse_double(f[9], where);
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report table

/// Rounds to `decimals` places, ties to even, applied to the shortest decimal
/// representation of `v` (so 0.8285 is a tie and gives "0.828").
inline std::string round_half_even(double v, int decimals = 3) {
  char buf[512];
  const auto res = std::to_chars(buf, buf + sizeof buf, std::abs(v), std::chars_format::fixed);
  std::string s(buf, res.ptr);
  const auto dot = s.find('.');
  std::string ip = dot == std::string::npos ? s : s.substr(0, dot);
  std::string fp = dot == std::string::npos ? "" : s.substr(dot + 1);
  const auto d = static_cast<std::size_t>(decimals);
  if (fp.size() < d) fp.append(d - fp.size(), '0');
  std::string keep = ip + fp.substr(0, d);
  const std::string rest = fp.substr(d);
  bool up = false;
  if (!rest.empty()) {
    if (rest[0] > '5') up = true;
    else if (rest[0] == '5') {
      const bool exact_half = rest.find_first_not_of('0', 1) == std::string::npos;
      up = !exact_half || ((keep.back() - '0') % 2 == 1);
    }
  }
  if (up) {
    int i = static_cast<int>(keep.size()) - 1;
    while (i >= 0 && keep[static_cast<std::size_t>(i)] == '9') keep[static_cast<std::size_t>(i--)] = '0';
    if (i < 0) keep.insert(keep.begin(), '1');
    else ++keep[static_cast<std::size_t>(i)];
  }
  std::string out = keep.substr(0, keep.size() - d);
  if (d > 0) out += "." + keep.substr(keep.size() - d);
  const bool zero = out.find_first_not_of("0.") == std::string::npos;
  return (v < 0 && !zero ? "-" : "") + out;
}

struct ReportRow {
  std::string classifier;
  std::optional<double> magnetic, electric;
};

/// Rows follow the classifier order of the table; names outside it follow in
/// first-seen order. A repeated (classifier, probe) pair is an error.
inline std::vector<ReportRow> build_report_table(const std::vector<EvaluationReport>& reports) {
  std::vector<ReportRow> rows;
  auto rank = [](const std::string& name) -> std::size_t {
    for (auto k : kAllClassifiers)
      if (name == to_string(k) || name == display_name(k)) return static_cast<std::size_t>(k);
    return kAllClassifiers.size();
  };
  auto label = [](const std::string& name) {
    for (auto k : kAllClassifiers)
      if (name == to_string(k) || name == display_name(k)) return std::string(display_name(k));
    return name;
  };
  for (const auto& r : reports) {
    const std::string name = label(r.classifier);
    auto it = std::find_if(rows.begin(), rows.end(), [&](const ReportRow& row) { return row.classifier == name; });
    if (it == rows.end()) {
      rows.push_back({name, {}, {}});
      it = rows.end() - 1;
    }
    auto& cell = r.probe_kind == ProbeKind::H ? it->magnetic : it->electric;
    if (cell) throw Error("duplicate report for " + name + " / " + to_char(r.probe_kind));
    cell = r.metrics.f1;
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [&](const ReportRow& a, const ReportRow& b) { return rank(a.classifier) < rank(b.classifier); });
  return rows;
}

inline void write_table_text(std::ostream& os, const std::vector<ReportRow>& rows) {
  std::size_t w = std::string("Classifier").size();
  for (const auto& r : rows) w = std::max(w, r.classifier.size());
  auto pad = [](std::string s, std::size_t n) { return s.append(n > s.size() ? n - s.size() : 0, ' '); };
  const std::string h1 = "Magnetic field", h2 = "Electric field";
  os << pad("Classifier", w) << " | " << h1 << " | " << h2 << '\n';
  os << std::string(w, '-') << "-+-" << std::string(h1.size(), '-') << "-+-" << std::string(h2.size(), '-') << '\n';
  for (const auto& r : rows) {
    os << pad(r.classifier, w) << " | " << pad(r.magnetic ? round_half_even(*r.magnetic) : "", h1.size()) << " | "
       << (r.electric ? round_half_even(*r.electric) : "") << '\n';
  }
}

inline void write_table_csv(std::ostream& os, const std::vector<ReportRow>& rows) {
  os << "classifier,magnetic,electric\n";
  for (const auto& r : rows)
    os << r.classifier << ',' << (r.magnetic ? round_half_even(*r.magnetic) : "") << ','
       << (r.electric ? round_half_even(*r.electric) : "") << '\n';
}

}  // namespace nfscan
