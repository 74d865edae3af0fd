// nfscan command-line front end.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "nfscan/config.hpp"
#include "nfscan/png_io.hpp"

namespace fs = std::filesystem;
using namespace nfscan;

namespace {

enum ExitCode : int { kOk = 0, kOther = 1, kConfig = 2, kSolver = 3, kData = 4 };

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> probe;
  std::vector<std::string> classifiers;
  std::optional<std::string> combine;
  std::optional<std::string> out;
  std::optional<std::size_t> jobs;
  bool timing = false;
};

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.probe) c.probes = {parse_probe_kind(*o.probe)};
  if (!o.classifiers.empty()) {
    c.classifiers.clear();
    for (const auto& s : o.classifiers) c.classifiers.push_back(parse_classifier_kind(s));
  }
  if (o.combine) c.imaging.combine = parse_combine(*o.combine);
  if (o.out) c.out = *o.out;
  if (o.jobs) c.jobs = *o.jobs;
  if (o.timing) c.record_timing = true;
  c.imaging.jobs = c.jobs;
  c.validate();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(path.string() + ": cannot create");
  os << text;
  if (!os) throw FormatError(path.string() + ": write failed");
}

fs::path dataset_path(const fs::path& dir, ProbeKind k) { return dir / ("dataset_" + std::string(1, to_char(k)) + ".nfds"); }

void prepare_out(const RunConfig& c, const std::string& config_name) {
  fs::create_directories(c.out);
  write_text(c.out / config_name, to_ini(c));
}

int cmd_generate(const RunConfig& c, const std::string& export_grids) {
  spdlog::info("generating library (seed {}, {} shapes per class)", c.seed, c.library.per_class);
  const auto library = generate_wire_library(c.library, c.seed);
  const auto datasets = build_datasets(library, c.probes, c.imaging, config_manifest(c));
  prepare_out(c, "run.ini");
  {
    std::ofstream os(c.out / "library.txt");
    write_library_manifest(os, library);
  }
  for (const Dataset& d : datasets) {
    const fs::path p = dataset_path(c.out, d.probe_kind);
    save_dataset(p, d);
    spdlog::info("wrote {} ({} images)", p.string(), d.images.size());
    for (int label = 0; label <= 1; ++label) {
      std::vector<Eigen::MatrixXd> tiles;
      for (const auto& im : d.images)
        if (im.label == label) tiles.push_back(im.matrix());
      const fs::path g = c.out / ("gallery_" + std::string(1, to_char(d.probe_kind)) + (label == 0 ? "_closed" : "_open") + ".png");
      write_png_gray(g, gallery(tiles, 8));
    }
    if (!export_grids.empty()) {
      const fs::path dir = fs::path(export_grids) / std::string(1, to_char(d.probe_kind));
      export_dataset_grids(d, dir);
      spdlog::info("exported grids to {}", dir.string());
    }
  }
  return kOk;
}

int cmd_evaluate(const RunConfig& c, const std::vector<std::string>& files, bool save_models) {
  std::vector<fs::path> paths;
  if (files.empty()) {
    for (ProbeKind k : c.probes) paths.push_back(dataset_path(c.out, k));
  } else {
    paths.assign(files.begin(), files.end());
  }
  std::vector<Dataset> datasets;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw FormatError(p.string() + ": dataset file not found");
    Dataset d = load_dataset(p);
    if (std::find(c.probes.begin(), c.probes.end(), d.probe_kind) == c.probes.end()) {
      spdlog::info("skipping {} (probe {} not selected)", p.string(), to_char(d.probe_kind));
      continue;
    }
    datasets.push_back(std::move(d));
  }
  if (datasets.empty()) throw ConfigError("no dataset matches the selected probe kinds");

  prepare_out(c, "evaluate.ini");
  fs::create_directories(c.out / "folds");
  if (save_models) fs::create_directories(c.out / "models");
  std::vector<EvaluationReport> reports;
  for (ClassifierKind k : c.classifiers) {
    for (const Dataset& d : datasets) {
      const ClassifierSpec spec = c.spec(k);
      const EvaluationReport r = loo_evaluate(spec, d, {c.jobs, c.record_timing});
      spdlog::info("{} / {}: f1 {} (tp {} fp {} tn {} fn {})", display_name(k), to_char(d.probe_kind),
                   round_half_even(r.metrics.f1), r.confusion.tp, r.confusion.fp, r.confusion.tn, r.confusion.fn);
      if (r.flagged()) spdlog::warn("{} / {}: {} folds skipped", display_name(k), to_char(d.probe_kind), r.skipped_folds);
      if (r.nonconverged_folds > 0)
        spdlog::debug("{} / {}: {} folds did not converge", display_name(k), to_char(d.probe_kind), r.nonconverged_folds);
      const std::string stem = std::string(to_string(k)) + "_" + to_char(d.probe_kind);
      std::ofstream log(c.out / "folds" / (stem + ".csv"), std::ios::binary);
      write_fold_log(log, r);
      if (save_models) save_model(c.out / "models" / (stem + ".nfm"), train(spec, dataset_features(d), dataset_labels(d)));
      reports.push_back(r);
    }
  }
  {
    std::ofstream os(c.out / "report.csv", std::ios::binary);
    write_report_csv(os, reports);
  }
  const auto rows = build_report_table(reports);
  std::ostringstream text, csv;
  write_table_text(text, rows);
  write_table_csv(csv, rows);
  write_text(c.out / "table.txt", text.str());
  write_text(c.out / "table.csv", csv.str());
  std::cout << text.str();
  return kOk;
}

int cmd_render(const RunConfig& c, const std::string& shape_id) {
  const auto library = generate_wire_library(c.library, c.seed);
  const auto it = std::find_if(library.begin(), library.end(), [&](const WireGeometry& g) { return g.id == shape_id; });
  if (it == library.end()) throw ConfigError("unknown shape id '" + shape_id + "'");
  const ShapeScan scan = scan_shape(*it, c.imaging);
  struct Item {
    fs::path path;
    Eigen::MatrixXd image;
    TextGrid raw;
  };
  std::vector<Item> items;
  for (const FieldMap* map : {&scan.e_map, &scan.h_map}) {
    for (Combine comb : {Combine::X, Combine::Y, Combine::Z, Combine::Total}) {
      const Eigen::MatrixXd db = field_magnitude_db(*map, comb);
      const std::string stem = std::string(1, to_char(map->kind)) + "_" + to_string(comb);
      TextGrid raw;
      raw.shape = shape_id;
      raw.kind = std::string(1, to_char(map->kind));
      raw.combine = to_string(comb);
      raw.grid = c.imaging.grid;
      raw.values = db;
      items.push_back({stem, downsample_antialiased(render_grayscale(db)), std::move(raw)});
    }
  }
  const fs::path dir = c.out / ("render_" + shape_id);
  fs::create_directories(dir);
  write_text(dir / "run.ini", to_ini(c));
  for (const Item& item : items) {
    write_png_gray(dir / (item.path.string() + ".png"), item.image);
    std::ofstream os(dir / (item.path.string() + ".grid"), std::ios::binary);
    write_text_grid(os, item.raw);
  }
  spdlog::info("rendered {} into {}", shape_id, dir.string());
  return kOk;
}

int cmd_ingest(const RunConfig& c, const std::vector<std::string>& files, const std::string& labels) {
  if (c.probes.size() != 1) throw ConfigError("ingest needs exactly one --probe");
  std::vector<fs::path> paths(files.begin(), files.end());
  Dataset d = ingest_external(paths, labels, c.probes.front());
  d.manifest.emplace_back("labels", fs::path(labels).filename().string());
  prepare_out(c, "ingest.ini");
  const fs::path p = dataset_path(c.out, d.probe_kind);
  save_dataset(p, d);
  spdlog::info("ingested {} images into {}", d.images.size(), p.string());
  return kOk;
}

int cmd_report(const RunConfig& c, const std::vector<std::string>& csvs) {
  std::vector<EvaluationReport> reports;
  for (const auto& f : csvs) {
    std::ifstream is(f);
    if (!is) throw FormatError(f + ": cannot open");
    auto part = read_report_csv(is, f);
    reports.insert(reports.end(), part.begin(), part.end());
  }
  const auto rows = build_report_table(reports);
  std::ostringstream text, csv;
  write_table_text(text, rows);
  write_table_csv(csv, rows);
  fs::create_directories(c.out);
  write_text(c.out / "table.txt", text.str());
  write_text(c.out / "table.csv", csv.str());
  std::cout << text.str();
  return kOk;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("nfscan");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("NFSCAN_LOG")) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string(env) != "off")
      spdlog::warn("NFSCAN_LOG='{}' is not a log level; keeping info", env);
    else
      spdlog::set_level(level);
  }
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Near-field scan synthesis and wire-topology classification"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("--config", o.config, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Library and classifier seed");
  app.add_option("--probe", o.probe, "Probe kind (e or h)")->check(CLI::IsMember({"e", "h", "E", "H"}));
  app.add_option("--classifier", o.classifiers, "Classifier kind (repeatable)");
  app.add_option("--combine", o.combine, "Field component combination")
      ->check(CLI::IsMember({"total", "x", "y", "z"}));
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--jobs", o.jobs, "Worker threads (0 = all cores)");
  app.add_flag("--timing", o.timing, "Record wall-clock seconds in the report CSV");

  std::string export_grids;
  auto* gen = app.add_subcommand("generate", "Build the wire library and the scan datasets");
  gen->add_option("--export-grids", export_grids, "Also write every image as a .grid file under this directory");

  std::vector<std::string> eval_files;
  bool save_models = false;
  auto* eval = app.add_subcommand("evaluate", "Leave-one-out evaluation of the configured classifiers");
  eval->add_option("datasets", eval_files, "Dataset files (default: <out>/dataset_<probe>.nfds)");
  eval->add_flag("--save-models", save_models, "Also save each classifier trained on the full dataset");

  std::string shape_id;
  auto* render = app.add_subcommand("render", "Render one shape's field images");
  render->add_option("shape_id", shape_id, "Shape identifier, e.g. c00 or o17")->required();

  std::vector<std::string> ingest_files;
  std::string labels;
  auto* ingest = app.add_subcommand("ingest", "Build a dataset from external scan images");
  ingest->add_option("--labels", labels, "CSV of filename,label")->required()->check(CLI::ExistingFile);
  ingest->add_option("files", ingest_files, "PNG or .grid images")->required();

  std::vector<std::string> report_files;
  auto* report = app.add_subcommand("report", "Rebuild the F1 table from report CSV files");
  report->add_option("csv", report_files, "report.csv files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    const RunConfig cfg = resolve(o);
    if (*gen) return cmd_generate(cfg, export_grids);
    if (*eval) return cmd_evaluate(cfg, eval_files, save_models);
    if (*render) return cmd_render(cfg, shape_id);
    if (*ingest) return cmd_ingest(cfg, ingest_files, labels);
    if (*report) return cmd_report(cfg, report_files);
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return kConfig;
  } catch (const SolverError& e) {
    spdlog::error("solver error: {}", e.what());
    return kSolver;
  } catch (const GeometryError& e) {
    spdlog::error("geometry error: {}", e.what());
    return kSolver;
  } catch (const FieldError& e) {
    spdlog::error("field error: {}", e.what());
    return kSolver;
  } catch (const FormatError& e) {
    spdlog::error("data format error: {}", e.what());
    return kData;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kOther;
  }
  return kOther;
}
