#include <gtest/gtest.h>

#include <openssl/evp.h>
#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "nfscan/config.hpp"
#include "nfscan/png_io.hpp"

namespace fs = std::filesystem;
using namespace nfscan;

namespace {

// SHA-256 of render_c00/H_total.png for seed 7 with this toolchain.
constexpr const char* kGoldenRenderSha256 = "9f4a3ec4267bd1f1e663e51e802715ca1396f99a4ca217789f949a6c1b85a2db";

struct Result {
  int code = -1;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

struct CliRoot {
  static fs::path path() {
    static const fs::path dir = fs::temp_directory_path() / ("nfscan_cli_" + std::to_string(::getpid()));
    return dir;
  }
};

class CliTest : public ::testing::Test {
 protected:
  static fs::path root() { return CliRoot::path(); }

  static Result run(const std::string& args) {
    const fs::path err = root() / "stderr.txt";
    fs::create_directories(root());
    const std::string cmd = std::string("NFSCAN_LOG=info \"") + NFSCAN_CLI + "\" " + args + " >/dev/null 2>\"" +
                            err.string() + "\"";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err);
    return r;
  }

  // A six-shape run shared by the tests below.
  static fs::path small_config() {
    const fs::path p = root() / "small.ini";
    if (!fs::exists(p)) {
      fs::create_directories(root());
      std::ofstream os(p);
      os << "[run]\nseed = 11\njobs = 1\nclassifiers = knn,centroid\n\n[library]\nper_class = 3\n";
    }
    return p;
  }

  static const fs::path& small_run() {
    static const fs::path out = [] {
      const fs::path o = root() / "small";
      const Result g = run("--config " + small_config().string() + " --out " + o.string() + " generate");
      EXPECT_EQ(g.code, 0) << g.err;
      const Result e = run("--config " + small_config().string() + " --out " + o.string() + " evaluate");
      EXPECT_EQ(e.code, 0) << e.err;
      return o;
    }();
    return out;
  }

};

class Cleanup : public ::testing::Environment {
 public:
  void TearDown() override { fs::remove_all(CliRoot::path()); }
};

[[maybe_unused]] ::testing::Environment* const cleanup = ::testing::AddGlobalTestEnvironment(new Cleanup);

}  // namespace

TEST_F(CliTest, HelpExitsZero) { EXPECT_EQ(run("--help").code, 0); }

TEST_F(CliTest, ParseErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("--no-such-flag generate").code, 2);
  EXPECT_EQ(run("--probe q generate").code, 2);
  EXPECT_EQ(run("--combine w generate").code, 2);
  EXPECT_EQ(run("--config /nonexistent/x.ini generate").code, 2);
  EXPECT_EQ(run("--classifier perceptron --out " + (root() / "x").string() + " generate").code, 2);
}

TEST_F(CliTest, ConfigErrorsExitTwoAndNameTheKey) {
  const fs::path bad = root() / "bad.ini";
  fs::create_directories(root());
  std::ofstream(bad) << "[library]\nper_clas = 3\n";
  const Result r = run("--config " + bad.string() + " generate");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("per_clas"), std::string::npos) << r.err;

  const fs::path wide = root() / "wide.ini";
  std::ofstream(wide) << "[library]\nextent_x = 0.2\n";
  EXPECT_EQ(run("--config " + wide.string() + " generate").code, 2);

  const fs::path zero = root() / "zero.ini";
  std::ofstream(zero) << "[solver]\nsource_voltage = 0\n";
  EXPECT_EQ(run("--config " + zero.string() + " generate").code, 2);
}

TEST_F(CliTest, MissingDatasetExitsFour) {
  const Result r = run("--out " + (root() / "empty").string() + " evaluate");
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("dataset_H.nfds"), std::string::npos) << r.err;
}

TEST_F(CliTest, RenderWritesEightImagesAndGrids) {
  const fs::path out = root() / "render";
  const Result r = run("--out " + out.string() + " render c00");
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path dir = out / "render_c00";
  for (const char* probe : {"E", "H"})
    for (const char* comb : {"x", "y", "z", "total"}) {
      const std::string stem = std::string(probe) + "_" + comb;
      ASSERT_TRUE(fs::exists(dir / (stem + ".png"))) << stem;
      ASSERT_TRUE(fs::exists(dir / (stem + ".grid"))) << stem;
      const Eigen::MatrixXd img = read_png_gray(dir / (stem + ".png"));
      EXPECT_EQ(img.rows(), 100);
      EXPECT_EQ(img.cols(), 100);
      std::ifstream is(dir / (stem + ".grid"));
      const TextGrid g = read_text_grid(is);
      EXPECT_EQ(g.values.rows(), 30);
      EXPECT_EQ(g.values.cols(), 30);
      EXPECT_EQ(g.shape, "c00");
    }
  const std::string hash = sha256_hex(slurp(dir / "H_total.png"));
  if (std::string(kGoldenRenderSha256).empty()) {
    ADD_FAILURE() << "golden hash not set; computed " << hash;
  } else {
    EXPECT_EQ(hash, kGoldenRenderSha256);
  }
  EXPECT_EQ(to_ini(load_config(dir / "run.ini")), slurp(dir / "run.ini"));
}

TEST_F(CliTest, RenderUnknownShapeLeavesNoFiles) {
  const fs::path out = root() / "render_bad";
  const Result r = run("--out " + out.string() + " render z99");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("z99"), std::string::npos);
  EXPECT_FALSE(fs::exists(out / "render_z99"));
}

TEST_F(CliTest, GenerateAndEvaluateWriteAllArtifacts) {
  const fs::path& out = small_run();
  for (const char* f : {"dataset_H.nfds", "dataset_E.nfds", "library.txt", "run.ini", "evaluate.ini", "report.csv",
                        "table.txt", "table.csv", "gallery_H_open.png", "gallery_E_closed.png", "folds/knn_H.csv",
                        "folds/centroid_E.csv"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const Dataset h = load_dataset(out / "dataset_H.nfds");
  EXPECT_EQ(h.images.size(), 6u);
  EXPECT_EQ(h.count(1), 3u);
  std::ifstream rep(out / "report.csv");
  const auto reports = read_report_csv(rep);
  ASSERT_EQ(reports.size(), 4u);
  for (const auto& r : reports) EXPECT_FALSE(r.seconds.has_value());

  // The fold logs alone reproduce every reported metric.
  for (const auto& r : reports) {
    std::ifstream log(out / "folds" / (r.classifier + "_" + to_char(r.probe_kind) + ".csv"));
    const auto m = f1_from_confusion(confusion_from_folds(read_fold_log(log)));
    EXPECT_EQ(m.f1, r.metrics.f1);
  }
}

TEST_F(CliTest, EvaluateIsDeterministicAndHonoursFilters) {
  const fs::path& out = small_run();
  const fs::path again = root() / "again";
  const Result r = run("--config " + small_config().string() + " --out " + again.string() + " --probe e" +
                       " --classifier knn evaluate " + (out / "dataset_H.nfds").string() + " " +
                       (out / "dataset_E.nfds").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("skipping"), std::string::npos);
  EXPECT_EQ(slurp(again / "folds" / "knn_E.csv"), slurp(out / "folds" / "knn_E.csv"));
  EXPECT_FALSE(fs::exists(again / "folds" / "knn_H.csv"));
  EXPECT_FALSE(fs::exists(again / "folds" / "centroid_E.csv"));
}

TEST_F(CliTest, TimingFlagFillsSecondsColumn) {
  const fs::path& out = small_run();
  const fs::path t = root() / "timed";
  const Result r = run("--config " + small_config().string() + " --out " + t.string() +
                       " --timing --classifier centroid --probe h evaluate " + (out / "dataset_H.nfds").string());
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream rep(t / "report.csv");
  const auto reports = read_report_csv(rep);
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_TRUE(reports[0].seconds.has_value());
}

TEST_F(CliTest, CorruptDatasetExitsFourNamingTheFile) {
  const fs::path& out = small_run();
  const fs::path bad = root() / "broken.nfds";
  const std::string bytes = slurp(out / "dataset_H.nfds");
  std::ofstream(bad, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  const Result r = run("--config " + small_config().string() + " --out " + (root() / "b").string() + " evaluate " +
                       bad.string());
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("broken.nfds"), std::string::npos) << r.err;
}

TEST_F(CliTest, ReportRebuildsTheTable) {
  const fs::path& out = small_run();
  const fs::path t = root() / "table";
  const Result r = run("--out " + t.string() + " report " + (out / "report.csv").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(t / "table.txt"), slurp(out / "table.txt"));
  EXPECT_EQ(slurp(t / "table.csv"), slurp(out / "table.csv"));
}

TEST_F(CliTest, ExportedGridsIngestBackToTheSameDataset) {
  const fs::path out = root() / "export";
  ASSERT_EQ(run("--config " + small_config().string() + " --out " + out.string() + " --probe h generate --export-grids " +
                (out / "grids").string())
                .code,
            0);
  std::string files;
  for (const auto& e : fs::directory_iterator(out / "grids" / "H"))
    if (e.path().extension() == ".grid") files += " " + e.path().string();
  const fs::path in = root() / "ingested";
  const Result r = run("--probe h --out " + in.string() + " ingest --labels " +
                       (out / "grids" / "H" / "labels.csv").string() + files);
  ASSERT_EQ(r.code, 0) << r.err;
  const Dataset a = load_dataset(out / "dataset_H.nfds");
  const Dataset b = load_dataset(in / "dataset_H.nfds");
  ASSERT_EQ(a.images.size(), b.images.size());
  for (const auto& im : a.images) {
    const auto it = std::find_if(b.images.begin(), b.images.end(),
                                 [&](const ScanImage& x) { return x.shape_id == im.shape_id; });
    ASSERT_NE(it, b.images.end()) << im.shape_id;
    EXPECT_EQ(it->label, im.label);
    EXPECT_EQ(it->pixels, im.pixels);
  }

  const fs::path labels = root() / "partial_labels.csv";
  std::ofstream(labels) << "nothing.grid,1\n";
  EXPECT_EQ(run("--probe h --out " + in.string() + " ingest --labels " + labels.string() + files).code, 4);
}

TEST(Config, IniRoundTripIsExact) {
  RunConfig c;
  c.seed = 99;
  c.probes = {ProbeKind::E};
  c.classifiers = {ClassifierKind::Rf, ClassifierKind::Svm};
  c.imaging.combine = Combine::Z;
  c.imaging.solve.frequency = 1.5e9;
  c.library.per_class = 5;
  std::get<SvmParams>(c.hyperparameters[static_cast<std::size_t>(ClassifierKind::Svm)]).C = 2.5;
  const std::string text = to_ini(c);
  std::istringstream is(text);
  const RunConfig back = parse_ini(is);
  EXPECT_EQ(to_ini(back), text);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.probes, c.probes);
  EXPECT_EQ(back.classifiers, c.classifiers);
  EXPECT_EQ(back.imaging.solve.frequency, 1.5e9);
}

TEST(Config, UnknownKeysAndBadValuesAreErrors) {
  std::istringstream unknown("[grid]\nnz = 3\n");
  EXPECT_THROW(parse_ini(unknown), ConfigError);
  std::istringstream section("[nosuch]\nx = 1\n");
  EXPECT_THROW(parse_ini(section), ConfigError);
  std::istringstream value("[solver]\nfrequency = fast\n");
  EXPECT_THROW(parse_ini(value), ConfigError);
  std::istringstream probe("[run]\nprobes = h,q\n");
  EXPECT_THROW(parse_ini(probe), Error);
}

class CliProperties : public CliTest {};

TEST_F(CliProperties, WrittenManifestRegeneratesIdenticalBytes) {
  const fs::path& out = small_run();
  const fs::path again = root() / "regen";
  const Result r = run("--config " + (out / "run.ini").string() + " --out " + again.string() + " generate");
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"dataset_H.nfds", "dataset_E.nfds", "library.txt", "gallery_E_open.png"})
    EXPECT_EQ(slurp(again / f), slurp(out / f)) << f;
  EXPECT_EQ(load_dataset(again / "dataset_H.nfds").manifest, load_dataset(out / "dataset_H.nfds").manifest);
  const Result e = run("--config " + (out / "evaluate.ini").string() + " --out " + again.string() + " evaluate");
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(slurp(again / "report.csv"), slurp(out / "report.csv"));
}

TEST_F(CliProperties, FailureClassesHaveDistinctExitCodes) {
  const fs::path thick = root() / "thick.ini";
  fs::create_directories(root());
  std::ofstream(thick) << "[library]\nradius = 0.004\nper_class = 1\n";
  const Result solver = run("--config " + thick.string() + " --out " + (root() / "thick").string() + " generate");
  const Result config = run("--probe x generate");
  const Result data = run("--out " + (root() / "nothing").string() + " evaluate");
  EXPECT_EQ(solver.code, 3) << solver.err;
  EXPECT_NE(solver.err.find("4 x radius"), std::string::npos) << solver.err;
  EXPECT_EQ(config.code, 2);
  EXPECT_EQ(data.code, 4);
}
