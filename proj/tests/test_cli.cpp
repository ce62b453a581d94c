#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("emdscan_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "small.cfg") << "[run]\ndatasets = 1\nsplits_per_dataset = 2\n"
                                         "[cohort]\nrecord_length = 400\ngenerated_pairs = 3\n"
                                         "[pipeline]\nwindow = 61, 300\n"
                                         "[svm]\nnu_plus = 0.1, 0.5\nnu_minus = 0.1, 0.5\n"
                                         "[ensemble]\nk = 3\ncv_folds = 0\n"
                                         "[eval]\nalphas = 6\nfeatures = emd, pca, combined\ngamma_resp = 1\n";
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static CliResult emd(const std::string& args) {
    const auto log = dir_ / "stderr.txt";
    const std::string cmd = std::string(EMD_CLI) + " --workers 1 " + args + " > /dev/null 2> " + log.string();
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.err = ss.str();
    return r;
  }

  static std::string cfg() { return "--config " + (dir_ / "small.cfg").string(); }

  static std::size_t lines(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string s; std::getline(in, s);) ++n;
    return n;
  }

  static inline fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(emd("").code, 2);
  EXPECT_EQ(emd("frobnicate").code, 2);
  EXPECT_EQ(emd("gen").code, 2);  // --out is required
}

TEST_F(Cli, BadConfigNamesTheField) {
  std::ofstream(dir_ / "bad.cfg") << "[svm]\nnu_plus = 2\n";
  auto r = emd("--config " + (dir_ / "bad.cfg").string() + " gen --out " + (dir_ / "never").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("[svm] nu_plus"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir_ / "never"));

  std::ofstream(dir_ / "empty.cfg") << "[run]\nseed =\n";
  r = emd("--config " + (dir_ / "empty.cfg").string() + " gen --out " + (dir_ / "never").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("[run] seed: missing value"), std::string::npos) << r.err;
}

TEST_F(Cli, MissingArtifactsExitThree) {
  auto r = emd(cfg() + " eval --data " + (dir_ / "no_data").string() + " --out " + (dir_ / "rep").string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("missing artifact"), std::string::npos) << r.err;
  r = emd("classify --model " + (dir_ / "none.ens").string() + " --in x --out y");
  EXPECT_EQ(r.code, 3);
  r = emd("train --split " + (dir_ / "none/splits.json#0").string() + " --out m.ens");
  EXPECT_EQ(r.code, 3);
}

TEST_F(Cli, GenTrainClassifyEval) {
  const auto data = dir_ / "data";
  ASSERT_EQ(emd(cfg() + " gen --out " + data.string()).code, 0);
  for (const char* f : {"scans.ndjson", "carriers.ndjson", "splits.json", "meta.json"})
    EXPECT_TRUE(fs::exists(data / "ds1" / f)) << f;
  EXPECT_EQ(lines(data / "ds1" / "scans.ndjson"), 96u);
  EXPECT_EQ(lines(data / "ds1" / "carriers.ndjson"), 22u);

  const auto model = dir_ / "model.ens";
  const auto test = dir_ / "test.ndjson";
  auto r = emd(cfg() + " train --split " + (data / "ds1" / "splits.json").string() + "#3 --alpha 0.3 --out " +
               model.string() + " --test-out " + test.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(model));
  const auto n_test = lines(test);
  EXPECT_GT(n_test, 0u);
  EXPECT_EQ(n_test % 2, 0u);  // balanced

  const auto pred = dir_ / "pred.csv";
  r = emd(cfg() + " classify --model " + model.string() + " --in " + test.string() + " --out " + pred.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(pred), n_test + 1);

  std::string first;
  std::getline(std::ifstream(test) >> std::ws, first);
  const auto at = first.find("\"signals\":{\"") + 12;
  const auto pair = first.substr(at, first.find('"', at) - at);
  r = emd(cfg() + " decompose --in " + test.string() + " --pair " + pair + " --out " + (dir_ / "imf.csv").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(dir_ / "imf.csv"), 241u);  // header + window of 240 samples

  const auto rep = dir_ / "report";
  r = emd(cfg() + " eval --data " + data.string() + " --out " + rep.string());
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"summary.csv", "auc.csv", "roc_combined.csv", "per_volunteer.csv", "resolved.cfg"})
    EXPECT_TRUE(fs::exists(rep / f)) << f;
}
