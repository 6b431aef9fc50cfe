#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cimsec/expcli/experiment.hpp"

namespace ex = cimsec::expcli;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::string& text) {
  try {
    ex::parse_config(text, "cfg.json");
  } catch (const ex::ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cimsec_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kBounds = R"({"experiment": "bounds", "id": "b", "master_seed": 3,
  "bounds": {"N": 32, "k": 16, "max_n": 12, "trials": 100000}})";

}  // namespace

TEST(Config, ErrorsNameTheField) {
  EXPECT_NE(error_of(R"({"experiment": "bounds", "bogus": 1})").find("bogus"), std::string::npos);
  EXPECT_NE(error_of("{\"experiment\": \"bounds\",\n \"weight_bits\": \"four\"}").find("cfg.json:2: weight_bits"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"experiment": "bounds", "bounds": {"k": -1}})").find("bounds.k"), std::string::npos);
  EXPECT_NE(error_of(R"({"experiment": "teleport"})").find("experiment"), std::string::npos);
  EXPECT_NE(error_of(R"({"experiment": "sweep", "sweep": {"axis": "sideways"}})").find("sweep.axis"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"experiment": "offset-sensitivity", "offset": {"wl": ["WL9"]}})").find("offset.wl"),
            std::string::npos);
  EXPECT_NE(error_of("{\"experiment\": \"bounds\",\n  \"id\": }").find("cfg.json:2:"), std::string::npos);
  EXPECT_EQ(error_of(kBounds), "");
}

TEST(Config, ResolvedJsonRoundTrips) {
  const auto c = ex::parse_config(kBounds);
  const auto again = ex::parse_config(ex::to_json(c).dump());
  EXPECT_EQ(ex::to_json(again), ex::to_json(c));
  EXPECT_EQ(ex::config_hash(again), ex::config_hash(c));
  auto moved = c;
  moved.output_dir = "elsewhere";
  EXPECT_EQ(ex::config_hash(moved), ex::config_hash(c));
  moved.master_seed = 4;
  EXPECT_NE(ex::config_hash(moved), ex::config_hash(c));
}

TEST(Config, DataRootOverride) {
  ex::DatasetConfig d;
  d.id = "cifar10";
  d.path = "cifar-10-batches-bin";
  ::setenv(ex::kDataRootEnv, "/data/root", 1);
  EXPECT_EQ(ex::resolve_dataset_path(d), fs::path("/data/root/cifar-10-batches-bin"));
  ::unsetenv(ex::kDataRootEnv);
  d.path = "/abs/cifar";
  EXPECT_EQ(ex::resolve_dataset_path(d), fs::path("/abs/cifar"));
}

TEST(Results, RerunFromEmittedConfigIsByteIdentical) {
  const auto dir = scratch("rerun");
  const auto c = ex::parse_config(kBounds);
  const auto first = ex::run_experiment(c);
  EXPECT_TRUE(first.all_pass());
  ex::write_results(c, first, dir / "a");
  const auto emitted = ex::load_config(dir / "a" / "config.json");
  const auto second = ex::run_experiment(emitted);
  ex::write_results(emitted, second, dir / "b");
  EXPECT_EQ(slurp(dir / "a" / "results.csv"), slurp(dir / "b" / "results.csv"));
  const auto csv = slurp(dir / "a" / "results.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), ex::kCsvHeader);
  EXPECT_NE(ex::report(dir).find("eq1_bound"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Results, ReportOnEmptyDirectory) {
  const auto dir = scratch("empty");
  try {
    ex::report(dir);
    FAIL() << "empty directory accepted";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("no results"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Results, ReportRejectsDamagedCsv) {
  const auto dir = scratch("damaged");
  const auto c = ex::parse_config(kBounds);
  ex::write_results(c, ex::run_experiment(c), dir);
  std::ofstream(dir / "results.csv", std::ios::app) << "bounds,1,2\n";
  EXPECT_THROW(ex::report(dir), std::runtime_error);
  fs::remove_all(dir);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("exit");
  std::ofstream(dir / "b.json") << kBounds;
  std::ofstream(dir / "bad.json") << R"({"experiment": "bounds", "oops": true})";
  const std::string cli = CIMSEC_CLI;
  auto run = [&](const std::string& args) {
    const int status = std::system((cli + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  EXPECT_EQ(run("run " + (dir / "b.json").string() + " -o " + (dir / "out").string() + " -q"), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "results.csv"));
  EXPECT_EQ(run("report " + (dir / "out").string()), 0);
  EXPECT_EQ(run("run " + (dir / "bad.json").string()), 2);
  EXPECT_EQ(run("report " + (dir / "nothing").string()), 2);
  EXPECT_EQ(run("list-presets"), 0);
  fs::remove_all(dir);
}
