#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include "deconv/cli.hpp"

using namespace deconv;
namespace fs = std::filesystem;
using cli::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Runs the installed binary and returns its exit status.
int deconv_cli(const std::string& args, const std::string& env = "DECONV_LOG=warn") {
  const std::string cmd = env + " " + DECONV_CLI_PATH + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Pipeline : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("deconv_pipeline_") + info->name() + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
    write("sim.json", json::parse(R"({"seed": 7, "replications": 2,
      "scenario": {"error_law": "mvn", "x_structure": "AR", "error_structure": "I", "p": 2, "n": 60, "m": 3}})"));
    for (const std::string model : {"mlfa", "naive"})
      for (int b = 1; b <= 2; ++b)
        write("fit_" + model + std::to_string(b) + ".json",
              json{{"data", "sim/data_" + std::to_string(b) + ".csv"}, {"model", model}, {"iterations", 200}, {"burn_in", 100}, {"thin", 5}, {"seed", 3}});
    write("eval.json", json::parse(R"({"truth": "sim/truth.json", "M": 20000, "seed": 9,
      "fits": {"mlfa": ["mlfa1", "mlfa2"], "naive": ["naive1", "naive2"]}})"));
  }
  void TearDown() override { fs::remove_all(dir); }

  void write(const std::string& name, const json& j) { std::ofstream(dir / name, std::ios::binary) << j.dump(2); }

  std::string flags(const std::string& config, const std::string& out) const {
    return "--config " + (dir / config).string() + " --out " + (dir / out).string();
  }

  void pipeline(const std::string& tag) {
    ASSERT_EQ(deconv_cli("simulate " + flags("sim.json", "sim") + " --jobs 2"), 0);
    for (const std::string model : {"mlfa", "naive"})
      for (int b = 1; b <= 2; ++b) {
        const std::string name = model + std::to_string(b);
        ASSERT_EQ(deconv_cli("fit " + flags("fit_" + name + ".json", name)), 0) << name;
      }
    ASSERT_EQ(deconv_cli("evaluate " + flags("eval.json", "eval") + " --jobs 2"), 0);
    snapshot(tag);
  }

  /// Copies every output file under dir/<tag> keyed by relative path.
  void snapshot(const std::string& tag) {
    auto& files = runs[tag];
    for (const std::string sub : {"sim", "mlfa1", "mlfa2", "naive1", "naive2", "eval"})
      for (const auto& e : fs::directory_iterator(dir / sub)) files[sub + "/" + e.path().filename().string()] = slurp(e.path());
  }

  std::map<std::string, std::map<std::string, std::string>> runs;
};

}  // namespace

TEST_F(Pipeline, ByteIdenticalReruns) {
  pipeline("first");
  pipeline("second");
  const auto& a = runs["first"];
  const auto& b = runs["second"];
  ASSERT_EQ(a.size(), b.size());
  EXPECT_GT(a.size(), 20u);
  for (const auto& [name, body] : a) {
    ASSERT_TRUE(b.count(name)) << name;
    EXPECT_EQ(body, b.at(name)) << name;
  }
}

TEST_F(Pipeline, EvaluateReproducesInProcessIse) {
  pipeline("run");
  const json report = json::parse(slurp(dir / "eval" / "report.json"));
  const TruthMixture truth = cli::read_mixture_file(dir / "sim" / "truth.json");
  for (const std::string model : {"mlfa", "naive"}) {
    std::vector<MixtureEvaluator> evs;
    for (int b = 1; b <= 2; ++b) {
      const ReplicateDataset data = read_replicate_csv((dir / "sim" / ("data_" + std::to_string(b) + ".csv")).string());
      FitConfig cfg;
      cfg.model = *parse_fit_model(model);
      cfg.iterations = 200;
      cfg.burn_in = 100;
      cfg.thin = 5;
      cfg.seed = 3;
      evs.emplace_back(run_fit(data, cfg).posterior.pooled());
    }
    const std::vector<DensityFn> fns{[&](const Vector& x) { return evs[0].density(x); }, [&](const Vector& x) { return evs[1].density(x); }};
    const SimResult r = mise_estimate(truth, fns, ImportanceLaw::truth, 20000, 9, 0);
    const auto& logged = report["methods"][model]["truth"]["ise"];
    ASSERT_EQ(logged.size(), 2u);
    for (std::size_t b = 0; b < 2; ++b) EXPECT_EQ(logged[b].get<double>(), r.ise[b]) << model << " " << b;
  }
}

TEST_F(Pipeline, ExitCodesFromBinary) {
  EXPECT_EQ(deconv_cli("simulate --out " + dir.string()), 2);  // --config missing
  EXPECT_EQ(deconv_cli("bogus"), 2);
  write("bad.json", json::parse(R"({"scenario": {"x_structure": "ZZ"}})"));
  EXPECT_EQ(deconv_cli("simulate " + flags("bad.json", "bad")), 2);
  EXPECT_EQ(deconv_cli("fit " + flags("fit_mlfa1.json", "nodata")), 3);
  EXPECT_EQ(deconv_cli("simulate " + flags("sim.json", "quiet"), "DECONV_LOG=off"), 0);
  EXPECT_EQ(deconv_cli("simulate " + flags("sim.json", "loud"), "DECONV_LOG=debug"), 0);
  EXPECT_EQ(deconv_cli("simulate " + flags("sim.json", "odd"), "DECONV_LOG=chatty"), 0);
  EXPECT_EQ(deconv_cli("--help"), 0);
}
