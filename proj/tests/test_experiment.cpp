#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <sys/wait.h>

#include "pcmarg/experiment.hpp"
#include "pcmarg/io.hpp"

using namespace pcmarg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pcmarg_exp_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig tiny(const fs::path& out) {
  ExperimentConfig c = ExperimentConfig::from_json(R"({
    "d": 4, "n_train": 60, "n_test": 80, "seeds": [0, 1],
    "backends": ["pc", "dp_full", {"name": "dp_restricted", "size": 2}],
    "train": {"latent": 4, "optimizer": "adam",
              "phase1": {"train_size": 100, "val_size": 40, "batch_size": 25, "max_epochs": 4},
              "phase2": {"total_train": 60, "total_val": 20, "batch_size": 20, "L": 2, "epochs_per_iter": 2}},
    "mcmc": {"iterations": 400, "burn_in": 100, "thin": 10}
  })");
  c.out = out;
  return c;
}

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(PCMARG_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[256];
  while (std::fgets(buf, sizeof buf, pipe)) out += buf;
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

}  // namespace

TEST_CASE("backend specs") {
  CHECK(BackendSpec::parse("pc").label() == "pc");
  CHECK(BackendSpec::parse("dp_full").kind == BackendKind::DpFull);
  const BackendSpec r = BackendSpec::parse("dp_restricted(6)");
  CHECK(r.kind == BackendKind::DpRestricted);
  CHECK(r.restricted_size == 6);
  CHECK(r.label() == "dp_restricted(6)");
  CHECK(r.dir_name() == "dp_restricted_6");
  CHECK(BackendSpec::parse("dp_restricted:6").label() == r.label());
  CHECK(BackendSpec::parse("dp_restricted_6").label() == r.label());
  CHECK_THROWS(BackendSpec::parse("mcmc"));
  CHECK_THROWS(BackendSpec::parse("dp_restricted(x)"));
}

TEST_CASE("config parsing and validation") {
  const ExperimentConfig c = tiny("x");
  CHECK(c.d == 4);
  CHECK(c.seeds == std::vector<std::uint64_t>{0, 1});
  CHECK(c.backends.size() == 3);
  CHECK(c.train.latent == 4);
  CHECK(c.mcmc.thin == 10);
  const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());

  CHECK_THROWS(ExperimentConfig::from_json(R"({"d": 0})"));
  CHECK_THROWS(ExperimentConfig::from_json(R"({"seeds": []})"));
  CHECK_THROWS(ExperimentConfig::from_json(R"({"mcmc": {"iterations": 10, "burn_in": 10}})"));
  CHECK_THROWS(ExperimentConfig::from_json(R"j({"d": 4, "backends": ["dp_restricted(4)"]})j"));
  CHECK_THROWS(ExperimentConfig::from_json(R"({"d": 20, "backends": ["dp_full"]})"));
  CHECK_NOTHROW(ExperimentConfig::from_json(R"j({"d": 20, "backends": ["dp_restricted(8)"]})j"));
}

TEST_CASE("generated files are deterministic") {
  const fs::path dir = scratch("gen");
  ExperimentConfig c = tiny(dir);
  const auto a = cmd_generate(c, 3);
  const auto b = cmd_generate(c, 3);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].digest == b[i].digest);
  CHECK(fs::exists(seed_dir(c, 3) / "truth.json"));
  CHECK(fs::exists(seed_dir(c, 3) / "test.csv"));
  const auto other = cmd_generate(c, 4);
  CHECK(other[0].digest != a[0].digest);

  c.d = 1;
  c.backends = {BackendSpec{}};
  const GeneratedData one = generate_data(c, 0);
  CHECK(one.train.cols() == 1);
  cmd_generate(c, 0);
  const std::string csv = read_file(seed_dir(c, 0) / "train.csv");
  CHECK(csv.find(',') == std::string::npos);

  c.d = 16;
  const GeneratedData big = generate_data(c, 0);
  CHECK(big.train.rows() == 60);
  CHECK(big.test.rows() == 80);
  CHECK(big.train.cols() == 16);
  CHECK(big.truth.dag.is_acyclic());
  CHECK(big.train != big.test.topRows(60));
  fs::remove_all(dir);
}

TEST_CASE("file-backed pipeline") {
  const fs::path dir = scratch("pipe");
  const ExperimentConfig c = tiny(dir);
  cmd_generate(c, 0);
  const auto trained = cmd_train(c, 0);
  CHECK(fs::exists(seed_dir(c, 0) / "pc" / "node_3.circuit"));
  CHECK(fs::exists(seed_dir(c, 0) / "pc" / "node_0_report.csv"));
  CHECK(fs::exists(seed_dir(c, 0) / "pc" / "training_summary.csv"));
  for (const auto& b : c.backends)
    if (b.kind != BackendKind::Pc) cmd_build_dp(c, 0, b);
  CHECK(fs::exists(seed_dir(c, 0) / "dp_restricted_2" / "node_1.bin"));

  for (const auto& b : c.backends) {
    const MetricsRow row = cmd_eval(c, 0, b);
    CHECK(row.method == b.label());
    CHECK(row.d == 4);
    CHECK(std::isfinite(row.mll));
    CHECK(row.auroc >= 0.0);
    CHECK(row.auroc <= 1.0);
    CHECK(fs::exists(seed_dir(c, 0) / b.dir_name() / "dag_samples.jsonl"));
  }
  const GeneratedData data = load_data(c, 0);
  CHECK(data.train == generate_data(c, 0).train);
  fs::remove_all(dir);
}

TEST_CASE("metrics summary") {
  const std::string csv = metrics_csv_header() + "\n" + "pc,8,0,2,0.5,-10,4\n" + "dp_full,8,0,1,1,-8,3\n" +
                          "pc,8,1,4,0.7,-12,6\n";
  const std::string s = summarize_metrics(csv);
  std::istringstream in(s);
  std::string header, pc, dp;
  std::getline(in, header);
  std::getline(in, pc);
  std::getline(in, dp);
  CHECK(header == "method,d,runs,e_shd,auroc,mll,mean_edges");
  CHECK(pc.rfind("pc,8,2,3,", 0) == 0);
  CHECK(dp.rfind("dp_full,8,1,1,", 0) == 0);
  CHECK_THROWS(summarize_metrics("a,b\n"));
}

TEST_CASE("command line") {
  const fs::path dir = scratch("cli");
  Circuit c(CircuitConfig{4, 3, 5, -1.0});
  write_file_atomic(dir / "n.circuit", c.serialize());
  const std::string path = (dir / "n.circuit").string();

  const Run zero = run("query " + path + " 0000");
  CHECK(zero.code == 0);
  CHECK(zero.out == format_double(c.evaluate(QueryPattern::parse("0000", 0))) + "\n");
  const Run all = run("query " + path + " mmmm --target 4");
  CHECK(all.code == 0);
  CHECK(std::stod(all.out) == doctest::Approx(c.normalizing_constant()).epsilon(1e-12));
  CHECK(run("query " + path + " 0020").code == 2);
  CHECK(run("query " + path + " 000").code == 2);
  CHECK(run("query " + (dir / "missing").string() + " 0000").code != 0);

  ExperimentConfig cfg = tiny(dir / "runs");
  cfg.seeds = {2};
  cfg.backends = {BackendSpec::parse("dp_full"), BackendSpec::parse("dp_restricted(2)")};
  write_file_atomic(dir / "cfg.json", cfg.to_json());
  const std::string conf = "--config " + (dir / "cfg.json").string();
  CHECK(run("generate " + conf).code == 0);
  CHECK(run("build-dp " + conf).code == 0);
  const Run full = run("eval " + conf + " --backend dp_full");
  const Run restricted = run("eval " + conf + " --backend 'dp_restricted(2)'");
  CHECK(full.code == 0);
  CHECK(restricted.code == 0);
  // Both backends report the same ground-truth digest.
  CHECK(full.out.substr(0, full.out.find('\n')) == restricted.out.substr(0, restricted.out.find('\n')));
  CHECK(fs::exists(dir / "runs" / "metrics_dp_full.csv"));
  CHECK(run("eval " + conf).code == 0);
  CHECK(read_file(dir / "runs" / "metrics.csv").rfind(metrics_csv_header() + "\n", 0) == 0);
  CHECK(run("report " + conf).code == 0);
  CHECK(fs::exists(dir / "runs" / "summary.csv"));
  CHECK(run("train --config " + (dir / "nope.json").string()).code != 0);
  fs::remove_all(dir);
}
