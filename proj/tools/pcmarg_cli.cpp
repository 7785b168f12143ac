// pcmarg: generate data, train per-node circuits, build DP tables, answer
// queries and evaluate posterior backends from a JSON experiment config.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "pcmarg/experiment.hpp"
#include "pcmarg/io.hpp"

namespace {

using namespace pcmarg;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string backend;
};

void add_common(CLI::App* cmd, Common& c, bool with_backend) {
  cmd->add_option("--config", c.config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Run only this seed");
  cmd->add_option("--out", c.out, "Output directory (overrides the config)");
  if (with_backend) cmd->add_option("--backend", c.backend, "pc, dp_full or dp_restricted(<k>)");
}

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = ExperimentConfig::from_json(read_file(c.config_path));
  if (c.seed) cfg.seeds = {*c.seed};
  if (!c.out.empty()) cfg.out = c.out;
  return cfg;
}

std::vector<BackendSpec> chosen_backends(const ExperimentConfig& cfg, const Common& c) {
  if (!c.backend.empty()) return {BackendSpec::parse(c.backend)};
  return cfg.backends;
}

void print_files(const std::vector<WrittenFile>& files) {
  for (const auto& f : files) std::cout << f.digest << "  " << f.path.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Marginal queries over parent sets with regression circuits"};
  app.require_subcommand(1);

  Common gen, train, build, eval, report;
  add_common(app.add_subcommand("generate", "Sample a ground-truth network and train/test data"), gen, false);
  add_common(app.add_subcommand("train", "Train one circuit per node"), train, false);
  add_common(app.add_subcommand("build-dp", "Build exact DP tables per node"), build, true);
  add_common(app.add_subcommand("eval", "Sample posteriors and write metrics"), eval, true);
  add_common(app.add_subcommand("report", "Average metrics per method"), report, false);

  std::string circuit_path, pattern_text;
  std::size_t target = 0;
  auto* query = app.add_subcommand("query", "Print the log-mass of a pattern");
  query->add_option("circuit", circuit_path, "Serialized circuit")->required()->check(CLI::ExistingFile);
  query->add_option("pattern", pattern_text, "One character per parent position: 0, 1 or m")->required();
  query->add_option("--target", target, "Target node, used only to label positions");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("query")) {
      const Circuit circuit = Circuit::deserialize(read_file(circuit_path));
      QueryPattern pattern;
      try {
        pattern = QueryPattern::parse(pattern_text, target);
      } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
      }
      if (pattern.size() != circuit.variables()) {
        std::cerr << "usage error: pattern has " << pattern.size() << " positions, circuit expects "
                  << circuit.variables() << "\n";
        return 2;
      }
      const double v = circuit.evaluate(pattern);
      std::cout << format_double(v) << "\n";
      return std::isnan(v) ? 1 : 0;
    }

    if (app.got_subcommand("generate")) {
      const auto cfg = load_config(gen);
      for (auto s : cfg.seeds) print_files(cmd_generate(cfg, s));
    } else if (app.got_subcommand("train")) {
      const auto cfg = load_config(train);
      for (auto s : cfg.seeds) print_files(cmd_train(cfg, s));
    } else if (app.got_subcommand("build-dp")) {
      const auto cfg = load_config(build);
      for (auto s : cfg.seeds) {
        for (const auto& b : chosen_backends(cfg, build)) {
          if (b.kind != BackendKind::Pc) print_files(cmd_build_dp(cfg, s, b));
        }
      }
    } else if (app.got_subcommand("eval")) {
      const auto cfg = load_config(eval);
      std::string csv = metrics_csv_header() + "\n";
      std::vector<WrittenFile> files;
      for (auto s : cfg.seeds) {
        std::cout << "seed " << s << " truth "
                  << fnv1a_hex(read_file(seed_dir(cfg, s) / "truth.json")) << "\n";
        for (const auto& b : chosen_backends(cfg, eval)) {
          const MetricsRow row = cmd_eval(cfg, s, b, &files);
          csv += metrics_csv_row(row) + "\n";
          std::cout << metrics_csv_row(row) << "\n";
        }
      }
      const auto path = cfg.out / (eval.backend.empty() ? std::string("metrics.csv")
                                                        : "metrics_" + BackendSpec::parse(eval.backend).dir_name() + ".csv");
      write_file_atomic(path, csv);
      files.push_back({path, fnv1a_hex(csv)});
      print_files(files);
    } else if (app.got_subcommand("report")) {
      const auto cfg = load_config(report);
      const std::string summary = summarize_metrics(read_file(cfg.out / "metrics.csv"));
      write_file_atomic(cfg.out / "summary.csv", summary);
      std::cout << summary;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
