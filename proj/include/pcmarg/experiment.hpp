#pragma once
// End-to-end experiment pipeline: data generation, per-node backends,
// posterior sampling and metrics. Each step has an in-memory form and a
// file-backed form rooted at <out>/seed_<s>/.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pcmarg/harness.hpp"
#include "pcmarg/synthesis.hpp"
#include "pcmarg/trainer.hpp"

namespace pcmarg {

enum class BackendKind { Pc, DpFull, DpRestricted };

struct BackendSpec {
  BackendKind kind = BackendKind::Pc;
  std::size_t restricted_size = 0;  // DpRestricted only

  // "pc", "dp_full", "dp_restricted(6)"
  std::string label() const;
  // Directory-safe form of label().
  std::string dir_name() const;
  // Accepts label() forms and "dp_restricted:<k>".
  static BackendSpec parse(const std::string& text);
};

struct ExperimentConfig {
  std::size_t d = 8;
  double avg_edges = 2.0;
  std::size_t n_train = 100;
  std::size_t n_test = 1000;
  std::vector<std::uint64_t> seeds{0};
  std::vector<BackendSpec> backends{BackendSpec{}};
  TrainConfig train;
  McmcConfig mcmc;
  std::filesystem::path out = "runs";

  static ExperimentConfig from_json(const std::string& text);
  std::string to_json() const;
};

struct GeneratedData {
  GroundTruthBn truth;
  DataMatrix train;
  DataMatrix test;
};

GeneratedData generate_data(const ExperimentConfig& config, std::uint64_t seed);

// Circuits for every node trained on `scorer`; reports optional.
std::vector<Circuit> train_circuits(const LocalScorer& scorer, const TrainConfig& config,
                                    std::vector<TrainReport>* reports = nullptr);

std::vector<DpTable> build_dp_tables(const LocalScorer& scorer, const BackendSpec& spec);

BackendSet circuit_backends(std::vector<Circuit> circuits);
BackendSet dp_backends(std::vector<DpTable> tables);

// Order-MCMC seed shared by every backend for one data seed.
std::uint64_t mcmc_seed(std::uint64_t seed);

struct EvalOutput {
  MetricsRow metrics;
  PosteriorSamples samples;
};

EvalOutput evaluate_backend(const std::string& method, const BackendSet& backends,
                            const GeneratedData& data, const McmcConfig& mcmc,
                            std::uint64_t seed);

// File-backed steps. Each returns the files it wrote with their digests.
struct WrittenFile {
  std::filesystem::path path;
  std::string digest;
};

std::filesystem::path seed_dir(const ExperimentConfig& config, std::uint64_t seed);

std::vector<WrittenFile> cmd_generate(const ExperimentConfig& config, std::uint64_t seed);
std::vector<WrittenFile> cmd_train(const ExperimentConfig& config, std::uint64_t seed);
std::vector<WrittenFile> cmd_build_dp(const ExperimentConfig& config, std::uint64_t seed,
                                      const BackendSpec& spec);
// Loads the backend's files, samples the posterior and returns one metrics
// row; DAG samples are written next to the backend files.
MetricsRow cmd_eval(const ExperimentConfig& config, std::uint64_t seed, const BackendSpec& spec,
                    std::vector<WrittenFile>* written = nullptr);

// Per-method means over the rows of a metrics CSV, in the same column layout
// with seed replaced by the number of rows averaged.
std::string summarize_metrics(const std::string& metrics_csv);

GeneratedData load_data(const ExperimentConfig& config, std::uint64_t seed);

}  // namespace pcmarg
