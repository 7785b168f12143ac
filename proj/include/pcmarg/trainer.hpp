#pragma once
// Two-phase regression of a circuit onto a node's local score.
//
// Phase 1 fits complete parent sets labelled by the scorer. Phase 2 runs L
// curriculum iterations; iteration k adds (k,0) and (k,1) marginal/zero
// queries labelled by an exact DP teacher, merged half-and-half with freshly
// sampled complete sets. Both phases minimize the squared log-domain error.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcmarg/bge_score.hpp"
#include "pcmarg/circuit.hpp"
#include "pcmarg/dp_marginal.hpp"
#include "pcmarg/query_pattern.hpp"
#include "pcmarg/random.hpp"

namespace pcmarg {

struct Phase1Config {
  std::size_t train_size = 10000;
  std::size_t val_size = 1000;
  std::size_t batch_size = 500;
  double lr = 1e-1;
  double plateau_factor = 0.5;
  std::size_t plateau_patience = 5;
  double plateau_threshold = 1e-3;
  std::size_t max_epochs = 100;
  double min_lr = 1e-5;
};

struct Phase2Config {
  std::size_t total_train = 20000;  // per iteration, half marginal / half complete
  std::size_t total_val = 2000;
  std::size_t batch_size = 500;
  double lr = 5e-3;
  std::size_t marginal_limit = 7;  // L
  std::size_t epochs_per_iter = 20;
};

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
  std::size_t latent = 256;
  double init_multiplier = -10.0;
  Phase1Config phase1;
  Phase2Config phase2;
  // Teacher candidate-set size; nullopt means every other node.
  std::optional<std::size_t> candidate_size;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  std::uint64_t seed = 0;

  // Settings used for the 16-node experiments.
  static TrainConfig preset_d16();
  // 20 nodes: N = 64, batch 1000, every set size doubled, 8-node teacher.
  static TrainConfig preset_d20();
};

TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& config);

enum class LabelSource { Scorer, DpTeacher };

struct LabeledSet {
  std::vector<QueryPattern> patterns;
  std::vector<double> labels;
  std::vector<LabelSource> sources;

  std::size_t size() const { return patterns.size(); }
  void append(const LabeledSet& other);
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Each position is One with probability 1/3, so a vector with T ones is drawn
// with probability proportional to 2^(M - T).
std::vector<QueryPattern> sample_complete(std::size_t node_count, std::size_t target,
                                          std::size_t count, Rng& rng);

// (k,0) or, with `with_one`, (k,1) queries: k Marginalized positions (and one
// One) drawn uniformly from the candidate set, Zero elsewhere.
std::vector<QueryPattern> sample_marginal_queries(const CandidateSet& candidates, std::size_t k,
                                                  std::size_t count, bool with_one, Rng& rng);

LabeledSet label_with_scorer(const LocalScorer& scorer, std::vector<QueryPattern> patterns);
LabeledSet label_with_teacher(const DpTable& teacher, std::vector<QueryPattern> patterns);

// Reduce-on-plateau learning-rate schedule.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr, double factor, std::size_t patience, double threshold, double min_lr);
  // Feed one epoch's monitored loss; returns true if the rate was reduced.
  bool observe(double loss);
  double lr() const { return lr_; }
  bool exhausted() const { return lr_ < min_lr_; }
  std::size_t reductions() const { return reductions_; }

 private:
  double lr_, factor_, threshold_, min_lr_;
  std::size_t patience_;
  double best_;
  std::size_t stale_ = 0;
  std::size_t reductions_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // running count across both phases
  int phase = 1;
  std::size_t iteration = 0;  // curriculum k in phase 2, 0 in phase 1
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double initial_val_loss = 0.0;
  double phase1_best_val_loss = 0.0;
  // Accuracy against the teacher on random marginal/zero queries.
  double probe_mean_abs_error = 0.0;
  double probe_spearman = 0.0;

  std::string to_csv() const;
};

// Mean squared log-domain error of the circuit on a labelled set.
double mean_squared_error(const Circuit& circuit, const LabeledSet& data);

// Parameter update rule with its own state (Adam moments).
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::size_t parameter_count);
  void step(Circuit& circuit, std::span<const double> grad, double lr);

 private:
  OptimizerKind kind_;
  std::vector<double> m_, v_, update_;
  std::size_t t_ = 0;
};

// Where an epoch sits in training; used in error messages.
struct EpochTag {
  int phase = 0;
  std::size_t iteration = 0;
  std::size_t epoch = 0;
};

// One shuffled pass of mini-batch descent on the squared log-domain error.
// Returns the mean pre-update batch loss; throws TrainingError on a
// non-finite batch loss.
double train_epoch(Circuit& circuit, const LabeledSet& data, std::size_t batch_size, double lr,
                   Optimizer& optimizer, Rng& rng, const EpochTag& tag = {});

// Curriculum set for phase-2 iteration k: half (k,0)/(k,1) queries labelled
// by the teacher, half complete patterns labelled by the scorer. k is clamped
// to the candidate count and (k,1) is skipped when no candidate is left over.
LabeledSet curriculum_set(const LocalScorer& scorer, const DpTable& teacher, std::size_t k,
                          std::size_t total, Rng& rng);

void phase1_train(Circuit& circuit, const LocalScorer& scorer, std::size_t target,
                  const TrainConfig& config, Rng& rng, TrainReport& report);

void phase2_train(Circuit& circuit, const LocalScorer& scorer, const DpTable& teacher,
                  const TrainConfig& config, Rng& rng, TrainReport& report);

struct ProbeResult {
  double mean_abs_error = 0.0;
  double spearman = 0.0;
};

// `count` random marginal/zero queries over the teacher's candidates (each
// candidate Zero or Marginalized with probability 1/2).
ProbeResult probe_against_teacher(const Circuit& circuit, const DpTable& teacher,
                                  std::size_t count, Rng& rng);

struct NodeCircuit {
  Circuit circuit;
  TrainReport report;
};

NodeCircuit learn_node_circuit(const LocalScorer& scorer, std::size_t target,
                               const TrainConfig& config);

}  // namespace pcmarg
