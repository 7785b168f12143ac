#pragma once
// Ordering-based posterior sampling on top of per-node marginal backends,
// plus the structure-recovery metrics used to compare backends.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcmarg/bge_score.hpp"
#include "pcmarg/circuit.hpp"
#include "pcmarg/dp_marginal.hpp"
#include "pcmarg/query_pattern.hpp"
#include "pcmarg/random.hpp"
#include "pcmarg/synthesis.hpp"

namespace pcmarg {

using Ordering = std::vector<std::size_t>;

bool is_permutation_of_nodes(const Ordering& sigma, std::size_t node_count);

// Log-mass of one node's parent-indicator pattern.
class MarginalBackend {
 public:
  virtual ~MarginalBackend() = default;
  virtual std::size_t target() const = 0;
  virtual std::size_t node_count() const = 0;
  virtual double query(const QueryPattern& pattern) const = 0;
};

using BackendSet = std::vector<std::shared_ptr<const MarginalBackend>>;

class CircuitBackend final : public MarginalBackend {
 public:
  CircuitBackend(Circuit circuit, std::size_t target);
  std::size_t target() const override { return target_; }
  std::size_t node_count() const override { return circuit_.variables() + 1; }
  double query(const QueryPattern& pattern) const override;
  const Circuit& circuit() const { return circuit_; }

 private:
  Circuit circuit_;
  std::size_t target_;
};

// Exact table over a candidate set. In restricting mode (the default) nodes
// outside the candidate set are never parents: Marginalized reads as Zero and
// One has mass zero. Strict mode rejects such patterns.
class DpBackend final : public MarginalBackend {
 public:
  explicit DpBackend(DpTable table, bool restricting = true);
  std::size_t target() const override { return table_.candidates().target; }
  std::size_t node_count() const override { return table_.candidates().node_count; }
  double query(const QueryPattern& pattern) const override;
  const DpTable& table() const { return table_; }

 private:
  DpTable table_;
  bool restricting_;
  std::vector<bool> is_candidate_;
};

// Sums local scores over every completion by enumeration; for small d only.
class EnumerationBackend final : public MarginalBackend {
 public:
  EnumerationBackend(std::shared_ptr<const LocalScorer> scorer, std::size_t target);
  std::size_t target() const override { return target_; }
  std::size_t node_count() const override { return scorer_->node_count(); }
  double query(const QueryPattern& pattern) const override;

 private:
  std::shared_ptr<const LocalScorer> scorer_;
  std::size_t target_;
};

// Predecessors of `sigma[position]` Marginalized, everything else Zero.
QueryPattern ordering_pattern(const Ordering& sigma, std::size_t position);

double score_ordering(const BackendSet& backends, const Ordering& sigma);

// min(1, exp(log_ratio)).
double acceptance_probability(double log_ratio);

struct McmcConfig {
  std::size_t iterations = 20000;
  std::size_t burn_in = 5000;
  std::size_t thin = 10;
};

// Metropolis-Hastings with random adjacent transpositions, started from the
// identity. Iteration t (0-based) is kept when t >= burn_in and
// (t - burn_in) % thin == 0.
std::vector<Ordering> order_mcmc(const BackendSet& backends, const McmcConfig& config,
                                 std::uint64_t seed);

// Parent pattern for sigma[position] drawn by sequential conditioning over its
// predecessors. Throws std::runtime_error when a conditional leaves [0, 1].
QueryPattern sample_parents(const MarginalBackend& backend, const Ordering& sigma,
                            std::size_t position, Rng& rng);
QueryPattern sample_parents(const MarginalBackend& backend, const Ordering& sigma,
                            std::size_t position, std::uint64_t seed);

Dag sample_dag(const BackendSet& backends, const Ordering& sigma, Rng& rng);

struct Cpdag {
  std::size_t node_count = 0;
  std::vector<Edge> directed;                              // sorted
  std::vector<std::pair<std::size_t, std::size_t>> undirected;  // (lo, hi), sorted

  friend bool operator==(const Cpdag&, const Cpdag&) = default;
};

Cpdag dag_to_cpdag(const Dag& dag);

// Mean CPDAG Hamming distance to the truth; each unordered pair whose status
// (absent, either direction, undirected) differs counts 1.
double expected_shd(const std::vector<Dag>& samples, const Dag& truth);

// Fraction of samples containing each directed edge, indexed [parent * d + child].
std::vector<double> edge_marginals(const std::vector<Dag>& samples);

// Area under the ROC curve with ties counted half; throws std::invalid_argument
// unless both classes are present.
double auroc(const std::vector<double>& scores, const std::vector<bool>& labels);

// AUROC of the edge marginals over all ordered pairs i != j.
double edge_auroc(const std::vector<Dag>& samples, const Dag& truth);

// log mean_s exp(score of sample s on the test data).
double mll(const std::vector<Dag>& samples, const LocalScorer& test_scorer);

double mean_edges(const std::vector<Dag>& samples);

struct MetricsRow {
  std::string method;
  std::size_t d = 0;
  std::uint64_t seed = 0;
  double e_shd = 0.0;
  double auroc = 0.0;
  double mll = 0.0;
  double mean_edges = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);

struct PosteriorSamples {
  std::vector<Ordering> orderings;
  std::vector<Dag> dags;
};

// order_mcmc followed by one DAG per retained ordering.
PosteriorSamples sample_posterior(const BackendSet& backends, const McmcConfig& config,
                                  std::uint64_t seed);

MetricsRow evaluate_samples(const std::string& method, std::uint64_t seed,
                            const std::vector<Dag>& samples, const Dag& truth,
                            const LocalScorer& test_scorer);

// One compact JSON object per line: {"d":..,"edges":[[p,c],..]}.
std::string dags_to_jsonl(const std::vector<Dag>& dags);

}  // namespace pcmarg
