#pragma once
// Ground-truth generation: Erdos-Renyi DAGs, linear-Gaussian mechanisms and
// observational samples.

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pcmarg/query_pattern.hpp"

namespace pcmarg {

using Edge = std::pair<std::size_t, std::size_t>;  // (parent, child)

// Directed acyclic graph over at most 64 nodes, stored as per-node parent masks.
class Dag {
 public:
  Dag() = default;
  explicit Dag(std::size_t node_count);
  // Throws std::invalid_argument on self-loops, out-of-range indices or cycles.
  Dag(std::size_t node_count, const std::vector<Edge>& edges);

  std::size_t node_count() const { return parents_.size(); }
  ParentMask parents(std::size_t child) const { return parents_[child]; }
  bool has_edge(std::size_t parent, std::size_t child) const {
    return parents_[child] >> parent & 1U;
  }
  std::size_t edge_count() const;
  // Edges sorted by (parent, child).
  std::vector<Edge> edges() const;

  // No acyclicity check; callers use is_acyclic() when mutating freely.
  void add_edge(std::size_t parent, std::size_t child);
  void remove_edge(std::size_t parent, std::size_t child);
  void set_parents(std::size_t child, ParentMask parents);

  bool is_acyclic() const;
  // Kahn order with smallest-index tie breaking; empty if cyclic.
  std::vector<std::size_t> topological_order() const;

  friend bool operator==(const Dag&, const Dag&) = default;

 private:
  std::vector<ParentMask> parents_;
};

struct GroundTruthBn {
  Dag dag;
  std::map<Edge, double> edge_weights;
  std::vector<double> noise_variances;
};

// n x d, one column per variable.
using DataMatrix = Eigen::MatrixXd;

Dag generate_er_dag(std::size_t node_count, double avg_edges_per_node, std::uint64_t seed);

// Inclusion probability of each forward edge in generate_er_dag.
double er_edge_probability(std::size_t node_count, double avg_edges_per_node);

GroundTruthBn generate_mechanisms(const Dag& dag, std::uint64_t seed);

DataMatrix sample_data(const GroundTruthBn& bn, std::size_t n, std::uint64_t seed);

// Headerless CSV, 17 significant digits.
std::string data_to_csv(const DataMatrix& data);
DataMatrix data_from_csv(const std::string& text);

// {"d": int, "edges": [[p, c], ...]}
std::string dag_to_json(const Dag& dag);
Dag dag_from_json(const std::string& text);

std::string bn_to_json(const GroundTruthBn& bn);
GroundTruthBn bn_from_json(const std::string& text);

}  // namespace pcmarg
