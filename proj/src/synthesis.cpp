#include "pcmarg/synthesis.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "pcmarg/random.hpp"

namespace pcmarg {

using nlohmann::json;

Dag::Dag(std::size_t node_count) : parents_(node_count, 0) {
  if (node_count > 64) throw std::invalid_argument("Dag: at most 64 nodes are supported");
}

Dag::Dag(std::size_t node_count, const std::vector<Edge>& edges) : Dag(node_count) {
  for (const auto& [p, c] : edges) add_edge(p, c);
  if (!is_acyclic()) throw std::invalid_argument("Dag: edge set contains a directed cycle");
}

std::size_t Dag::edge_count() const {
  std::size_t total = 0;
  for (ParentMask m : parents_) total += static_cast<std::size_t>(std::popcount(m));
  return total;
}

std::vector<Edge> Dag::edges() const {
  std::vector<Edge> out;
  for (std::size_t p = 0; p < node_count(); ++p) {
    for (std::size_t c = 0; c < node_count(); ++c) {
      if (has_edge(p, c)) out.emplace_back(p, c);
    }
  }
  return out;
}

void Dag::add_edge(std::size_t parent, std::size_t child) {
  if (parent >= node_count() || child >= node_count()) {
    throw std::invalid_argument("Dag: edge endpoint out of range");
  }
  if (parent == child) throw std::invalid_argument("Dag: self-loops are not allowed");
  parents_[child] |= ParentMask{1} << parent;
}

void Dag::remove_edge(std::size_t parent, std::size_t child) {
  parents_[child] &= ~(ParentMask{1} << parent);
}

void Dag::set_parents(std::size_t child, ParentMask parents) {
  if (parents >> child & 1U) throw std::invalid_argument("Dag: self-loops are not allowed");
  parents_[child] = parents;
}

std::vector<std::size_t> Dag::topological_order() const {
  const std::size_t d = node_count();
  std::vector<std::size_t> order;
  order.reserve(d);
  ParentMask placed = 0;
  while (order.size() < d) {
    bool progressed = false;
    for (std::size_t v = 0; v < d; ++v) {
      if ((placed >> v & 1U) == 0 && (parents_[v] & ~placed) == 0) {
        order.push_back(v);
        placed |= ParentMask{1} << v;
        progressed = true;
        break;
      }
    }
    if (!progressed) return {};
  }
  return order;
}

bool Dag::is_acyclic() const { return topological_order().size() == node_count(); }

double er_edge_probability(std::size_t node_count, double avg_edges_per_node) {
  if (node_count < 2) return 0.0;
  const double pairs = 0.5 * static_cast<double>(node_count) * static_cast<double>(node_count - 1);
  return std::clamp(avg_edges_per_node * static_cast<double>(node_count) / pairs, 0.0, 1.0);
}

Dag generate_er_dag(std::size_t node_count, double avg_edges_per_node, std::uint64_t seed) {
  if (node_count == 0) throw std::invalid_argument("generate_er_dag: node count must be >= 1");
  if (avg_edges_per_node < 0.0) {
    throw std::invalid_argument("generate_er_dag: average edge count must be >= 0");
  }
  Rng rng = make_rng(seed, 0xE5);
  std::vector<std::size_t> order(node_count);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order.begin(), order.end(), rng);
  const double p = er_edge_probability(node_count, avg_edges_per_node);
  Dag dag(node_count);
  for (std::size_t i = 0; i < node_count; ++i) {
    for (std::size_t j = i + 1; j < node_count; ++j) {
      if (uniform01(rng) < p) dag.add_edge(order[i], order[j]);
    }
  }
  return dag;
}

GroundTruthBn generate_mechanisms(const Dag& dag, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x3EC);
  GroundTruthBn bn;
  bn.dag = dag;
  for (const Edge& e : dag.edges()) {
    const double magnitude = 0.5 + 1.5 * uniform01(rng);
    const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
    bn.edge_weights.emplace(e, sign * magnitude);
  }
  bn.noise_variances.resize(dag.node_count());
  for (double& v : bn.noise_variances) v = 0.5 + 1.5 * uniform01(rng);
  return bn;
}

DataMatrix sample_data(const GroundTruthBn& bn, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("sample_data: need at least one observation");
  const std::size_t d = bn.dag.node_count();
  const auto order = bn.dag.topological_order();
  if (order.size() != d) throw std::invalid_argument("sample_data: graph is cyclic");
  Rng rng = make_rng(seed, 0x5A3);
  DataMatrix data(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t v : order) {
      double x = std::sqrt(bn.noise_variances[v]) * standard_normal(rng);
      for (std::size_t p = 0; p < d; ++p) {
        if (bn.dag.has_edge(p, v)) {
          x += bn.edge_weights.at({p, v}) * data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p));
        }
      }
      data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(v)) = x;
    }
  }
  return data;
}

std::string data_to_csv(const DataMatrix& data) {
  std::string out;
  char buf[40];
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
      if (c > 0) out.push_back(',');
      std::snprintf(buf, sizeof buf, "%.17g", data(r, c));
      out += buf;
    }
    out.push_back('\n');
  }
  return out;
}

DataMatrix data_from_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::istringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) {
      std::size_t used = 0;
      const double v = std::stod(field, &used);
      if (!std::isfinite(v)) throw std::invalid_argument("data CSV: non-finite entry");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::invalid_argument("data CSV: ragged rows");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("data CSV: no rows");
  DataMatrix data(static_cast<Eigen::Index>(rows.size()),
                  static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return data;
}

std::string dag_to_json(const Dag& dag) {
  json j;
  j["d"] = dag.node_count();
  j["edges"] = json::array();
  for (const auto& [p, c] : dag.edges()) j["edges"].push_back({p, c});
  return j.dump();
}

Dag dag_from_json(const std::string& text) {
  const json j = json::parse(text);
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
  return Dag(j.at("d").get<std::size_t>(), edges);
}

std::string bn_to_json(const GroundTruthBn& bn) {
  json j;
  j["d"] = bn.dag.node_count();
  j["edges"] = json::array();
  for (const auto& [e, w] : bn.edge_weights) j["edges"].push_back({{"parent", e.first}, {"child", e.second}, {"weight", w}});
  j["noise_variances"] = bn.noise_variances;
  return j.dump(2);
}

GroundTruthBn bn_from_json(const std::string& text) {
  const json j = json::parse(text);
  GroundTruthBn bn;
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) {
    const Edge edge{e.at("parent").get<std::size_t>(), e.at("child").get<std::size_t>()};
    edges.push_back(edge);
    bn.edge_weights.emplace(edge, e.at("weight").get<double>());
  }
  bn.dag = Dag(j.at("d").get<std::size_t>(), edges);
  bn.noise_variances = j.at("noise_variances").get<std::vector<double>>();
  if (bn.noise_variances.size() != bn.dag.node_count()) {
    throw std::invalid_argument("mechanisms JSON: variance count does not match node count");
  }
  return bn;
}

}  // namespace pcmarg
