#include "pcmarg/harness.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcmarg/io.hpp"
#include "pcmarg/log_math.hpp"

namespace pcmarg {

bool is_permutation_of_nodes(const Ordering& sigma, std::size_t node_count) {
  if (sigma.size() != node_count) return false;
  std::vector<bool> seen(node_count, false);
  for (std::size_t v : sigma) {
    if (v >= node_count || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

CircuitBackend::CircuitBackend(Circuit circuit, std::size_t target)
    : circuit_(std::move(circuit)), target_(target) {
  if (target_ > circuit_.variables()) {
    throw std::invalid_argument("CircuitBackend: target out of range");
  }
}

double CircuitBackend::query(const QueryPattern& pattern) const {
  if (pattern.target() != target_ || pattern.size() != circuit_.variables()) {
    throw std::invalid_argument("CircuitBackend: pattern " + pattern.to_string() +
                                " does not match target " + std::to_string(target_));
  }
  return circuit_.evaluate(pattern);
}

DpBackend::DpBackend(DpTable table, bool restricting)
    : table_(std::move(table)), restricting_(restricting) {
  is_candidate_.assign(table_.candidates().node_count, false);
  for (std::size_t v : table_.candidates().members) is_candidate_[v] = true;
}

double DpBackend::query(const QueryPattern& pattern) const {
  if (!restricting_) return dp_query(table_, pattern);
  QueryPattern projected = pattern;
  for (std::size_t p = 0; p < projected.size(); ++p) {
    if (is_candidate_[projected.node_of(p)]) continue;
    if (projected[p] == VarState::One) return kNegInf;
    projected[p] = VarState::Zero;
  }
  return dp_query(table_, projected);
}

EnumerationBackend::EnumerationBackend(std::shared_ptr<const LocalScorer> scorer,
                                       std::size_t target)
    : scorer_(std::move(scorer)), target_(target) {}

double EnumerationBackend::query(const QueryPattern& pattern) const {
  std::vector<std::size_t> free_nodes;
  ParentMask base = 0;
  for (std::size_t p = 0; p < pattern.size(); ++p) {
    const std::size_t v = pattern.node_of(p);
    if (pattern[p] == VarState::One) base |= ParentMask{1} << v;
    if (pattern[p] == VarState::Marginalized) free_nodes.push_back(v);
  }
  std::vector<double> terms;
  terms.reserve(std::size_t{1} << free_nodes.size());
  for (std::size_t s = 0; s < (std::size_t{1} << free_nodes.size()); ++s) {
    ParentMask mask = base;
    for (std::size_t b = 0; b < free_nodes.size(); ++b) {
      if (s >> b & 1U) mask |= ParentMask{1} << free_nodes[b];
    }
    terms.push_back(scorer_->local_score(target_, mask));
  }
  return log_sum_exp(terms);
}

QueryPattern ordering_pattern(const Ordering& sigma, std::size_t position) {
  QueryPattern q = QueryPattern::zeros(sigma.size(), sigma[position]);
  for (std::size_t i = 0; i < position; ++i) q.set_node(sigma[i], VarState::Marginalized);
  return q;
}

double score_ordering(const BackendSet& backends, const Ordering& sigma) {
  if (!is_permutation_of_nodes(sigma, backends.size())) {
    throw std::invalid_argument("score_ordering: ordering is not a permutation of the nodes");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    total += backends[sigma[i]]->query(ordering_pattern(sigma, i));
  }
  return total;
}

double acceptance_probability(double log_ratio) {
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

std::vector<Ordering> order_mcmc(const BackendSet& backends, const McmcConfig& config,
                                 std::uint64_t seed) {
  if (config.iterations <= config.burn_in) {
    throw std::invalid_argument("order_mcmc: iterations must exceed burn_in");
  }
  if (config.thin == 0) throw std::invalid_argument("order_mcmc: thin must be >= 1");
  const std::size_t d = backends.size();
  Ordering sigma(d);
  std::iota(sigma.begin(), sigma.end(), 0);
  std::vector<double> local(d);
  for (std::size_t i = 0; i < d; ++i) local[i] = backends[sigma[i]]->query(ordering_pattern(sigma, i));

  Rng rng = make_rng(seed, 0x0C3C);
  std::vector<Ordering> kept;
  for (std::size_t t = 0; t < config.iterations; ++t) {
    if (d >= 2) {
      const std::size_t i = uniform_index(rng, d - 1);
      std::swap(sigma[i], sigma[i + 1]);
      const double a = backends[sigma[i]]->query(ordering_pattern(sigma, i));
      const double b = backends[sigma[i + 1]]->query(ordering_pattern(sigma, i + 1));
      const double delta = (a + b) - (local[i + 1] + local[i]);
      if (uniform01(rng) < acceptance_probability(delta)) {
        local[i] = a;
        local[i + 1] = b;
      } else {
        std::swap(sigma[i], sigma[i + 1]);
      }
    }
    if (t >= config.burn_in && (t - config.burn_in) % config.thin == 0) kept.push_back(sigma);
  }
  return kept;
}

QueryPattern sample_parents(const MarginalBackend& backend, const Ordering& sigma,
                            std::size_t position, Rng& rng) {
  QueryPattern q = ordering_pattern(sigma, position);
  double q_marg = backend.query(q);
  for (std::size_t i = 0; i < position; ++i) {
    const std::size_t j = sigma[i];
    q.set_node(j, VarState::One);
    const double q_one = backend.query(q);
    q.set_node(j, VarState::Zero);
    const double q_zero = backend.query(q);
    const double p_one = std::exp(q_one - q_marg);
    const double p_zero = std::exp(q_zero - q_marg);
    constexpr double tol = 1e-9;
    if (!(p_one >= -tol && p_one <= 1.0 + tol && p_zero >= -tol && p_zero <= 1.0 + tol)) {
      throw std::runtime_error("sample_parents: conditional outside [0, 1] for node " +
                               std::to_string(j) + " of target " +
                               std::to_string(sigma[position]) + " (p_one = " +
                               format_double(p_one) + ", p_zero = " + format_double(p_zero) + ")");
    }
    if (uniform01(rng) * (p_one + p_zero) < p_one) {
      q.set_node(j, VarState::One);
      q_marg = q_one;
    } else {
      q_marg = q_zero;
    }
  }
  return q;
}

QueryPattern sample_parents(const MarginalBackend& backend, const Ordering& sigma,
                            std::size_t position, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x5A9);
  return sample_parents(backend, sigma, position, rng);
}

Dag sample_dag(const BackendSet& backends, const Ordering& sigma, Rng& rng) {
  Dag dag(sigma.size());
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    dag.set_parents(sigma[i], sample_parents(*backends[sigma[i]], sigma, i, rng).one_mask());
  }
  return dag;
}

Cpdag dag_to_cpdag(const Dag& dag) {
  const std::size_t d = dag.node_count();
  // dir[a][b]: a -> b compelled; und[a][b] == und[b][a]: still undirected.
  std::vector<std::vector<bool>> dir(d, std::vector<bool>(d, false));
  std::vector<std::vector<bool>> und(d, std::vector<bool>(d, false));
  auto adjacent = [&](std::size_t a, std::size_t b) {
    return dag.has_edge(a, b) || dag.has_edge(b, a);
  };
  for (const auto& [p, c] : dag.edges()) und[p][c] = und[c][p] = true;
  auto orient = [&](std::size_t a, std::size_t b) {
    und[a][b] = und[b][a] = false;
    dir[a][b] = true;
  };

  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t a = 0; a < d; ++a) {
      if (!dag.has_edge(a, c)) continue;
      for (std::size_t b = a + 1; b < d; ++b) {
        if (dag.has_edge(b, c) && !adjacent(a, b)) {
          orient(a, c);
          orient(b, c);
        }
      }
    }
  }

  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) {
        if (!und[a][b]) continue;
        bool compel = false;
        for (std::size_t c = 0; c < d && !compel; ++c) {
          // Meek 1: c -> a - b, c and b not adjacent.
          if (dir[c][a] && c != b && !adjacent(c, b)) compel = true;
          // Meek 2: a -> c -> b with a - b.
          if (dir[a][c] && dir[c][b]) compel = true;
        }
        // Meek 3: a - c -> b, a - e -> b, c and e not adjacent.
        for (std::size_t c = 0; c < d && !compel; ++c) {
          if (!(und[a][c] && dir[c][b])) continue;
          for (std::size_t e = c + 1; e < d && !compel; ++e) {
            if (und[a][e] && dir[e][b] && !adjacent(c, e)) compel = true;
          }
        }
        if (compel) {
          orient(a, b);
          changed = true;
        }
      }
    }
  }

  Cpdag out;
  out.node_count = d;
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      if (dir[a][b]) out.directed.emplace_back(a, b);
      if (a < b && und[a][b]) out.undirected.emplace_back(a, b);
    }
  }
  return out;
}

namespace {

// 0 absent, 1 lo -> hi, 2 hi -> lo, 3 undirected; indexed lo * d + hi.
std::vector<int> pair_status(const Cpdag& g) {
  const std::size_t d = g.node_count;
  std::vector<int> s(d * d, 0);
  for (const auto& [a, b] : g.directed) s[std::min(a, b) * d + std::max(a, b)] = a < b ? 1 : 2;
  for (const auto& [a, b] : g.undirected) s[a * d + b] = 3;
  return s;
}

}  // namespace

double expected_shd(const std::vector<Dag>& samples, const Dag& truth) {
  if (samples.empty()) throw std::invalid_argument("expected_shd: no samples");
  const auto ref = pair_status(dag_to_cpdag(truth));
  double total = 0.0;
  for (const auto& s : samples) {
    if (s.node_count() != truth.node_count()) {
      throw std::invalid_argument("expected_shd: sample size differs from truth");
    }
    const auto st = pair_status(dag_to_cpdag(s));
    for (std::size_t k = 0; k < st.size(); ++k) total += st[k] != ref[k] ? 1.0 : 0.0;
  }
  return total / static_cast<double>(samples.size());
}

std::vector<double> edge_marginals(const std::vector<Dag>& samples) {
  if (samples.empty()) return {};
  const std::size_t d = samples.front().node_count();
  std::vector<double> m(d * d, 0.0);
  for (const auto& s : samples) {
    for (const auto& [p, c] : s.edges()) m[p * d + c] += 1.0;
  }
  for (double& x : m) x /= static_cast<double>(samples.size());
  return m;
}

double auroc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auroc: size mismatch");
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
  const auto neg = static_cast<double>(labels.size()) - pos;
  if (pos == 0.0 || neg == 0.0) {
    throw std::invalid_argument("auroc: labels must contain both classes");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double area = 0.0, tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    double dtp = 0.0, dfp = 0.0;
    std::size_t j = i;
    for (; j < order.size() && scores[order[j]] == scores[order[i]]; ++j) {
      (labels[order[j]] ? dtp : dfp) += 1.0;
    }
    area += dfp * (tp + 0.5 * dtp);
    tp += dtp;
    fp += dfp;
    i = j;
  }
  return area / (pos * neg);
}

double edge_auroc(const std::vector<Dag>& samples, const Dag& truth) {
  if (samples.empty()) throw std::invalid_argument("edge_auroc: no samples");
  const std::size_t d = truth.node_count();
  const auto m = edge_marginals(samples);
  std::vector<double> scores;
  std::vector<bool> labels;
  for (std::size_t p = 0; p < d; ++p) {
    for (std::size_t c = 0; c < d; ++c) {
      if (p == c) continue;
      scores.push_back(m[p * d + c]);
      labels.push_back(truth.has_edge(p, c));
    }
  }
  return auroc(scores, labels);
}

double mll(const std::vector<Dag>& samples, const LocalScorer& test_scorer) {
  if (samples.empty()) throw std::invalid_argument("mll: no samples");
  std::vector<double> scores;
  scores.reserve(samples.size());
  for (const auto& s : samples) scores.push_back(score_graph(test_scorer, s));
  return log_sum_exp(scores) - std::log(static_cast<double>(samples.size()));
}

double mean_edges(const std::vector<Dag>& samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) total += static_cast<double>(s.edge_count());
  return total / static_cast<double>(samples.size());
}

std::string metrics_csv_header() { return "method,d,seed,e_shd,auroc,mll,mean_edges"; }

std::string metrics_csv_row(const MetricsRow& r) {
  return r.method + "," + std::to_string(r.d) + "," + std::to_string(r.seed) + "," +
         format_double(r.e_shd) + "," + format_double(r.auroc) + "," + format_double(r.mll) +
         "," + format_double(r.mean_edges);
}

PosteriorSamples sample_posterior(const BackendSet& backends, const McmcConfig& config,
                                  std::uint64_t seed) {
  PosteriorSamples out;
  out.orderings = order_mcmc(backends, config, seed);
  Rng rng = make_rng(seed, 0xDA6);
  out.dags.reserve(out.orderings.size());
  for (const auto& sigma : out.orderings) out.dags.push_back(sample_dag(backends, sigma, rng));
  return out;
}

MetricsRow evaluate_samples(const std::string& method, std::uint64_t seed,
                            const std::vector<Dag>& samples, const Dag& truth,
                            const LocalScorer& test_scorer) {
  MetricsRow r;
  r.method = method;
  r.d = truth.node_count();
  r.seed = seed;
  r.e_shd = expected_shd(samples, truth);
  r.auroc = edge_auroc(samples, truth);
  r.mll = mll(samples, test_scorer);
  r.mean_edges = mean_edges(samples);
  return r;
}

std::string dags_to_jsonl(const std::vector<Dag>& dags) {
  std::string out;
  for (const auto& g : dags) {
    nlohmann::json j;
    j["d"] = g.node_count();
    j["edges"] = nlohmann::json::array();
    for (const auto& [p, c] : g.edges()) j["edges"].push_back({p, c});
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace pcmarg
