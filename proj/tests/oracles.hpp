#pragma once
// Independent brute-force references used by the unit and acceptance tests.

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <vector>

#include "pcmarg/bge_score.hpp"
#include "pcmarg/circuit.hpp"
#include "pcmarg/log_math.hpp"
#include "pcmarg/synthesis.hpp"

namespace oracle {

using pcmarg::Dag;
using pcmarg::Edge;
using pcmarg::ParentMask;

inline double lse(const std::vector<double>& xs) {
  long double hi = -INFINITY;
  for (double x : xs) hi = std::max<long double>(hi, x);
  if (std::isinf(static_cast<double>(hi))) return static_cast<double>(hi);
  long double acc = 0;
  for (double x : xs) acc += std::exp(static_cast<long double>(x) - hi);
  return static_cast<double>(hi + std::log(acc));
}

// Every DAG on d labelled nodes (d <= 4).
inline std::vector<Dag> all_dags(std::size_t d) {
  std::vector<Edge> pairs;
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a + 1; b < d; ++b) pairs.emplace_back(a, b);
  std::vector<Dag> out;
  std::size_t total = 1;
  for (std::size_t i = 0; i < pairs.size(); ++i) total *= 3;
  for (std::size_t code = 0; code < total; ++code) {
    Dag g(d);
    std::size_t c = code;
    for (const auto& [a, b] : pairs) {
      if (c % 3 == 1) g.add_edge(a, b);
      if (c % 3 == 2) g.add_edge(b, a);
      c /= 3;
    }
    if (g.is_acyclic()) out.push_back(g);
  }
  return out;
}

// Markov equivalence key: skeleton plus the set of unshielded colliders.
inline std::pair<std::set<Edge>, std::set<std::vector<std::size_t>>> mec_key(const Dag& g) {
  const std::size_t d = g.node_count();
  std::set<Edge> skel;
  std::set<std::vector<std::size_t>> vs;
  for (const auto& [p, c] : g.edges()) skel.emplace(std::min(p, c), std::max(p, c));
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a + 1; b < d; ++b)
        if (g.has_edge(a, c) && g.has_edge(b, c) && !g.has_edge(a, b) && !g.has_edge(b, a))
          vs.insert({a, c, b});
  return {skel, vs};
}

inline std::vector<std::vector<Dag>> equivalence_classes(std::size_t d) {
  std::map<decltype(mec_key(Dag(1))), std::vector<Dag>> classes;
  for (const auto& g : all_dags(d)) classes[mec_key(g)].push_back(g);
  std::vector<std::vector<Dag>> out;
  for (auto& [k, v] : classes) out.push_back(std::move(v));
  return out;
}

inline long double log_det(std::vector<std::vector<long double>> a) {
  const std::size_t n = a.size();
  long double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t piv = i;
    for (std::size_t r = i + 1; r < n; ++r)
      if (std::fabs(a[r][i]) > std::fabs(a[piv][i])) piv = r;
    std::swap(a[i], a[piv]);
    acc += std::log(std::fabs(a[i][i]));
    for (std::size_t r = i + 1; r < n; ++r) {
      const long double f = a[r][i] / a[i][i];
      for (std::size_t c = i; c < n; ++c) a[r][c] -= f * a[i][c];
    }
  }
  return acc;
}

// Closed-form BGe local score with default hyperparameters, written in the
// single-gamma form (one Gamma ratio and determinant ratio per node).
inline double bge_local(const pcmarg::DataMatrix& x, std::size_t child, ParentMask parents) {
  const std::size_t n = static_cast<std::size_t>(x.rows());
  const std::size_t d = static_cast<std::size_t>(x.cols());
  const long double am = 1.0L;
  const long double aw = static_cast<long double>(d) + 2.0L;
  const long double t = am * (aw - d - 1) / (am + 1);
  std::vector<long double> mean(d, 0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) mean[c] += x(r, c);
  for (auto& m : mean) m /= n;
  auto r_entry = [&](std::size_t a, std::size_t b) {
    long double s = 0;
    for (std::size_t r = 0; r < n; ++r) s += (x(r, a) - mean[a]) * (x(r, b) - mean[b]);
    const long double shrink = n * am / (n + am) * mean[a] * mean[b];
    return (a == b ? t : 0.0L) + s + shrink;
  };
  std::vector<std::size_t> pa;
  for (std::size_t v = 0; v < d; ++v)
    if (parents >> v & 1U) pa.push_back(v);
  auto sub = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::vector<long double>> m(idx.size(), std::vector<long double>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < idx.size(); ++j) m[i][j] = r_entry(idx[i], idx[j]);
    return m;
  };
  std::vector<std::size_t> fam = pa;
  fam.push_back(child);
  const long double l = pa.size();
  const long double ld_pa = pa.empty() ? 0.0L : log_det(sub(pa));
  const long double ld_fam = log_det(sub(fam));
  const long double v = 0.5L * std::log(am / (n + am)) - 0.5L * n * std::log(std::numbers::pi_v<long double>) +
                        std::lgamma((n + aw - d + l + 1) / 2) - std::lgamma((aw - d + l + 1) / 2) +
                        (aw - d + 2 * l + 1) / 2 * std::log(t) + (n + aw - d + l) / 2 * ld_pa -
                        (n + aw - d + l + 1) / 2 * ld_fam;
  return static_cast<double>(v);
}

// Direct recursive evaluation of the circuit definition without scaling
// tricks: leaves, pairwise products, log-sum-exp sums, root.
inline double naive_circuit(const pcmarg::Circuit& c, const std::vector<pcmarg::VarState>& s) {
  using pcmarg::VarState;
  const std::size_t n = c.latent();
  const auto p = c.parameters();
  std::vector<std::vector<double>> rows(c.padded_variables(), std::vector<double>(n));
  for (std::size_t r = 0; r < c.padded_variables(); ++r) {
    for (std::size_t k = 0; k < n; ++k) {
      const double t0 = p[c.leaf_index(r, k, VarState::Zero)];
      const double t1 = p[c.leaf_index(r, k, VarState::One)];
      const VarState st = r < c.variables() ? s[c.permutation()[r]] : VarState::Marginalized;
      rows[r][k] = st == VarState::Zero ? t0 : st == VarState::One ? t1 : lse({t0, t1});
    }
  }
  for (std::size_t l = 0; l < c.levels(); ++l) {
    std::vector<std::vector<double>> next(rows.size() / 2, std::vector<double>(n));
    for (std::size_t i = 0; i < next.size(); ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> terms;
        for (std::size_t k = 0; k < n; ++k)
          terms.push_back(p[c.sum_index(l, i, j, k)] + rows[2 * i][k] + rows[2 * i + 1][k]);
        next[i][j] = lse(terms);
      }
    }
    rows = std::move(next);
  }
  std::vector<double> terms;
  for (std::size_t k = 0; k < n; ++k) terms.push_back(p[c.root_index(k)] + rows[0][k]);
  return lse(terms);
}

// Pearson chi-square statistic and its upper-tail p-value.
inline double chi_square_pvalue(const std::vector<double>& observed, const std::vector<double>& expected) {
  double stat = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double diff = observed[i] - expected[i];
    stat += diff * diff / expected[i];
  }
  boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace oracle
