#include "doctest.h"

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "pcmarg/circuit.hpp"
#include "pcmarg/random.hpp"
#include "pcmarg/simd/kernels.hpp"

using namespace pcmarg;

namespace {

Circuit make(std::size_t m, std::size_t n, std::uint64_t seed, double mult = -10.0) {
  return Circuit(CircuitConfig{m, n, seed, mult});
}

std::vector<VarState> decode(std::size_t code, std::size_t m, std::size_t base) {
  std::vector<VarState> s(m);
  for (auto& v : s) {
    v = static_cast<VarState>(code % base);
    code /= base;
  }
  return s;
}

std::size_t ipow(std::size_t b, std::size_t e) {
  std::size_t r = 1;
  while (e--) r *= b;
  return r;
}

// log-sum-exp over all completions, each evaluated as a complete pattern.
double by_completion(const Circuit& c, const std::vector<VarState>& s) {
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i] == VarState::Marginalized) free.push_back(i);
  std::vector<double> terms;
  for (std::size_t b = 0; b < (std::size_t{1} << free.size()); ++b) {
    auto t = s;
    for (std::size_t k = 0; k < free.size(); ++k)
      t[free[k]] = (b >> k & 1U) ? VarState::One : VarState::Zero;
    terms.push_back(c.evaluate(t));
  }
  return oracle::lse(terms);
}

}  // namespace

TEST_CASE("layer shapes halve down to one row") {
  const Circuit c = make(8, 4, 0);
  CHECK(c.layer_rows() == std::vector<std::size_t>{8, 4, 4, 2, 2, 1, 1});
  CHECK(c.levels() == 3);
  CHECK(c.parameter_count() == 8 * 4 * 2 + (4 + 2 + 1) * 16 + 4);
  const Circuit one = make(1, 3, 0);
  CHECK(one.padded_variables() == 1);
  CHECK(one.levels() == 0);
  CHECK(one.layer_rows() == std::vector<std::size_t>{1});
}

TEST_CASE("padding rows contribute nothing") {
  const Circuit c = make(7, 3, 1);
  CHECK(c.padded_variables() == 8);
  const auto p = c.parameters();
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(p[c.leaf_index(7, k, VarState::Zero)] == std::log(0.5));
    CHECK(p[c.leaf_index(7, k, VarState::One)] == std::log(0.5));
    CHECK_FALSE(c.is_trainable(c.leaf_index(7, k, VarState::Zero)));
  }
  Circuit edited = c;
  std::vector<double> values(p.begin(), p.end());
  values[c.leaf_index(7, 0, VarState::One)] = 5.0;
  edited.set_parameters(values);
  CHECK(edited.parameters()[c.leaf_index(7, 0, VarState::One)] == std::log(0.5));
  CHECK(edited.evaluate(QueryPattern::parse("0101m10", 0)) == c.evaluate(QueryPattern::parse("0101m10", 0)));
  const auto g = c.backward(QueryPattern::parse("m10m1m0", 0));
  CHECK(g[c.leaf_index(7, 1, VarState::Zero)] == 0.0);

  // A marginalized unit leaf contributes log 1.
  std::vector<double> unit(make(1, 1, 0).parameter_count(), 0.0);
  Circuit tiny(CircuitConfig{1, 1, 0, -10.0}, {0}, unit);
  unit[tiny.leaf_index(0, 0, VarState::Zero)] = std::log(0.5);
  unit[tiny.leaf_index(0, 0, VarState::One)] = std::log(0.5);
  tiny.set_parameters(unit);
  CHECK(tiny.evaluate(QueryPattern::parse("m", 1)) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("equal seeds give identical circuits") {
  const Circuit a = make(6, 5, 42), b = make(6, 5, 42), c = make(6, 5, 43);
  CHECK(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  CHECK(a.permutation() == b.permutation());
  CHECK_FALSE(std::equal(a.parameters().begin(), a.parameters().end(), c.parameters().begin()));
}

TEST_CASE("forward pass matches the direct definition") {
  for (double mult : {-10.0, -1.0, 3.0}) {
    const Circuit c = make(5, 4, 7, mult);
    for (std::size_t code = 0; code < ipow(3, 5); code += 7) {
      const auto s = decode(code, 5, 3);
      const double want = oracle::naive_circuit(c, s);
      CHECK(std::fabs(c.evaluate(s) - want) < 1e-10 * std::max(1.0, std::fabs(want)));
    }
  }
}

TEST_CASE("marginalization is exact for every pattern") {
  for (std::size_t m : {3u, 6u}) {
    const Circuit c = make(m, 3, 11 + m);
    for (std::size_t code = 0; code < ipow(3, m); ++code) {
      const auto s = decode(code, m, 3);
      REQUIRE(std::fabs(c.evaluate(s) - by_completion(c, s)) < 1e-8);
    }
  }
  const Circuit c = make(6, 4, 2);
  auto s = decode(200, 6, 3);
  for (std::size_t i = 0; i < 6; ++i) {
    if (s[i] == VarState::Marginalized) continue;
    auto z = s, o = s, mg = s;
    z[i] = VarState::Zero;
    o[i] = VarState::One;
    mg[i] = VarState::Marginalized;
    CHECK(std::fabs(c.evaluate(mg) - log_add_exp(c.evaluate(z), c.evaluate(o))) < 1e-10);
  }
}

TEST_CASE("normalizing constant") {
  Circuit c = make(4, 2, 0);
  c.set_parameters(std::vector<double>(c.parameter_count(), 0.0));
  // Pad-free: 4 leaf rows, sum rows 2 + 1, then the root.
  const double want = 4 * std::log(2.0) + 3 * std::log(2.0) + std::log(2.0);
  CHECK(c.normalizing_constant() == doctest::Approx(want).epsilon(1e-14));
  CHECK(std::fabs(c.normalizing_constant() - by_completion(c, decode(ipow(3, 4) - 1, 4, 3))) < 1e-12);

  const Circuit r = make(6, 3, 9);
  const double z = r.normalizing_constant();
  for (std::size_t code = 0; code < 64; ++code) CHECK(r.evaluate(decode(code, 6, 2)) <= z);
  CHECK(r.normalizing_constant() == z);
}

TEST_CASE("batch evaluation is bit-identical to single calls") {
  const Circuit c = make(9, 8, 5);
  std::vector<QueryPattern> qs;
  Rng rng = make_rng(1);
  for (int i = 0; i < 10000; ++i) {
    std::vector<VarState> s(9);
    for (auto& v : s) v = static_cast<VarState>(uniform_index(rng, 3));
    qs.emplace_back(0, s);
  }
  const auto batch = c.evaluate_batch(qs);
  REQUIRE(batch.size() == qs.size());
  for (std::size_t i = 0; i < qs.size(); ++i) REQUIRE(batch[i] == c.evaluate(qs[i]));
  CHECK(c.evaluate_batch({}).empty());
}

TEST_CASE("gradients") {
  const Circuit c = make(4, 3, 21);
  const QueryPattern q = QueryPattern::parse("0m1m", 0);
  const auto g = c.backward(q);

  double root_sum = 0.0;
  for (std::size_t k = 0; k < 3; ++k) root_sum += g[c.root_index(k)];
  CHECK(root_sum == doctest::Approx(1.0).epsilon(1e-12));

  // Position 0 is Zero: its theta_1 is unused.
  const std::size_t row = std::find(c.permutation().begin(), c.permutation().end(), 0) - c.permutation().begin();
  for (std::size_t k = 0; k < 3; ++k) CHECK(g[c.leaf_index(row, k, VarState::One)] == 0.0);

  SUBCASE("central differences") {
    for (double mult : {-10.0, -1.0}) {
      Circuit w = make(4, 3, 33, mult);
      Rng rng = make_rng(3);
      for (int t = 0; t < 5; ++t) {
        std::vector<VarState> s(4);
        for (auto& v : s) v = static_cast<VarState>(uniform_index(rng, 3));
        const auto an = w.backward(QueryPattern(0, s));
        // Difference quotients resolve about eps * |f| / h; scale the floor with |f|.
        const double floor = 1e-6 * std::max(1.0, std::fabs(w.evaluate(s)));
        std::vector<double> p(w.parameters().begin(), w.parameters().end());
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double h = 1e-4, keep = p[i];
          p[i] = keep + h;
          w.set_parameters(p);
          const double up = w.evaluate(s);
          p[i] = keep - h;
          w.set_parameters(p);
          const double dn = w.evaluate(s);
          p[i] = keep;
          w.set_parameters(p);
          const double fd = (up - dn) / (2 * h);
          CHECK(std::fabs(an[i] - fd) / std::max({std::fabs(an[i]), std::fabs(fd), floor}) < 1e-4);
        }
      }
    }
  }

  SUBCASE("accumulating form scales and adds") {
    LogValueGrid grid = c.make_grid();
    std::vector<double> acc(c.parameter_count(), 1.0);
    c.forward(q.states(), grid);
    c.backward(grid, 0.5, acc);
    for (std::size_t i = 0; i < acc.size(); ++i) CHECK(acc[i] == doctest::Approx(1.0 + 0.5 * g[i]).epsilon(1e-14));
  }
}

TEST_CASE("scalar and AVX2 kernels give the same circuit values") {
  const Circuit c = make(12, 16, 8);
  Rng rng = make_rng(4);
  for (int t = 0; t < 200; ++t) {
    std::vector<VarState> s(12);
    for (auto& v : s) v = static_cast<VarState>(uniform_index(rng, 3));
    double scalar;
    std::vector<double> gs;
    {
      simd::ScopedKernels pin(simd::Isa::Scalar);
      scalar = c.evaluate(s);
      gs = c.backward(QueryPattern(0, s));
    }
    CHECK(std::fabs(scalar - c.evaluate(s)) < 1e-11 * std::max(1.0, std::fabs(scalar)));
    const auto gw = c.backward(QueryPattern(0, s));
    for (std::size_t i = 0; i < gs.size(); ++i) CHECK(std::fabs(gs[i] - gw[i]) < 1e-11);
  }
}

TEST_CASE("scope audit") {
  for (std::size_t m : {1u, 2u, 5u, 8u, 13u}) {
    const ScopeAudit a = make(m, 2, m).audit_scopes();
    INFO(a.detail);
    CHECK(a.ok());
  }
}

TEST_CASE("serialization round-trips bit-exactly") {
  const Circuit c = make(7, 5, 77);
  const std::string bytes = c.serialize();
  CHECK(bytes.find("\"format\":\"pcmarg-circuit\"") != std::string::npos);
  const Circuit back = Circuit::deserialize(bytes);
  CHECK(back.permutation() == c.permutation());
  CHECK(std::equal(back.parameters().begin(), back.parameters().end(), c.parameters().begin()));
  CHECK(back.serialize() == bytes);
  CHECK_THROWS(Circuit::deserialize(bytes.substr(0, bytes.size() - 8)));
  CHECK_THROWS(Circuit::deserialize("not a circuit"));
}

TEST_CASE("pattern length must match") {
  const Circuit c = make(4, 2, 0);
  CHECK_THROWS_AS(c.evaluate(QueryPattern::parse("000", 0)), std::invalid_argument);
}
