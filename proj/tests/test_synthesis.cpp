#include "doctest.h"

#include <boost/math/distributions/binomial.hpp>

#include <cmath>

#include "oracles.hpp"
#include "pcmarg/synthesis.hpp"

using namespace pcmarg;

TEST_CASE("ER DAGs are acyclic and sized as requested") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Dag g = generate_er_dag(16, 2.0, seed);
    CHECK(g.node_count() == 16);
    CHECK(g.is_acyclic());
    CHECK(g.topological_order().size() == 16);
  }
  const Dag single = generate_er_dag(1, 2.0, 0);
  CHECK(single.node_count() == 1);
  CHECK(single.edge_count() == 0);
  CHECK(generate_er_dag(8, 2.0, 5) == generate_er_dag(8, 2.0, 5));
}

TEST_CASE("ER edge counts follow the binomial law") {
  const std::size_t d = 10, draws = 10000;
  const std::size_t pairs = d * (d - 1) / 2;
  const double p = er_edge_probability(d, 2.0);
  CHECK(p == doctest::Approx(20.0 / 45.0));
  std::vector<double> counts(pairs + 1, 0.0);
  double sum = 0.0, sum_sq = 0.0;
  for (std::uint64_t s = 0; s < draws; ++s) {
    const double e = static_cast<double>(generate_er_dag(d, 2.0, s).edge_count());
    counts[static_cast<std::size_t>(e)] += 1.0;
    sum += e;
    sum_sq += e * e;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sum_sq / draws - mean * mean) / draws);
  CHECK(std::fabs(mean - 20.0) < 3.0 * se);

  // Pool bins with small expectation into the tails.
  boost::math::binomial_distribution<double> law(static_cast<double>(pairs), p);
  std::vector<double> obs, exp;
  double o_acc = 0.0, e_acc = 0.0;
  for (std::size_t k = 0; k <= pairs; ++k) {
    o_acc += counts[k];
    e_acc += draws * boost::math::pdf(law, static_cast<double>(k));
    if (e_acc >= 20.0) {
      obs.push_back(o_acc);
      exp.push_back(e_acc);
      o_acc = e_acc = 0.0;
    }
  }
  obs.back() += o_acc;
  exp.back() += e_acc;
  CHECK(oracle::chi_square_pvalue(obs, exp) > 0.01);
}

TEST_CASE("mechanism weights and variances stay in range") {
  const Dag g = generate_er_dag(12, 2.0, 3);
  const GroundTruthBn bn = generate_mechanisms(g, 3);
  CHECK(bn.edge_weights.size() == g.edge_count());
  for (const auto& [e, w] : bn.edge_weights) {
    CHECK(g.has_edge(e.first, e.second));
    CHECK(std::fabs(w) >= 0.5);
    CHECK(std::fabs(w) <= 2.0);
  }
  for (double v : bn.noise_variances) {
    CHECK(v >= 0.5);
    CHECK(v <= 2.0);
  }
  CHECK(generate_mechanisms(Dag(4), 0).edge_weights.empty());
  const GroundTruthBn again = generate_mechanisms(g, 3);
  CHECK(again.edge_weights == bn.edge_weights);
  CHECK(again.noise_variances == bn.noise_variances);
}

TEST_CASE("sampled data has the implied covariance") {
  SUBCASE("independent unit-variance variables") {
    GroundTruthBn bn{Dag(3), {}, {1.0, 1.0, 1.0}};
    const DataMatrix x = sample_data(bn, 100000, 11);
    const DataMatrix c = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd cov = c.transpose() * c / static_cast<double>(x.rows() - 1);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(std::fabs(cov(i, j) - (i == j ? 1.0 : 0.0)) < 0.05);
  }
  SUBCASE("chain regression slope equals the edge weight") {
    GroundTruthBn bn{Dag(2, {{0, 1}}), {{{0, 1}, -1.3}}, {0.8, 1.5}};
    const DataMatrix x = sample_data(bn, 100000, 12);
    const double mx = x.col(0).mean(), my = x.col(1).mean();
    const double cov = ((x.col(0).array() - mx) * (x.col(1).array() - my)).sum();
    const double var = (x.col(0).array() - mx).square().sum();
    CHECK(std::fabs(cov / var - (-1.3)) < 0.05);
  }
  const GroundTruthBn bn = generate_mechanisms(generate_er_dag(16, 2.0, 1), 1);
  const DataMatrix x = sample_data(bn, 100, 1);
  CHECK(x.rows() == 100);
  CHECK(x.cols() == 16);
  CHECK(x == sample_data(bn, 100, 1));
}

TEST_CASE("file formats round-trip exactly") {
  const GroundTruthBn bn = generate_mechanisms(generate_er_dag(7, 2.0, 9), 9);
  const DataMatrix x = sample_data(bn, 25, 9);
  CHECK(data_from_csv(data_to_csv(x)) == x);
  CHECK(dag_from_json(dag_to_json(bn.dag)) == bn.dag);
  const GroundTruthBn back = bn_from_json(bn_to_json(bn));
  CHECK(back.dag == bn.dag);
  CHECK(back.edge_weights == bn.edge_weights);
  CHECK(back.noise_variances == bn.noise_variances);

  const GroundTruthBn one{Dag(1), {}, {1.0}};
  const std::string csv = data_to_csv(sample_data(one, 4, 0));
  CHECK(csv.find(',') == std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("invalid graphs are rejected") {
  CHECK_THROWS_AS(Dag(3, {{0, 1}, {1, 2}, {2, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(Dag(3, {{1, 1}}), std::invalid_argument);
  CHECK_THROWS_AS(Dag(3, {{0, 5}}), std::invalid_argument);
  Dag g(3);
  g.add_edge(0, 1);
  g.add_edge(1, 0);
  CHECK_FALSE(g.is_acyclic());
  CHECK(g.topological_order().empty());
}
