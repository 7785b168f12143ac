#pragma once
// BGe local scores for linear-Gaussian networks.
//
// The marginal likelihood of a child given parents P is the ratio
// p(D_{P+child}) / p(D_P) of closed-form subset likelihoods under a
// Normal-Wishart prior, which makes the score equivalent across
// Markov-equivalent DAGs.

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <mutex>
#include <unordered_map>

#include "pcmarg/query_pattern.hpp"
#include "pcmarg/synthesis.hpp"

namespace pcmarg {

struct ScatterStats {
  std::size_t n = 0;
  Eigen::VectorXd mean;
  // sum_r (x_r - mean)(x_r - mean)^T
  Eigen::MatrixXd scatter;
};

ScatterStats compute_stats(const DataMatrix& data);

struct BgeParams {
  double alpha_mu = 1.0;
  double alpha_w = 0.0;
  Eigen::VectorXd prior_mean;
  Eigen::MatrixXd prior_scale;

  // alpha_mu = 1, alpha_w = d + 2, zero prior mean and
  // prior_scale = alpha_mu (alpha_w - d - 1) / (alpha_mu + 1) * I.
  static BgeParams defaults(std::size_t node_count);
};

enum class StructuralPrior { Uniform };

class LocalScorer {
 public:
  LocalScorer(ScatterStats stats, BgeParams params,
              StructuralPrior prior = StructuralPrior::Uniform);
  // Default hyperparameters for the data's dimension.
  explicit LocalScorer(const DataMatrix& data);

  LocalScorer(const LocalScorer& other);
  LocalScorer& operator=(const LocalScorer&) = delete;

  std::size_t node_count() const { return static_cast<std::size_t>(stats_.mean.size()); }
  const ScatterStats& stats() const { return stats_; }
  const BgeParams& params() const { return params_; }

  // log p_pr(parents) + log p(D_child | D_parents). Throws std::domain_error
  // when a scatter submatrix is numerically singular.
  double local_score(std::size_t child, ParentMask parents) const;
  // Pattern must be complete; the child is pattern.target().
  double local_score(const QueryPattern& pattern) const;

  // log p(D_Y) for the variable subset Y; 0 for the empty set.
  double subset_log_marginal(ParentMask subset) const;

  // Structural prior term; 0 for the uniform prior.
  double log_structure_prior(std::size_t child, ParentMask parents) const;

  // "child,pattern,score" rows for every cached local score, sorted.
  void dump_cache_csv(std::ostream& out) const;
  std::size_t cache_size() const;

 private:
  double compute_subset(ParentMask subset) const;

  ScatterStats stats_;
  BgeParams params_;
  StructuralPrior prior_;
  Eigen::MatrixXd posterior_scale_;  // R = T + S + n a_mu/(n + a_mu) (nu - mean)(nu - mean)^T

  struct KeyHash {
    std::size_t operator()(const std::pair<std::size_t, ParentMask>& k) const {
      return std::hash<ParentMask>{}(k.second * 0x9E3779B97F4A7C15ULL + k.first);
    }
  };
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<ParentMask, double> subset_cache_;
  mutable std::unordered_map<std::pair<std::size_t, ParentMask>, double, KeyHash> local_cache_;
};

// Sum of per-node local scores.
double score_graph(const LocalScorer& scorer, const Dag& dag);

}  // namespace pcmarg
