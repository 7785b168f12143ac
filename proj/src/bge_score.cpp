#include "pcmarg/bge_score.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace pcmarg {
namespace {

constexpr double kLogPi = 1.14472988584940017414;

// log of the multivariate gamma function Gamma_p(x).
double log_multivariate_gamma(double x, std::size_t p) {
  double acc = 0.25 * static_cast<double>(p) * static_cast<double>(p - 1) * kLogPi;
  for (std::size_t j = 1; j <= p; ++j) acc += std::lgamma(x + 0.5 * (1.0 - static_cast<double>(j)));
  return acc;
}

std::vector<Eigen::Index> members(ParentMask subset) {
  std::vector<Eigen::Index> idx;
  while (subset) {
    idx.push_back(std::countr_zero(subset));
    subset &= subset - 1;
  }
  return idx;
}

// log det of the principal submatrix on `idx`; NaN when not positive definite.
double log_det_sub(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
  const auto l = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd sub(l, l);
  for (Eigen::Index a = 0; a < l; ++a) {
    for (Eigen::Index b = 0; b < l; ++b) sub(a, b) = m(idx[a], idx[b]);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sub);
  if (llt.info() != Eigen::Success) return std::nan("");
  double acc = 0.0;
  for (Eigen::Index a = 0; a < l; ++a) acc += std::log(llt.matrixL()(a, a));
  return 2.0 * acc;
}

}  // namespace

ScatterStats compute_stats(const DataMatrix& data) {
  if (data.rows() < 1) throw std::invalid_argument("compute_stats: need at least one observation");
  ScatterStats s;
  s.n = static_cast<std::size_t>(data.rows());
  s.mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd centered = data.rowwise() - s.mean.transpose();
  s.scatter = centered.transpose() * centered;
  return s;
}

BgeParams BgeParams::defaults(std::size_t node_count) {
  BgeParams p;
  const auto d = static_cast<double>(node_count);
  p.alpha_mu = 1.0;
  p.alpha_w = d + 2.0;
  p.prior_mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(node_count));
  const double t = p.alpha_mu * (p.alpha_w - d - 1.0) / (p.alpha_mu + 1.0);
  p.prior_scale = t * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(node_count),
                                                static_cast<Eigen::Index>(node_count));
  return p;
}

LocalScorer::LocalScorer(ScatterStats stats, BgeParams params, StructuralPrior prior)
    : stats_(std::move(stats)), params_(std::move(params)), prior_(prior) {
  const auto d = stats_.mean.size();
  if (d == 0 || d > 64) throw std::invalid_argument("LocalScorer: node count must be in [1, 64]");
  if (params_.prior_mean.size() != d || params_.prior_scale.rows() != d ||
      params_.prior_scale.cols() != d) {
    throw std::invalid_argument("LocalScorer: hyperparameter dimensions do not match data");
  }
  if (!(params_.alpha_mu > 0.0)) throw std::invalid_argument("LocalScorer: alpha_mu must be > 0");
  if (!(params_.alpha_w > static_cast<double>(d) - 1.0)) {
    throw std::invalid_argument("LocalScorer: alpha_w must exceed d - 1");
  }
  if (Eigen::LLT<Eigen::MatrixXd>(params_.prior_scale).info() != Eigen::Success) {
    throw std::invalid_argument("LocalScorer: prior_scale must be positive definite");
  }
  const double n = static_cast<double>(stats_.n);
  const Eigen::VectorXd diff = params_.prior_mean - stats_.mean;
  posterior_scale_ = params_.prior_scale + stats_.scatter +
                     (n * params_.alpha_mu / (n + params_.alpha_mu)) * diff * diff.transpose();
}

LocalScorer::LocalScorer(const DataMatrix& data)
    : LocalScorer(compute_stats(data), BgeParams::defaults(static_cast<std::size_t>(data.cols()))) {}

LocalScorer::LocalScorer(const LocalScorer& other)
    : stats_(other.stats_),
      params_(other.params_),
      prior_(other.prior_),
      posterior_scale_(other.posterior_scale_) {}

double LocalScorer::compute_subset(ParentMask subset) const {
  if (subset == 0) return 0.0;
  const auto idx = members(subset);
  const auto l = static_cast<double>(idx.size());
  const double n = static_cast<double>(stats_.n);
  const double d = static_cast<double>(node_count());
  const double a = params_.alpha_w - d + l;
  const double log_det_prior = log_det_sub(params_.prior_scale, idx);
  const double log_det_post = log_det_sub(posterior_scale_, idx);
  return -0.5 * n * l * kLogPi + 0.5 * l * std::log(params_.alpha_mu / (n + params_.alpha_mu)) +
         log_multivariate_gamma(0.5 * (n + a), idx.size()) -
         log_multivariate_gamma(0.5 * a, idx.size()) + 0.5 * a * log_det_prior -
         0.5 * (n + a) * log_det_post;
}

double LocalScorer::subset_log_marginal(ParentMask subset) const {
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = subset_cache_.find(subset); it != subset_cache_.end()) return it->second;
  }
  const double v = compute_subset(subset);
  std::lock_guard lock(cache_mutex_);
  subset_cache_.emplace(subset, v);
  return v;
}

double LocalScorer::log_structure_prior(std::size_t, ParentMask) const {
  switch (prior_) {
    case StructuralPrior::Uniform:
      return 0.0;
  }
  return 0.0;
}

double LocalScorer::local_score(std::size_t child, ParentMask parents) const {
  if (child >= node_count()) throw std::invalid_argument("local_score: child out of range");
  if (parents >> child & 1U) throw std::invalid_argument("local_score: child in its own parent set");
  if (node_count() < 64 && (parents >> node_count()) != 0) {
    throw std::invalid_argument("local_score: parent index out of range");
  }
  const std::pair key{child, parents};
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = local_cache_.find(key); it != local_cache_.end()) return it->second;
  }
  const double v = log_structure_prior(child, parents) +
                   subset_log_marginal(parents | ParentMask{1} << child) -
                   subset_log_marginal(parents);
  if (!std::isfinite(v)) {
    throw std::domain_error("local_score: non-finite BGe score (singular scatter submatrix)");
  }
  std::lock_guard lock(cache_mutex_);
  local_cache_.emplace(key, v);
  return v;
}

double LocalScorer::local_score(const QueryPattern& pattern) const {
  if (pattern.node_count() != node_count()) {
    throw std::invalid_argument("local_score: pattern length does not match node count");
  }
  if (!pattern.is_complete()) {
    throw std::invalid_argument("local_score: pattern has marginalized positions");
  }
  return local_score(pattern.target(), pattern.one_mask());
}

void LocalScorer::dump_cache_csv(std::ostream& out) const {
  std::vector<std::pair<std::pair<std::size_t, ParentMask>, double>> rows;
  {
    std::lock_guard lock(cache_mutex_);
    rows.assign(local_cache_.begin(), local_cache_.end());
  }
  std::sort(rows.begin(), rows.end());
  out << "child,pattern,score\n";
  char buf[40];
  for (const auto& [key, score] : rows) {
    const auto q = QueryPattern::from_parents(node_count(), key.first, key.second);
    std::snprintf(buf, sizeof buf, "%.17g", score);
    out << key.first << ',' << q.to_string() << ',' << buf << '\n';
  }
}

std::size_t LocalScorer::cache_size() const {
  std::lock_guard lock(cache_mutex_);
  return local_cache_.size();
}

double score_graph(const LocalScorer& scorer, const Dag& dag) {
  if (dag.node_count() != scorer.node_count()) {
    throw std::invalid_argument("score_graph: graph and scorer node counts differ");
  }
  double total = 0.0;
  for (std::size_t v = 0; v < dag.node_count(); ++v) total += scorer.local_score(v, dag.parents(v));
  return total;
}

}  // namespace pcmarg
