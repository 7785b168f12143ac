#include "pcmarg/trainer.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "pcmarg/io.hpp"
#include "pcmarg/stats.hpp"

namespace pcmarg {

TrainConfig TrainConfig::preset_d16() {
  TrainConfig c;
  c.latent = 256;
  c.phase1.train_size = 10000;
  c.phase1.val_size = 1000;
  c.phase1.batch_size = 500;
  c.phase1.lr = 1e-1;
  c.phase2.total_train = 20000;
  c.phase2.total_val = 2000;
  c.phase2.batch_size = 500;
  c.phase2.lr = 5e-3;
  c.phase2.marginal_limit = 7;
  c.phase2.epochs_per_iter = 20;
  return c;
}

TrainConfig TrainConfig::preset_d20() {
  TrainConfig c = preset_d16();
  c.latent = 64;
  c.phase1.batch_size = 1000;
  c.phase2.batch_size = 1000;
  c.phase1.train_size *= 2;
  c.phase1.val_size *= 2;
  c.phase2.total_train *= 2;
  c.phase2.total_val *= 2;
  c.candidate_size = 8;
  return c;
}

namespace {

using nlohmann::json;

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

TrainConfig train_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  TrainConfig c;
  read_opt(j, "latent", c.latent);
  read_opt(j, "init_multiplier", c.init_multiplier);
  read_opt(j, "seed", c.seed);
  if (j.contains("candidate_size") && !j.at("candidate_size").is_null()) {
    c.candidate_size = j.at("candidate_size").get<std::size_t>();
  }
  if (j.contains("optimizer")) {
    const auto name = j.at("optimizer").get<std::string>();
    if (name == "sgd") c.optimizer = OptimizerKind::Sgd;
    else if (name == "adam") c.optimizer = OptimizerKind::Adam;
    else throw std::invalid_argument("train config: unknown optimizer '" + name + "'");
  }
  if (j.contains("phase1")) {
    const auto& p = j.at("phase1");
    read_opt(p, "train_size", c.phase1.train_size);
    read_opt(p, "val_size", c.phase1.val_size);
    read_opt(p, "batch_size", c.phase1.batch_size);
    read_opt(p, "lr", c.phase1.lr);
    read_opt(p, "plateau_factor", c.phase1.plateau_factor);
    read_opt(p, "plateau_patience", c.phase1.plateau_patience);
    read_opt(p, "plateau_threshold", c.phase1.plateau_threshold);
    read_opt(p, "max_epochs", c.phase1.max_epochs);
    read_opt(p, "min_lr", c.phase1.min_lr);
  }
  if (j.contains("phase2")) {
    const auto& p = j.at("phase2");
    read_opt(p, "total_train", c.phase2.total_train);
    read_opt(p, "total_val", c.phase2.total_val);
    read_opt(p, "batch_size", c.phase2.batch_size);
    read_opt(p, "lr", c.phase2.lr);
    read_opt(p, "L", c.phase2.marginal_limit);
    read_opt(p, "epochs_per_iter", c.phase2.epochs_per_iter);
  }
  if (c.phase2.marginal_limit < 1) throw std::invalid_argument("train config: L must be >= 1");
  if (c.latent < 1) throw std::invalid_argument("train config: latent must be >= 1");
  if (c.phase1.batch_size < 1 || c.phase2.batch_size < 1) {
    throw std::invalid_argument("train config: batch sizes must be >= 1");
  }
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  json j;
  j["latent"] = c.latent;
  j["init_multiplier"] = c.init_multiplier;
  j["seed"] = c.seed;
  j["candidate_size"] = c.candidate_size ? json(*c.candidate_size) : json(nullptr);
  j["optimizer"] = c.optimizer == OptimizerKind::Adam ? "adam" : "sgd";
  j["phase1"] = {{"train_size", c.phase1.train_size},
                 {"val_size", c.phase1.val_size},
                 {"batch_size", c.phase1.batch_size},
                 {"lr", c.phase1.lr},
                 {"plateau_factor", c.phase1.plateau_factor},
                 {"plateau_patience", c.phase1.plateau_patience},
                 {"plateau_threshold", c.phase1.plateau_threshold},
                 {"max_epochs", c.phase1.max_epochs},
                 {"min_lr", c.phase1.min_lr}};
  j["phase2"] = {{"total_train", c.phase2.total_train},
                 {"total_val", c.phase2.total_val},
                 {"batch_size", c.phase2.batch_size},
                 {"lr", c.phase2.lr},
                 {"L", c.phase2.marginal_limit},
                 {"epochs_per_iter", c.phase2.epochs_per_iter}};
  return j.dump(2);
}

void LabeledSet::append(const LabeledSet& other) {
  patterns.insert(patterns.end(), other.patterns.begin(), other.patterns.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  sources.insert(sources.end(), other.sources.begin(), other.sources.end());
}

std::vector<QueryPattern> sample_complete(std::size_t node_count, std::size_t target,
                                          std::size_t count, Rng& rng) {
  std::vector<QueryPattern> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    QueryPattern q = QueryPattern::zeros(node_count, target);
    for (std::size_t p = 0; p < q.size(); ++p) {
      if (uniform_index(rng, 3) == 0) q[p] = VarState::One;
    }
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<QueryPattern> sample_marginal_queries(const CandidateSet& candidates, std::size_t k,
                                                  std::size_t count, bool with_one, Rng& rng) {
  const std::size_t needed = k + (with_one ? 1 : 0);
  if (needed > candidates.size()) {
    throw std::invalid_argument("sample_marginal_queries: k = " + std::to_string(k) +
                                (with_one ? " plus one fixed parent" : "") +
                                " exceeds the candidate set size " +
                                std::to_string(candidates.size()));
  }
  std::vector<QueryPattern> out;
  out.reserve(count);
  std::vector<std::size_t> pool = candidates.members;
  for (std::size_t i = 0; i < count; ++i) {
    // Partial Fisher-Yates: the first `needed` entries become a uniform sample.
    for (std::size_t t = 0; t < needed; ++t) {
      const auto j = t + uniform_index(rng, pool.size() - t);
      std::swap(pool[t], pool[j]);
    }
    QueryPattern q = QueryPattern::zeros(candidates.node_count, candidates.target);
    for (std::size_t t = 0; t < k; ++t) q.set_node(pool[t], VarState::Marginalized);
    if (with_one) q.set_node(pool[k], VarState::One);
    out.push_back(std::move(q));
  }
  return out;
}

LabeledSet label_with_scorer(const LocalScorer& scorer, std::vector<QueryPattern> patterns) {
  LabeledSet s;
  s.labels.reserve(patterns.size());
  for (const auto& q : patterns) s.labels.push_back(scorer.local_score(q));
  s.sources.assign(patterns.size(), LabelSource::Scorer);
  s.patterns = std::move(patterns);
  return s;
}

LabeledSet label_with_teacher(const DpTable& teacher, std::vector<QueryPattern> patterns) {
  LabeledSet s;
  s.labels.reserve(patterns.size());
  for (const auto& q : patterns) s.labels.push_back(dp_query(teacher, q));
  s.sources.assign(patterns.size(), LabelSource::DpTeacher);
  s.patterns = std::move(patterns);
  return s;
}

PlateauSchedule::PlateauSchedule(double lr, double factor, std::size_t patience, double threshold,
                                 double min_lr)
    : lr_(lr),
      factor_(factor),
      threshold_(threshold),
      min_lr_(min_lr),
      patience_(patience),
      best_(std::numeric_limits<double>::infinity()) {}

bool PlateauSchedule::observe(double loss) {
  if (loss < best_ - threshold_) {
    best_ = loss;
    stale_ = 0;
    return false;
  }
  if (++stale_ < patience_) return false;
  lr_ *= factor_;
  stale_ = 0;
  ++reductions_;
  return true;
}

std::string TrainReport::to_csv() const {
  std::string out = "epoch,phase,iteration,train_loss,val_loss,lr\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + std::to_string(e.phase) + "," +
           std::to_string(e.iteration) + "," + format_double(e.train_loss) + "," +
           format_double(e.val_loss) + "," + format_double(e.lr) + "\n";
  }
  return out;
}

double mean_squared_error(const Circuit& circuit, const LabeledSet& data) {
  if (data.size() == 0) return 0.0;
  LogValueGrid grid = circuit.make_grid();
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double diff = circuit.forward(data.patterns[i].states(), grid) - data.labels[i];
    acc += diff * diff;
  }
  return acc / static_cast<double>(data.size());
}

Optimizer::Optimizer(OptimizerKind kind, std::size_t n) : kind_(kind) {
  if (kind_ == OptimizerKind::Adam) {
    m_.assign(n, 0.0);
    v_.assign(n, 0.0);
    update_.assign(n, 0.0);
  }
}

void Optimizer::step(Circuit& circuit, std::span<const double> grad, double lr) {
  if (kind_ == OptimizerKind::Sgd) {
    circuit.apply_step(grad, lr);
    return;
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    update_[i] = (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
  }
  circuit.apply_step(update_, lr);
}

double train_epoch(Circuit& circuit, const LabeledSet& data, std::size_t batch_size, double lr,
                   Optimizer& opt, Rng& rng, const EpochTag& tag) {
  if (data.size() == 0) return 0.0;
  if (batch_size == 0) throw std::invalid_argument("train_epoch: batch size must be >= 1");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle(order.begin(), order.end(), rng);
  LogValueGrid grid = circuit.make_grid();
  std::vector<double> grad(circuit.parameter_count());
  double total = 0.0;
  for (std::size_t start = 0, batch = 0; start < order.size(); start += batch_size, ++batch) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    const double scale = 2.0 / static_cast<double>(end - start);
    std::fill(grad.begin(), grad.end(), 0.0);
    double batch_loss = 0.0;
    for (std::size_t t = start; t < end; ++t) {
      const std::size_t i = order[t];
      const double diff = circuit.forward(data.patterns[i].states(), grid) - data.labels[i];
      batch_loss += diff * diff;
      circuit.backward(grid, scale * diff, grad);
    }
    if (!std::isfinite(batch_loss)) {
      throw TrainingError("non-finite loss in phase " + std::to_string(tag.phase) +
                          ", iteration " + std::to_string(tag.iteration) + ", epoch " +
                          std::to_string(tag.epoch) + ", batch " + std::to_string(batch) +
                          " (samples " + std::to_string(start) + ".." + std::to_string(end) + ")");
    }
    total += batch_loss;
    opt.step(circuit, grad, lr);
  }
  return total / static_cast<double>(data.size());
}

LabeledSet curriculum_set(const LocalScorer& scorer, const DpTable& teacher, std::size_t k,
                          std::size_t total, Rng& rng) {
  const auto& cand = teacher.candidates();
  k = std::min(k, cand.size());
  const std::size_t n_marg = total / 2;
  const std::size_t n_one = k + 1 <= cand.size() ? n_marg / 2 : 0;
  auto queries = sample_marginal_queries(cand, k, n_marg - n_one, false, rng);
  if (n_one > 0) {
    auto ones = sample_marginal_queries(cand, k, n_one, true, rng);
    queries.insert(queries.end(), ones.begin(), ones.end());
  }
  LabeledSet s = label_with_teacher(teacher, std::move(queries));
  s.append(label_with_scorer(scorer, sample_complete(cand.node_count, cand.target, total - n_marg, rng)));
  return s;
}

void phase1_train(Circuit& circuit, const LocalScorer& scorer, std::size_t target,
                  const TrainConfig& config, Rng& rng, TrainReport& report) {
  const auto& p = config.phase1;
  const std::size_t d = scorer.node_count();
  const LabeledSet train = label_with_scorer(scorer, sample_complete(d, target, p.train_size, rng));
  const LabeledSet val = label_with_scorer(scorer, sample_complete(d, target, p.val_size, rng));

  Optimizer opt(config.optimizer, circuit.parameter_count());
  PlateauSchedule schedule(p.lr, p.plateau_factor, p.plateau_patience, p.plateau_threshold, p.min_lr);
  double best = mean_squared_error(circuit, val);
  report.initial_val_loss = best;
  std::vector<double> best_params(circuit.parameters().begin(), circuit.parameters().end());

  for (std::size_t e = 0; e < p.max_epochs && !schedule.exhausted(); ++e) {
    const double lr = schedule.lr();
    const EpochTag ctx{1, 0, report.epochs.size() + 1};
    const double train_loss = train_epoch(circuit, train, p.batch_size, lr, opt, rng, ctx);
    const double val_loss = mean_squared_error(circuit, val);
    if (!std::isfinite(val_loss)) {
      throw TrainingError("non-finite validation loss in phase 1, epoch " + std::to_string(ctx.epoch));
    }
    report.epochs.push_back({ctx.epoch, 1, 0, train_loss, val_loss, lr});
    if (val_loss < best) {
      best = val_loss;
      best_params.assign(circuit.parameters().begin(), circuit.parameters().end());
    }
    schedule.observe(val_loss);
  }
  circuit.set_parameters(best_params);
  report.phase1_best_val_loss = best;
}

void phase2_train(Circuit& circuit, const LocalScorer& scorer, const DpTable& teacher,
                  const TrainConfig& config, Rng& rng, TrainReport& report) {
  const auto& p = config.phase2;
  Optimizer opt(config.optimizer, circuit.parameter_count());

  for (std::size_t i = 1; i <= p.marginal_limit; ++i) {
    const LabeledSet train = curriculum_set(scorer, teacher, i, p.total_train, rng);
    const LabeledSet val = curriculum_set(scorer, teacher, i, p.total_val, rng);
    double best = mean_squared_error(circuit, val);
    std::vector<double> best_params(circuit.parameters().begin(), circuit.parameters().end());
    for (std::size_t e = 0; e < p.epochs_per_iter; ++e) {
      const EpochTag ctx{2, i, report.epochs.size() + 1};
      const double train_loss = train_epoch(circuit, train, p.batch_size, p.lr, opt, rng, ctx);
      const double val_loss = mean_squared_error(circuit, val);
      if (!std::isfinite(val_loss)) {
        throw TrainingError("non-finite validation loss in phase 2, iteration " +
                            std::to_string(i) + ", epoch " + std::to_string(ctx.epoch));
      }
      report.epochs.push_back({ctx.epoch, 2, i, train_loss, val_loss, p.lr});
      if (val_loss < best) {
        best = val_loss;
        best_params.assign(circuit.parameters().begin(), circuit.parameters().end());
      }
    }
    circuit.set_parameters(best_params);
  }
}

ProbeResult probe_against_teacher(const Circuit& circuit, const DpTable& teacher,
                                  std::size_t count, Rng& rng) {
  const auto& cand = teacher.candidates();
  std::vector<double> predicted, exact;
  LogValueGrid grid = circuit.make_grid();
  for (std::size_t i = 0; i < count; ++i) {
    QueryPattern q = QueryPattern::zeros(cand.node_count, cand.target);
    for (std::size_t v : cand.members) {
      if (uniform_index(rng, 2) == 1) q.set_node(v, VarState::Marginalized);
    }
    predicted.push_back(circuit.forward(q.states(), grid));
    exact.push_back(dp_query(teacher, q));
  }
  ProbeResult r;
  for (std::size_t i = 0; i < count; ++i) r.mean_abs_error += std::abs(predicted[i] - exact[i]);
  if (count > 0) r.mean_abs_error /= static_cast<double>(count);
  if (count >= 2) r.spearman = spearman(predicted, exact);
  return r;
}

NodeCircuit learn_node_circuit(const LocalScorer& scorer, std::size_t target,
                               const TrainConfig& config) {
  const std::size_t d = scorer.node_count();
  if (d < 2) throw std::invalid_argument("learn_node_circuit: need at least two nodes");
  if (target >= d) throw std::invalid_argument("learn_node_circuit: target out of range");
  CircuitConfig cc;
  cc.variables = d - 1;
  cc.latent = config.latent;
  cc.seed = mix_seed(config.seed, 1000 + target);
  cc.init_multiplier = config.init_multiplier;
  NodeCircuit out{Circuit(cc), {}};
  Rng rng = make_rng(config.seed, 2000 + target);

  phase1_train(out.circuit, scorer, target, config, rng, out.report);
  const CandidateSet cand = config.candidate_size
                                ? select_candidates(scorer, target, std::min(*config.candidate_size, d - 1))
                                : full_candidate_set(d, target);
  const DpTable teacher = build_table(scorer, cand);
  phase2_train(out.circuit, scorer, teacher, config, rng, out.report);

  const auto probe = probe_against_teacher(out.circuit, teacher, 200, rng);
  out.report.probe_mean_abs_error = probe.mean_abs_error;
  out.report.probe_spearman = probe.spearman;
  return out;
}

}  // namespace pcmarg
