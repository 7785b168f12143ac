#include "pcmarg/circuit.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pcmarg/io.hpp"
#include "pcmarg/log_math.hpp"
#include "pcmarg/random.hpp"
#include "pcmarg/simd/kernels.hpp"

namespace pcmarg {
namespace {

// Below this the scaled mat-vec result has lost precision to underflow and
// the row is recomputed with a direct log-sum-exp.
constexpr double kMinMass = 1e-280;

constexpr double kLogHalf = -0.69314718055994530942;

std::size_t next_pow2(std::size_t v) { return std::bit_ceil(std::max<std::size_t>(v, 1)); }

}  // namespace

Circuit::Circuit(const CircuitConfig& config) : config_(config) {
  init_layout();
  Rng rng = make_rng(config_.seed, 0xC1);
  permutation_.resize(config_.variables);
  std::iota(permutation_.begin(), permutation_.end(), 0);
  shuffle(permutation_.begin(), permutation_.end(), rng);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!is_trainable(i)) {
      params_[i] = kLogHalf;
      continue;
    }
    const double u = 1.0 - uniform01(rng);  // (0, 1]
    params_[i] = config_.init_multiplier * std::log(u);
  }
  refresh();
}

Circuit::Circuit(const CircuitConfig& config, std::vector<std::size_t> permutation,
                 std::vector<double> parameters)
    : config_(config), permutation_(std::move(permutation)) {
  init_layout();
  std::vector<std::size_t> sorted = permutation_;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != i) throw std::invalid_argument("Circuit: permutation is not a permutation");
  }
  if (sorted.size() != config_.variables) {
    throw std::invalid_argument("Circuit: permutation length differs from variable count");
  }
  set_parameters(parameters);
}

void Circuit::init_layout() {
  if (config_.variables < 1) throw std::invalid_argument("Circuit: need at least one variable");
  if (config_.latent < 1) throw std::invalid_argument("Circuit: latent size must be >= 1");
  const std::size_t n = config_.latent;
  padded_ = next_pow2(config_.variables);
  levels_ = static_cast<std::size_t>(std::countr_zero(padded_));
  std::size_t offset = padded_ * n * 2;
  leaf_pad_begin_ = config_.variables * n * 2;
  leaf_pad_end_ = offset;
  sum_offset_.clear();
  std::size_t rows = padded_;
  for (std::size_t l = 0; l < levels_; ++l) {
    rows /= 2;
    sum_offset_.push_back(offset);
    offset += rows * n * n;
  }
  root_offset_ = offset;
  offset += n;
  params_.assign(offset, 0.0);
}

std::vector<std::size_t> Circuit::layer_rows() const {
  std::vector<std::size_t> rows{padded_};
  std::size_t a = padded_;
  for (std::size_t l = 0; l < levels_; ++l) {
    a /= 2;
    rows.push_back(a);
    rows.push_back(a);
  }
  return rows;
}

std::size_t Circuit::leaf_index(std::size_t row, std::size_t column, VarState state) const {
  return (row * config_.latent + column) * 2 + (state == VarState::One ? 1 : 0);
}

std::size_t Circuit::sum_index(std::size_t level, std::size_t row, std::size_t out,
                               std::size_t in) const {
  const std::size_t n = config_.latent;
  return sum_offset_[level] + (row * n + out) * n + in;
}

std::size_t Circuit::root_index(std::size_t column) const { return root_offset_ + column; }

void Circuit::set_parameters(std::span<const double> values) {
  if (values.size() != params_.size()) {
    throw std::invalid_argument("Circuit: parameter count mismatch");
  }
  std::copy(values.begin(), values.end(), params_.begin());
  for (std::size_t i = leaf_pad_begin_; i < leaf_pad_end_; ++i) params_[i] = kLogHalf;
  refresh();
}

void Circuit::apply_step(std::span<const double> grad, double lr) {
  if (grad.size() != params_.size()) throw std::invalid_argument("Circuit: gradient size mismatch");
  for (std::size_t i = 0; i < leaf_pad_begin_; ++i) params_[i] -= lr * grad[i];
  for (std::size_t i = leaf_pad_end_; i < params_.size(); ++i) params_[i] -= lr * grad[i];
  refresh();
}

void Circuit::refresh() {
  const std::size_t n = config_.latent;
  const auto& k = simd::active_kernels();
  leaf_marginal_.assign(padded_ * n, 0.0);
  for (std::size_t r = 0; r < config_.variables; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      leaf_marginal_[r * n + c] = log_add_exp(params_[leaf_index(r, c, VarState::Zero)],
                                              params_[leaf_index(r, c, VarState::One)]);
    }
  }
  scaled_weights_.resize(levels_);
  weight_max_.resize(levels_);
  std::size_t rows = padded_;
  for (std::size_t l = 0; l < levels_; ++l) {
    rows /= 2;
    scaled_weights_[l].resize(rows * n * n);
    weight_max_[l].resize(rows * n);
    for (std::size_t j = 0; j < rows * n; ++j) {
      const double* w = params_.data() + sum_offset_[l] + j * n;
      const double hi = *std::max_element(w, w + n);
      weight_max_[l][j] = hi;
      k.exp_offset(w, hi, scaled_weights_[l].data() + j * n, n);
    }
  }
  const double* r = params_.data() + root_offset_;
  root_weight_max_ = *std::max_element(r, r + n);
  scaled_root_.resize(n);
  k.exp_offset(r, root_weight_max_, scaled_root_.data(), n);
}

LogValueGrid Circuit::make_grid() const {
  const std::size_t n = config_.latent;
  LogValueGrid g;
  g.leaf.resize(padded_ * n);
  std::size_t rows = padded_;
  for (std::size_t l = 0; l < levels_; ++l) {
    rows /= 2;
    g.product.emplace_back(rows * n);
    g.sum.emplace_back(rows * n);
    g.scaled.emplace_back(rows * n);
    g.mass.emplace_back(rows * n);
    g.row_max.emplace_back(rows);
  }
  g.root_scaled.resize(n);
  g.grad_upper.resize(padded_ * n);
  g.grad_lower.resize(padded_ * n);
  g.coeff.resize(n);
  return g;
}

void Circuit::sum_forward(std::size_t level, std::size_t row, const double* in,
                          LogValueGrid& g) const {
  const std::size_t n = config_.latent;
  double* scaled = g.scaled[level].data() + row * n;
  double* mass = g.mass[level].data() + row * n;
  double* out = g.sum[level].data() + row * n;
  const double hi = *std::max_element(in, in + n);
  g.row_max[level][row] = hi;
  if (hi == kNegInf) {
    std::fill(scaled, scaled + n, 0.0);
    std::fill(mass, mass + n, 0.0);
    std::fill(out, out + n, kNegInf);
    return;
  }
  const auto& k = simd::active_kernels();
  k.exp_offset(in, hi, scaled, n);
  k.mat_vec(scaled_weights_[level].data() + row * n * n, scaled, mass, n, n);
  const double* wmax = weight_max_[level].data() + row * n;
  for (std::size_t j = 0; j < n; ++j) {
    if (mass[j] >= kMinMass) {
      out[j] = wmax[j] + hi + std::log(mass[j]);
    } else {
      const double* w = params_.data() + sum_index(level, row, j, 0);
      double top = kNegInf;
      for (std::size_t c = 0; c < n; ++c) top = std::max(top, w[c] + in[c]);
      double acc = 0.0;
      for (std::size_t c = 0; c < n; ++c) acc += std::exp(w[c] + in[c] - top);
      out[j] = top == kNegInf ? kNegInf : top + std::log(acc);
    }
  }
}

double Circuit::forward(std::span<const VarState> states, LogValueGrid& g) const {
  if (states.size() != config_.variables) {
    throw std::invalid_argument("Circuit: pattern length " + std::to_string(states.size()) +
                                " differs from variable count " +
                                std::to_string(config_.variables));
  }
  const std::size_t n = config_.latent;
  g.states.assign(states.begin(), states.end());
  for (std::size_t r = 0; r < padded_; ++r) {
    double* leaf = g.leaf.data() + r * n;
    if (r >= config_.variables) {
      std::fill(leaf, leaf + n, 0.0);
      continue;
    }
    switch (states[permutation_[r]]) {
      case VarState::Zero:
        for (std::size_t c = 0; c < n; ++c) leaf[c] = params_[leaf_index(r, c, VarState::Zero)];
        break;
      case VarState::One:
        for (std::size_t c = 0; c < n; ++c) leaf[c] = params_[leaf_index(r, c, VarState::One)];
        break;
      case VarState::Marginalized:
        std::copy_n(leaf_marginal_.data() + r * n, n, leaf);
        break;
    }
  }
  const double* below = g.leaf.data();
  std::size_t rows = padded_;
  for (std::size_t l = 0; l < levels_; ++l) {
    rows /= 2;
    double* prod = g.product[l].data();
    for (std::size_t i = 0; i < rows; ++i) {
      const double* a = below + (2 * i) * n;
      const double* b = below + (2 * i + 1) * n;
      for (std::size_t c = 0; c < n; ++c) prod[i * n + c] = a[c] + b[c];
    }
    for (std::size_t i = 0; i < rows; ++i) sum_forward(l, i, prod + i * n, g);
    below = g.sum[l].data();
  }

  const double hi = *std::max_element(below, below + n);
  g.root_max = hi;
  if (hi == kNegInf) {
    g.root_mass = 0.0;
    return g.value = kNegInf;
  }
  const auto& k = simd::active_kernels();
  k.exp_offset(below, hi, g.root_scaled.data(), n);
  k.mat_vec(scaled_root_.data(), g.root_scaled.data(), &g.root_mass, 1, n);
  if (g.root_mass >= kMinMass) {
    g.value = root_weight_max_ + hi + std::log(g.root_mass);
  } else {
    std::vector<double> terms(n);
    for (std::size_t c = 0; c < n; ++c) terms[c] = params_[root_offset_ + c] + below[c];
    g.value = log_sum_exp(terms);
  }
  return g.value;
}

void Circuit::backward(LogValueGrid& g, double scale, std::span<double> grad) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("Circuit: gradient size mismatch");
  if (g.value == kNegInf || scale == 0.0) return;
  const std::size_t n = config_.latent;
  const auto& k = simd::active_kernels();
  const double* top_in = levels_ > 0 ? g.sum[levels_ - 1].data() : g.leaf.data();

  double* upper = g.grad_upper.data();
  if (g.root_mass >= kMinMass) {
    const double c = scale / g.root_mass;
    k.mat_vec_backward(scaled_root_.data(), g.root_scaled.data(), &c, grad.data() + root_offset_,
                       upper, 1, n);
  } else {
    for (std::size_t c = 0; c < n; ++c) {
      const double r = std::exp(params_[root_offset_ + c] + top_in[c] - g.value);
      grad[root_offset_ + c] += scale * r;
      upper[c] = scale * r;
    }
  }

  std::size_t rows = padded_ >> levels_;  // 1
  for (std::size_t l = levels_; l-- > 0;) {
    double* gprod = g.grad_lower.data();
    const double* prod = g.product[l].data();
    for (std::size_t i = 0; i < rows; ++i) {
      double* gp = gprod + i * n;
      if (g.row_max[l][i] == kNegInf) {
        std::fill(gp, gp + n, 0.0);
        continue;
      }
      const double* mass = g.mass[l].data() + i * n;
      const double* gu = upper + i * n;
      bool fallback = false;
      for (std::size_t j = 0; j < n; ++j) {
        if (mass[j] >= kMinMass) {
          g.coeff[j] = gu[j] / mass[j];
        } else {
          g.coeff[j] = 0.0;
          fallback = true;
        }
      }
      k.mat_vec_backward(scaled_weights_[l].data() + i * n * n, g.scaled[l].data() + i * n,
                         g.coeff.data(), grad.data() + sum_index(l, i, 0, 0), gp, n, n);
      if (fallback) {
        const double* in = prod + i * n;
        const double* out = g.sum[l].data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
          if (mass[j] >= kMinMass || out[j] == kNegInf) continue;
          const std::size_t base = sum_index(l, i, j, 0);
          for (std::size_t c = 0; c < n; ++c) {
            const double r = gu[j] * std::exp(params_[base + c] + in[c] - out[j]);
            grad[base + c] += r;
            gp[c] += r;
          }
        }
      }
    }
    // Product nodes pass their gradient unchanged to both children.
    for (std::size_t i = rows; i-- > 0;) {
      std::copy_n(gprod + i * n, n, upper + (2 * i + 1) * n);
      std::copy_n(gprod + i * n, n, upper + (2 * i) * n);
    }
    rows *= 2;
  }

  for (std::size_t r = 0; r < config_.variables; ++r) {
    const VarState s = g.states[permutation_[r]];
    for (std::size_t c = 0; c < n; ++c) {
      const double gv = upper[r * n + c];
      const std::size_t i0 = leaf_index(r, c, VarState::Zero);
      const std::size_t i1 = i0 + 1;
      switch (s) {
        case VarState::Zero:
          grad[i0] += gv;
          break;
        case VarState::One:
          grad[i1] += gv;
          break;
        case VarState::Marginalized: {
          const double lse = leaf_marginal_[r * n + c];
          grad[i0] += gv * std::exp(params_[i0] - lse);
          grad[i1] += gv * std::exp(params_[i1] - lse);
          break;
        }
      }
    }
  }
}

double Circuit::evaluate(std::span<const VarState> states) const {
  LogValueGrid g = make_grid();
  return forward(states, g);
}

double Circuit::evaluate(const QueryPattern& pattern) const { return evaluate(pattern.states()); }

std::vector<double> Circuit::evaluate_batch(std::span<const QueryPattern> patterns) const {
  std::vector<double> out;
  out.reserve(patterns.size());
  if (patterns.empty()) return out;
  LogValueGrid g = make_grid();
  for (const auto& p : patterns) out.push_back(forward(p.states(), g));
  return out;
}

double Circuit::normalizing_constant() const {
  const std::vector<VarState> all(config_.variables, VarState::Marginalized);
  return evaluate(all);
}

std::vector<double> Circuit::backward(const QueryPattern& pattern) const {
  LogValueGrid g = make_grid();
  forward(pattern.states(), g);
  std::vector<double> grad(params_.size(), 0.0);
  backward(g, 1.0, grad);
  return grad;
}

ScopeAudit Circuit::audit_scopes() const {
  ScopeAudit audit;
  const std::size_t n = config_.latent;
  // Scope of every node in the current layer, column-major within a row.
  std::vector<std::uint64_t> below(padded_ * n, 0);
  for (std::size_t r = 0; r < config_.variables; ++r) {
    for (std::size_t c = 0; c < n; ++c) below[r * n + c] = std::uint64_t{1} << permutation_[r];
  }
  std::size_t rows = padded_;
  for (std::size_t l = 0; l < levels_; ++l) {
    rows /= 2;
    std::vector<std::uint64_t> prod(rows * n);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t c = 0; c < n; ++c) {
        const auto a = below[(2 * i) * n + c];
        const auto b = below[(2 * i + 1) * n + c];
        if (a & b) {
          audit.decomposable = false;
          audit.detail += "product (" + std::to_string(l) + "," + std::to_string(i) + ") overlaps; ";
        }
        prod[i * n + c] = a | b;
      }
    }
    std::vector<std::uint64_t> sum(rows * n);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        // Sum node (i, j) reads every product node in row i.
        for (std::size_t c = 1; c < n; ++c) {
          if (prod[i * n + c] != prod[i * n]) {
            audit.smooth = false;
            audit.detail += "sum (" + std::to_string(l) + "," + std::to_string(i) + ") mixed scopes; ";
          }
        }
        sum[i * n + j] = prod[i * n];
      }
    }
    below = std::move(sum);
  }
  for (std::size_t c = 1; c < n; ++c) {
    if (below[c] != below[0]) audit.smooth = false;
  }
  const std::uint64_t all =
      config_.variables >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << config_.variables) - 1;
  if (below[0] != all) {
    audit.root_covers_all = false;
    audit.detail += "root scope incomplete; ";
  }
  return audit;
}

std::string Circuit::serialize() const {
  nlohmann::json h;
  h["format"] = "pcmarg-circuit";
  h["version"] = 1;
  h["variables"] = config_.variables;
  h["latent"] = config_.latent;
  h["seed"] = config_.seed;
  h["init_multiplier"] = config_.init_multiplier;
  h["padded_variables"] = padded_;
  h["permutation"] = permutation_;
  auto layers = nlohmann::json::array();
  layers.push_back({{"kind", "leaf"}, {"shape", {padded_, config_.latent, 2}}});
  std::size_t rows = padded_;
  for (std::size_t l = 0; l < levels_; ++l) {
    rows /= 2;
    layers.push_back({{"kind", "product"}, {"shape", {rows, config_.latent}}});
    layers.push_back({{"kind", "sum"}, {"shape", {rows, config_.latent, config_.latent}}});
  }
  layers.push_back({{"kind", "root"}, {"shape", {config_.latent}}});
  h["layers"] = layers;
  h["parameter_count"] = params_.size();
  h["blob_bytes"] = params_.size() * 8;
  return h.dump() + "\n" + encode_f64_le(params_);
}

Circuit Circuit::deserialize(const std::string& bytes) {
  const auto eol = bytes.find('\n');
  if (eol == std::string::npos) throw std::invalid_argument("circuit file: missing header line");
  const auto h = nlohmann::json::parse(bytes.substr(0, eol));
  if (h.at("format") != "pcmarg-circuit") throw std::invalid_argument("not a circuit file");
  CircuitConfig cfg;
  cfg.variables = h.at("variables").get<std::size_t>();
  cfg.latent = h.at("latent").get<std::size_t>();
  cfg.seed = h.at("seed").get<std::uint64_t>();
  cfg.init_multiplier = h.at("init_multiplier").get<double>();
  const auto blob = bytes.substr(eol + 1);
  if (blob.size() != h.at("blob_bytes").get<std::size_t>()) {
    throw std::invalid_argument("circuit file: blob length does not match header");
  }
  return Circuit(cfg, h.at("permutation").get<std::vector<std::size_t>>(), decode_f64_le(blob));
}

}  // namespace pcmarg
