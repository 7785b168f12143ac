#pragma once
// Smooth, decomposable, unnormalized probabilistic circuit over M binary
// parent indicators.
//
// Layout (rows x N latent columns at every layer):
//   leaf      M^ x N   Bernoulli leaves, row r holds variable permutation[r]
//   product   A/2 x N  P[i][n] = S[2i][n] * S[2i+1][n]
//   sum       A/2 x N  S[i][j] = sum_k w[i][j][k] * P[i][k]
//   ... repeated until one row remains, then
//   root      scalar   sum_k r[k] * S[0][k]
// M^ is M rounded up to a power of two; padding rows are fixed unit leaves
// (theta0 = theta1 = log 1/2, always marginalized) and contribute exactly 0.
// Every parameter is stored in the log domain and is unconstrained.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pcmarg/query_pattern.hpp"

namespace pcmarg {

struct CircuitConfig {
  std::size_t variables = 1;  // M
  std::size_t latent = 1;     // N
  std::uint64_t seed = 0;
  double init_multiplier = -10.0;  // log-parameters ~ m * log(U(0, 1))
};

// Per-layer activations of one forward pass, reused across calls.
struct LogValueGrid {
  std::vector<double> leaf;                  // M^ x N
  std::vector<std::vector<double>> product;  // per level, A x N
  std::vector<std::vector<double>> sum;      // per level, A x N
  std::vector<std::vector<double>> scaled;   // exp(input - row max), A x N
  std::vector<std::vector<double>> mass;     // scaled mat-vec result, A x N
  std::vector<std::vector<double>> row_max;  // per level, A
  std::vector<double> root_scaled;           // N
  double root_mass = 0.0;
  double root_max = 0.0;
  double value = 0.0;
  std::vector<VarState> states;
  // backward scratch
  std::vector<double> grad_upper, grad_lower, coeff;
};

struct ScopeAudit {
  bool smooth = true;
  bool decomposable = true;
  bool root_covers_all = true;
  std::string detail;
  bool ok() const { return smooth && decomposable && root_covers_all; }
};

class Circuit {
 public:
  // build_circuit: draws the variable permutation and initial parameters from the seed.
  explicit Circuit(const CircuitConfig& config);
  Circuit(const CircuitConfig& config, std::vector<std::size_t> permutation,
          std::vector<double> parameters);

  const CircuitConfig& config() const { return config_; }
  std::size_t variables() const { return config_.variables; }
  std::size_t padded_variables() const { return padded_; }
  std::size_t latent() const { return config_.latent; }
  std::size_t levels() const { return levels_; }
  const std::vector<std::size_t>& permutation() const { return permutation_; }

  // Row counts, leaf first, then product/sum pairs; the root scalar is implicit.
  std::vector<std::size_t> layer_rows() const;

  std::size_t parameter_count() const { return params_.size(); }
  std::span<const double> parameters() const { return params_; }
  void set_parameters(std::span<const double> values);
  // params -= lr * grad on trainable entries.
  void apply_step(std::span<const double> grad, double lr);
  // Padding leaves are fixed.
  bool is_trainable(std::size_t index) const {
    return index < leaf_pad_begin_ || index >= leaf_pad_end_;
  }

  std::size_t leaf_index(std::size_t row, std::size_t column, VarState state) const;
  std::size_t sum_index(std::size_t level, std::size_t row, std::size_t out, std::size_t in) const;
  std::size_t root_index(std::size_t column) const;

  // Root log-value for the pattern; Marginalized positions are summed out exactly.
  double evaluate(const QueryPattern& pattern) const;
  double evaluate(std::span<const VarState> states) const;
  std::vector<double> evaluate_batch(std::span<const QueryPattern> patterns) const;
  double normalizing_constant() const;

  // d(root log-value)/d(log-parameter) for every parameter; pad leaves get 0.
  std::vector<double> backward(const QueryPattern& pattern) const;

  // Low-level pair used by the trainer: forward fills `grid`, backward adds
  // scale * gradient into `grad` using the activations left in `grid`.
  LogValueGrid make_grid() const;
  double forward(std::span<const VarState> states, LogValueGrid& grid) const;
  void backward(LogValueGrid& grid, double scale, std::span<double> grad) const;

  ScopeAudit audit_scopes() const;

  // JSON header line + little-endian float64 parameter blob.
  std::string serialize() const;
  static Circuit deserialize(const std::string& bytes);

 private:
  void init_layout();
  void refresh();
  void sum_forward(std::size_t level, std::size_t row, const double* in, LogValueGrid& g) const;

  CircuitConfig config_;
  std::size_t padded_ = 1;
  std::size_t levels_ = 0;
  std::vector<std::size_t> permutation_;
  std::vector<double> params_;
  std::size_t leaf_pad_begin_ = 0, leaf_pad_end_ = 0;
  std::vector<std::size_t> sum_offset_;  // per level
  std::size_t root_offset_ = 0;

  // Derived from params_ by refresh(): exp(w - row max) per sum row, the row
  // maxima, and the marginalized leaf values.
  std::vector<std::vector<double>> scaled_weights_;
  std::vector<std::vector<double>> weight_max_;
  std::vector<double> scaled_root_;
  double root_weight_max_ = 0.0;
  std::vector<double> leaf_marginal_;
};

}  // namespace pcmarg
