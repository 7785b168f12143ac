#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pcmarg {

// Per-indicator state. The numeric values double as ternary digits in the
// DP table encoding.
enum class VarState : std::uint8_t { Zero = 0, One = 1, Marginalized = 2 };

using ParentMask = std::uint64_t;

// Assignment of the M = d - 1 parent indicators of one target node.
//
// Position p refers to node p when p < target and to node p + 1 otherwise,
// so the target never appears as its own parent.
class QueryPattern {
 public:
  QueryPattern() = default;
  QueryPattern(std::size_t target, std::vector<VarState> states);
  // All-Zero pattern over `node_count - 1` positions.
  static QueryPattern zeros(std::size_t node_count, std::size_t target);
  // Complete pattern with One exactly at the nodes in `parents`.
  static QueryPattern from_parents(std::size_t node_count, std::size_t target, ParentMask parents);

  std::size_t target() const { return target_; }
  std::size_t size() const { return states_.size(); }
  std::size_t node_count() const { return states_.size() + 1; }

  VarState operator[](std::size_t position) const { return states_[position]; }
  VarState& operator[](std::size_t position) { return states_[position]; }
  const std::vector<VarState>& states() const { return states_; }

  std::size_t node_of(std::size_t position) const {
    return position < target_ ? position : position + 1;
  }
  // Precondition: node != target.
  std::size_t position_of(std::size_t node) const { return node < target_ ? node : node - 1; }

  VarState state_of_node(std::size_t node) const { return states_[position_of(node)]; }
  void set_node(std::size_t node, VarState s) { states_[position_of(node)] = s; }

  bool is_complete() const;
  std::size_t count(VarState s) const;
  // Node-indexed mask of the One positions.
  ParentMask one_mask() const;

  // Compact {0,1,m} string, one character per position.
  std::string to_string() const;
  static QueryPattern parse(std::string_view text, std::size_t target);

  friend bool operator==(const QueryPattern&, const QueryPattern&) = default;

 private:
  std::size_t target_ = 0;
  std::vector<VarState> states_;
};

}  // namespace pcmarg
