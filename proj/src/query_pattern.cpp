#include "pcmarg/query_pattern.hpp"

#include <algorithm>
#include <stdexcept>

namespace pcmarg {

QueryPattern::QueryPattern(std::size_t target, std::vector<VarState> states)
    : target_(target), states_(std::move(states)) {
  if (target_ > states_.size()) {
    throw std::invalid_argument("QueryPattern: target index outside node range");
  }
}

QueryPattern QueryPattern::zeros(std::size_t node_count, std::size_t target) {
  if (node_count == 0 || target >= node_count) {
    throw std::invalid_argument("QueryPattern: target must be below node_count");
  }
  return QueryPattern(target, std::vector<VarState>(node_count - 1, VarState::Zero));
}

QueryPattern QueryPattern::from_parents(std::size_t node_count, std::size_t target,
                                        ParentMask parents) {
  QueryPattern q = zeros(node_count, target);
  if (parents >> target & 1U) throw std::invalid_argument("QueryPattern: node is its own parent");
  for (std::size_t p = 0; p < q.size(); ++p) {
    if (parents >> q.node_of(p) & 1U) q.states_[p] = VarState::One;
  }
  return q;
}

bool QueryPattern::is_complete() const { return count(VarState::Marginalized) == 0; }

std::size_t QueryPattern::count(VarState s) const {
  return static_cast<std::size_t>(std::count(states_.begin(), states_.end(), s));
}

ParentMask QueryPattern::one_mask() const {
  ParentMask mask = 0;
  for (std::size_t p = 0; p < states_.size(); ++p) {
    if (states_[p] == VarState::One) mask |= ParentMask{1} << node_of(p);
  }
  return mask;
}

std::string QueryPattern::to_string() const {
  std::string out(states_.size(), '0');
  for (std::size_t p = 0; p < states_.size(); ++p) {
    switch (states_[p]) {
      case VarState::Zero: out[p] = '0'; break;
      case VarState::One: out[p] = '1'; break;
      case VarState::Marginalized: out[p] = 'm'; break;
    }
  }
  return out;
}

QueryPattern QueryPattern::parse(std::string_view text, std::size_t target) {
  std::vector<VarState> states;
  states.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '0': states.push_back(VarState::Zero); break;
      case '1': states.push_back(VarState::One); break;
      case 'm': states.push_back(VarState::Marginalized); break;
      default:
        throw std::invalid_argument(std::string("pattern character '") + c +
                                    "' is not one of 0, 1, m");
    }
  }
  return QueryPattern(target, std::move(states));
}

}  // namespace pcmarg
