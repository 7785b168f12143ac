#pragma once
// Exact marginalizer over a candidate parent set.
//
// The table holds one log-mass per ternary assignment of the candidates
// (digit c = state of candidate c, place value 3^c). Complete assignments are
// scorer values; an entry with marginalized digits is the log-sum-exp of its
// two children with the highest marginalized digit set to Zero and One.

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "pcmarg/bge_score.hpp"
#include "pcmarg/query_pattern.hpp"

namespace pcmarg {

inline constexpr std::size_t kDefaultDpCap = 16;

struct CandidateSet {
  std::size_t target = 0;
  std::size_t node_count = 0;
  std::vector<std::size_t> members;  // node indices, distinct, target excluded

  std::size_t size() const { return members.size(); }
};

// The `size` nodes with the largest singleton gain
// local_score(target, {j}) - local_score(target, {}); ties to the lower index.
// Members are returned in ascending node order.
CandidateSet select_candidates(const LocalScorer& scorer, std::size_t target, std::size_t size);

CandidateSet full_candidate_set(std::size_t node_count, std::size_t target);

// A query touched a node outside the candidate set with One or Marginalized.
class CandidateRestrictionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DpTable {
 public:
  DpTable(CandidateSet candidates, std::vector<double> masses);

  const CandidateSet& candidates() const { return candidates_; }
  std::span<const double> masses() const { return masses_; }
  std::size_t entry_count() const { return masses_.size(); }

  // Ternary index of a pattern; throws CandidateRestrictionError when a
  // non-candidate position is not Zero.
  std::size_t index_of(const QueryPattern& pattern) const;
  // Candidate-ordered states of an index.
  std::vector<VarState> digits_of(std::size_t index) const;
  double at(std::size_t index) const { return masses_[index]; }

  // Little-endian float64 blob in index order plus a JSON sidecar.
  void save(const std::filesystem::path& blob, const std::filesystem::path& sidecar) const;
  static DpTable load(const std::filesystem::path& blob, const std::filesystem::path& sidecar);

 private:
  CandidateSet candidates_;
  std::vector<int> candidate_of_node_;  // -1 when not a candidate
  std::vector<double> masses_;
};

// Full ternary table from the 2^mc complete log-masses, where bit c of the
// index is the state of candidate c.
std::vector<double> fill_ternary_table(std::span<const double> complete, std::size_t mc);

DpTable build_table(const LocalScorer& scorer, const CandidateSet& candidates,
                    std::size_t cap = kDefaultDpCap);

double dp_query(const DpTable& table, const QueryPattern& pattern);

std::size_t pow3(std::size_t k);

}  // namespace pcmarg
