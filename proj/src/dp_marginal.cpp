#include "pcmarg/dp_marginal.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "pcmarg/io.hpp"
#include "pcmarg/simd/kernels.hpp"

namespace pcmarg {

std::size_t pow3(std::size_t k) {
  std::size_t v = 1;
  for (std::size_t i = 0; i < k; ++i) v *= 3;
  return v;
}

CandidateSet full_candidate_set(std::size_t node_count, std::size_t target) {
  if (target >= node_count) throw std::invalid_argument("full_candidate_set: target out of range");
  CandidateSet c{target, node_count, {}};
  for (std::size_t v = 0; v < node_count; ++v) {
    if (v != target) c.members.push_back(v);
  }
  return c;
}

CandidateSet select_candidates(const LocalScorer& scorer, std::size_t target, std::size_t size) {
  const std::size_t d = scorer.node_count();
  if (target >= d) throw std::invalid_argument("select_candidates: target out of range");
  if (size > d - 1) throw std::invalid_argument("select_candidates: size exceeds d - 1");
  const double base = scorer.local_score(target, 0);
  std::vector<std::pair<double, std::size_t>> gains;
  for (std::size_t j = 0; j < d; ++j) {
    if (j == target) continue;
    gains.emplace_back(scorer.local_score(target, ParentMask{1} << j) - base, j);
  }
  std::stable_sort(gains.begin(), gains.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  CandidateSet c{target, d, {}};
  for (std::size_t i = 0; i < size; ++i) c.members.push_back(gains[i].second);
  std::sort(c.members.begin(), c.members.end());
  return c;
}

DpTable::DpTable(CandidateSet candidates, std::vector<double> masses)
    : candidates_(std::move(candidates)), masses_(std::move(masses)) {
  if (candidates_.target >= candidates_.node_count) {
    throw std::invalid_argument("DpTable: target out of range");
  }
  candidate_of_node_.assign(candidates_.node_count, -1);
  for (std::size_t c = 0; c < candidates_.members.size(); ++c) {
    const std::size_t v = candidates_.members[c];
    if (v >= candidates_.node_count || v == candidates_.target || candidate_of_node_[v] != -1) {
      throw std::invalid_argument("DpTable: invalid candidate set");
    }
    candidate_of_node_[v] = static_cast<int>(c);
  }
  if (masses_.size() != pow3(candidates_.members.size())) {
    throw std::invalid_argument("DpTable: mass count is not 3^|candidates|");
  }
}

std::size_t DpTable::index_of(const QueryPattern& pattern) const {
  if (pattern.node_count() != candidates_.node_count || pattern.target() != candidates_.target) {
    throw std::invalid_argument("dp_query: pattern does not belong to this table's target");
  }
  std::size_t index = 0;
  for (std::size_t p = 0; p < pattern.size(); ++p) {
    const VarState s = pattern[p];
    const int c = candidate_of_node_[pattern.node_of(p)];
    if (c < 0) {
      if (s != VarState::Zero) {
        throw CandidateRestrictionError("dp_query: node " + std::to_string(pattern.node_of(p)) +
                                        " is outside the candidate set");
      }
      continue;
    }
    index += static_cast<std::size_t>(s) * pow3(static_cast<std::size_t>(c));
  }
  return index;
}

std::vector<VarState> DpTable::digits_of(std::size_t index) const {
  std::vector<VarState> out(candidates_.members.size());
  for (auto& s : out) {
    s = static_cast<VarState>(index % 3);
    index /= 3;
  }
  return out;
}

std::vector<double> fill_ternary_table(std::span<const double> complete, std::size_t mc) {
  if (complete.size() != (std::size_t{1} << mc)) {
    throw std::invalid_argument("fill_ternary_table: expected 2^" + std::to_string(mc) +
                                " complete scores, got " + std::to_string(complete.size()));
  }
  std::vector<std::size_t> place(mc);
  for (std::size_t c = 0; c < mc; ++c) place[c] = pow3(c);
  std::vector<double> masses(pow3(mc), std::numeric_limits<double>::quiet_NaN());

  for (std::uint64_t bits = 0; bits < complete.size(); ++bits) {
    std::size_t idx = 0;
    for (std::size_t c = 0; c < mc; ++c) {
      if (bits >> c & 1U) idx += place[c];
    }
    masses[idx] = complete[bits];
  }

  // Entries whose highest marginalized digit is p: every digit above p is
  // 0/1, digits below p are arbitrary and already final, so each block of
  // 3^p entries is one contiguous log-add-exp.
  const auto& k = simd::active_kernels();
  for (std::size_t p = 0; p < mc; ++p) {
    const std::size_t block = place[p];
    const std::size_t high = mc - 1 - p;
    for (std::uint64_t hi = 0; hi < (std::uint64_t{1} << high); ++hi) {
      std::size_t base = 0;
      for (std::size_t q = 0; q < high; ++q) {
        if (hi >> q & 1U) base += place[p + 1 + q];
      }
      const double* zero = masses.data() + base;
      const double* one = masses.data() + base + block;
      double* marg = masses.data() + base + 2 * block;
      k.log_add_exp(zero, one, marg, block);
    }
  }
  return masses;
}

DpTable build_table(const LocalScorer& scorer, const CandidateSet& candidates, std::size_t cap) {
  const std::size_t mc = candidates.members.size();
  if (mc > cap) {
    throw std::invalid_argument("build_table: " + std::to_string(mc) +
                                " candidates exceed the cap of " + std::to_string(cap));
  }
  if (candidates.node_count != scorer.node_count()) {
    throw std::invalid_argument("build_table: candidate set and scorer node counts differ");
  }
  std::vector<double> complete(std::size_t{1} << mc);
  for (std::uint64_t bits = 0; bits < complete.size(); ++bits) {
    ParentMask parents = 0;
    for (std::size_t c = 0; c < mc; ++c) {
      if (bits >> c & 1U) parents |= ParentMask{1} << candidates.members[c];
    }
    complete[bits] = scorer.local_score(candidates.target, parents);
  }
  return DpTable(candidates, fill_ternary_table(complete, mc));
}

double dp_query(const DpTable& table, const QueryPattern& pattern) {
  return table.at(table.index_of(pattern));
}

void DpTable::save(const std::filesystem::path& blob, const std::filesystem::path& sidecar) const {
  nlohmann::json j;
  j["format"] = "pcmarg-dp-table";
  j["version"] = 1;
  j["target"] = candidates_.target;
  j["node_count"] = candidates_.node_count;
  j["members"] = candidates_.members;
  j["entries"] = masses_.size();
  j["encoding"] = "ternary; digit c is the state of members[c] (0=Zero, 1=One, 2=Marginalized), place value 3^c";
  write_file_atomic(blob, encode_f64_le(masses_));
  write_file_atomic(sidecar, j.dump(2) + "\n");
}

DpTable DpTable::load(const std::filesystem::path& blob, const std::filesystem::path& sidecar) {
  const auto j = nlohmann::json::parse(read_file(sidecar));
  if (j.at("format") != "pcmarg-dp-table") throw std::invalid_argument("not a DP table sidecar");
  CandidateSet c{j.at("target").get<std::size_t>(), j.at("node_count").get<std::size_t>(),
                 j.at("members").get<std::vector<std::size_t>>()};
  auto masses = decode_f64_le(read_file(blob));
  if (masses.size() != j.at("entries").get<std::size_t>()) {
    throw std::invalid_argument("DP table blob length does not match sidecar");
  }
  return DpTable(std::move(c), std::move(masses));
}

}  // namespace pcmarg
