#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "diffmg/hin.hpp"

namespace diffmg {

// One operand on a DAG link: propagate along an edge type, keep the state
// unchanged, or contribute nothing.
struct Choice {
  enum class Kind { EdgeType, Identity, Empty };

  Kind kind = Kind::Empty;
  std::size_t etype = 0;

  static Choice edge(std::size_t etype_index) {
    return {Kind::EdgeType, etype_index};
  }
  static Choice identity() { return {Kind::Identity, 0}; }
  static Choice empty() { return {Kind::Empty, 0}; }

  bool operator==(const Choice&) const = default;

  // "I", "O", or the registered edge-type name.
  std::string label(const EdgeTypeRegistry& registry) const;
};

struct LinkId {
  std::size_t k = 0;  // state index in 1..K
  std::size_t i = 0;  // predecessor index, i < k
  auto operator<=>(const LinkId&) const = default;
};

// All links of a K-state DAG, sorted by (k, i). |result| = K(K+1)/2.
std::vector<LinkId> canonical_links(std::size_t K);

struct SearchSpaceSpec {
  std::size_t K = 0;
  std::string target_type;
  std::vector<LinkId> links;                    // canonical_links(K)
  std::vector<std::vector<Choice>> candidates;  // parallel to links

  std::size_t link_index(LinkId link) const;
  const std::vector<Choice>& candidates_of(LinkId link) const {
    return candidates[link_index(link)];
  }
};

// Candidate sets per link:
//   k < K, i = k-1  -> every edge type, then Identity
//   k < K, i < k-1  -> every edge type, then Identity, then Empty
//   k = K, i = K-1  -> edge types into target_type only
//   k = K, i < K-1  -> edge types into target_type, then Identity, then Empty
// Edge types keep registry order throughout.
SearchSpaceSpec build_space(const HinGraph& g, const std::string& target_type,
                            std::size_t K);

// Unsigned integer of arbitrary size; just enough arithmetic to count
// assignment products exactly.
class BigUint {
 public:
  BigUint() = default;  // zero
  explicit BigUint(std::uint64_t v);

  BigUint& operator*=(std::uint64_t m);
  bool operator==(const BigUint& o) const { return digits_ == o.digits_; }
  bool operator>(const BigUint& o) const;
  bool exceeds(std::uint64_t cap) const { return *this > BigUint(cap); }

  // Value as uint64; caller must ensure !exceeds(max).
  std::uint64_t as_u64() const;
  std::string str() const;

 private:
  std::vector<std::uint32_t> digits_;  // base 1e9, least significant first
};

BigUint cardinality(const SearchSpaceSpec& spec);

struct MetaGraph {
  std::size_t K = 0;
  std::string target_type;
  std::vector<Choice> assignment;  // parallel to canonical_links(K)

  bool operator==(const MetaGraph&) const = default;
};

// Empty string when the assignment is valid for the spec, otherwise a
// description of the first violation.
std::string meta_graph_violation(const MetaGraph& mg,
                                 const SearchSpaceSpec& spec);

// Visits every assignment exactly once, first link most significant,
// candidates in their declared order. Throws CapExceededError (message
// carries the exact cardinality) when the space is larger than cap.
void enumerate_space(const SearchSpaceSpec& spec, std::uint64_t cap,
                     const std::function<void(const MetaGraph&)>& visit);

std::string export_dot(const MetaGraph& mg, const EdgeTypeRegistry& registry);

std::string meta_graph_to_json(const MetaGraph& mg,
                               const EdgeTypeRegistry& registry);
// Validates against the spec (every link present exactly once, every choice
// drawn from that link's candidate set); violations -> ParseError.
MetaGraph meta_graph_from_json(const std::string& text,
                               const SearchSpaceSpec& spec,
                               const EdgeTypeRegistry& registry);

}  // namespace diffmg
