#include "diffmg/search_space.hpp"

#include <algorithm>
#include <sstream>

#include "diffmg/errors.hpp"
#include "json.hpp"

namespace diffmg {

std::string Choice::label(const EdgeTypeRegistry& registry) const {
  switch (kind) {
    case Kind::Identity:
      return "I";
    case Kind::Empty:
      return "O";
    case Kind::EdgeType:
      return registry.at(etype).name;
  }
  return "O";
}

std::vector<LinkId> canonical_links(std::size_t K) {
  std::vector<LinkId> links;
  links.reserve(K * (K + 1) / 2);
  for (std::size_t k = 1; k <= K; ++k) {
    for (std::size_t i = 0; i < k; ++i) links.push_back({k, i});
  }
  return links;
}

std::size_t SearchSpaceSpec::link_index(LinkId link) const {
  auto it = std::lower_bound(links.begin(), links.end(), link);
  if (it == links.end() || !(*it == link)) {
    std::ostringstream os;
    os << "no link (" << link.k << "," << link.i << ") in a K=" << K
       << " space";
    throw ConfigError(os.str());
  }
  return static_cast<std::size_t>(it - links.begin());
}

SearchSpaceSpec build_space(const HinGraph& g, const std::string& target_type,
                            std::size_t K) {
  if (K < 1) throw ConfigError("K must be ≥ 1");
  if (!g.has_node_type(target_type)) {
    throw SchemaError("unknown target node type '" + target_type + "'");
  }

  std::vector<Choice> all;
  for (std::size_t r = 0; r < g.registry.size(); ++r) {
    all.push_back(Choice::edge(r));
  }
  std::vector<Choice> into_target;
  for (std::size_t r = 0; r < g.registry.size(); ++r) {
    if (g.registry.at(r).dst_type == target_type) {
      into_target.push_back(Choice::edge(r));
    }
  }
  if (into_target.empty()) {
    throw SchemaError("no edge type targets " + target_type);
  }

  SearchSpaceSpec spec;
  spec.K = K;
  spec.target_type = target_type;
  spec.links = canonical_links(K);
  for (const LinkId& link : spec.links) {
    std::vector<Choice> cands = (link.k == K) ? into_target : all;
    if (!(link.k == K && link.i == K - 1)) cands.push_back(Choice::identity());
    if (link.i + 1 < link.k) cands.push_back(Choice::empty());
    spec.candidates.push_back(std::move(cands));
  }
  return spec;
}

BigUint::BigUint(std::uint64_t v) {
  while (v != 0) {
    digits_.push_back(static_cast<std::uint32_t>(v % 1000000000ull));
    v /= 1000000000ull;
  }
}

BigUint& BigUint::operator*=(std::uint64_t m) {
  if (m == 0) {
    digits_.clear();
    return *this;
  }
  std::uint64_t carry = 0;
  for (auto& d : digits_) {
    const std::uint64_t t = static_cast<std::uint64_t>(d) * m + carry;
    d = static_cast<std::uint32_t>(t % 1000000000ull);
    carry = t / 1000000000ull;
  }
  while (carry != 0) {
    digits_.push_back(static_cast<std::uint32_t>(carry % 1000000000ull));
    carry /= 1000000000ull;
  }
  return *this;
}

bool BigUint::operator>(const BigUint& o) const {
  if (digits_.size() != o.digits_.size()) {
    return digits_.size() > o.digits_.size();
  }
  for (std::size_t j = digits_.size(); j-- > 0;) {
    if (digits_[j] != o.digits_[j]) return digits_[j] > o.digits_[j];
  }
  return false;
}

std::uint64_t BigUint::as_u64() const {
  std::uint64_t v = 0;
  for (std::size_t j = digits_.size(); j-- > 0;) {
    v = v * 1000000000ull + digits_[j];
  }
  return v;
}

std::string BigUint::str() const {
  if (digits_.empty()) return "0";
  std::ostringstream os;
  os << digits_.back();
  char buf[16];
  for (std::size_t j = digits_.size() - 1; j-- > 0;) {
    std::snprintf(buf, sizeof(buf), "%09u", digits_[j]);
    os << buf;
  }
  return os.str();
}

BigUint cardinality(const SearchSpaceSpec& spec) {
  BigUint n(1);
  for (const auto& cands : spec.candidates) n *= cands.size();
  return n;
}

std::string meta_graph_violation(const MetaGraph& mg,
                                 const SearchSpaceSpec& spec) {
  std::ostringstream os;
  if (mg.K != spec.K) {
    os << "K mismatch: meta graph has " << mg.K << ", space has " << spec.K;
    return os.str();
  }
  if (mg.target_type != spec.target_type) {
    os << "target type mismatch: meta graph targets '" << mg.target_type
       << "', space targets '" << spec.target_type << "'";
    return os.str();
  }
  if (mg.assignment.size() != spec.links.size()) {
    os << "assignment covers " << mg.assignment.size() << " links, expected "
       << spec.links.size();
    return os.str();
  }
  for (std::size_t l = 0; l < spec.links.size(); ++l) {
    const auto& cands = spec.candidates[l];
    if (std::find(cands.begin(), cands.end(), mg.assignment[l]) ==
        cands.end()) {
      os << "choice at link (" << spec.links[l].k << "," << spec.links[l].i
         << ") is not in the candidate set";
      return os.str();
    }
  }
  return {};
}

void enumerate_space(const SearchSpaceSpec& spec, std::uint64_t cap,
                     const std::function<void(const MetaGraph&)>& visit) {
  const BigUint n = cardinality(spec);
  if (n.exceeds(cap)) {
    throw CapExceededError("search space holds " + n.str() +
                               " meta graphs, exceeding the cap of " +
                               std::to_string(cap),
                           n.str());
  }
  const std::size_t L = spec.links.size();
  std::vector<std::size_t> idx(L, 0);
  MetaGraph mg;
  mg.K = spec.K;
  mg.target_type = spec.target_type;
  mg.assignment.resize(L);
  while (true) {
    for (std::size_t l = 0; l < L; ++l) {
      mg.assignment[l] = spec.candidates[l][idx[l]];
    }
    visit(mg);
    std::size_t l = L;
    while (l-- > 0) {
      if (++idx[l] < spec.candidates[l].size()) break;
      idx[l] = 0;
      if (l == 0) return;
    }
    if (l == static_cast<std::size_t>(-1)) return;
  }
}

std::string export_dot(const MetaGraph& mg, const EdgeTypeRegistry& registry) {
  std::ostringstream os;
  os << "digraph meta_graph {\n";
  os << "  rankdir=LR;\n";
  for (std::size_t k = 0; k <= mg.K; ++k) {
    os << "  H" << k << ";\n";
  }
  const auto links = canonical_links(mg.K);
  for (std::size_t l = 0; l < links.size(); ++l) {
    const Choice& c = mg.assignment[l];
    if (c.kind == Choice::Kind::Empty) continue;
    os << "  H" << links[l].i << " -> H" << links[l].k << " [label=\""
       << c.label(registry) << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

std::string meta_graph_to_json(const MetaGraph& mg,
                               const EdgeTypeRegistry& registry) {
  nlohmann::json j;
  j["K"] = mg.K;
  j["target_type"] = mg.target_type;
  nlohmann::json links = nlohmann::json::array();
  const auto ids = canonical_links(mg.K);
  for (std::size_t l = 0; l < ids.size(); ++l) {
    links.push_back({{"k", ids[l].k},
                     {"i", ids[l].i},
                     {"choice", mg.assignment[l].label(registry)}});
  }
  j["links"] = std::move(links);
  return j.dump(2) + "\n";
}

MetaGraph meta_graph_from_json(const std::string& text,
                               const SearchSpaceSpec& spec,
                               const EdgeTypeRegistry& registry) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("meta graph JSON: ") + e.what());
  }
  MetaGraph mg;
  try {
    mg.K = j.at("K").get<std::size_t>();
    mg.target_type = j.at("target_type").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("meta graph JSON: ") + e.what());
  }
  if (mg.K != spec.K) {
    throw ParseError("meta graph K=" + std::to_string(mg.K) +
                     " does not match the K=" + std::to_string(spec.K) +
                     " space");
  }
  if (mg.target_type != spec.target_type) {
    throw ParseError("meta graph targets '" + mg.target_type +
                     "' but the space targets '" + spec.target_type + "'");
  }
  mg.assignment.assign(spec.links.size(), Choice::empty());
  std::vector<bool> seen(spec.links.size(), false);
  if (!j.contains("links") || !j["links"].is_array()) {
    throw ParseError("meta graph JSON: missing 'links' array");
  }
  for (const auto& entry : j["links"]) {
    LinkId link{};
    std::string choice_label;
    try {
      link.k = entry.at("k").get<std::size_t>();
      link.i = entry.at("i").get<std::size_t>();
      choice_label = entry.at("choice").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("meta graph JSON link entry: ") + e.what());
    }
    std::size_t l;
    try {
      l = spec.link_index(link);
    } catch (const ConfigError& e) {
      throw ParseError(e.what());
    }
    if (seen[l]) {
      throw ParseError("duplicate link (" + std::to_string(link.k) + "," +
                       std::to_string(link.i) + ")");
    }
    seen[l] = true;
    Choice c;
    if (choice_label == "I") {
      c = Choice::identity();
    } else if (choice_label == "O") {
      c = Choice::empty();
    } else if (registry.contains(choice_label)) {
      c = Choice::edge(registry.index_of(choice_label));
    } else {
      throw ParseError("unknown edge type '" + choice_label + "' at link (" +
                       std::to_string(link.k) + "," + std::to_string(link.i) +
                       ")");
    }
    const auto& cands = spec.candidates[l];
    if (std::find(cands.begin(), cands.end(), c) == cands.end()) {
      throw ParseError("choice '" + choice_label +
                       "' is not a candidate at link (" +
                       std::to_string(link.k) + "," + std::to_string(link.i) +
                       ")");
    }
    mg.assignment[l] = c;
  }
  for (std::size_t l = 0; l < spec.links.size(); ++l) {
    if (!seen[l]) {
      throw ParseError("missing link (" + std::to_string(spec.links[l].k) +
                       "," + std::to_string(spec.links[l].i) + ")");
    }
  }
  return mg;
}

}  // namespace diffmg
