#include "diffmg/synth.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include "diffmg/errors.hpp"
#include "diffmg/rng.hpp"
#include "json.hpp"

namespace diffmg {

SynthConfig parse_synth_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  SynthConfig cfg;
  try {
    cfg.task = j.value("task", std::string("nodeclass"));
    cfg.n_classes = j.value("n_classes", std::size_t{3});
    cfg.noise = j.value("noise", 0.1);
    for (const auto& nt : j.at("node_types")) {
      cfg.node_types.push_back(
          {nt.at("name").get<std::string>(), nt.at("count").get<std::size_t>()});
    }
    for (const auto& et : j.at("edge_types")) {
      cfg.edge_types.push_back({et.at("name").get<std::string>(),
                                et.at("src").get<std::string>(),
                                et.at("dst").get<std::string>(),
                                et.value("out_degree", std::size_t{3})});
    }
    const auto& planted = j.at("planted");
    cfg.planted_K = planted.at("K").get<std::size_t>();
    cfg.target_type = planted.at("target_type").get<std::string>();
    for (const auto& link : planted.at("links")) {
      cfg.planted.push_back({link.at("k").get<std::size_t>(),
                             link.at("i").get<std::size_t>(),
                             link.at("choice").get<std::string>()});
    }
    cfg.train_frac = j.value("train_frac", 0.5);
    cfg.val_frac = j.value("val_frac", 0.25);
    cfg.source_type = j.value("source_type", std::string());
    cfg.n_pairs = j.value("n_pairs", std::size_t{400});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  return cfg;
}

std::string synth_config_json(const SynthConfig& cfg) {
  nlohmann::json j;
  j["task"] = cfg.task;
  j["n_classes"] = cfg.n_classes;
  j["noise"] = cfg.noise;
  nlohmann::json nts = nlohmann::json::array();
  for (const auto& nt : cfg.node_types) {
    nts.push_back({{"name", nt.name}, {"count", nt.count}});
  }
  j["node_types"] = std::move(nts);
  nlohmann::json ets = nlohmann::json::array();
  for (const auto& et : cfg.edge_types) {
    ets.push_back({{"name", et.name},
                   {"src", et.src},
                   {"dst", et.dst},
                   {"out_degree", et.out_degree}});
  }
  j["edge_types"] = std::move(ets);
  nlohmann::json links = nlohmann::json::array();
  for (const auto& l : cfg.planted) {
    links.push_back({{"k", l.k}, {"i", l.i}, {"choice", l.choice}});
  }
  j["planted"] = {{"K", cfg.planted_K},
                  {"target_type", cfg.target_type},
                  {"links", std::move(links)}};
  j["train_frac"] = cfg.train_frac;
  j["val_frac"] = cfg.val_frac;
  if (cfg.task == "rec") {
    j["source_type"] = cfg.source_type;
    j["n_pairs"] = cfg.n_pairs;
  }
  return j.dump(2) + "\n";
}

namespace {

void validate(const SynthConfig& cfg) {
  if (cfg.task != "nodeclass" && cfg.task != "rec") {
    throw ConfigError("synth task must be 'nodeclass' or 'rec'");
  }
  if (cfg.n_classes < 2) throw ConfigError("need at least two clusters");
  if (!(cfg.noise >= 0.0 && cfg.noise <= 1.0)) {
    throw ConfigError("noise rate must lie in [0,1]");
  }
  if (cfg.node_types.empty()) throw ConfigError("no node types declared");
  if (cfg.edge_types.empty()) throw ConfigError("no edge types declared");
  auto has_ntype = [&](const std::string& n) {
    return std::any_of(cfg.node_types.begin(), cfg.node_types.end(),
                       [&](const auto& nt) { return nt.name == n; });
  };
  for (const auto& nt : cfg.node_types) {
    if (nt.count == 0) throw ConfigError("node type '" + nt.name + "' is empty");
  }
  for (const auto& et : cfg.edge_types) {
    if (!has_ntype(et.src) || !has_ntype(et.dst)) {
      throw ConfigError("edge type '" + et.name +
                        "' references an undeclared node type");
    }
    if (et.out_degree == 0) {
      throw ConfigError("edge type '" + et.name + "' has out-degree 0");
    }
  }
  if (!has_ntype(cfg.target_type)) {
    throw ConfigError("unknown target type '" + cfg.target_type + "'");
  }
  if (cfg.task == "rec" && !has_ntype(cfg.source_type)) {
    throw ConfigError("unknown source type '" + cfg.source_type + "'");
  }
  if (cfg.planted_K < 1) throw ConfigError("planted K must be ≥ 1");
  const auto links = canonical_links(cfg.planted_K);
  if (cfg.planted.size() != links.size()) {
    throw ConfigError("planted assignment must cover all " +
                      std::to_string(links.size()) + " links");
  }
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& l : cfg.planted) {
    if (l.k < 1 || l.k > cfg.planted_K || l.i >= l.k) {
      throw ConfigError("planted link (" + std::to_string(l.k) + "," +
                        std::to_string(l.i) + ") is not a valid DAG link");
    }
    if (!seen.emplace(l.k, l.i).second) {
      throw ConfigError("duplicate planted link");
    }
    if (l.choice == "I" || l.choice == "O") continue;
    const bool known = std::any_of(
        cfg.edge_types.begin(), cfg.edge_types.end(),
        [&](const auto& et) { return et.name == l.choice; });
    if (!known) {
      throw ConfigError("planted meta graph references unknown edge type '" +
                        l.choice + "'");
    }
  }
  if (!(cfg.train_frac > 0.0 && cfg.val_frac > 0.0 &&
        cfg.train_frac + cfg.val_frac < 1.0)) {
    throw ConfigError("split fractions must be positive and sum below 1");
  }
}

}  // namespace

MetaGraph planted_meta_graph(const SynthConfig& cfg,
                             const EdgeTypeRegistry& registry) {
  MetaGraph mg;
  mg.K = cfg.planted_K;
  mg.target_type = cfg.target_type;
  const auto links = canonical_links(cfg.planted_K);
  mg.assignment.assign(links.size(), Choice::empty());
  for (const auto& l : cfg.planted) {
    const auto it = std::lower_bound(links.begin(), links.end(),
                                     LinkId{l.k, l.i});
    const auto idx = static_cast<std::size_t>(it - links.begin());
    if (l.choice == "I") {
      mg.assignment[idx] = Choice::identity();
    } else if (l.choice == "O") {
      mg.assignment[idx] = Choice::empty();
    } else {
      mg.assignment[idx] = Choice::edge(registry.index_of(l.choice));
    }
  }
  return mg;
}

HinDataset synth_planted(const SynthConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng(seed);

  HinGraph g;
  for (const auto& nt : cfg.node_types) {
    const std::size_t t = g.node_type_names.size();
    g.node_type_names.push_back(nt.name);
    for (std::size_t c = 0; c < nt.count; ++c) g.node_type.push_back(t);
  }
  g.n_nodes = g.node_type.size();

  std::vector<EdgeTypeInfo> entries;
  for (const auto& et : cfg.edge_types) entries.push_back({et.name, et.src, et.dst});
  g.registry = EdgeTypeRegistry(std::move(entries));

  // hidden cluster per node, drawn before any edges
  std::vector<std::size_t> cluster(g.n_nodes);
  for (auto& c : cluster) c = rng.uniform_index(cfg.n_classes);

  std::set<std::string> planted_etypes;
  for (const auto& l : cfg.planted) {
    if (l.choice != "I" && l.choice != "O") planted_etypes.insert(l.choice);
  }

  std::vector<std::vector<std::size_t>> by_type(cfg.node_types.size());
  for (std::size_t v = 0; v < g.n_nodes; ++v) by_type[g.node_type[v]].push_back(v);
  std::vector<std::vector<std::vector<std::size_t>>> by_type_cluster(
      cfg.node_types.size(),
      std::vector<std::vector<std::size_t>>(cfg.n_classes));
  for (std::size_t v = 0; v < g.n_nodes; ++v) {
    by_type_cluster[g.node_type[v]][cluster[v]].push_back(v);
  }

  for (const auto& et : cfg.edge_types) {
    const std::size_t src_t = g.node_type_index(et.src);
    const std::size_t dst_t = g.node_type_index(et.dst);
    const bool aligned = planted_etypes.count(et.name) != 0;
    std::set<std::pair<std::size_t, std::size_t>> edges;  // (dst, src)
    for (std::size_t u : by_type[src_t]) {
      for (std::size_t e = 0; e < et.out_degree; ++e) {
        const auto& pool = aligned && !by_type_cluster[dst_t][cluster[u]].empty()
                               ? by_type_cluster[dst_t][cluster[u]]
                               : by_type[dst_t];
        const std::size_t v = pool[rng.uniform_index(pool.size())];
        edges.emplace(v, u);
      }
    }
    std::vector<std::tuple<std::size_t, std::size_t, double>> trips;
    for (const auto& [dst, src] : edges) trips.emplace_back(dst, src, 1.0);
    g.adjacency.push_back(row_normalize(
        SparseMatrix::from_triplets(g.n_nodes, g.n_nodes, std::move(trips))));
  }

  FeatureSet features;
  for (std::size_t t = 0; t < cfg.node_types.size(); ++t) {
    TypeFeatures tf;
    tf.node_ids = by_type[t];
    tf.features = DenseMatrix::identity(tf.node_ids.size());
    features.per_type.push_back(std::move(tf));
  }

  TaskData task;
  if (cfg.task == "nodeclass") {
    NodeClassData nc;
    nc.n_classes = cfg.n_classes;
    nc.target_type = cfg.target_type;
    nc.labels.assign(g.n_nodes, -1);
    const std::size_t target_t = g.node_type_index(cfg.target_type);
    for (std::size_t v : by_type[target_t]) {
      std::size_t y = cluster[v];
      if (rng.bernoulli(cfg.noise)) y = rng.uniform_index(cfg.n_classes);
      nc.labels[v] = static_cast<int>(y);
    }
    std::vector<std::size_t> ids = by_type[target_t];
    for (std::size_t j = ids.size(); j > 1; --j) {
      std::swap(ids[j - 1], ids[rng.uniform_index(j)]);
    }
    const auto n_train = static_cast<std::size_t>(
        static_cast<double>(ids.size()) * cfg.train_frac);
    const auto n_val = static_cast<std::size_t>(
        static_cast<double>(ids.size()) * cfg.val_frac);
    if (n_train == 0 || n_val == 0 || n_train + n_val >= ids.size()) {
      throw ConfigError("split fractions leave an empty split");
    }
    nc.train.assign(ids.begin(), ids.begin() + n_train);
    nc.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
    nc.test.assign(ids.begin() + n_train + n_val, ids.end());
    std::sort(nc.train.begin(), nc.train.end());
    std::sort(nc.val.begin(), nc.val.end());
    std::sort(nc.test.begin(), nc.test.end());
    task = std::move(nc);
  } else {
    RecData rec;
    rec.source_type = cfg.source_type;
    rec.target_type = cfg.target_type;
    const std::size_t src_t = g.node_type_index(cfg.source_type);
    const std::size_t dst_t = g.node_type_index(cfg.target_type);
    if (cfg.n_pairs < 8) throw ConfigError("too few pairs to split");
    std::vector<RecPair> pairs;
    for (std::size_t p = 0; p < cfg.n_pairs; ++p) {
      const bool positive = p % 2 == 0;
      const std::size_t u = by_type[src_t][rng.uniform_index(by_type[src_t].size())];
      std::size_t v;
      if (positive && !by_type_cluster[dst_t][cluster[u]].empty()) {
        const auto& pool = by_type_cluster[dst_t][cluster[u]];
        v = pool[rng.uniform_index(pool.size())];
      } else if (!positive) {
        // resample until the clusters differ; bounded tries keep this total
        std::size_t cand = by_type[dst_t][rng.uniform_index(by_type[dst_t].size())];
        for (int tries = 0; tries < 64 && cluster[cand] == cluster[u]; ++tries) {
          cand = by_type[dst_t][rng.uniform_index(by_type[dst_t].size())];
        }
        v = cand;
      } else {
        v = by_type[dst_t][rng.uniform_index(by_type[dst_t].size())];
      }
      int label = positive ? 1 : 0;
      if (rng.bernoulli(cfg.noise)) label = 1 - label;
      pairs.push_back({u, v, label});
    }
    for (std::size_t j = pairs.size(); j > 1; --j) {
      std::swap(pairs[j - 1], pairs[rng.uniform_index(j)]);
    }
    const auto n_train = static_cast<std::size_t>(
        static_cast<double>(pairs.size()) * cfg.train_frac);
    const auto n_val = static_cast<std::size_t>(
        static_cast<double>(pairs.size()) * cfg.val_frac);
    if (n_train == 0 || n_val == 0 || n_train + n_val >= pairs.size()) {
      throw ConfigError("split fractions leave an empty split");
    }
    rec.train.assign(pairs.begin(), pairs.begin() + n_train);
    rec.val.assign(pairs.begin() + n_train, pairs.begin() + n_train + n_val);
    rec.test.assign(pairs.begin() + n_train + n_val, pairs.end());
    task = std::move(rec);
  }

  HinDataset data{std::move(g), std::move(features), std::move(task)};

  // the planted assignment must be expressible in the space it will be
  // searched in
  const MetaGraph planted = planted_meta_graph(cfg, data.graph.registry);
  const SearchSpaceSpec spec =
      build_space(data.graph, cfg.target_type, cfg.planted_K);
  const std::string violation = meta_graph_violation(planted, spec);
  if (!violation.empty()) {
    throw ConfigError("planted meta graph is invalid for its own space: " +
                      violation);
  }
  return data;
}

}  // namespace diffmg
