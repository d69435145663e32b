#include "diffmg/hin.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <tuple>

#include "diffmg/errors.hpp"

namespace fs = std::filesystem;

namespace diffmg {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct TsvReader {
  std::string path;
  std::ifstream in;
  std::size_t line_no = 0;

  explicit TsvReader(const std::string& p) : path(p), in(p) {
    if (!in) throw IngestError("cannot open " + p);
  }

  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      fields.clear();
      std::size_t start = 0;
      while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
          fields.push_back(line.substr(start));
          break;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
      }
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw IngestError(path + ":" + std::to_string(line_no) + ": " + what);
  }
};

std::size_t parse_node_id(TsvReader& r, const std::string& field,
                          std::size_t n_nodes) {
  std::size_t pos = 0;
  unsigned long long id = 0;
  try {
    id = std::stoull(field, &pos);
  } catch (const std::exception&) {
    r.fail("invalid node id '" + field + "'");
  }
  if (pos != field.size()) r.fail("invalid node id '" + field + "'");
  if (n_nodes != 0 && id >= n_nodes) {
    r.fail("node id out of range: " + field);
  }
  return static_cast<std::size_t>(id);
}

std::vector<std::size_t> read_id_list(const std::string& path,
                                      std::size_t n_nodes) {
  TsvReader r(path);
  std::vector<std::size_t> out;
  std::vector<std::string> fields;
  while (r.next(fields)) {
    if (fields.size() != 1) r.fail("expected one node id per line");
    out.push_back(parse_node_id(r, fields[0], n_nodes));
  }
  return out;
}

}  // namespace

EdgeTypeRegistry::EdgeTypeRegistry(std::vector<EdgeTypeInfo> entries)
    : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.name == "I" || e.name == "O") {
      throw SchemaError("edge type name '" + e.name + "' is reserved");
    }
    if (!by_name_.emplace(e.name, i).second) {
      throw SchemaError("duplicate edge type name '" + e.name + "'");
    }
  }
}

bool EdgeTypeRegistry::contains(const std::string& name) const {
  return by_name_.count(name) != 0;
}

std::size_t EdgeTypeRegistry::index_of(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) {
    throw SchemaError("unknown edge type '" + name + "'");
  }
  return it->second;
}

bool HinGraph::has_node_type(const std::string& name) const {
  return std::find(node_type_names.begin(), node_type_names.end(), name) !=
         node_type_names.end();
}

std::size_t HinGraph::node_type_index(const std::string& name) const {
  auto it = std::find(node_type_names.begin(), node_type_names.end(), name);
  if (it == node_type_names.end()) {
    throw SchemaError("unknown node type '" + name + "'");
  }
  return static_cast<std::size_t>(it - node_type_names.begin());
}

std::vector<std::size_t> HinGraph::nodes_of_type(std::size_t type_idx) const {
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < n_nodes; ++v) {
    if (node_type[v] == type_idx) out.push_back(v);
  }
  return out;
}

const SparseMatrix& HinGraph::adjacency_of(const std::string& etype) const {
  return adjacency[registry.index_of(etype)];
}

std::vector<std::string> task_related_types(const HinGraph& g,
                                            const std::string& target_type) {
  if (!g.has_node_type(target_type)) {
    throw SchemaError("unknown target node type '" + target_type + "'");
  }
  std::vector<std::string> out;
  for (const auto& e : g.registry.entries()) {
    if (e.dst_type == target_type) out.push_back(e.name);
  }
  return out;
}

std::vector<std::string> task_target_types(const TaskData& task) {
  if (const auto* nc = std::get_if<NodeClassData>(&task)) {
    return {nc->target_type};
  }
  const auto& rec = std::get<RecData>(task);
  return {rec.source_type, rec.target_type};
}

HinDataset load_hin(const std::string& directory) {
  const fs::path dir(directory);
  if (!fs::is_directory(dir)) {
    throw IngestError("not a directory: " + directory);
  }

  HinGraph g;

  // node_types.tsv
  {
    TsvReader r((dir / "node_types.tsv").string());
    std::vector<std::string> fields;
    std::size_t expected = 0;
    while (r.next(fields)) {
      if (fields.size() != 2) r.fail("expected 'node_id<TAB>type_name'");
      const std::size_t id = parse_node_id(r, fields[0], 0);
      if (id != expected) {
        r.fail("node ids must be contiguous from 0; got " + fields[0]);
      }
      ++expected;
      const std::string& tname = fields[1];
      auto it = std::find(g.node_type_names.begin(), g.node_type_names.end(),
                          tname);
      std::size_t tidx;
      if (it == g.node_type_names.end()) {
        tidx = g.node_type_names.size();
        g.node_type_names.push_back(tname);
      } else {
        tidx = static_cast<std::size_t>(it - g.node_type_names.begin());
      }
      g.node_type.push_back(tidx);
    }
    g.n_nodes = expected;
    if (g.n_nodes == 0) r.fail("no nodes declared");
  }

  // edge_types.tsv
  {
    TsvReader r((dir / "edge_types.tsv").string());
    std::vector<std::string> fields;
    std::vector<EdgeTypeInfo> entries;
    while (r.next(fields)) {
      if (fields.size() != 3) {
        r.fail("expected 'etype_name<TAB>src_type<TAB>dst_type'");
      }
      if (!g.has_node_type(fields[1])) {
        throw SchemaError(r.path + ":" + std::to_string(r.line_no) +
                          ": source type '" + fields[1] +
                          "' not in the declared node-type set");
      }
      if (!g.has_node_type(fields[2])) {
        throw SchemaError(r.path + ":" + std::to_string(r.line_no) +
                          ": destination type '" + fields[2] +
                          "' not in the declared node-type set");
      }
      entries.push_back({fields[0], fields[1], fields[2]});
    }
    g.registry = EdgeTypeRegistry(std::move(entries));
  }

  if (g.node_type_names.size() + g.registry.size() <= 2) {
    std::cerr << "warning: " << directory
              << ": |node types| + |edge types| <= 2; the graph is not "
                 "heterogeneous\n";
  }

  // edges.tsv
  {
    TsvReader r((dir / "edges.tsv").string());
    std::vector<std::string> fields;
    std::vector<std::set<std::pair<std::size_t, std::size_t>>> per_type(
        g.registry.size());
    std::vector<std::size_t> dup_count(g.registry.size(), 0);
    while (r.next(fields)) {
      if (fields.size() != 3) {
        r.fail("expected 'src_id<TAB>dst_id<TAB>etype_name'");
      }
      const std::size_t src = parse_node_id(r, fields[0], g.n_nodes);
      const std::size_t dst = parse_node_id(r, fields[1], g.n_nodes);
      if (!g.registry.contains(fields[2])) {
        throw SchemaError(r.path + ":" + std::to_string(r.line_no) +
                          ": unknown edge type '" + fields[2] + "'");
      }
      const std::size_t t = g.registry.index_of(fields[2]);
      const auto& info = g.registry.at(t);
      if (g.node_type_names[g.node_type[src]] != info.src_type ||
          g.node_type_names[g.node_type[dst]] != info.dst_type) {
        throw SchemaError(
            r.path + ":" + std::to_string(r.line_no) + ": edge (" + fields[0] +
            " -> " + fields[1] + ") contradicts type '" + info.name + "' (" +
            info.src_type + " -> " + info.dst_type + ")");
      }
      // rows = destination, columns = source
      if (!per_type[t].emplace(dst, src).second) ++dup_count[t];
    }
    for (std::size_t t = 0; t < g.registry.size(); ++t) {
      if (dup_count[t] > 0) {
        std::cerr << "warning: edges.tsv: " << dup_count[t]
                  << " duplicate edge(s) of type '" << g.registry.at(t).name
                  << "' collapsed\n";
      }
      std::vector<std::tuple<std::size_t, std::size_t, double>> trips;
      trips.reserve(per_type[t].size());
      for (const auto& [dst, src] : per_type[t]) trips.emplace_back(dst, src, 1.0);
      g.adjacency.push_back(row_normalize(
          SparseMatrix::from_triplets(g.n_nodes, g.n_nodes, std::move(trips))));
    }
  }

  // features.tsv (optional) or one-hot ids per type
  FeatureSet features;
  features.per_type.resize(g.node_type_names.size());
  const fs::path feat_path = dir / "features.tsv";
  if (fs::exists(feat_path)) {
    std::vector<std::vector<double>> rows(g.n_nodes);
    std::vector<bool> seen(g.n_nodes, false);
    TsvReader r(feat_path.string());
    std::vector<std::string> fields;
    while (r.next(fields)) {
      if (fields.size() != 2) r.fail("expected 'node_id<TAB>v1 v2 ...'");
      const std::size_t id = parse_node_id(r, fields[0], g.n_nodes);
      if (seen[id]) r.fail("duplicate feature row for node " + fields[0]);
      seen[id] = true;
      std::istringstream vs(fields[1]);
      double v;
      while (vs >> v) rows[id].push_back(v);
      if (rows[id].empty()) r.fail("empty feature vector");
    }
    for (std::size_t v = 0; v < g.n_nodes; ++v) {
      if (!seen[v]) {
        throw IngestError(feat_path.string() + ": node " + std::to_string(v) +
                          " has no feature row");
      }
    }
    for (std::size_t t = 0; t < g.node_type_names.size(); ++t) {
      auto ids = g.nodes_of_type(t);
      const std::size_t d = ids.empty() ? 1 : rows[ids[0]].size();
      DenseMatrix m(ids.size(), d);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (rows[ids[i]].size() != d) {
          throw IngestError(feat_path.string() +
                            ": inconsistent feature dimension within type '" +
                            g.node_type_names[t] + "'");
        }
        for (std::size_t j = 0; j < d; ++j) m(i, j) = rows[ids[i]][j];
      }
      features.per_type[t] = {std::move(ids), std::move(m)};
    }
  } else {
    for (std::size_t t = 0; t < g.node_type_names.size(); ++t) {
      auto ids = g.nodes_of_type(t);
      DenseMatrix m = DenseMatrix::identity(ids.size());
      features.per_type[t] = {std::move(ids), std::move(m)};
    }
  }

  // Task: labels.tsv -> node classification, task.txt -> recommendation.
  TaskData task;
  const fs::path labels_path = dir / "labels.tsv";
  const fs::path task_path = dir / "task.txt";
  if (fs::exists(labels_path)) {
    NodeClassData nc;
    nc.labels.assign(g.n_nodes, -1);
    TsvReader r(labels_path.string());
    std::vector<std::string> fields;
    int max_class = -1;
    std::optional<std::size_t> label_type;
    while (r.next(fields)) {
      if (fields.size() != 2) r.fail("expected 'node_id<TAB>class_id'");
      const std::size_t id = parse_node_id(r, fields[0], g.n_nodes);
      int cls = -1;
      try {
        cls = std::stoi(fields[1]);
      } catch (const std::exception&) {
        r.fail("invalid class id '" + fields[1] + "'");
      }
      if (cls < 0) r.fail("negative class id");
      if (nc.labels[id] != -1) r.fail("duplicate label for node " + fields[0]);
      nc.labels[id] = cls;
      max_class = std::max(max_class, cls);
      if (!label_type) {
        label_type = g.node_type[id];
      } else if (*label_type != g.node_type[id]) {
        throw SchemaError(r.path + ":" + std::to_string(r.line_no) +
                          ": labeled nodes span multiple node types");
      }
    }
    if (max_class < 0) r.fail("no labels");
    nc.n_classes = static_cast<std::size_t>(max_class) + 1;
    nc.target_type = g.node_type_names[*label_type];
    nc.train = read_id_list((dir / "split_train.txt").string(), g.n_nodes);
    nc.val = read_id_list((dir / "split_val.txt").string(), g.n_nodes);
    nc.test = read_id_list((dir / "split_test.txt").string(), g.n_nodes);
    std::set<std::size_t> seen_ids;
    for (const auto* split : {&nc.train, &nc.val, &nc.test}) {
      for (std::size_t v : *split) {
        if (nc.labels[v] < 0) {
          throw IngestError("split references unlabeled node " +
                            std::to_string(v));
        }
        if (!seen_ids.insert(v).second) {
          throw IngestError("splits are not disjoint: node " +
                            std::to_string(v) + " appears twice");
        }
      }
    }
    task = std::move(nc);
  } else if (fs::exists(task_path)) {
    RecData rec;
    {
      TsvReader r(task_path.string());
      std::vector<std::string> fields;
      while (r.next(fields)) {
        const std::string& line = fields[0];
        if (line.rfind("source_type=", 0) == 0) {
          rec.source_type = line.substr(12);
        } else if (line.rfind("target_type=", 0) == 0) {
          rec.target_type = line.substr(12);
        } else {
          r.fail("expected 'source_type=<name>' or 'target_type=<name>'");
        }
      }
    }
    if (!g.has_node_type(rec.source_type) || !g.has_node_type(rec.target_type)) {
      throw SchemaError("task.txt declares unknown node type");
    }
    auto read_pairs = [&](const std::string& name) {
      TsvReader r((dir / name).string());
      std::vector<std::string> fields;
      std::vector<RecPair> pairs;
      while (r.next(fields)) {
        if (fields.size() != 3) r.fail("expected 'src_id<TAB>dst_id<TAB>label'");
        RecPair p;
        p.src = parse_node_id(r, fields[0], g.n_nodes);
        p.dst = parse_node_id(r, fields[1], g.n_nodes);
        if (fields[2] == "1") {
          p.label = 1;
        } else if (fields[2] == "0") {
          p.label = 0;
        } else {
          r.fail("label must be 0 or 1");
        }
        if (g.node_type_names[g.node_type[p.src]] != rec.source_type ||
            g.node_type_names[g.node_type[p.dst]] != rec.target_type) {
          throw SchemaError(r.path + ":" + std::to_string(r.line_no) +
                            ": pair endpoints do not match the declared "
                            "source/target types");
        }
        pairs.push_back(p);
      }
      return pairs;
    };
    rec.train = read_pairs("pairs_train.tsv");
    rec.val = read_pairs("pairs_val.tsv");
    rec.test = read_pairs("pairs_test.tsv");
    task = std::move(rec);
  } else {
    throw IngestError(directory +
                      ": neither labels.tsv nor task.txt present; no task");
  }

  return {std::move(g), std::move(features), std::move(task)};
}

void save_hin(const std::string& directory, const HinGraph& graph,
              const FeatureSet* explicit_features, const TaskData& task) {
  const fs::path dir(directory);
  fs::create_directories(dir);

  {
    std::ofstream out(dir / "node_types.tsv");
    for (std::size_t v = 0; v < graph.n_nodes; ++v) {
      out << v << '\t' << graph.node_type_names[graph.node_type[v]] << '\n';
    }
  }
  {
    std::ofstream out(dir / "edge_types.tsv");
    for (const auto& e : graph.registry.entries()) {
      out << e.name << '\t' << e.src_type << '\t' << e.dst_type << '\n';
    }
  }
  {
    std::ofstream out(dir / "edges.tsv");
    for (std::size_t t = 0; t < graph.registry.size(); ++t) {
      const auto& a = graph.adjacency[t];
      const auto& name = graph.registry.at(t).name;
      for (std::size_t dst = 0; dst < a.rows(); ++dst) {
        for (std::size_t p = a.row_offsets()[dst]; p < a.row_offsets()[dst + 1];
             ++p) {
          out << a.col_indices()[p] << '\t' << dst << '\t' << name << '\n';
        }
      }
    }
  }
  if (explicit_features != nullptr) {
    std::ofstream out(dir / "features.tsv");
    for (std::size_t v = 0; v < graph.n_nodes; ++v) {
      const auto& tf = explicit_features->per_type[graph.node_type[v]];
      const auto it = std::find(tf.node_ids.begin(), tf.node_ids.end(), v);
      const std::size_t r = static_cast<std::size_t>(it - tf.node_ids.begin());
      out << v << '\t';
      for (std::size_t j = 0; j < tf.features.cols(); ++j) {
        if (j > 0) out << ' ';
        out << fmt_double(tf.features(r, j));
      }
      out << '\n';
    }
  }

  if (const auto* nc = std::get_if<NodeClassData>(&task)) {
    {
      std::ofstream out(dir / "labels.tsv");
      for (std::size_t v = 0; v < graph.n_nodes; ++v) {
        if (nc->labels[v] >= 0) out << v << '\t' << nc->labels[v] << '\n';
      }
    }
    const std::pair<const char*, const std::vector<std::size_t>*> splits[] = {
        {"split_train.txt", &nc->train},
        {"split_val.txt", &nc->val},
        {"split_test.txt", &nc->test}};
    for (const auto& [name, ids] : splits) {
      std::ofstream out(dir / name);
      for (std::size_t v : *ids) out << v << '\n';
    }
  } else {
    const auto& rec = std::get<RecData>(task);
    {
      std::ofstream out(dir / "task.txt");
      out << "source_type=" << rec.source_type << '\n';
      out << "target_type=" << rec.target_type << '\n';
    }
    const std::pair<const char*, const std::vector<RecPair>*> splits[] = {
        {"pairs_train.tsv", &rec.train},
        {"pairs_val.tsv", &rec.val},
        {"pairs_test.tsv", &rec.test}};
    for (const auto& [name, pairs] : splits) {
      std::ofstream out(dir / name);
      for (const auto& p : *pairs) {
        out << p.src << '\t' << p.dst << '\t' << p.label << '\n';
      }
    }
  }
}

}  // namespace diffmg
