#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "diffmg/linalg.hpp"

namespace diffmg {

struct EdgeTypeInfo {
  std::string name;
  std::string src_type;
  std::string dst_type;
};

/// Ordered registry of directed edge types. The registry order is the
/// canonical candidate order everywhere downstream. Names "I" and "O" are
/// reserved for the identity and empty operands and rejected here.
class EdgeTypeRegistry {
 public:
  EdgeTypeRegistry() = default;
  explicit EdgeTypeRegistry(std::vector<EdgeTypeInfo> entries);

  const std::vector<EdgeTypeInfo>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;  // throws SchemaError
  const EdgeTypeInfo& at(std::size_t idx) const { return entries_[idx]; }

 private:
  std::vector<EdgeTypeInfo> entries_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

/// Heterogeneous information network over a single global node index.
/// One row-normalized N x N adjacency per edge type; rows index target
/// (destination) nodes, columns index source nodes, so spmm(A_r, H)
/// aggregates source states into targets.
struct HinGraph {
  std::size_t n_nodes = 0;
  std::vector<std::string> node_type_names;  // declared node-type universe
  std::vector<std::size_t> node_type;        // per node, index into names
  EdgeTypeRegistry registry;
  std::vector<SparseMatrix> adjacency;  // parallel to registry entries

  bool has_node_type(const std::string& name) const;
  std::size_t node_type_index(const std::string& name) const;
  std::vector<std::size_t> nodes_of_type(std::size_t type_idx) const;
  const SparseMatrix& adjacency_of(const std::string& etype) const;
};

/// Per-type input features plus the mapping of feature rows back into the
/// global node index. Entry t is the block for node type t.
struct TypeFeatures {
  std::vector<std::size_t> node_ids;  // ascending global ids of this type
  DenseMatrix features;               // node_ids.size() x d_t
};

struct FeatureSet {
  std::vector<TypeFeatures> per_type;  // parallel to node_type_names
};

struct NodeClassData {
  std::size_t n_classes = 0;
  std::vector<int> labels;  // size N, -1 where unlabeled
  std::string target_type;  // type shared by all labeled nodes
  std::vector<std::size_t> train, val, test;
};

struct RecPair {
  std::size_t src = 0;
  std::size_t dst = 0;
  int label = 0;  // 1 positive, 0 negative
};

struct RecData {
  std::string source_type;
  std::string target_type;
  std::vector<RecPair> train, val, test;
};

using TaskData = std::variant<NodeClassData, RecData>;

inline bool is_nodeclass(const TaskData& t) {
  return std::holds_alternative<NodeClassData>(t);
}

struct HinDataset {
  HinGraph graph;
  FeatureSet features;
  TaskData task;
};

/// Loads a dataset directory (node_types.tsv, edge_types.tsv, edges.tsv,
/// optional features.tsv, plus the task files). Adjacencies are
/// row-normalized on load; missing features become one-hot node ids per
/// type. Duplicate edges collapse to one with a warning on stderr.
HinDataset load_hin(const std::string& directory);

/// Writes the dataset back in the same directory layout. One edge line is
/// emitted per stored adjacency entry, so a save/load round trip preserves
/// every sparsity pattern exactly. Features are written only when
/// `explicit_features` is set (one-hot defaults are reconstructed on load).
void save_hin(const std::string& directory, const HinGraph& graph,
              const FeatureSet* explicit_features, const TaskData& task);

/// Edge types whose destination is `target_type` (the task-related set).
/// Returned in registry order.
std::vector<std::string> task_related_types(const HinGraph& g,
                                            const std::string& target_type);

/// Target node type(s) of the dataset's task: one for node classification,
/// {source_type, target_type} for recommendation.
std::vector<std::string> task_target_types(const TaskData& task);

}  // namespace diffmg
