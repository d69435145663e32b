#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffmg/hin.hpp"
#include "diffmg/search_space.hpp"

namespace diffmg {

struct SynthNodeType {
  std::string name;
  std::size_t count = 0;
};

struct SynthEdgeType {
  std::string name;
  std::string src;
  std::string dst;
  std::size_t out_degree = 3;
};

struct SynthLink {
  std::size_t k = 0;
  std::size_t i = 0;
  std::string choice;  // edge-type name, "I", or "O"
};

// Desk-scale generator: nodes get hidden clusters; edge types named in the
// planted assignment connect same-cluster endpoints, every other edge type
// wires endpoints uniformly at random. Labels (or positive pairs) follow the
// clusters up to the noise rate, so aggregation along the planted meta graph
// is predictive and aggregation along decoys is not.
struct SynthConfig {
  std::string task = "nodeclass";  // "nodeclass" or "rec"
  std::size_t n_classes = 3;       // cluster count
  double noise = 0.1;
  std::vector<SynthNodeType> node_types;
  std::vector<SynthEdgeType> edge_types;
  std::size_t planted_K = 2;
  std::string target_type;
  std::string source_type;  // rec only
  std::vector<SynthLink> planted;
  double train_frac = 0.5;
  double val_frac = 0.25;
  std::size_t n_pairs = 400;  // rec only
};

SynthConfig parse_synth_config(const std::string& json_text);
std::string synth_config_json(const SynthConfig& cfg);

HinDataset synth_planted(const SynthConfig& cfg, std::uint64_t seed);

// The planted assignment as a meta graph over the generated registry.
MetaGraph planted_meta_graph(const SynthConfig& cfg,
                             const EdgeTypeRegistry& registry);

}  // namespace diffmg
