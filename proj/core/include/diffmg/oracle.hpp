#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "diffmg/evaluate.hpp"
#include "diffmg/hin.hpp"
#include "diffmg/model.hpp"
#include "diffmg/search.hpp"
#include "diffmg/search_space.hpp"

namespace diffmg {

// Central differences, one coordinate at a time.
std::vector<double> finite_diff(
    const std::function<double(const std::vector<double>&)>& fn,
    const std::vector<double>& x, double h);

struct RankedEntry {
  std::vector<MetaGraph> meta_graphs;  // one per target type
  double val_metric = 0.0;
};

// Trains every assignment from scratch (the product of both spaces for
// recommendation) and sorts descending by validation metric; enumeration
// order breaks ties. cfg.epochs == 0 selects the reduced 30-epoch budget.
std::vector<RankedEntry> brute_force_search(const HinDataset& data,
                                            std::size_t K,
                                            const EvalConfig& cfg,
                                            std::uint64_t cap);

std::string ranking_jsonl(const std::vector<RankedEntry>& ranking,
                          const EdgeTypeRegistry& registry);

// 0-based position of an exact assignment match; throws if absent.
std::size_t ranking_position(const std::vector<RankedEntry>& ranking,
                             const std::vector<MetaGraph>& meta_graphs);

// Numerical verification of the temperature-softmax limit: relax one link to
// the weights alpha[m] * softmax(alpha/t)[m] with every branch computed, and
// follow d loss / d alpha[m] as t shrinks. Non-selected gradients must
// vanish; the selected one must approach the hard-selection gradient.
struct Prop1Report {
  std::size_t dag_index = 0;
  std::size_t link_index = 0;
  std::size_t m_star = 0;
  std::vector<double> t_values;
  std::vector<std::vector<double>> alpha_grads;  // [t][candidate]
  double hard_grad = 0.0;
  bool nonselected_vanish = false;
  bool selected_converges = false;
  bool pass() const { return nonselected_vanish && selected_converges; }
};

Prop1Report prop1_numeric_check(const HinDataset& data,
                                const SearchState& state,
                                std::size_t dag_index, std::size_t link_index,
                                const std::vector<double>& t_sequence);

// Overwrites every lambda vector with a randomly permuted ladder
// (0, step, 2*step, ...). Freshly initialized lambdas sit within 1e-3 of
// each other, which keeps the temperature softmax far from saturation at
// any practical t; the ladder gives each link an unambiguous, well
// separated argmax so the t -> 0 limit is observable.
void spread_lambda(ArchParams& arch, Rng& rng, double step = 0.75);

// Full mixture of every candidate branch, weighted by alpha.
DagTrace darts_reference_forward(const DenseMatrix& h0, const ArchParams& arch,
                                 const SearchSpaceSpec& spec,
                                 const HinGraph& g);

struct GradCheckReport {
  std::size_t n_compared = 0;
  double max_rel_err = 0.0;
  std::vector<std::string> failures;
  bool pass() const { return failures.empty(); }
};

// Compares every parameter-tensor gradient and every per-branch coefficient
// gradient against central differences on the training loss (no dropout).
// Reseeds internally when an instance lands too close to a relu kink.
GradCheckReport gradcheck_model(const HinDataset& data, std::size_t K,
                                std::uint64_t seed, double h = 1e-6,
                                double tol = 1e-4);

// Same for the lambda gradient, holding the sampled selection frozen while
// the perturbed softmax weights are recomputed.
GradCheckReport gradcheck_lambda(const HinDataset& data, std::size_t K,
                                 std::uint64_t seed, double h = 1e-6,
                                 double tol = 1e-4);

}  // namespace diffmg
