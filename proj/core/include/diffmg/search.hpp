#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffmg/hin.hpp"
#include "diffmg/model.hpp"
#include "diffmg/rng.hpp"
#include "diffmg/search_space.hpp"

namespace diffmg {

// Softmax with max subtraction; entries positive, sum 1.
std::vector<double> compute_alpha(const std::vector<double>& lambda);

// Per-link architecture weights with their own Adam state.
class ArchParams {
 public:
  ArchParams() = default;
  // lambda starts at uniform noise in [-1e-3, 1e-3]: exact zeros would make
  // every argmax a tie, while tiny noise keeps alpha near uniform and the
  // argmax well-defined.
  ArchParams(const SearchSpaceSpec& spec, Rng& rng);

  std::size_t n_links() const { return lambda_.size(); }
  const std::vector<std::vector<double>>& lambda() const { return lambda_; }
  std::vector<std::vector<double>>& lambda() { return lambda_; }
  std::vector<std::vector<double>> alphas() const;

  // Adam on lambda (no weight decay), one shared step counter.
  void adam_step_lambda(const std::vector<std::vector<double>>& grads,
                        double lr);

 private:
  std::vector<std::vector<double>> lambda_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t steps_ = 0;
};

struct SampledLink {
  std::size_t m_sel = 0;
  double coefficient = 0.0;  // alpha of the selected candidate
  bool random = false;       // true when exploration picked the index
};

struct SampledPath {
  std::vector<SampledLink> links;
};

// Per link independently: argmax of alpha with probability 1-epsilon (first
// index wins ties), otherwise uniform over all candidates.
SampledPath sample_path(const ArchParams& arch, double epsilon, Rng& rng);

// Gradient of the loss with respect to lambda when only the selected
// branch's coefficient (= alpha[m_sel]) enters the loss:
//   d/d lambda[m'] = g * alpha[m_sel] * (delta(m_sel, m') - alpha[m'])
std::vector<double> lambda_grad(double g, const std::vector<double>& alpha,
                                std::size_t m_sel);

// Full-mixture counterpart: every branch contributes with weight alpha[m].
std::vector<double> lambda_grad_full(const std::vector<double>& branch_grads,
                                     const std::vector<double>& alpha);

enum class SearchMode { Sampled, DartsReference, SingleLevel };

struct SearchConfig {
  std::size_t K = 4;
  std::size_t hidden = 64;
  std::size_t epochs = 50;
  double epsilon0 = 0.0;
  double decay = 0.9;
  double lr_omega = 0.005;
  double wd_omega = 0.001;
  double lr_lambda = 3e-4;
  double dropout = 0.5;
  std::size_t n_restarts = 3;
  SearchMode mode = SearchMode::Sampled;
  std::uint64_t seed = 0;
};

// One search run in progress: one DAG per target type (two for
// recommendation), all sharing the model parameters.
struct SearchState {
  std::vector<SearchSpaceSpec> specs;
  ModelParams params;
  std::vector<ArchParams> archs;
};

SearchState init_search_state(const HinDataset& data, const SearchConfig& cfg,
                              Rng& rng);

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;
  std::vector<SampledPath> paths;  // per DAG; empty in darts mode
};

// One alternating update: sample a path, train-step omega on it, then
// validation-step lambda on the same path with the updated omega.
EpochStats search_epoch(SearchState& state, const HinDataset& data,
                        const SearchConfig& cfg, double epsilon, Rng& rng);

// Per-link argmax of alpha; ties go to the first candidate.
MetaGraph derive(const ArchParams& arch, const SearchSpaceSpec& spec);

// All candidates of every link, weighted by alpha (the mixture the sampled
// algorithm avoids computing).
LinkMixture full_mixture(const ArchParams& arch, const SearchSpaceSpec& spec);

MetaGraph path_to_meta_graph(const SampledPath& path,
                             const SearchSpaceSpec& spec);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;
  double epsilon = 0.0;
};

struct RestartRecord {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::vector<std::vector<SampledPath>> sampled_paths;  // [epoch][dag]
  std::vector<MetaGraph> derived;                       // per DAG
  std::vector<MetaGraph> last_sampled;                  // per DAG; empty in darts mode
  std::vector<std::vector<std::vector<double>>> final_lambda;  // [dag][link][m]
  std::uint64_t spmm_calls = 0;
  std::uint64_t spmm_adjoint_calls = 0;
  double final_val_metric = 0.0;
};

struct SearchOutcome {
  SearchMode mode = SearchMode::Sampled;
  std::vector<RestartRecord> restarts;
  std::size_t best_restart = 0;
  std::vector<MetaGraph> meta_graphs;  // derivation of the best restart
};

// n_restarts independent runs (restart seeds derived from cfg.seed); keeps
// the derivation from the restart with the best final validation metric.
SearchOutcome run_search(const HinDataset& data, const SearchConfig& cfg);

std::string search_report_json(const SearchOutcome& outcome,
                               const EdgeTypeRegistry& registry);

}  // namespace diffmg
