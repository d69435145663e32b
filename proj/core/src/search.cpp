#include "diffmg/search.hpp"

#include <algorithm>
#include <cmath>

#include "diffmg/errors.hpp"
#include "diffmg/evaluate.hpp"
#include "diffmg/parallel.hpp"
#include "json.hpp"

namespace diffmg {

namespace {

std::size_t argmax_first(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j) {
    if (v[j] > v[best]) best = j;
  }
  return best;
}

}  // namespace

std::vector<double> compute_alpha(const std::vector<double>& lambda) {
  if (lambda.empty()) throw ShapeError("softmax of an empty vector");
  double mx = lambda.front();
  for (double x : lambda) mx = std::max(mx, x);
  std::vector<double> out(lambda.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < lambda.size(); ++j) {
    out[j] = std::exp(lambda[j] - mx);
    sum += out[j];
  }
  for (double& x : out) x /= sum;
  return out;
}

ArchParams::ArchParams(const SearchSpaceSpec& spec, Rng& rng) {
  for (const auto& cands : spec.candidates) {
    std::vector<double> lam(cands.size());
    for (double& x : lam) x = rng.uniform(-1e-3, 1e-3);
    lambda_.push_back(std::move(lam));
    m_.emplace_back(cands.size(), 0.0);
    v_.emplace_back(cands.size(), 0.0);
  }
}

std::vector<std::vector<double>> ArchParams::alphas() const {
  std::vector<std::vector<double>> out;
  out.reserve(lambda_.size());
  for (const auto& lam : lambda_) out.push_back(compute_alpha(lam));
  return out;
}

void ArchParams::adam_step_lambda(
    const std::vector<std::vector<double>>& grads, double lr) {
  if (grads.size() != lambda_.size()) {
    throw ShapeError("lambda gradient does not cover every link");
  }
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  const auto t = static_cast<double>(++steps_);
  const double bc1 = 1.0 - std::pow(kBeta1, t);
  const double bc2 = 1.0 - std::pow(kBeta2, t);
  for (std::size_t l = 0; l < lambda_.size(); ++l) {
    if (grads[l].size() != lambda_[l].size()) {
      throw ShapeError("lambda gradient shape mismatch at link " +
                       std::to_string(l));
    }
    for (std::size_t j = 0; j < lambda_[l].size(); ++j) {
      const double g = grads[l][j];
      double& m = m_[l][j];
      double& v = v_[l][j];
      m = kBeta1 * m + (1.0 - kBeta1) * g;
      v = kBeta2 * v + (1.0 - kBeta2) * g * g;
      lambda_[l][j] -= lr * (m / bc1) / (std::sqrt(v / bc2) + kEps);
    }
  }
}

SampledPath sample_path(const ArchParams& arch, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw ConfigError("epsilon must lie in [0,1]");
  }
  SampledPath path;
  for (std::size_t l = 0; l < arch.n_links(); ++l) {
    const std::vector<double> alpha = compute_alpha(arch.lambda()[l]);
    SampledLink sl;
    sl.random = rng.uniform() < epsilon;
    sl.m_sel = sl.random ? rng.uniform_index(alpha.size()) : argmax_first(alpha);
    sl.coefficient = alpha[sl.m_sel];
    path.links.push_back(sl);
  }
  return path;
}

std::vector<double> lambda_grad(double g, const std::vector<double>& alpha,
                                std::size_t m_sel) {
  std::vector<double> out(alpha.size());
  const double as = alpha[m_sel];
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    out[j] = g * as * ((j == m_sel ? 1.0 : 0.0) - alpha[j]);
  }
  return out;
}

std::vector<double> lambda_grad_full(const std::vector<double>& branch_grads,
                                     const std::vector<double>& alpha) {
  if (branch_grads.size() != alpha.size()) {
    throw ShapeError("branch gradients do not cover every candidate");
  }
  double mean = 0.0;
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    mean += branch_grads[j] * alpha[j];
  }
  std::vector<double> out(alpha.size());
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    out[j] = alpha[j] * (branch_grads[j] - mean);
  }
  return out;
}

SearchState init_search_state(const HinDataset& data, const SearchConfig& cfg,
                              Rng& rng) {
  SearchState st;
  for (const std::string& target : task_target_types(data.task)) {
    st.specs.push_back(build_space(data.graph, target, cfg.K));
  }
  std::optional<std::size_t> n_classes;
  if (const auto* nc = std::get_if<NodeClassData>(&data.task)) {
    n_classes = nc->n_classes;
  }
  st.params = ModelParams::init(data.features, cfg.hidden, n_classes, rng);
  for (const auto& spec : st.specs) st.archs.emplace_back(spec, rng);
  return st;
}

namespace {

LinkMixture path_mixture(const SampledPath& path,
                         const SearchSpaceSpec& spec) {
  LinkMixture mix(spec.links.size());
  for (std::size_t l = 0; l < spec.links.size(); ++l) {
    const SampledLink& sl = path.links[l];
    mix[l].emplace_back(spec.candidates[l][sl.m_sel], sl.coefficient);
  }
  return mix;
}

std::vector<int> pair_labels(const std::vector<RecPair>& pairs) {
  std::vector<int> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.label);
  return out;
}

}  // namespace

LinkMixture full_mixture(const ArchParams& arch, const SearchSpaceSpec& spec) {
  LinkMixture mix(spec.links.size());
  const auto alphas = arch.alphas();
  for (std::size_t l = 0; l < spec.links.size(); ++l) {
    for (std::size_t m = 0; m < spec.candidates[l].size(); ++m) {
      mix[l].emplace_back(spec.candidates[l][m], alphas[l][m]);
    }
  }
  return mix;
}

MetaGraph path_to_meta_graph(const SampledPath& path,
                             const SearchSpaceSpec& spec) {
  MetaGraph mg;
  mg.K = spec.K;
  mg.target_type = spec.target_type;
  for (std::size_t l = 0; l < spec.links.size(); ++l) {
    mg.assignment.push_back(spec.candidates[l][path.links[l].m_sel]);
  }
  return mg;
}

MetaGraph derive(const ArchParams& arch, const SearchSpaceSpec& spec) {
  MetaGraph mg;
  mg.K = spec.K;
  mg.target_type = spec.target_type;
  const auto alphas = arch.alphas();
  for (std::size_t l = 0; l < spec.links.size(); ++l) {
    mg.assignment.push_back(spec.candidates[l][argmax_first(alphas[l])]);
  }
  return mg;
}

EpochStats search_epoch(SearchState& st, const HinDataset& data,
                        const SearchConfig& cfg, double epsilon, Rng& rng) {
  const HinGraph& g = data.graph;
  const std::size_t n_dags = st.specs.size();
  const bool single = cfg.mode == SearchMode::SingleLevel;
  EpochStats stats;

  std::vector<std::vector<std::vector<double>>> alphas(n_dags);
  std::vector<LinkMixture> mixes(n_dags);
  for (std::size_t d = 0; d < n_dags; ++d) {
    alphas[d] = st.archs[d].alphas();
    if (cfg.mode == SearchMode::DartsReference) {
      mixes[d] = full_mixture(st.archs[d], st.specs[d]);
    } else {
      SampledPath path = sample_path(st.archs[d], epsilon, rng);
      mixes[d] = path_mixture(path, st.specs[d]);
      stats.paths.push_back(std::move(path));
    }
  }

  const auto* nc = std::get_if<NodeClassData>(&data.task);
  const auto* rec = std::get_if<RecData>(&data.task);

  std::vector<std::size_t> nodes_union;
  std::vector<RecPair> pairs_union;
  if (single) {
    if (nc) {
      nodes_union = nc->train;
      nodes_union.insert(nodes_union.end(), nc->val.begin(), nc->val.end());
    } else {
      pairs_union = rec->train;
      pairs_union.insert(pairs_union.end(), rec->val.begin(), rec->val.end());
    }
  }

  auto forward_all = [&](bool train_mode) {
    ProjectionTrace ptr =
        train_mode ? project(data.features, st.params, cfg.dropout, &rng)
                   : project(data.features, st.params);
    std::vector<DagTrace> traces;
    traces.reserve(n_dags);
    for (std::size_t d = 0; d < n_dags; ++d) {
      traces.push_back(dag_forward(ptr.h0, st.specs[d], mixes[d], g));
    }
    return std::make_pair(std::move(ptr), std::move(traces));
  };

  // Training-loss step on omega with the sampled path (or full mixture).
  {
    auto [ptr, traces] = forward_all(true);
    ModelGrads grads;
    if (nc) {
      const auto& node_set = single ? nodes_union : nc->train;
      ClassHead out =
          nodeclass_head(traces[0], st.params, nc->labels, node_set, true);
      stats.train_loss = out.loss;
      DagBackward db = dag_backward(out.d_z, st.specs[0], traces[0], g);
      grads = projection_backward(data.features, st.params, ptr, db.d_h0);
      grads.head = std::move(out.d_head);
    } else {
      const auto& pair_set = single ? pairs_union : rec->train;
      RecHead out = rec_head(traces[0], traces[1], pair_set, true);
      stats.train_loss = out.loss;
      DagBackward db0 = dag_backward(out.d_z_src, st.specs[0], traces[0], g);
      DagBackward db1 = dag_backward(out.d_z_dst, st.specs[1], traces[1], g);
      grads = projection_backward(data.features, st.params, ptr,
                                  add(db0.d_h0, db1.d_h0));
    }
    adam_step(st.params, grads, cfg.lr_omega, cfg.wd_omega);
  }

  // Validation-loss step on lambda, same path, updated omega.
  {
    auto [ptr, traces] = forward_all(false);
    (void)ptr;
    std::vector<std::vector<std::vector<double>>> bgrads(n_dags);
    if (nc) {
      const auto& node_set = single ? nodes_union : nc->val;
      ClassHead out =
          nodeclass_head(traces[0], st.params, nc->labels, node_set, true);
      bgrads[0] = dag_backward(out.d_z, st.specs[0], traces[0], g).branch_grads;

      const DenseMatrix* logits = &out.logits;
      ClassHead val_out;
      if (single) {
        val_out =
            nodeclass_head(traces[0], st.params, nc->labels, nc->val, false);
        stats.val_loss = val_out.loss;
        logits = &val_out.logits;
      } else {
        stats.val_loss = out.loss;
      }
      const std::vector<int> pred_all = argmax_rows(*logits);
      std::vector<int> pred, gold;
      for (std::size_t v : nc->val) {
        pred.push_back(pred_all[v]);
        gold.push_back(nc->labels[v]);
      }
      stats.val_metric = macro_f1(pred, gold, nc->n_classes);
    } else {
      const auto& pair_set = single ? pairs_union : rec->val;
      RecHead out = rec_head(traces[0], traces[1], pair_set, true);
      bgrads[0] =
          dag_backward(out.d_z_src, st.specs[0], traces[0], g).branch_grads;
      bgrads[1] =
          dag_backward(out.d_z_dst, st.specs[1], traces[1], g).branch_grads;
      if (single) {
        RecHead val_out = rec_head(traces[0], traces[1], rec->val, false);
        stats.val_loss = val_out.loss;
        stats.val_metric = auc(val_out.scores, pair_labels(rec->val));
      } else {
        stats.val_loss = out.loss;
        stats.val_metric = auc(out.scores, pair_labels(rec->val));
      }
    }

    for (std::size_t d = 0; d < n_dags; ++d) {
      std::vector<std::vector<double>> lgrads(st.specs[d].links.size());
      for (std::size_t l = 0; l < lgrads.size(); ++l) {
        if (cfg.mode == SearchMode::DartsReference) {
          lgrads[l] = lambda_grad_full(bgrads[d][l], alphas[d][l]);
        } else {
          lgrads[l] = lambda_grad(bgrads[d][l][0], alphas[d][l],
                                  stats.paths[d].links[l].m_sel);
        }
      }
      st.archs[d].adam_step_lambda(lgrads, cfg.lr_lambda);
    }
  }
  return stats;
}

SearchOutcome run_search(const HinDataset& data, const SearchConfig& cfg) {
  if (cfg.K < 1) throw ConfigError("K must be ≥ 1");
  if (cfg.epochs < 1) throw ConfigError("search needs at least one epoch");
  if (cfg.n_restarts < 1) throw ConfigError("search needs at least one restart");
  if (!(cfg.epsilon0 >= 0.0 && cfg.epsilon0 < 1.0)) {
    throw ConfigError("epsilon0 must lie in [0,1)");
  }
  if (!(cfg.decay > 0.0 && cfg.decay <= 1.0)) {
    throw ConfigError("epsilon decay must lie in (0,1]");
  }

  SearchOutcome outcome;
  outcome.mode = cfg.mode;
  outcome.restarts.resize(cfg.n_restarts);
  parallel_for(cfg.n_restarts, [&](std::size_t r) {
    RestartRecord& record = outcome.restarts[r];
    record.seed = derive_seed(cfg.seed, r);
    Rng rng(record.seed);
    const std::uint64_t spmm0 = spmm_call_count();
    const std::uint64_t adj0 = spmm_adjoint_call_count();
    SearchState st = init_search_state(data, cfg, rng);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
      const double eps =
          cfg.epsilon0 * std::pow(cfg.decay, static_cast<double>(e));
      EpochStats stats = search_epoch(st, data, cfg, eps, rng);
      record.epochs.push_back(
          {e, stats.train_loss, stats.val_loss, stats.val_metric, eps});
      if (e + 1 == cfg.epochs && !stats.paths.empty()) {
        for (std::size_t d = 0; d < st.specs.size(); ++d) {
          record.last_sampled.push_back(
              path_to_meta_graph(stats.paths[d], st.specs[d]));
        }
      }
      record.sampled_paths.push_back(std::move(stats.paths));
    }
    for (std::size_t d = 0; d < st.specs.size(); ++d) {
      record.derived.push_back(derive(st.archs[d], st.specs[d]));
      record.final_lambda.push_back(st.archs[d].lambda());
    }
    record.spmm_calls = spmm_call_count() - spmm0;
    record.spmm_adjoint_calls = spmm_adjoint_call_count() - adj0;
    record.final_val_metric = record.epochs.back().val_metric;
  });

  outcome.best_restart = 0;
  for (std::size_t r = 1; r < outcome.restarts.size(); ++r) {
    if (outcome.restarts[r].final_val_metric >
        outcome.restarts[outcome.best_restart].final_val_metric) {
      outcome.best_restart = r;
    }
  }
  outcome.meta_graphs = outcome.restarts[outcome.best_restart].derived;
  return outcome;
}

namespace {

const char* mode_name(SearchMode mode) {
  switch (mode) {
    case SearchMode::Sampled:
      return "sampled";
    case SearchMode::DartsReference:
      return "darts";
    case SearchMode::SingleLevel:
      return "single-level";
  }
  return "sampled";
}

nlohmann::json meta_graph_obj(const MetaGraph& mg,
                              const EdgeTypeRegistry& registry) {
  return nlohmann::json::parse(meta_graph_to_json(mg, registry));
}

}  // namespace

std::string search_report_json(const SearchOutcome& outcome,
                               const EdgeTypeRegistry& registry) {
  nlohmann::json j;
  j["mode"] = mode_name(outcome.mode);
  j["best_restart"] = outcome.best_restart;
  nlohmann::json restarts = nlohmann::json::array();
  for (const RestartRecord& r : outcome.restarts) {
    nlohmann::json jr;
    jr["seed"] = r.seed;
    jr["final_val_metric"] = r.final_val_metric;
    jr["spmm_calls"] = r.spmm_calls;
    jr["spmm_adjoint_calls"] = r.spmm_adjoint_calls;
    nlohmann::json epochs = nlohmann::json::array();
    for (const EpochRecord& e : r.epochs) {
      epochs.push_back({{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"val_loss", e.val_loss},
                        {"val_metric", e.val_metric},
                        {"epsilon", e.epsilon}});
    }
    jr["epochs"] = std::move(epochs);
    nlohmann::json lambdas = nlohmann::json::array();
    for (std::size_t d = 0; d < r.final_lambda.size(); ++d) {
      const auto links = canonical_links(r.derived[d].K);
      nlohmann::json per_dag = nlohmann::json::array();
      for (std::size_t l = 0; l < links.size(); ++l) {
        per_dag.push_back({{"k", links[l].k},
                           {"i", links[l].i},
                           {"values", r.final_lambda[d][l]}});
      }
      lambdas.push_back(std::move(per_dag));
    }
    jr["final_lambda"] = std::move(lambdas);
    nlohmann::json derived = nlohmann::json::array();
    for (const MetaGraph& mg : r.derived) {
      derived.push_back(meta_graph_obj(mg, registry));
    }
    jr["derived"] = std::move(derived);
    restarts.push_back(std::move(jr));
  }
  j["restarts"] = std::move(restarts);
  nlohmann::json best = nlohmann::json::array();
  for (const MetaGraph& mg : outcome.meta_graphs) {
    best.push_back(meta_graph_obj(mg, registry));
  }
  j["meta_graphs"] = std::move(best);
  return j.dump(2) + "\n";
}

}  // namespace diffmg
