#include "diffmg/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <variant>

#include "diffmg/errors.hpp"
#include "diffmg/parallel.hpp"
#include "diffmg/rng.hpp"
#include "json.hpp"

namespace diffmg {

std::vector<double> finite_diff(
    const std::function<double(const std::vector<double>&)>& fn,
    const std::vector<double>& x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite differences need h > 0");
  std::vector<double> grad(x.size());
  std::vector<double> probe = x;
  for (std::size_t j = 0; j < x.size(); ++j) {
    probe[j] = x[j] + h;
    const double fp = fn(probe);
    probe[j] = x[j] - h;
    const double fm = fn(probe);
    probe[j] = x[j];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("finite_diff: non-finite function value");
    }
    grad[j] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

namespace {

struct MixtureBackward {
  double loss = 0.0;
  ModelGrads grads;
  std::vector<std::vector<std::vector<double>>> branch_grads;
};

std::vector<DagTrace> forward_dags(const HinDataset& data,
                                   const std::vector<SearchSpaceSpec>& specs,
                                   const DenseMatrix& h0,
                                   const std::vector<LinkMixture>& mixes) {
  std::vector<DagTrace> traces;
  traces.reserve(specs.size());
  for (std::size_t d = 0; d < specs.size(); ++d) {
    traces.push_back(dag_forward(h0, specs[d], mixes[d], data.graph));
  }
  return traces;
}

double mixture_loss(const HinDataset& data,
                    const std::vector<SearchSpaceSpec>& specs,
                    const ModelParams& params,
                    const std::vector<LinkMixture>& mixes) {
  ProjectionTrace ptr = project(data.features, params);
  const auto traces = forward_dags(data, specs, ptr.h0, mixes);
  if (const auto* nc = std::get_if<NodeClassData>(&data.task)) {
    return nodeclass_head(traces[0], params, nc->labels, nc->train, false)
        .loss;
  }
  const auto& rec = std::get<RecData>(data.task);
  return rec_head(traces[0], traces[1], rec.train, false).loss;
}

MixtureBackward mixture_backward(const HinDataset& data,
                                 const std::vector<SearchSpaceSpec>& specs,
                                 const ModelParams& params,
                                 const std::vector<LinkMixture>& mixes) {
  MixtureBackward out;
  ProjectionTrace ptr = project(data.features, params);
  const auto traces = forward_dags(data, specs, ptr.h0, mixes);
  if (const auto* nc = std::get_if<NodeClassData>(&data.task)) {
    ClassHead head =
        nodeclass_head(traces[0], params, nc->labels, nc->train, true);
    out.loss = head.loss;
    DagBackward db = dag_backward(head.d_z, specs[0], traces[0], data.graph);
    out.grads = projection_backward(data.features, params, ptr, db.d_h0);
    out.grads.head = std::move(head.d_head);
    out.branch_grads.push_back(std::move(db.branch_grads));
  } else {
    const auto& rec = std::get<RecData>(data.task);
    RecHead head = rec_head(traces[0], traces[1], rec.train, true);
    out.loss = head.loss;
    DagBackward db0 =
        dag_backward(head.d_z_src, specs[0], traces[0], data.graph);
    DagBackward db1 =
        dag_backward(head.d_z_dst, specs[1], traces[1], data.graph);
    out.grads = projection_backward(data.features, params, ptr,
                                    add(db0.d_h0, db1.d_h0));
    out.branch_grads.push_back(std::move(db0.branch_grads));
    out.branch_grads.push_back(std::move(db1.branch_grads));
  }
  return out;
}

std::vector<LinkMixture> mixtures_of_paths(
    const std::vector<SearchSpaceSpec>& specs,
    const std::vector<SampledPath>& paths) {
  std::vector<LinkMixture> mixes(specs.size());
  for (std::size_t d = 0; d < specs.size(); ++d) {
    mixes[d].resize(specs[d].links.size());
    for (std::size_t l = 0; l < specs[d].links.size(); ++l) {
      const SampledLink& sl = paths[d].links[l];
      mixes[d][l].emplace_back(specs[d].candidates[l][sl.m_sel],
                               sl.coefficient);
    }
  }
  return mixes;
}

std::size_t argmax_first(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j) {
    if (v[j] > v[best]) best = j;
  }
  return best;
}

// An instance is usable for finite differences when no relu input sits so
// close to its kink that an h-sized parameter nudge could cross it.
bool kink_margins_ok(const HinDataset& data,
                     const std::vector<SearchSpaceSpec>& specs,
                     const ModelParams& params,
                     const std::vector<LinkMixture>& mixes, double margin) {
  ProjectionTrace ptr = project(data.features, params);
  for (const auto& pre : ptr.pre) {
    for (double x : pre.values()) {
      if (x != 0.0 && std::abs(x) < margin) return false;
    }
  }
  const auto traces = forward_dags(data, specs, ptr.h0, mixes);
  for (const auto& tr : traces) {
    for (double x : tr.h.back().values()) {
      if (x != 0.0 && std::abs(x) < margin) return false;
    }
  }
  return true;
}

nlohmann::json meta_graph_obj(const MetaGraph& mg,
                              const EdgeTypeRegistry& registry) {
  return nlohmann::json::parse(meta_graph_to_json(mg, registry));
}

}  // namespace

std::vector<RankedEntry> brute_force_search(const HinDataset& data,
                                            std::size_t K,
                                            const EvalConfig& cfg,
                                            std::uint64_t cap) {
  std::vector<SearchSpaceSpec> specs;
  for (const std::string& target : task_target_types(data.task)) {
    specs.push_back(build_space(data.graph, target, K));
  }
  BigUint total(1);
  for (const auto& spec : specs) {
    for (const auto& cands : spec.candidates) total *= cands.size();
  }
  if (total.exceeds(cap)) {
    throw CapExceededError("the space holds " + total.str() +
                               " assignments, exceeding the cap of " +
                               std::to_string(cap),
                           total.str());
  }
  std::vector<std::vector<MetaGraph>> per_space(specs.size());
  for (std::size_t s = 0; s < specs.size(); ++s) {
    enumerate_space(specs[s], cap,
                    [&](const MetaGraph& mg) { per_space[s].push_back(mg); });
  }
  const std::uint64_t n = total.as_u64();
  std::vector<RankedEntry> entries(n);
  EvalConfig budget = cfg;
  if (budget.epochs == 0) budget.epochs = 30;
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    std::vector<MetaGraph> mgs;
    if (specs.size() == 1) {
      mgs = {per_space[0][i]};
    } else {
      mgs = {per_space[0][i / per_space[1].size()],
             per_space[1][i % per_space[1].size()]};
    }
    EvalReport rep = train_eval(data, mgs, budget);
    entries[i] = {std::move(mgs), rep.val_metric_at_best};
  });
  std::stable_sort(entries.begin(), entries.end(),
                   [](const RankedEntry& a, const RankedEntry& b) {
                     return a.val_metric > b.val_metric;
                   });
  return entries;
}

std::string ranking_jsonl(const std::vector<RankedEntry>& ranking,
                          const EdgeTypeRegistry& registry) {
  std::ostringstream os;
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    nlohmann::json j;
    j["rank"] = r + 1;
    j["metric"] = ranking[r].val_metric;
    if (ranking[r].meta_graphs.size() == 1) {
      j["meta_graph"] = meta_graph_obj(ranking[r].meta_graphs[0], registry);
    } else {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& mg : ranking[r].meta_graphs) {
        arr.push_back(meta_graph_obj(mg, registry));
      }
      j["meta_graphs"] = std::move(arr);
    }
    os << j.dump() << '\n';
  }
  return os.str();
}

std::size_t ranking_position(const std::vector<RankedEntry>& ranking,
                             const std::vector<MetaGraph>& meta_graphs) {
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    if (ranking[r].meta_graphs == meta_graphs) return r;
  }
  throw std::runtime_error("assignment not present in the ranking");
}

Prop1Report prop1_numeric_check(const HinDataset& data,
                                const SearchState& state,
                                std::size_t dag_index, std::size_t link_index,
                                const std::vector<double>& t_sequence) {
  if (t_sequence.empty()) throw ConfigError("empty temperature sequence");
  for (std::size_t j = 0; j < t_sequence.size(); ++j) {
    if (!(t_sequence[j] > 0.0)) {
      throw ConfigError("temperatures must be positive");
    }
    if (j > 0 && !(t_sequence[j] < t_sequence[j - 1])) {
      throw ConfigError("temperatures must strictly decrease");
    }
  }
  const auto& specs = state.specs;
  if (dag_index >= specs.size() ||
      link_index >= specs[dag_index].links.size()) {
    throw ConfigError("no such link");
  }

  std::vector<std::vector<std::vector<double>>> alphas;
  for (const auto& arch : state.archs) alphas.push_back(arch.alphas());
  const std::vector<double>& alpha = alphas[dag_index][link_index];

  Prop1Report report;
  report.dag_index = dag_index;
  report.link_index = link_index;
  report.m_star = argmax_first(alpha);
  report.t_values = t_sequence;
  for (std::size_t q = 0; q < alpha.size(); ++q) {
    if (q != report.m_star && alpha[q] == alpha[report.m_star]) {
      throw ConfigError("argmax tie at the link; the t -> 0 limit is "
                        "ill-defined");
    }
  }

  // hard selection everywhere: argmax branch with its alpha as coefficient
  std::vector<LinkMixture> hard(specs.size());
  for (std::size_t d = 0; d < specs.size(); ++d) {
    hard[d].resize(specs[d].links.size());
    for (std::size_t l = 0; l < specs[d].links.size(); ++l) {
      const std::size_t m = argmax_first(alphas[d][l]);
      hard[d][l].emplace_back(specs[d].candidates[l][m], alphas[d][l][m]);
    }
  }
  report.hard_grad =
      mixture_backward(data, specs, state.params, hard)
          .branch_grads[dag_index][link_index][0];

  for (double t : t_sequence) {
    std::vector<double> scaled = alpha;
    for (double& x : scaled) x /= t;
    const std::vector<double> ht = compute_alpha(scaled);

    std::vector<LinkMixture> mixes = hard;
    mixes[dag_index][link_index].clear();
    const auto& cands = specs[dag_index].candidates[link_index];
    for (std::size_t m = 0; m < cands.size(); ++m) {
      mixes[dag_index][link_index].emplace_back(cands[m], alpha[m] * ht[m]);
    }
    const auto bg = mixture_backward(data, specs, state.params, mixes)
                        .branch_grads[dag_index][link_index];

    double inner = 0.0;
    for (std::size_t m = 0; m < bg.size(); ++m) {
      inner += bg[m] * alpha[m] * ht[m];
    }
    std::vector<double> grads(bg.size());
    for (std::size_t q = 0; q < bg.size(); ++q) {
      grads[q] = bg[q] * ht[q] + ht[q] / t * (bg[q] * alpha[q] - inner);
    }
    report.alpha_grads.push_back(std::move(grads));
  }

  const auto& first = report.alpha_grads.front();
  const auto& last = report.alpha_grads.back();
  report.nonselected_vanish = true;
  for (std::size_t q = 0; q < last.size(); ++q) {
    if (q == report.m_star) continue;
    if (std::abs(last[q]) > std::max(1e-3 * std::abs(first[q]), 1e-12)) {
      report.nonselected_vanish = false;
    }
  }
  report.selected_converges =
      std::abs(last[report.m_star] - report.hard_grad) <=
      1e-3 * std::max(std::abs(report.hard_grad), 1e-12);
  return report;
}

void spread_lambda(ArchParams& arch, Rng& rng, double step) {
  for (auto& lambda : arch.lambda()) {
    for (std::size_t m = 0; m < lambda.size(); ++m) {
      lambda[m] = step * static_cast<double>(m);
    }
    for (std::size_t m = lambda.size(); m > 1; --m) {
      std::swap(lambda[m - 1], lambda[rng.uniform_index(m)]);
    }
  }
}

DagTrace darts_reference_forward(const DenseMatrix& h0, const ArchParams& arch,
                                 const SearchSpaceSpec& spec,
                                 const HinGraph& g) {
  return dag_forward(h0, spec, full_mixture(arch, spec), g);
}

namespace {

struct Comparer {
  GradCheckReport* rep;
  double tol;

  void operator()(const std::string& name, double analytic, double fd) const {
    ++rep->n_compared;
    const double diff = std::abs(analytic - fd);
    const double denom = std::max(std::abs(analytic), std::abs(fd));
    const double rel = denom > 0.0 ? diff / denom : 0.0;
    if (denom > 1e-6) rep->max_rel_err = std::max(rep->max_rel_err, rel);
    if (diff > 1e-7 && rel > tol) {
      std::ostringstream os;
      os << name << ": analytic " << analytic << " vs finite difference "
         << fd;
      rep->failures.push_back(os.str());
    }
  }
};

SearchState make_state(const HinDataset& data, std::size_t K, std::uint64_t s,
                       Rng& rng) {
  SearchConfig cfg;
  cfg.K = K;
  cfg.hidden = 3 + s % 6;
  return init_search_state(data, cfg, rng);
}

}  // namespace

GradCheckReport gradcheck_model(const HinDataset& data, std::size_t K,
                                std::uint64_t seed, double h, double tol) {
  GradCheckReport rep;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(attempt));
    Rng rng(s);
    SearchState st = make_state(data, K, s, rng);
    std::vector<SampledPath> paths;
    for (const auto& arch : st.archs) {
      paths.push_back(sample_path(arch, 0.5, rng));
    }
    std::vector<LinkMixture> mixes = mixtures_of_paths(st.specs, paths);
    if (!kink_margins_ok(data, st.specs, st.params, mixes, 1e-4)) continue;

    const MixtureBackward mb =
        mixture_backward(data, st.specs, st.params, mixes);
    double mass = 0.0;
    for (double v : mb.grads.theta.values()) mass += std::abs(v);
    if (mass < 1e-9) continue;  // dead-relu instance, nothing to compare
    Comparer compare{&rep, tol};

    ModelParams probe = st.params;
    auto loss_now = [&] { return mixture_loss(data, st.specs, probe, mixes); };
    auto fd_tensor = [&](const std::string& name, DenseMatrix& value,
                         const DenseMatrix& analytic) {
      for (std::size_t j = 0; j < value.values().size(); ++j) {
        const double orig = value.values()[j];
        value.values()[j] = orig + h;
        const double fp = loss_now();
        value.values()[j] = orig - h;
        const double fm = loss_now();
        value.values()[j] = orig;
        compare(name + "[" + std::to_string(j) + "]", analytic.values()[j],
                (fp - fm) / (2.0 * h));
      }
    };
    for (std::size_t t = 0; t < probe.proj_w.size(); ++t) {
      fd_tensor("proj_w[" + std::to_string(t) + "]", probe.proj_w[t].value,
                mb.grads.proj_w[t]);
      fd_tensor("proj_b[" + std::to_string(t) + "]", probe.proj_b[t].value,
                mb.grads.proj_b[t]);
    }
    fd_tensor("theta", probe.theta.value, mb.grads.theta);
    if (probe.head) fd_tensor("head", probe.head->value, *mb.grads.head);

    for (std::size_t d = 0; d < mixes.size(); ++d) {
      for (std::size_t l = 0; l < mixes[d].size(); ++l) {
        for (std::size_t b = 0; b < mixes[d][l].size(); ++b) {
          double& w = mixes[d][l][b].second;
          const double orig = w;
          w = orig + h;
          const double fp = mixture_loss(data, st.specs, st.params, mixes);
          w = orig - h;
          const double fm = mixture_loss(data, st.specs, st.params, mixes);
          w = orig;
          std::ostringstream name;
          name << "coefficient[dag " << d << ", link " << l << "]";
          compare(name.str(), mb.branch_grads[d][l][b],
                  (fp - fm) / (2.0 * h));
        }
      }
    }
    return rep;
  }
  rep.failures.push_back("no instance clear of relu kinks after 10 reseeds");
  return rep;
}

GradCheckReport gradcheck_lambda(const HinDataset& data, std::size_t K,
                                 std::uint64_t seed, double h, double tol) {
  GradCheckReport rep;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const std::uint64_t s =
        derive_seed(seed ^ 0x9e3779b97f4a7c15ull, static_cast<std::uint64_t>(attempt));
    Rng rng(s);
    SearchState st = make_state(data, K, s, rng);
    std::vector<SampledPath> paths;
    for (const auto& arch : st.archs) {
      paths.push_back(sample_path(arch, 0.3, rng));
    }
    std::vector<LinkMixture> mixes = mixtures_of_paths(st.specs, paths);
    if (!kink_margins_ok(data, st.specs, st.params, mixes, 1e-4)) continue;

    const MixtureBackward mb =
        mixture_backward(data, st.specs, st.params, mixes);
    double mass = 0.0;
    for (const auto& per_dag : mb.branch_grads) {
      for (const auto& per_link : per_dag) {
        for (double v : per_link) mass += std::abs(v);
      }
    }
    if (mass < 1e-9) continue;  // dead-relu instance, nothing to compare
    Comparer compare{&rep, tol};

    for (std::size_t d = 0; d < st.archs.size(); ++d) {
      auto& lambda = st.archs[d].lambda();
      for (std::size_t l = 0; l < lambda.size(); ++l) {
        const std::size_t m_sel = paths[d].links[l].m_sel;
        const std::vector<double> analytic = lambda_grad(
            mb.branch_grads[d][l][0], compute_alpha(lambda[l]), m_sel);
        for (std::size_t j = 0; j < lambda[l].size(); ++j) {
          const double orig = lambda[l][j];
          auto loss_at = [&](double v) {
            lambda[l][j] = v;
            const std::vector<double> a = compute_alpha(lambda[l]);
            mixes[d][l][0].second = a[m_sel];
            return mixture_loss(data, st.specs, st.params, mixes);
          };
          const double fp = loss_at(orig + h);
          const double fm = loss_at(orig - h);
          lambda[l][j] = orig;
          mixes[d][l][0].second = compute_alpha(lambda[l])[m_sel];
          std::ostringstream name;
          name << "lambda[dag " << d << ", link " << l << "][" << j << "]";
          compare(name.str(), analytic[j], (fp - fm) / (2.0 * h));
        }
      }
    }
    return rep;
  }
  rep.failures.push_back("no instance clear of relu kinks after 10 reseeds");
  return rep;
}

}  // namespace diffmg
