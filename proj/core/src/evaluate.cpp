#include "diffmg/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "diffmg/errors.hpp"
#include "diffmg/rng.hpp"
#include "json.hpp"

namespace diffmg {

double macro_f1(const std::vector<int>& predictions,
                const std::vector<int>& gold, std::size_t n_classes) {
  if (predictions.empty()) throw ConfigError("macro F1 of an empty sample");
  if (predictions.size() != gold.size()) {
    throw ShapeError("predictions and gold labels differ in length");
  }
  if (n_classes == 0) throw ConfigError("macro F1 needs at least one class");
  std::vector<std::size_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  for (std::size_t j = 0; j < predictions.size(); ++j) {
    const int p = predictions[j];
    const int y = gold[j];
    if (p < 0 || static_cast<std::size_t>(p) >= n_classes || y < 0 ||
        static_cast<std::size_t>(y) >= n_classes) {
      throw ConfigError("class id outside [0, C)");
    }
    if (p == y) {
      ++tp[static_cast<std::size_t>(p)];
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(y)];
    }
  }
  double total = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const double denom =
        static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    if (denom > 0.0) total += 2.0 * static_cast<double>(tp[c]) / denom;
  }
  return total / static_cast<double>(n_classes);
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("scores and labels differ in length");
  }
  std::size_t n_pos = 0, n_neg = 0;
  for (int y : labels) {
    if (y == 1) {
      ++n_pos;
    } else if (y == 0) {
      ++n_neg;
    } else {
      throw ConfigError("labels must be 0 or 1");
    }
  }
  if (n_pos == 0 || n_neg == 0) {
    throw ConfigError("AUC needs at least one positive and one negative");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  // average ranks within tied groups, 1-based
  std::vector<double> rank(scores.size(), 0.0);
  std::size_t j = 0;
  while (j < order.size()) {
    std::size_t k = j;
    while (k + 1 < order.size() && scores[order[k + 1]] == scores[order[j]]) {
      ++k;
    }
    const double avg = (static_cast<double>(j) + static_cast<double>(k)) / 2.0 + 1.0;
    for (std::size_t t = j; t <= k; ++t) rank[order[t]] = avg;
    j = k + 1;
  }
  double pos_rank_sum = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] == 1) pos_rank_sum += rank[t];
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

namespace {

struct EvalSetup {
  std::vector<SearchSpaceSpec> specs;
  std::vector<LinkMixture> mixes;
  std::optional<std::size_t> n_classes;
};

EvalSetup prepare(const HinDataset& data,
                  const std::vector<MetaGraph>& meta_graphs) {
  const std::vector<std::string> targets = task_target_types(data.task);
  if (meta_graphs.size() != targets.size()) {
    if (targets.size() == 2) {
      throw ConfigError(
          "recommendation requires two meta graphs (one per endpoint type)");
    }
    throw ConfigError("node classification takes exactly one meta graph");
  }
  EvalSetup setup;
  for (std::size_t d = 0; d < targets.size(); ++d) {
    if (meta_graphs[d].target_type != targets[d]) {
      throw SchemaError("meta graph " + std::to_string(d) + " targets '" +
                        meta_graphs[d].target_type + "' but the task needs '" +
                        targets[d] + "'");
    }
    SearchSpaceSpec spec =
        build_space(data.graph, targets[d], meta_graphs[d].K);
    const std::string violation = meta_graph_violation(meta_graphs[d], spec);
    if (!violation.empty()) {
      throw SchemaError("meta graph " + std::to_string(d) + ": " + violation);
    }
    setup.mixes.push_back(single_assignment(meta_graphs[d], 1.0));
    setup.specs.push_back(std::move(spec));
  }
  if (const auto* nc = std::get_if<NodeClassData>(&data.task)) {
    setup.n_classes = nc->n_classes;
  }
  return setup;
}

}  // namespace

EvalReport train_eval(const HinDataset& data,
                      const std::vector<MetaGraph>& meta_graphs,
                      const EvalConfig& cfg) {
  using clock = std::chrono::steady_clock;
  const HinGraph& g = data.graph;
  EvalSetup setup = prepare(data, meta_graphs);
  const auto* nc = std::get_if<NodeClassData>(&data.task);
  const auto* rec = std::get_if<RecData>(&data.task);
  const std::size_t epochs = cfg.epochs > 0 ? cfg.epochs : (nc ? 100 : 200);

  Rng rng(cfg.seed);
  ModelParams params =
      ModelParams::init(data.features, cfg.hidden, setup.n_classes, rng);

  EvalReport report;
  report.seed = cfg.seed;
  report.meta_graphs = meta_graphs;

  double best_val_loss = std::numeric_limits<double>::infinity();
  double best_val_auc = -1.0;
  std::size_t wait = 0;

  for (std::size_t e = 0; e < epochs; ++e) {
    const auto t0 = clock::now();

    // training step
    {
      ProjectionTrace ptr = project(data.features, params, cfg.dropout, &rng);
      std::vector<DagTrace> traces;
      for (std::size_t d = 0; d < setup.specs.size(); ++d) {
        traces.push_back(dag_forward(ptr.h0, setup.specs[d], setup.mixes[d], g));
      }
      ModelGrads grads;
      if (nc) {
        ClassHead out =
            nodeclass_head(traces[0], params, nc->labels, nc->train, true);
        report.train_losses.push_back(out.loss);
        DagBackward db = dag_backward(out.d_z, setup.specs[0], traces[0], g);
        grads = projection_backward(data.features, params, ptr, db.d_h0);
        grads.head = std::move(out.d_head);
      } else {
        RecHead out = rec_head(traces[0], traces[1], rec->train, true);
        report.train_losses.push_back(out.loss);
        DagBackward db0 = dag_backward(out.d_z_src, setup.specs[0], traces[0], g);
        DagBackward db1 = dag_backward(out.d_z_dst, setup.specs[1], traces[1], g);
        grads = projection_backward(data.features, params, ptr,
                                    add(db0.d_h0, db1.d_h0));
      }
      adam_step(params, grads, cfg.lr, cfg.weight_decay);
    }

    // validation + test pass
    {
      ProjectionTrace ptr = project(data.features, params);
      std::vector<DagTrace> traces;
      for (std::size_t d = 0; d < setup.specs.size(); ++d) {
        traces.push_back(dag_forward(ptr.h0, setup.specs[d], setup.mixes[d], g));
      }
      if (nc) {
        ClassHead out =
            nodeclass_head(traces[0], params, nc->labels, nc->val, false);
        report.val_losses.push_back(out.loss);
        const std::vector<int> pred_all = argmax_rows(out.logits);
        auto subset_f1 = [&](const std::vector<std::size_t>& ids) {
          std::vector<int> pred, gold;
          for (std::size_t v : ids) {
            pred.push_back(pred_all[v]);
            gold.push_back(nc->labels[v]);
          }
          return macro_f1(pred, gold, nc->n_classes);
        };
        report.val_metrics.push_back(subset_f1(nc->val));
        report.test_metrics.push_back(subset_f1(nc->test));
      } else {
        auto pair_auc = [&](const std::vector<RecPair>& pairs, double* loss) {
          RecHead out = rec_head(traces[0], traces[1], pairs, false);
          if (loss != nullptr) *loss = out.loss;
          std::vector<int> labels;
          for (const auto& p : pairs) labels.push_back(p.label);
          return auc(out.scores, labels);
        };
        double val_loss = 0.0;
        report.val_metrics.push_back(pair_auc(rec->val, &val_loss));
        report.val_losses.push_back(val_loss);
        report.test_metrics.push_back(pair_auc(rec->test, nullptr));
      }
    }

    report.epoch_seconds.push_back(
        std::chrono::duration<double>(clock::now() - t0).count());

    if (nc) {
      if (report.val_losses.back() < best_val_loss) {
        best_val_loss = report.val_losses.back();
        report.best_epoch = e;
        wait = 0;
      } else if (++wait >= cfg.patience) {
        break;
      }
    } else {
      if (report.val_metrics.back() > best_val_auc) {
        best_val_auc = report.val_metrics.back();
        report.best_epoch = e;
      }
    }
  }

  report.val_metric_at_best = report.val_metrics[report.best_epoch];
  report.best_test_metric = report.test_metrics[report.best_epoch];
  report.final_test_metric = report.test_metrics.back();
  return report;
}

std::string eval_report_json(const EvalReport& report,
                             const EdgeTypeRegistry& registry) {
  nlohmann::json j;
  j["seed"] = report.seed;
  j["train_losses"] = report.train_losses;
  j["val_losses"] = report.val_losses;
  j["val_metrics"] = report.val_metrics;
  j["test_metrics"] = report.test_metrics;
  // epoch_seconds stays off the artifact: wall-clock noise would break the
  // bit-reproducibility of eval outputs under a fixed seed
  j["best_epoch"] = report.best_epoch;
  j["val_metric_at_best"] = report.val_metric_at_best;
  j["best_test_metric"] = report.best_test_metric;
  j["final_test_metric"] = report.final_test_metric;
  nlohmann::json mgs = nlohmann::json::array();
  for (const MetaGraph& mg : report.meta_graphs) {
    mgs.push_back(nlohmann::json::parse(meta_graph_to_json(mg, registry)));
  }
  j["meta_graphs"] = std::move(mgs);
  return j.dump(2) + "\n";
}

EvalAggregate aggregate(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ConfigError("nothing to aggregate");
  EvalAggregate agg;
  for (const auto& r : reports) agg.per_seed.push_back(r.best_test_metric);
  const double n = static_cast<double>(agg.per_seed.size());
  agg.mean = std::accumulate(agg.per_seed.begin(), agg.per_seed.end(), 0.0) / n;
  double var = 0.0;
  for (double x : agg.per_seed) var += (x - agg.mean) * (x - agg.mean);
  agg.stddev = std::sqrt(var / n);
  return agg;
}

std::string aggregate_json(const std::vector<EvalReport>& reports) {
  const EvalAggregate agg = aggregate(reports);
  nlohmann::json j;
  j["n_runs"] = reports.size();
  j["mean_test_metric"] = agg.mean;
  j["std_test_metric"] = agg.stddev;
  nlohmann::json per = nlohmann::json::array();
  for (const auto& r : reports) {
    per.push_back({{"seed", r.seed}, {"test_metric", r.best_test_metric}});
  }
  j["per_seed"] = std::move(per);
  return j.dump(2) + "\n";
}

}  // namespace diffmg
