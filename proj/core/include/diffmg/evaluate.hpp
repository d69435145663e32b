#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffmg/hin.hpp"
#include "diffmg/model.hpp"
#include "diffmg/search_space.hpp"

namespace diffmg {

// Unweighted mean of per-class F1. A class with no predictions and no gold
// occurrences contributes 0.
double macro_f1(const std::vector<int>& predictions,
                const std::vector<int>& gold, std::size_t n_classes);

// Mann-Whitney rank statistic; tied scores count 1/2.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct EvalConfig {
  std::size_t hidden = 64;
  // 0 = task default: 100 epochs (classification, early stopping) or
  // 200 epochs (recommendation, best-validation checkpoint).
  std::size_t epochs = 0;
  std::size_t patience = 10;
  double lr = 0.005;
  double weight_decay = 0.001;
  double dropout = 0.5;
  std::uint64_t seed = 0;
};

struct EvalReport {
  std::uint64_t seed = 0;
  std::vector<double> train_losses;
  std::vector<double> val_losses;
  std::vector<double> val_metrics;
  std::vector<double> test_metrics;
  std::vector<double> epoch_seconds;
  std::size_t best_epoch = 0;
  double val_metric_at_best = 0.0;
  double best_test_metric = 0.0;   // test metric at the best-validation epoch
  double final_test_metric = 0.0;  // test metric at the last epoch run
  std::vector<MetaGraph> meta_graphs;
};

// Trains the discrete meta graph(s) from scratch (fresh omega, coefficients
// all 1) and reports metrics. Classification stops early on validation loss
// and restores the best parameters; recommendation runs the full budget and
// reports the best-validation-AUC epoch.
EvalReport train_eval(const HinDataset& data,
                      const std::vector<MetaGraph>& meta_graphs,
                      const EvalConfig& cfg);

std::string eval_report_json(const EvalReport& report,
                             const EdgeTypeRegistry& registry);

struct EvalAggregate {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> per_seed;
};

// Mean and population standard deviation of the reported test metrics.
EvalAggregate aggregate(const std::vector<EvalReport>& reports);

std::string aggregate_json(const std::vector<EvalReport>& reports);

}  // namespace diffmg
