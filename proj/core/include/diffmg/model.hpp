#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "diffmg/hin.hpp"
#include "diffmg/linalg.hpp"
#include "diffmg/rng.hpp"
#include "diffmg/search_space.hpp"

namespace diffmg {

struct ParamTensor {
  DenseMatrix value;
  DenseMatrix m;  // Adam first moment
  DenseMatrix v;  // Adam second moment

  ParamTensor() = default;
  ParamTensor(std::size_t rows, std::size_t cols)
      : value(rows, cols), m(rows, cols), v(rows, cols) {}
};

// All trainable weights of one model: per-type input projections, the shared
// hidden transform, and (for classification) the output head.
struct ModelParams {
  std::vector<ParamTensor> proj_w;  // per node type, d_t x d
  std::vector<ParamTensor> proj_b;  // per node type, 1 x d
  ParamTensor theta;                // d x d
  std::optional<ParamTensor> head;  // d x C
  std::size_t adam_steps = 0;
  // Bumped by every adam_step; traces remember the version they saw so a
  // backward pass against updated parameters fails instead of silently
  // mixing states.
  std::uint64_t version = 1;

  static ModelParams init(const FeatureSet& features, std::size_t hidden,
                          std::optional<std::size_t> n_classes, Rng& rng);

  std::size_t hidden() const { return theta.value.rows(); }
};

struct ModelGrads {
  std::vector<DenseMatrix> proj_w;
  std::vector<DenseMatrix> proj_b;
  DenseMatrix theta;
  std::optional<DenseMatrix> head;
};

struct TrainConfig {
  std::size_t hidden = 64;
  double lr_omega = 0.005;
  double wd_omega = 0.001;
  double lr_lambda = 3e-4;
  std::size_t epochs = 100;
  std::size_t patience = 10;
  double dropout = 0.5;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Input projection
// ---------------------------------------------------------------------------

struct ProjectionTrace {
  std::vector<DenseMatrix> pre;  // per type: X_t W_t + b_t, before relu
  DenseMatrix projected;         // N x d, relu of the above in global order
  DenseMatrix h0_raw;            // projected * theta
  DenseMatrix h0;                // h0_raw after input dropout (train only)
  DenseMatrix dropout_mask;      // empty when no dropout; else 0 / 1/(1-p)
  std::uint64_t params_version = 0;
};

// Row v of the result: relu(x_v W_t + b_t) theta for v's node type t.
// Dropout is applied when dropout_rate > 0 and a generator is supplied.
ProjectionTrace project(const FeatureSet& features, const ModelParams& params,
                        double dropout_rate = 0.0, Rng* dropout_rng = nullptr);

// ---------------------------------------------------------------------------
// DAG forward / backward
// ---------------------------------------------------------------------------

// Per link: the branches to evaluate, each with its mixing coefficient.
// Single-path modes pass exactly one branch per link; the full-mixture
// reference passes every candidate.
using LinkMixture = std::vector<std::vector<std::pair<Choice, double>>>;

LinkMixture single_assignment(const MetaGraph& mg, double coefficient = 1.0);

struct BranchEval {
  Choice choice;
  double weight = 0.0;
  DenseMatrix step;  // f(H^(i); choice); empty matrix for the Empty choice
};

struct DagTrace {
  std::vector<DenseMatrix> h;  // H^(0) .. H^(K)
  std::vector<std::vector<BranchEval>> branches;
  DenseMatrix z;  // relu(H^(K))
};

// H^(k) = sum over branches at (k,i) of weight * f(H^(i); choice), where f is
// propagation along the choice's normalized adjacency, the identity, or zero.
DagTrace dag_forward(const DenseMatrix& h0, const SearchSpaceSpec& spec,
                     const LinkMixture& mixture, const HinGraph& g);

struct DagBackward {
  DenseMatrix d_h0;
  // d loss / d coefficient per branch, parallel to the forward mixture.
  std::vector<std::vector<double>> branch_grads;
};

// d_z is the loss gradient with respect to z = relu(H^(K)).
DagBackward dag_backward(const DenseMatrix& d_z, const SearchSpaceSpec& spec,
                         const DagTrace& trace, const HinGraph& g);

// Pulls d loss / d H0 back into parameter gradients (head left empty).
// Throws std::logic_error when the trace predates the current parameters.
ModelGrads projection_backward(const FeatureSet& features,
                               const ModelParams& params,
                               const ProjectionTrace& trace,
                               const DenseMatrix& d_h0);

// ---------------------------------------------------------------------------
// Task heads
// ---------------------------------------------------------------------------

struct ClassHead {
  double loss = 0.0;
  DenseMatrix logits;  // N x C
  DenseMatrix probs;
  DenseMatrix d_z;     // filled when with_grad
  DenseMatrix d_head;  // filled when with_grad
};

// Summed cross-entropy over node_set: -sum log softmax(z W_o)[v, y_v].
ClassHead nodeclass_head(const DagTrace& trace, const ModelParams& params,
                         const std::vector<int>& labels,
                         const std::vector<std::size_t>& node_set,
                         bool with_grad);

struct RecHead {
  double loss = 0.0;
  std::vector<double> scores;  // sigmoid(z_u . z_v) per pair
  DenseMatrix d_z_src;         // filled when with_grad
  DenseMatrix d_z_dst;
};

// -sum_{label=1} log sigmoid(z_u . z_v) - sum_{label=0} log sigmoid(-...).
RecHead rec_head(const DagTrace& src_trace, const DagTrace& dst_trace,
                 const std::vector<RecPair>& pairs, bool with_grad);

std::vector<int> argmax_rows(const DenseMatrix& m);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

// Adam with beta1=0.9, beta2=0.999, eps=1e-8; weight decay enters as
// grad += wd * value before the moment updates. One shared step counter.
void adam_step(ModelParams& params, const ModelGrads& grads, double lr,
               double weight_decay);

}  // namespace diffmg
