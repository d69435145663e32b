#include "diffmg/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "diffmg/errors.hpp"

namespace diffmg {

namespace {

DenseMatrix glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  DenseMatrix m(rows, cols);
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return m;
}

double softplus(double x) {
  // log(1 + e^x) without overflow
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

ModelParams ModelParams::init(const FeatureSet& features, std::size_t hidden,
                              std::optional<std::size_t> n_classes, Rng& rng) {
  if (hidden < 1) throw ConfigError("hidden dimension must be >= 1");
  ModelParams p;
  for (const auto& tf : features.per_type) {
    ParamTensor w;
    w.value = glorot(tf.features.cols(), hidden, rng);
    w.m = DenseMatrix(tf.features.cols(), hidden);
    w.v = DenseMatrix(tf.features.cols(), hidden);
    p.proj_w.push_back(std::move(w));
    p.proj_b.emplace_back(1, hidden);
  }
  p.theta.value = glorot(hidden, hidden, rng);
  p.theta.m = DenseMatrix(hidden, hidden);
  p.theta.v = DenseMatrix(hidden, hidden);
  if (n_classes) {
    ParamTensor h;
    h.value = glorot(hidden, *n_classes, rng);
    h.m = DenseMatrix(hidden, *n_classes);
    h.v = DenseMatrix(hidden, *n_classes);
    p.head = std::move(h);
  }
  return p;
}

ProjectionTrace project(const FeatureSet& features, const ModelParams& params,
                        double dropout_rate, Rng* dropout_rng) {
  const std::size_t n_types = features.per_type.size();
  if (params.proj_w.size() != n_types || params.proj_b.size() != n_types) {
    throw ShapeError("projection parameters cover " +
                     std::to_string(params.proj_w.size()) + " node types, " +
                     std::to_string(n_types) + " present");
  }
  const std::size_t d = params.hidden();
  std::size_t n_nodes = 0;
  for (const auto& tf : features.per_type) n_nodes += tf.node_ids.size();

  ProjectionTrace tr;
  tr.params_version = params.version;
  tr.projected = DenseMatrix(n_nodes, d);
  for (std::size_t t = 0; t < n_types; ++t) {
    const auto& tf = features.per_type[t];
    const auto& w = params.proj_w[t].value;
    const auto& b = params.proj_b[t].value;
    if (w.rows() != tf.features.cols()) {
      throw ShapeError("projection for type " + std::to_string(t) + " expects " +
                       std::to_string(w.rows()) + " input features, data has " +
                       std::to_string(tf.features.cols()));
    }
    DenseMatrix pre = matmul(tf.features, w);
    for (std::size_t r = 0; r < pre.rows(); ++r) {
      for (std::size_t c = 0; c < d; ++c) pre(r, c) += b(0, c);
    }
    for (std::size_t r = 0; r < pre.rows(); ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        tr.projected(tf.node_ids[r], c) = std::max(pre(r, c), 0.0);
      }
    }
    tr.pre.push_back(std::move(pre));
  }
  tr.h0_raw = matmul(tr.projected, params.theta.value);
  if (dropout_rate > 0.0 && dropout_rng != nullptr) {
    if (dropout_rate >= 1.0) throw ConfigError("dropout rate must be < 1");
    const double keep_scale = 1.0 / (1.0 - dropout_rate);
    tr.dropout_mask = DenseMatrix(n_nodes, d);
    for (double& m : tr.dropout_mask.values()) {
      m = dropout_rng->bernoulli(dropout_rate) ? 0.0 : keep_scale;
    }
    tr.h0 = tr.h0_raw;
    for (std::size_t j = 0; j < tr.h0.values().size(); ++j) {
      tr.h0.values()[j] *= tr.dropout_mask.values()[j];
    }
  } else {
    tr.h0 = tr.h0_raw;
  }
  return tr;
}

LinkMixture single_assignment(const MetaGraph& mg, double coefficient) {
  LinkMixture mix(mg.assignment.size());
  for (std::size_t l = 0; l < mg.assignment.size(); ++l) {
    mix[l].emplace_back(mg.assignment[l], coefficient);
  }
  return mix;
}

DagTrace dag_forward(const DenseMatrix& h0, const SearchSpaceSpec& spec,
                     const LinkMixture& mixture, const HinGraph& g) {
  if (mixture.size() != spec.links.size()) {
    throw ShapeError("mixture covers " + std::to_string(mixture.size()) +
                     " links, the space has " +
                     std::to_string(spec.links.size()));
  }
  if (h0.rows() != g.n_nodes) {
    throw ShapeError("H0 has " + std::to_string(h0.rows()) + " rows, graph has " +
                     std::to_string(g.n_nodes) + " nodes");
  }
  DagTrace tr;
  tr.h.resize(spec.K + 1);
  tr.h[0] = h0;
  for (std::size_t k = 1; k <= spec.K; ++k) {
    tr.h[k] = DenseMatrix(h0.rows(), h0.cols());
  }
  tr.branches.resize(spec.links.size());
  for (std::size_t l = 0; l < spec.links.size(); ++l) {
    const auto [k, i] = spec.links[l];
    for (const auto& [choice, weight] : mixture[l]) {
      BranchEval be;
      be.choice = choice;
      be.weight = weight;
      switch (choice.kind) {
        case Choice::Kind::EdgeType:
          if (choice.etype >= g.adjacency.size()) {
            throw SchemaError("choice references edge type index " +
                              std::to_string(choice.etype) +
                              " outside the registry");
          }
          be.step = spmm(g.adjacency[choice.etype], tr.h[i]);
          break;
        case Choice::Kind::Identity:
          be.step = tr.h[i];
          break;
        case Choice::Kind::Empty:
          break;
      }
      if (!be.step.empty()) axpy(weight, be.step, tr.h[k]);
      tr.branches[l].push_back(std::move(be));
    }
  }
  tr.z = relu(tr.h[spec.K]);
  return tr;
}

DagBackward dag_backward(const DenseMatrix& d_z, const SearchSpaceSpec& spec,
                         const DagTrace& trace, const HinGraph& g) {
  if (trace.branches.size() != spec.links.size()) {
    throw ShapeError("trace does not match the search space");
  }
  std::vector<DenseMatrix> d_h(spec.K + 1);
  for (std::size_t k = 0; k <= spec.K; ++k) {
    d_h[k] = DenseMatrix(trace.h[k].rows(), trace.h[k].cols());
  }
  d_h[spec.K] = relu_grad(trace.h[spec.K], d_z);

  DagBackward out;
  out.branch_grads.resize(spec.links.size());
  for (std::size_t l = spec.links.size(); l-- > 0;) {
    const auto [k, i] = spec.links[l];
    for (const BranchEval& be : trace.branches[l]) {
      if (be.choice.kind == Choice::Kind::Empty) {
        out.branch_grads[l].push_back(0.0);
        continue;
      }
      out.branch_grads[l].push_back(frobenius_dot(d_h[k], be.step));
      switch (be.choice.kind) {
        case Choice::Kind::EdgeType: {
          DenseMatrix back = spmm_adjoint(g.adjacency[be.choice.etype], d_h[k]);
          axpy(be.weight, back, d_h[i]);
          break;
        }
        case Choice::Kind::Identity:
          axpy(be.weight, d_h[k], d_h[i]);
          break;
        case Choice::Kind::Empty:
          break;
      }
    }
  }
  out.d_h0 = std::move(d_h[0]);
  return out;
}

ModelGrads projection_backward(const FeatureSet& features,
                               const ModelParams& params,
                               const ProjectionTrace& trace,
                               const DenseMatrix& d_h0) {
  if (trace.params_version != params.version) {
    throw std::logic_error(
        "stale projection trace: parameters were updated after the forward "
        "pass");
  }
  DenseMatrix d_h0_raw = d_h0;
  if (!trace.dropout_mask.empty()) {
    for (std::size_t j = 0; j < d_h0_raw.values().size(); ++j) {
      d_h0_raw.values()[j] *= trace.dropout_mask.values()[j];
    }
  }
  ModelGrads grads;
  grads.theta = matmul(transpose(trace.projected), d_h0_raw);
  const DenseMatrix d_projected =
      matmul(d_h0_raw, transpose(params.theta.value));
  for (std::size_t t = 0; t < features.per_type.size(); ++t) {
    const auto& tf = features.per_type[t];
    DenseMatrix d_post(tf.node_ids.size(), d_projected.cols());
    for (std::size_t r = 0; r < tf.node_ids.size(); ++r) {
      for (std::size_t c = 0; c < d_projected.cols(); ++c) {
        d_post(r, c) = d_projected(tf.node_ids[r], c);
      }
    }
    const DenseMatrix d_pre = relu_grad(trace.pre[t], d_post);
    grads.proj_w.push_back(matmul(transpose(tf.features), d_pre));
    grads.proj_b.push_back(column_sums(d_pre));
  }
  return grads;
}

ClassHead nodeclass_head(const DagTrace& trace, const ModelParams& params,
                         const std::vector<int>& labels,
                         const std::vector<std::size_t>& node_set,
                         bool with_grad) {
  if (!params.head) {
    throw ConfigError("node classification needs an output head");
  }
  if (node_set.empty()) throw ConfigError("empty loss node set");
  const DenseMatrix& w_o = params.head->value;
  ClassHead out;
  out.logits = matmul(trace.z, w_o);
  out.probs = row_softmax(out.logits);
  const std::size_t n_classes = w_o.cols();
  for (std::size_t v : node_set) {
    const int y = labels[v];
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
      throw ConfigError("node " + std::to_string(v) +
                        " has no usable label for the loss");
    }
    out.loss -= std::log(out.probs(v, static_cast<std::size_t>(y)));
  }
  if (with_grad) {
    DenseMatrix d_logits(out.logits.rows(), n_classes);
    for (std::size_t v : node_set) {
      const auto y = static_cast<std::size_t>(labels[v]);
      for (std::size_t c = 0; c < n_classes; ++c) {
        d_logits(v, c) = out.probs(v, c) - (c == y ? 1.0 : 0.0);
      }
    }
    out.d_head = matmul(transpose(trace.z), d_logits);
    out.d_z = matmul(d_logits, transpose(w_o));
  }
  return out;
}

RecHead rec_head(const DagTrace& src_trace, const DagTrace& dst_trace,
                 const std::vector<RecPair>& pairs, bool with_grad) {
  if (pairs.empty()) throw ConfigError("empty pair set");
  const DenseMatrix& zs = src_trace.z;
  const DenseMatrix& zd = dst_trace.z;
  if (zs.cols() != zd.cols()) {
    throw ShapeError("endpoint embeddings disagree on the hidden dimension");
  }
  RecHead out;
  if (with_grad) {
    out.d_z_src = DenseMatrix(zs.rows(), zs.cols());
    out.d_z_dst = DenseMatrix(zd.rows(), zd.cols());
  }
  const std::size_t d = zs.cols();
  for (const RecPair& p : pairs) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += zs(p.src, c) * zd(p.dst, c);
    // -log sigmoid(s) for positives, -log sigmoid(-s) for negatives
    out.loss += p.label == 1 ? softplus(-s) : softplus(s);
    const double sig = 1.0 / (1.0 + std::exp(-s));
    out.scores.push_back(sig);
    if (with_grad) {
      const double ds = sig - static_cast<double>(p.label);
      for (std::size_t c = 0; c < d; ++c) {
        out.d_z_src(p.src, c) += ds * zd(p.dst, c);
        out.d_z_dst(p.dst, c) += ds * zs(p.src, c);
      }
    }
  }
  return out;
}

std::vector<int> argmax_rows(const DenseMatrix& m) {
  std::vector<int> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < m.cols(); ++c) {
      if (m(r, c) > m(r, best)) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

namespace {

void adam_update(ParamTensor& p, const DenseMatrix& grad, double lr,
                 double weight_decay, std::size_t t) {
  if (!p.value.same_shape(grad)) {
    throw ShapeError("gradient shape does not match its parameter");
  }
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
  for (std::size_t j = 0; j < p.value.values().size(); ++j) {
    const double g = grad.values()[j] + weight_decay * p.value.values()[j];
    double& m = p.m.values()[j];
    double& v = p.v.values()[j];
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = kBeta2 * v + (1.0 - kBeta2) * g * g;
    p.value.values()[j] -= lr * (m / bc1) / (std::sqrt(v / bc2) + kEps);
  }
}

}  // namespace

void adam_step(ModelParams& params, const ModelGrads& grads, double lr,
               double weight_decay) {
  if (grads.proj_w.size() != params.proj_w.size() ||
      grads.proj_b.size() != params.proj_b.size()) {
    throw ShapeError("gradient set does not cover every projection");
  }
  const std::size_t t = ++params.adam_steps;
  for (std::size_t i = 0; i < params.proj_w.size(); ++i) {
    adam_update(params.proj_w[i], grads.proj_w[i], lr, weight_decay, t);
    adam_update(params.proj_b[i], grads.proj_b[i], lr, weight_decay, t);
  }
  adam_update(params.theta, grads.theta, lr, weight_decay, t);
  if (params.head && grads.head) {
    adam_update(*params.head, *grads.head, lr, weight_decay, t);
  }
  ++params.version;
}

}  // namespace diffmg
