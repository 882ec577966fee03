#include "fgcl/dgc.hpp"

#include "fgcl/log.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fgcl {

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "test";
}

EdgeList knn_edges(const Matrix& v, int k, int* degenerate) {
  const Eigen::Index m = v.rows();
  if (m < 2) throw ContractViolation("knn_edges: need at least two nodes");
  if (k < 1) throw ContractViolation("knn_edges: k must be >= 1");
  const Eigen::Index keep = std::min<Eigen::Index>(k, m - 1);

  const Vector norms = v.rowwise().norm();
  Matrix unit = Matrix::Zero(m, v.cols());
  int zero_rows = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (norms(i) > 0.0)
      unit.row(i) = v.row(i) / norms(i);
    else
      ++zero_rows;
  }
  if (degenerate) *degenerate = zero_rows;
  if (zero_rows > 0) log::warn("knn_edges: {} zero-norm node(s); their neighbours follow index order", zero_rows);

  const Matrix sim = unit * unit.transpose();
  EdgeList edges(static_cast<std::size_t>(m));
  std::vector<Eigen::Index> order;
  for (Eigen::Index i = 0; i < m; ++i) {
    order.clear();
    for (Eigen::Index j = 0; j < m; ++j)
      if (j != i) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return sim(i, a) > sim(i, b); });
    edges[static_cast<std::size_t>(i)].assign(order.begin(), order.begin() + keep);
  }
  return edges;
}

DgcLayer DgcLayer::init(const std::string& prefix, int in_width, int out_width, Rng& rng) {
  DgcLayer layer;
  layer.w1 = Parameter(prefix + ".w1", glorot_uniform(2 * in_width, out_width, rng));
  layer.b1 = Parameter(prefix + ".b1", Matrix::Zero(1, out_width));
  layer.w2 = Parameter(prefix + ".w2", glorot_uniform(out_width, out_width, rng));
  layer.b2 = Parameter(prefix + ".b2", Matrix::Zero(1, out_width));
  return layer;
}

DgcParams DgcParams::init(int input_dim, const DgcConfig& cfg) {
  Rng rng(cfg.rng_seed);
  DgcParams p;
  p.layer1 = DgcLayer::init("dgc.layer1", input_dim, cfg.hidden1, rng);
  p.layer2 = DgcLayer::init("dgc.layer2", cfg.hidden1, cfg.hidden2, rng);
  p.head_w = Parameter("dgc.head.w", glorot_uniform(cfg.hidden2, 2, rng));
  p.head_b = Parameter("dgc.head.b", Matrix::Zero(1, 2));
  return p;
}

ParameterRefs DgcParams::parameters() {
  return {&layer1.w1, &layer1.b1, &layer1.w2, &layer1.b2, &layer2.w1, &layer2.b1,
          &layer2.w2, &layer2.b2, &head_w,    &head_b};
}

double focal_loss(double p, int y, const FocalConfig& cfg) {
  const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  const double pt = y == 1 ? pc : 1.0 - pc;
  const double at = y == 1 ? cfg.alpha : 1.0 - cfg.alpha;
  return -at * std::pow(1.0 - pt, cfg.gamma) * std::log(pt);
}

namespace {

struct LayerVars {
  ad::Var w1, b1, w2, b2;
};

ad::Var edge_conv(ad::Var v, const EdgeList& edges, const LayerVars& layer, int* isolated) {
  std::vector<Eigen::Index> self, nbr;
  int empty = 0;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (edges[i].empty()) ++empty;
    for (Eigen::Index j : edges[i]) {
      self.push_back(static_cast<Eigen::Index>(i));
      nbr.push_back(j);
    }
  }
  if (isolated) *isolated = empty;
  const Eigen::Index m = v.rows();
  if (self.empty()) return v.tape->constant(Matrix::Zero(m, layer.w2.cols()));

  const ad::Var vi = ad::gather_rows(v, self);
  const ad::Var vm = ad::gather_rows(v, nbr);
  const ad::Var input = ad::concat_cols(vi, vm - vi);
  const ad::Var hidden = ad::relu(ad::affine(input, layer.w1, layer.b1));
  const ad::Var message = ad::affine(hidden, layer.w2, layer.b2);
  return ad::scatter_sum_rows(message, std::move(self), m);
}

LayerVars bind(ad::Tape& tape, const DgcLayer& layer, bool with_grad) {
  auto mk = [&](const Parameter& p) { return with_grad ? tape.variable(p.value) : tape.constant(p.value); };
  return {mk(layer.w1), mk(layer.b1), mk(layer.w2), mk(layer.b2)};
}

/// Mean focal loss over `nodes` of softmax(logits); gradient flows to logits.
/// The value uses the clamped probability. The gradient is the unclamped derivative in logit
/// space, which stays near -alpha_t for saturated wrong predictions instead of vanishing.
ad::Var focal_mean(ad::Var logits, std::span<const int> labels, std::span<const Eigen::Index> nodes,
                   const FocalConfig& cfg) {
  const Matrix& z = logits.value();
  Matrix probs(z.rows(), 2), log_probs(z.rows(), 2);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mx = z.row(i).maxCoeff();
    const double e0 = std::exp(z(i, 0) - mx), e1 = std::exp(z(i, 1) - mx);
    const double lse = mx + std::log(e0 + e1);
    probs(i, 0) = e0 / (e0 + e1);
    probs(i, 1) = e1 / (e0 + e1);
    log_probs(i, 0) = z(i, 0) - lse;
    log_probs(i, 1) = z(i, 1) - lse;
  }
  double total = 0.0;
  for (Eigen::Index n : nodes) total += focal_loss(probs(n, 1), labels[static_cast<std::size_t>(n)], cfg);
  const double count = static_cast<double>(std::max<std::size_t>(nodes.size(), 1));
  Matrix value(1, 1);
  value(0, 0) = total / count;

  const std::size_t id = logits.id;
  std::vector<Eigen::Index> node_list(nodes.begin(), nodes.end());
  std::vector<int> label_list(labels.begin(), labels.end());
  return logits.tape->record(
      std::move(value), logits.tape->requires_grad(id),
      [id, probs, log_probs, node_list = std::move(node_list), label_list = std::move(label_list), cfg, count](ad::Tape& t,
                                                                                                   const Matrix& g) {
        Matrix back = Matrix::Zero(probs.rows(), 2);
        for (Eigen::Index n : node_list) {
          const int y = label_list[static_cast<std::size_t>(n)];
          const double pt = probs(n, y);
          const double q = probs(n, 1 - y);
          if (q == 0.0) continue;  // exactly confident and correct: zero derivative
          const double at = y == 1 ? cfg.alpha : 1.0 - cfg.alpha;
          // pt * dFL/dpt, finite for every pt in [0, 1).
          double dpt_pt = -at * std::pow(q, cfg.gamma);
          if (cfg.gamma != 0.0) dpt_pt += at * cfg.gamma * std::pow(q, cfg.gamma - 1.0) * pt * log_probs(n, y);
          for (int c = 0; c < 2; ++c) back(n, c) = dpt_pt * ((c == y ? 1.0 : 0.0) - probs(n, c));
        }
        t.accumulate(id, (g(0, 0) / count) * back);
      });
}

struct DgcForward {
  ad::Tape tape;
  std::vector<ad::Var> param_vars;
  ad::Var logits;

  DgcForward(const Matrix& features, const EdgeList& edges, const DgcParams& params, bool with_grad) {
    if (features.cols() != params.layer1.in_width())
      throw ContractViolation("dgc: feature width does not match the first layer");
    const LayerVars l1 = bind(tape, params.layer1, with_grad);
    const LayerVars l2 = bind(tape, params.layer2, with_grad);
    const ad::Var hw = with_grad ? tape.variable(params.head_w.value) : tape.constant(params.head_w.value);
    const ad::Var hb = with_grad ? tape.variable(params.head_b.value) : tape.constant(params.head_b.value);
    param_vars = {l1.w1, l1.b1, l1.w2, l1.b2, l2.w1, l2.b1, l2.w2, l2.b2, hw, hb};

    int isolated = 0;
    const ad::Var v = tape.constant(features);
    const ad::Var h1 = ad::relu(edge_conv(v, edges, l1, &isolated));
    const ad::Var h2 = ad::relu(edge_conv(h1, edges, l2, nullptr));
    if (isolated > 0) log::warn("edge_conv: {} node(s) without out-edges produce zero rows", isolated);
    logits = ad::affine(h2, hw, hb);
    if (!logits.value().allFinite()) throw NumericError("dgc: non-finite logits");
  }
};

Matrix softmax_rows(const Matrix& z) {
  Matrix p(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const RowVector e = (z.row(i).array() - z.row(i).maxCoeff()).exp().matrix();
    p.row(i) = e / e.sum();
  }
  return p;
}

}  // namespace

Matrix edge_conv(const Matrix& v, const EdgeList& edges, const DgcLayer& layer, int* isolated) {
  if (static_cast<Eigen::Index>(edges.size()) != v.rows()) throw ContractViolation("edge_conv: one edge list per node");
  if (v.cols() != layer.in_width()) throw ContractViolation("edge_conv: feature width does not match layer");
  ad::Tape tape;
  const LayerVars vars = bind(tape, layer, false);
  return edge_conv(tape.constant(v), edges, vars, isolated).value();
}

Matrix dgc_logits(const Matrix& features, const EdgeList& edges, const DgcParams& params) {
  return DgcForward(features, edges, params, false).logits.value();
}

double dgc_loss(const Matrix& features, const EdgeList& edges, std::span<const int> labels,
                std::span<const Eigen::Index> nodes, DgcParams& params, const FocalConfig& focal, bool with_grad) {
  DgcForward fwd(features, edges, params, with_grad);
  const ad::Var loss = focal_mean(fwd.logits, labels, nodes, focal);
  if (with_grad) {
    fwd.tape.backward(loss);
    const ParameterRefs refs = params.parameters();
    for (std::size_t i = 0; i < refs.size(); ++i) refs[i]->grad += fwd.tape.grad(fwd.param_vars[i]);
  }
  return loss.value()(0, 0);
}

Matrix classify_proba(const PopulationGraph& graph, const DgcParams& params, int k) {
  const EdgeList edges = knn_edges(graph.features, k);
  return softmax_rows(dgc_logits(graph.features, edges, params));
}

std::vector<double> classify(const PopulationGraph& graph, const DgcParams& params, int k) {
  const Matrix p = classify_proba(graph, params, k);
  return {p.col(1).data(), p.col(1).data() + p.rows()};
}

DgcTrainResult train_dgc(PopulationGraph& graph, const DgcConfig& cfg) {
  const Eigen::Index m = graph.size();
  if (static_cast<Eigen::Index>(graph.labels.size()) != m || static_cast<Eigen::Index>(graph.split.size()) != m)
    throw ContractViolation("train_dgc: labels and split must cover every node");

  std::vector<Eigen::Index> train_nodes, val_nodes;
  bool has0 = false, has1 = false;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (graph.split[idx] == Split::Train) {
      train_nodes.push_back(i);
      (graph.labels[idx] == 1 ? has1 : has0) = true;
    } else if (graph.split[idx] == Split::Val) {
      val_nodes.push_back(i);
    }
  }
  if (!(has0 && has1)) throw ContractViolation("train_dgc: the train split must contain both classes");

  DgcTrainResult result;
  DgcParams params = DgcParams::init(static_cast<int>(graph.features.cols()), cfg);
  result.params = params;
  if (cfg.epochs <= 0) return result;

  const ParameterRefs refs = params.parameters();
  AdamState adam;
  double best_acc = -1.0, best_val_loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = multistep_lr(epoch, cfg.lr, cfg.milestones, cfg.lr_gamma);
    graph.edges = knn_edges(graph.features, cfg.k);
    zero_grads(refs);
    const double loss = dgc_loss(graph.features, graph.edges, graph.labels, train_nodes, params, cfg.focal, true);
    if (!std::isfinite(loss)) throw NumericError("train_dgc: non-finite loss at epoch " + std::to_string(epoch));
    adam_step(refs, adam, lr, cfg.weight_decay);

    double acc = 0.0, val_loss = 0.0;
    if (!val_nodes.empty()) {
      const Matrix probs = softmax_rows(dgc_logits(graph.features, graph.edges, params));
      int correct = 0;
      for (Eigen::Index n : val_nodes) {
        const int pred = probs(n, 1) >= 0.5 ? 1 : 0;
        correct += pred == graph.labels[static_cast<std::size_t>(n)];
        val_loss += focal_loss(probs(n, 1), graph.labels[static_cast<std::size_t>(n)], cfg.focal);
      }
      acc = static_cast<double>(correct) / static_cast<double>(val_nodes.size());
      val_loss /= static_cast<double>(val_nodes.size());
    }
    result.history.push_back(DgcEpoch{epoch, loss, acc, lr});
    log::debug("dgc epoch {}: loss {:.6f} val acc {:.4f}", epoch, loss, acc);

    const bool better = val_nodes.empty() || acc > best_acc || (acc == best_acc && val_loss < best_val_loss);
    if (better) {
      best_acc = acc;
      best_val_loss = val_loss;
      result.params = params;
      result.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace fgcl
