#pragma once

// Dynamic graph classification over a population graph of embeddings: cosine KNN edges,
// edge convolution v_i' = sum_{m in N(i)} phi(v_i || v_m - v_i), focal loss.

#include "fgcl/autodiff.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fgcl {

enum class Split { Train, Val, Test };

std::string to_string(Split split);

/// Out-neighbour lists, one per node.
using EdgeList = std::vector<std::vector<Eigen::Index>>;

struct PopulationGraph {
  Matrix features;  ///< m x d, one row per embedding
  std::vector<int> labels;
  std::vector<Split> split;
  EdgeList edges;

  Eigen::Index size() const { return features.rows(); }
};

/// For each node the min(k, m-1) other nodes of highest cosine similarity; ties go to the lower
/// index. Zero-norm nodes have similarity 0 to everything and are counted in *degenerate.
EdgeList knn_edges(const Matrix& v, int k, int* degenerate = nullptr);

/// phi: Linear(2*in -> out) -> ReLU -> Linear(out -> out).
struct DgcLayer {
  Parameter w1, b1, w2, b2;

  static DgcLayer init(const std::string& prefix, int in_width, int out_width, Rng& rng);
  int in_width() const { return static_cast<int>(w1.value.rows() / 2); }
  int out_width() const { return static_cast<int>(w2.value.cols()); }
};

/// Nodes without out-edges get a zero row and are counted in *isolated.
Matrix edge_conv(const Matrix& v, const EdgeList& edges, const DgcLayer& layer, int* isolated = nullptr);

struct FocalConfig {
  double alpha = 0.5;
  double gamma = 2.0;
};

inline constexpr double kProbClamp = 1e-7;

/// -alpha_t (1 - p_t)^gamma log(p_t), p clamped to [1e-7, 1 - 1e-7].
double focal_loss(double p, int y, const FocalConfig& cfg);

struct DgcConfig {
  int k = 10;
  int epochs = 100;
  double lr = 0.001;
  double weight_decay = 0.0;
  std::vector<std::int64_t> milestones{60};
  double lr_gamma = 0.1;
  int hidden1 = 64;
  int hidden2 = 64;
  FocalConfig focal;
  std::uint64_t rng_seed = 0;
};

struct DgcParams {
  DgcLayer layer1;
  DgcLayer layer2;
  Parameter head_w, head_b;

  static DgcParams init(int input_dim, const DgcConfig& cfg);
  ParameterRefs parameters();
};

/// Class logits (m x 2) for the given fixed edge set.
Matrix dgc_logits(const Matrix& features, const EdgeList& edges, const DgcParams& params);

/// Mean focal loss over `nodes` for fixed edges; accumulates parameter grads when requested.
double dgc_loss(const Matrix& features, const EdgeList& edges, std::span<const int> labels,
                std::span<const Eigen::Index> nodes, DgcParams& params, const FocalConfig& focal, bool with_grad);

struct DgcEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double lr = 0.0;
};

struct DgcTrainResult {
  DgcParams params;  ///< best validation accuracy
  std::vector<DgcEpoch> history;
  int best_epoch = -1;
};

/// Rebuilds the KNN edges each epoch, then one full-graph Adam step on the train-node focal loss.
DgcTrainResult train_dgc(PopulationGraph& graph, const DgcConfig& cfg);

/// m x 2 softmax probabilities; edges are rebuilt from the graph's features.
Matrix classify_proba(const PopulationGraph& graph, const DgcParams& params, int k);

/// Per-node probability of class 1.
std::vector<double> classify(const PopulationGraph& graph, const DgcParams& params, int k);

}  // namespace fgcl
