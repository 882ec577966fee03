#pragma once

// Graph encoder: two (ChebConv -> ReLU -> TopK pool) blocks, mean||max readout, two-layer MLP.

#include "fgcl/autodiff.hpp"
#include "fgcl/connectivity.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fgcl {

struct EncoderConfig {
  int input_dim = 68;
  int cheb_order = 4;  ///< Chebyshev filter size K
  double pool_ratio = 0.5;
  int block1_width = 64;
  int block2_width = 64;
  int mlp_hidden = 128;
  int embedding_dim = 64;
};

struct ChebConvLayer {
  std::vector<Parameter> theta;  ///< K matrices, each in_dim x out_dim

  int order() const { return static_cast<int>(theta.size()); }
};

struct TopKPool {
  Parameter projection;  ///< width x 1
  double ratio = 0.5;
};

struct GraphEncoderParams {
  EncoderConfig config;
  std::uint64_t rng_seed = 0;
  ChebConvLayer conv1;
  TopKPool pool1;
  ChebConvLayer conv2;
  TopKPool pool2;
  Parameter mlp_w1, mlp_b1, mlp_w2, mlp_b2;

  static GraphEncoderParams init(const EncoderConfig& cfg, std::uint64_t seed);

  ParameterRefs parameters();
  std::vector<const Parameter*> parameters() const;
};

/// Z(1) = X, Z(2) = L X, Z(k) = 2 L Z(k-1) - Z(k-2); returns sum_k Z(k) theta(k).
template <typename DerivedX, typename DerivedL>
Matrix cheb_conv_forward(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedL>& lap,
                         std::span<const Matrix> theta) {
  if (theta.empty()) throw ContractViolation("cheb_conv_forward: K must be >= 1");
  if (lap.rows() != lap.cols() || lap.rows() != x.rows())
    throw ContractViolation("cheb_conv_forward: Laplacian must be square and match the node count");
  Matrix prev = x;
  Matrix out = prev * theta[0];
  if (theta.size() == 1) return out;
  Matrix cur = lap * prev;
  out += cur * theta[1];
  for (std::size_t k = 2; k < theta.size(); ++k) {
    Matrix next = 2.0 * (lap * cur) - prev;
    out += next * theta[k];
    prev = std::move(cur);
    cur = std::move(next);
  }
  return out;
}

Matrix cheb_conv_forward(const Matrix& x, const Matrix& lap, const ChebConvLayer& layer);

/// Indices of the `keep` largest scores, highest first; ties go to the lower index.
std::vector<Eigen::Index> topk_indices(const Vector& scores, Eigen::Index keep);

inline Eigen::Index pooled_size(Eigen::Index n, double ratio) {
  const auto k = static_cast<Eigen::Index>(std::ceil(ratio * static_cast<double>(n) - 1e-12));
  return std::max<Eigen::Index>(1, std::min(k, n));
}

struct PoolResult {
  Matrix nodes;       ///< kept rows gated by tanh(score)
  Matrix adjacency;   ///< induced on kept nodes
  std::vector<Eigen::Index> kept;
  bool degenerate_projection = false;
};

/// Scores s = nodes p / |p|; keeps ceil(ratio n) nodes. |p| = 0 keeps the first nodes by index.
PoolResult topk_pool(const Matrix& nodes, const Matrix& adjacency, const Vector& projection, double ratio);

/// Column means followed by column maxima.
RowVector global_pool(const Matrix& nodes);

/// A graph with its first-block scaled Laplacian precomputed.
struct PreparedGraph {
  Matrix x;
  Matrix w;
  Matrix laplacian;
  Feedback label = Feedback::Wrong;
  GraphMeta meta;
};

PreparedGraph prepare_graph(const FcGraph& g);

struct Embedding {
  RowVector z;
  Feedback label = Feedback::Wrong;
  GraphMeta meta;
};

/// Forward pass recorded on its own tape. Non-copyable: Vars point at the owned tape.
class EncoderTrace {
 public:
  EncoderTrace(const PreparedGraph& graph, const GraphEncoderParams& params, bool with_grad);
  EncoderTrace(const EncoderTrace&) = delete;
  EncoderTrace& operator=(const EncoderTrace&) = delete;

  RowVector embedding() const { return embedding_.value().row(0); }

  /// Backpropagates dLoss/dz and adds the parameter gradients into `params` (same order as
  /// GraphEncoderParams::parameters()).
  void accumulate_gradients(const RowVector& dz, std::span<Parameter* const> params);

 private:
  ad::Tape tape_;
  std::vector<ad::Var> param_vars_;
  ad::Var embedding_;
};

RowVector encode(const PreparedGraph& graph, const GraphEncoderParams& params);
Embedding encode(const FcGraph& graph, const GraphEncoderParams& params);

/// Rows are the embeddings of `graphs`, in order.
Matrix encode_all(std::span<const PreparedGraph> graphs, const GraphEncoderParams& params);

inline constexpr int kCheckpointSchemaVersion = 1;

nlohmann::json checkpoint_to_json(const GraphEncoderParams& params);
GraphEncoderParams checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const GraphEncoderParams& params, const std::filesystem::path& path);
GraphEncoderParams load_checkpoint(const std::filesystem::path& path);

}  // namespace fgcl
