#include "fgcl/encoder.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace fgcl {

namespace {

ChebConvLayer make_cheb(const std::string& prefix, int order, int in_dim, int out_dim, Rng& rng) {
  if (order < 1) throw ContractViolation("ChebConv filter size must be >= 1");
  ChebConvLayer layer;
  for (int k = 0; k < order; ++k)
    layer.theta.emplace_back(prefix + ".theta" + std::to_string(k), glorot_uniform(in_dim, out_dim, rng));
  return layer;
}

void check_finite(const Matrix& m, const char* stage) {
  if (!m.allFinite()) throw NumericError(std::string("encode: non-finite values after ") + stage);
}

}  // namespace

GraphEncoderParams GraphEncoderParams::init(const EncoderConfig& cfg, std::uint64_t seed) {
  if (cfg.pool_ratio <= 0.0 || cfg.pool_ratio > 1.0) throw ContractViolation("pool ratio must lie in (0, 1]");
  Rng rng(seed);
  GraphEncoderParams p;
  p.config = cfg;
  p.rng_seed = seed;
  p.conv1 = make_cheb("block1.conv", cfg.cheb_order, cfg.input_dim, cfg.block1_width, rng);
  p.pool1 = TopKPool{Parameter("block1.pool", glorot_uniform(cfg.block1_width, 1, rng)), cfg.pool_ratio};
  p.conv2 = make_cheb("block2.conv", cfg.cheb_order, cfg.block1_width, cfg.block2_width, rng);
  p.pool2 = TopKPool{Parameter("block2.pool", glorot_uniform(cfg.block2_width, 1, rng)), cfg.pool_ratio};
  p.mlp_w1 = Parameter("mlp.w1", glorot_uniform(2 * cfg.block2_width, cfg.mlp_hidden, rng));
  p.mlp_b1 = Parameter("mlp.b1", Matrix::Zero(1, cfg.mlp_hidden));
  p.mlp_w2 = Parameter("mlp.w2", glorot_uniform(cfg.mlp_hidden, cfg.embedding_dim, rng));
  p.mlp_b2 = Parameter("mlp.b2", Matrix::Zero(1, cfg.embedding_dim));
  return p;
}

ParameterRefs GraphEncoderParams::parameters() {
  ParameterRefs refs;
  for (auto& t : conv1.theta) refs.push_back(&t);
  refs.push_back(&pool1.projection);
  for (auto& t : conv2.theta) refs.push_back(&t);
  refs.push_back(&pool2.projection);
  for (Parameter* p : {&mlp_w1, &mlp_b1, &mlp_w2, &mlp_b2}) refs.push_back(p);
  return refs;
}

std::vector<const Parameter*> GraphEncoderParams::parameters() const {
  auto refs = const_cast<GraphEncoderParams*>(this)->parameters();
  return {refs.begin(), refs.end()};
}

Matrix cheb_conv_forward(const Matrix& x, const Matrix& lap, const ChebConvLayer& layer) {
  std::vector<Matrix> theta;
  theta.reserve(layer.theta.size());
  for (const auto& t : layer.theta) theta.push_back(t.value);
  return cheb_conv_forward(x, lap, std::span<const Matrix>(theta));
}

std::vector<Eigen::Index> topk_indices(const Vector& scores, Eigen::Index keep) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return scores(a) > scores(b); });
  order.resize(static_cast<std::size_t>(std::min(keep, scores.size())));
  return order;
}

namespace {

Matrix induced(const Matrix& adjacency, const std::vector<Eigen::Index>& kept) {
  const auto k = static_cast<Eigen::Index>(kept.size());
  Matrix out(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) out(i, j) = adjacency(kept[static_cast<std::size_t>(i)], kept[static_cast<std::size_t>(j)]);
  return out;
}

}  // namespace

PoolResult topk_pool(const Matrix& nodes, const Matrix& adjacency, const Vector& projection, double ratio) {
  if (nodes.rows() < 1) throw ContractViolation("topk_pool: need at least one node");
  if (projection.size() != nodes.cols()) throw ContractViolation("topk_pool: projection width mismatch");
  PoolResult out;
  const double norm = projection.norm();
  Vector scores = Vector::Zero(nodes.rows());
  if (norm == 0.0)
    out.degenerate_projection = true;
  else
    scores = nodes * projection / norm;
  out.kept = topk_indices(scores, pooled_size(nodes.rows(), ratio));
  const auto k = static_cast<Eigen::Index>(out.kept.size());
  out.nodes.resize(k, nodes.cols());
  for (Eigen::Index r = 0; r < k; ++r) {
    const Eigen::Index src = out.kept[static_cast<std::size_t>(r)];
    out.nodes.row(r) = std::tanh(scores(src)) * nodes.row(src);
  }
  out.adjacency = induced(adjacency, out.kept);
  return out;
}

RowVector global_pool(const Matrix& nodes) {
  if (nodes.rows() < 1) throw ContractViolation("global_pool: need at least one node");
  RowVector out(2 * nodes.cols());
  out << nodes.colwise().mean(), nodes.colwise().maxCoeff();
  return out;
}

PreparedGraph prepare_graph(const FcGraph& g) {
  return PreparedGraph{g.x, g.w, scaled_laplacian(g.w), g.label, g.meta};
}

namespace {

ad::Var cheb_conv(ad::Tape& tape, ad::Var x, const Matrix& lap, std::span<const ad::Var> theta) {
  const ad::Var l = tape.constant(lap);
  ad::Var prev = x;
  ad::Var out = ad::matmul(prev, theta[0]);
  if (theta.size() == 1) return out;
  ad::Var cur = ad::matmul(l, prev);
  out = out + ad::matmul(cur, theta[1]);
  for (std::size_t k = 2; k < theta.size(); ++k) {
    ad::Var next = ad::scale(ad::matmul(l, cur), 2.0) - prev;
    out = out + ad::matmul(next, theta[k]);
    prev = cur;
    cur = next;
  }
  return out;
}

struct PooledVars {
  ad::Var nodes;
  Matrix adjacency;
};

PooledVars topk_pool(ad::Var nodes, const Matrix& adjacency, ad::Var projection, double ratio) {
  const Eigen::Index keep = pooled_size(nodes.rows(), ratio);
  if (projection.value().norm() == 0.0) {
    std::vector<Eigen::Index> kept(static_cast<std::size_t>(keep));
    std::iota(kept.begin(), kept.end(), Eigen::Index{0});
    // tanh(0) gates every kept row to zero.
    return {ad::scale(ad::gather_rows(nodes, kept), 0.0), induced(adjacency, kept)};
  }
  const ad::Var scores = ad::matmul(nodes, ad::normalize(projection));
  std::vector<Eigen::Index> kept = topk_indices(scores.value().col(0), keep);
  Matrix sub = induced(adjacency, kept);
  const ad::Var gate = ad::tanh(ad::gather_rows(scores, kept));
  const ad::Var gated = ad::mul_rows(ad::gather_rows(nodes, std::move(kept)), gate);
  return {gated, std::move(sub)};
}

}  // namespace

EncoderTrace::EncoderTrace(const PreparedGraph& graph, const GraphEncoderParams& params, bool with_grad) {
  const EncoderConfig& cfg = params.config;
  if (graph.x.cols() != cfg.input_dim)
    throw ContractViolation("encode: node feature width " + std::to_string(graph.x.cols()) +
                            " does not match encoder input_dim " + std::to_string(cfg.input_dim));
  if (params.conv1.order() < 1 || params.conv2.order() < 1) throw ContractViolation("encode: empty ChebConv layer");

  for (const Parameter* p : params.parameters())
    param_vars_.push_back(with_grad ? tape_.variable(p->value) : tape_.constant(p->value));

  const auto k1 = static_cast<std::size_t>(params.conv1.order());
  const auto k2 = static_cast<std::size_t>(params.conv2.order());
  std::span<const ad::Var> vars(param_vars_);
  const auto theta1 = vars.subspan(0, k1);
  const ad::Var proj1 = vars[k1];
  const auto theta2 = vars.subspan(k1 + 1, k2);
  const ad::Var proj2 = vars[k1 + 1 + k2];
  const ad::Var w1 = vars[k1 + k2 + 2], b1 = vars[k1 + k2 + 3], w2 = vars[k1 + k2 + 4], b2 = vars[k1 + k2 + 5];

  const ad::Var x = tape_.constant(graph.x);
  const ad::Var h1 = ad::relu(cheb_conv(tape_, x, graph.laplacian, theta1));
  check_finite(h1.value(), "block1 convolution");
  PooledVars p1 = topk_pool(h1, graph.w, proj1, params.pool1.ratio);

  const Matrix lap2 = scaled_laplacian(p1.adjacency);
  const ad::Var h2 = ad::relu(cheb_conv(tape_, p1.nodes, lap2, theta2));
  check_finite(h2.value(), "block2 convolution");
  PooledVars p2 = topk_pool(h2, p1.adjacency, proj2, params.pool2.ratio);

  const ad::Var readout = ad::concat_cols(ad::mean_rows(p2.nodes), ad::max_rows(p2.nodes));
  const ad::Var hidden = ad::relu(ad::affine(readout, w1, b1));
  embedding_ = ad::affine(hidden, w2, b2);
  check_finite(embedding_.value(), "MLP head");
}

void EncoderTrace::accumulate_gradients(const RowVector& dz, std::span<Parameter* const> params) {
  if (params.size() != param_vars_.size()) throw ContractViolation("accumulate_gradients: parameter list mismatch");
  tape_.backward(embedding_, Matrix(dz));
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->grad += tape_.grad(param_vars_[i]);
}

RowVector encode(const PreparedGraph& graph, const GraphEncoderParams& params) {
  return EncoderTrace(graph, params, false).embedding();
}

Embedding encode(const FcGraph& graph, const GraphEncoderParams& params) {
  return Embedding{encode(prepare_graph(graph), params), graph.label, graph.meta};
}

Matrix encode_all(std::span<const PreparedGraph> graphs, const GraphEncoderParams& params) {
  Matrix out(static_cast<Eigen::Index>(graphs.size()), params.config.embedding_dim);
  for (std::size_t i = 0; i < graphs.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = encode(graphs[i], params);
  return out;
}

nlohmann::json checkpoint_to_json(const GraphEncoderParams& params) {
  const EncoderConfig& c = params.config;
  nlohmann::json shapes = nlohmann::json::object();
  nlohmann::json values = nlohmann::json::object();
  for (const Parameter* p : params.parameters()) {
    shapes[p->name] = {p->value.rows(), p->value.cols()};
    nlohmann::json flat = nlohmann::json::array();
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) flat.push_back(p->value(i, j));
    values[p->name] = std::move(flat);
  }
  return nlohmann::json{{"schema_version", kCheckpointSchemaVersion},
                        {"config",
                         {{"input_dim", c.input_dim},
                          {"cheb_order", c.cheb_order},
                          {"pool_ratio", c.pool_ratio},
                          {"block1_width", c.block1_width},
                          {"block2_width", c.block2_width},
                          {"mlp_hidden", c.mlp_hidden},
                          {"embedding_dim", c.embedding_dim}}},
                        {"shapes", std::move(shapes)},
                        {"values", std::move(values)},
                        {"rng_seed", params.rng_seed}};
}

GraphEncoderParams checkpoint_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kCheckpointSchemaVersion)
      throw IoError("checkpoint schema_version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kCheckpointSchemaVersion) + ")");
    const auto& c = j.at("config");
    EncoderConfig cfg;
    cfg.input_dim = c.at("input_dim").get<int>();
    cfg.cheb_order = c.at("cheb_order").get<int>();
    cfg.pool_ratio = c.at("pool_ratio").get<double>();
    cfg.block1_width = c.at("block1_width").get<int>();
    cfg.block2_width = c.at("block2_width").get<int>();
    cfg.mlp_hidden = c.at("mlp_hidden").get<int>();
    cfg.embedding_dim = c.at("embedding_dim").get<int>();
    GraphEncoderParams params = GraphEncoderParams::init(cfg, j.at("rng_seed").get<std::uint64_t>());
    const auto& shapes = j.at("shapes");
    const auto& values = j.at("values");
    if (shapes.size() != params.parameters().size() || values.size() != shapes.size())
      throw IoError("checkpoint parameter set does not match the encoder layout");
    for (Parameter* p : params.parameters()) {
      const auto shape = shapes.at(p->name).get<std::vector<Eigen::Index>>();
      if (shape.size() != 2 || shape[0] != p->value.rows() || shape[1] != p->value.cols())
        throw IoError("checkpoint shape mismatch for '" + p->name + "'");
      const auto& flat = values.at(p->name);
      if (static_cast<Eigen::Index>(flat.size()) != p->value.size())
        throw IoError("checkpoint value count mismatch for '" + p->name + "'");
      for (Eigen::Index r = 0; r < p->value.rows(); ++r)
        for (Eigen::Index col = 0; col < p->value.cols(); ++col)
          p->value(r, col) = flat[static_cast<std::size_t>(r * p->value.cols() + col)].get<double>();
    }
    return params;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const GraphEncoderParams& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(params).dump(1) << '\n';
}

GraphEncoderParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace fgcl
