#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fgcl/encoder.hpp"
#include "support.hpp"

#include <algorithm>
#include <numeric>

using namespace fgcl;

namespace {

// Power-basis coefficients of T_0..T_{K-1} via T_k = 2x T_{k-1} - T_{k-2} on coefficients,
// then sum_k T_k(L) X theta_k evaluated with explicit matrix powers.
Matrix explicit_cheb(const Matrix& x, const Matrix& lap, const std::vector<Matrix>& theta) {
  const std::size_t K = theta.size();
  std::vector<std::vector<double>> c(K, std::vector<double>(K, 0.0));
  c[0][0] = 1.0;
  if (K > 1) c[1][1] = 1.0;
  for (std::size_t k = 2; k < K; ++k)
    for (std::size_t j = 0; j < K; ++j) c[k][j] = (j > 0 ? 2.0 * c[k - 1][j - 1] : 0.0) - c[k - 2][j];
  std::vector<Matrix> powers{Matrix::Identity(lap.rows(), lap.cols())};
  for (std::size_t j = 1; j < K; ++j) powers.push_back(powers.back() * lap);
  Matrix out = Matrix::Zero(x.rows(), theta[0].cols());
  for (std::size_t k = 0; k < K; ++k) {
    Matrix tk = Matrix::Zero(lap.rows(), lap.cols());
    for (std::size_t j = 0; j <= k; ++j) tk += c[k][j] * powers[j];
    out += tk * x * theta[k];
  }
  return out;
}

}  // namespace

TEST_CASE("Chebyshev recursion equals the explicit polynomial expansion") {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 3 + trial % 7, K = 1 + trial % 5;
    const FcGraph g = testing::random_graph(n, rng);
    const Matrix lap = scaled_laplacian(g.w);
    std::vector<Matrix> theta;
    for (int k = 0; k < K; ++k) theta.push_back(testing::random_matrix(n, 3, rng));
    const Matrix a = cheb_conv_forward(g.x, lap, std::span<const Matrix>(theta));
    CHECK((a - explicit_cheb(g.x, lap, theta)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("cheb_conv_forward rejects empty filters and mismatched shapes") {
  const Matrix x = Matrix::Ones(3, 2), lap = Matrix::Identity(4, 4);
  std::vector<Matrix> theta{Matrix::Ones(2, 2)};
  CHECK_THROWS_AS(cheb_conv_forward(x, lap, std::span<const Matrix>(theta)), ContractViolation);
  std::vector<Matrix> none;
  CHECK_THROWS_AS(cheb_conv_forward(x, Matrix::Identity(3, 3), std::span<const Matrix>(none)), ContractViolation);
}

TEST_CASE("topk pooling keeps ceil(r n) nodes, ordered by score, ties to the lower index") {
  CHECK(pooled_size(68, 0.5) == 34);
  CHECK(pooled_size(34, 0.5) == 17);
  CHECK(pooled_size(9, 0.5) == 5);
  CHECK(pooled_size(1, 0.5) == 1);
  Vector s(5);
  s << 0.1, 0.9, 0.5, 0.9, -1.0;
  CHECK(topk_indices(s, 3) == std::vector<Eigen::Index>{1, 3, 2});

  Rng rng(22);
  const Matrix nodes = testing::random_matrix(68, 4, rng);
  const Matrix adj = Matrix::Ones(68, 68);
  const PoolResult r = topk_pool(nodes, adj, Vector::Ones(4), 0.5);
  CHECK(r.nodes.rows() == 34);
  CHECK(r.adjacency.rows() == 34);
  CHECK(r.adjacency.cols() == 34);
  // Gate: kept row = row * tanh(score).
  const double score = nodes.row(r.kept[0]).sum() / 2.0;
  CHECK((r.nodes.row(0) - nodes.row(r.kept[0]) * std::tanh(score)).norm() < 1e-12);
}

TEST_CASE("zero projection keeps the first nodes and flags degeneracy") {
  Rng rng(23);
  const PoolResult r = topk_pool(testing::random_matrix(6, 3, rng), Matrix::Ones(6, 6), Vector::Zero(3), 0.5);
  CHECK(r.degenerate_projection);
  CHECK(r.kept == std::vector<Eigen::Index>{0, 1, 2});
}

TEST_CASE("global_pool concatenates column means and maxima") {
  Matrix m(2, 2);
  m << 1, -3, 3, 5;
  const RowVector g = global_pool(m);
  REQUIRE(g.size() == 4);
  CHECK(g(0) == 2.0);
  CHECK(g(1) == 1.0);
  CHECK(g(2) == 3.0);
  CHECK(g(3) == 5.0);
}

TEST_CASE("encoder output has the configured width and is deterministic") {
  Rng rng(24);
  const FcGraph g = testing::random_graph(10, rng);
  const auto params = GraphEncoderParams::init(testing::small_encoder(10), 5);
  const Embedding e = encode(g, params);
  CHECK(e.z.size() == 4);
  CHECK(e.z.allFinite());
  CHECK(encode(prepare_graph(g), params) == e.z);
  CHECK(GraphEncoderParams::init(testing::small_encoder(10), 5).mlp_w1.value == params.mlp_w1.value);
  CHECK(GraphEncoderParams::init(testing::small_encoder(10), 6).mlp_w1.value != params.mlp_w1.value);
}

TEST_CASE("relabelling graph nodes leaves the embedding unchanged") {
  Rng rng(25);
  const FcGraph g = testing::random_graph(10, rng);
  const auto params = GraphEncoderParams::init(testing::small_encoder(10), 7);
  std::vector<int> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> p(10);
  for (int i = 0; i < 10; ++i) p.indices()(i) = perm[static_cast<std::size_t>(i)];
  // Node order permuted; the feature columns keep their meaning.
  FcGraph q = g;
  q.x = p * g.x;
  q.w = p * g.w * p.transpose();
  q.h = p * g.h * p.transpose();
  CHECK((encode(q, params).z - encode(g, params).z).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("encoder gradients agree with finite differences") {
  Rng rng(26);
  const PreparedGraph g = prepare_graph(testing::random_graph(9, rng));
  auto params = GraphEncoderParams::init(testing::small_encoder(9), 8);
  const ParameterRefs refs = params.parameters();
  const RowVector w = testing::random_matrix(1, 4, rng);
  const LossFn loss = [&](bool with_grad) {
    EncoderTrace trace(g, params, with_grad);
    if (with_grad) trace.accumulate_gradients(w, refs);
    return trace.embedding().dot(w);
  };
  for (const auto& e : gradcheck(loss, refs)) {
    INFO(e.name);
    CHECK(e.max_relative_error < 1e-4);
  }
}

TEST_CASE("checkpoint round trip and shape validation") {
  const auto params = GraphEncoderParams::init(testing::small_encoder(8), 9);
  const auto dir = testing::scratch_dir("checkpoint");
  save_checkpoint(params, dir / "ck.json");
  const auto loaded = load_checkpoint(dir / "ck.json");
  const auto a = params.parameters();
  const auto b = loaded.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    CHECK(a[i]->value == b[i]->value);
  }
  auto j = checkpoint_to_json(params);
  j["schema_version"] = 99;
  CHECK_THROWS_AS(checkpoint_from_json(j), IoError);
  auto k = checkpoint_to_json(params);
  k["config"]["mlp_hidden"] = 3;
  CHECK_THROWS_AS(checkpoint_from_json(k), IoError);
}
