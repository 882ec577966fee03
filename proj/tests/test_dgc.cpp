#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fgcl/dgc.hpp"
#include "support.hpp"

#include <cmath>

using namespace fgcl;

TEST_CASE("focal loss values") {
  const FocalConfig ce{0.5, 0.0};
  for (double p : {0.1, 0.3, 0.5, 0.9}) {
    CHECK(std::abs(focal_loss(p, 1, ce) - 0.5 * -std::log(p)) < 1e-12);
    CHECK(std::abs(focal_loss(p, 0, ce) - 0.5 * -std::log(1.0 - p)) < 1e-12);
  }
  CHECK(focal_loss(0.3, 1, FocalConfig{0.5, 2.0}) == doctest::Approx(0.29497).epsilon(1e-4));
  // Clamped at the extremes, so finite.
  CHECK(std::isfinite(focal_loss(0.0, 1, FocalConfig{})));
  CHECK(focal_loss(1.0, 1, FocalConfig{}) >= 0.0);
  // The easy example is down-weighted relative to cross-entropy.
  CHECK(focal_loss(0.9, 1, FocalConfig{0.5, 2.0}) < focal_loss(0.9, 1, ce));
}

TEST_CASE("knn_edges picks the most cosine-similar nodes, ties to the lower index") {
  Matrix v(5, 2);
  v << 1, 0,   //
      1, 0.1,  //
      0, 1,    //
      -1, 0,   //
      1, 0;
  const EdgeList e = knn_edges(v, 2);
  CHECK(e[0] == std::vector<Eigen::Index>{4, 1});
  CHECK(e[4] == std::vector<Eigen::Index>{0, 1});
  CHECK(e[2].size() == 2);
  for (std::size_t i = 0; i < e.size(); ++i)
    for (auto j : e[i]) CHECK(j != static_cast<Eigen::Index>(i));
  // k is capped at m - 1.
  CHECK(knn_edges(v, 50)[0].size() == 4);
  CHECK_THROWS_AS(knn_edges(v.topRows(1), 3), ContractViolation);
  CHECK_THROWS_AS(knn_edges(v, 0), ContractViolation);
}

TEST_CASE("knn_edges counts zero-norm nodes") {
  Matrix v = Matrix::Ones(4, 3);
  v.row(2).setZero();
  int degenerate = 0;
  knn_edges(v, 2, &degenerate);
  CHECK(degenerate == 1);
}

TEST_CASE("edge_conv equals the summed message function") {
  Rng rng(41);
  const Matrix v = testing::random_matrix(6, 3, rng);
  const DgcLayer layer = DgcLayer::init("l", 3, 4, rng);
  EdgeList edges = knn_edges(v, 2);
  edges[5].clear();
  int isolated = 0;
  const Matrix out = edge_conv(v, edges, layer, &isolated);
  CHECK(isolated == 1);
  for (Eigen::Index i = 0; i < 6; ++i) {
    RowVector expect = RowVector::Zero(4);
    for (Eigen::Index m : edges[static_cast<std::size_t>(i)]) {
      RowVector in(6);
      in << v.row(i), v.row(m) - v.row(i);
      const RowVector h = (in * layer.w1.value + layer.b1.value).cwiseMax(0.0);
      expect += h * layer.w2.value + layer.b2.value;
    }
    CHECK((out.row(i) - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("dgc_loss gradients agree with finite differences") {
  Rng rng(42);
  const Matrix v = testing::random_matrix(10, 5, rng);
  std::vector<int> labels{0, 1, 0, 1, 1, 0, 0, 1, 0, 1};
  const std::vector<Eigen::Index> nodes{0, 1, 2, 3, 4, 5};
  DgcConfig cfg;
  cfg.hidden1 = 6;
  cfg.hidden2 = 5;
  cfg.rng_seed = 2;
  DgcParams params = DgcParams::init(5, cfg);
  const EdgeList edges = knn_edges(v, 3);
  const ParameterRefs refs = params.parameters();
  const LossFn loss = [&](bool with_grad) { return dgc_loss(v, edges, labels, nodes, params, cfg.focal, with_grad); };
  for (const auto& e : gradcheck(loss, refs)) {
    INFO(e.name);
    CHECK(e.max_relative_error < 1e-4);
  }
}

TEST_CASE("train_dgc separates two Gaussian clusters") {
  Rng rng(43);
  PopulationGraph g;
  const int m = 200;
  g.features = testing::random_matrix(m, 8, rng);
  for (int i = 0; i < m; ++i) {
    const int y = i % 2;
    g.features.row(i).array() += y ? 2.0 : -2.0;
    g.labels.push_back(y);
    g.split.push_back(i < 140 ? Split::Train : i < 160 ? Split::Val : Split::Test);
  }
  DgcConfig cfg;
  cfg.lr = 0.01;
  cfg.rng_seed = 1;
  const DgcTrainResult r = train_dgc(g, cfg);
  CHECK(r.history.size() == 100);
  CHECK(r.history.back().train_loss < r.history.front().train_loss);
  const Matrix pp = classify_proba(g, r.params, cfg.k);
  CHECK((pp.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  int correct = 0, confident = 0;
  for (int i = 160; i < m; ++i) {
    const int y = g.labels[static_cast<std::size_t>(i)];
    correct += (pp(i, 1) >= 0.5) == (y == 1);
    confident += pp(i, y) >= 0.9;
  }
  CHECK(correct >= 38);    // >= 0.95 of 40
  CHECK(confident > 20);   // majority of test nodes
}

TEST_CASE("train_dgc requires both classes among train nodes") {
  PopulationGraph g;
  g.features = Matrix::Identity(4, 4);
  g.labels = {1, 1, 0, 0};
  g.split = {Split::Train, Split::Train, Split::Test, Split::Test};
  CHECK_THROWS_AS(train_dgc(g, DgcConfig{}), ContractViolation);
  g.split = {Split::Train, Split::Train, Split::Train, Split::Test};
  DgcConfig none;
  none.epochs = 0;
  CHECK(train_dgc(g, none).history.empty());
}
