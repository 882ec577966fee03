#pragma once

#include "fgcl/connectivity.hpp"
#include "fgcl/contrastive.hpp"
#include "fgcl/dgc.hpp"
#include "fgcl/encoder.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace fgcl::testing {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

/// A connectivity graph over n nodes from a random smooth-ish n x 4n series.
inline FcGraph random_graph(int n, Rng& rng, GraphMeta meta = {}, Feedback label = Feedback::Wrong) {
  Matrix series = random_matrix(n, 4 * n, rng);
  const Matrix mix = random_matrix(n, n, rng, 0.4);
  series = (Matrix::Identity(n, n) + mix) * series;
  return build_graph(series, label, meta);
}

inline EncoderConfig small_encoder(int n) {
  EncoderConfig c;
  c.input_dim = n;
  c.cheb_order = 3;
  c.block1_width = 6;
  c.block2_width = 5;
  c.mlp_hidden = 7;
  c.embedding_dim = 4;
  return c;
}

/// Fresh empty directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("fgcl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fgcl::testing
