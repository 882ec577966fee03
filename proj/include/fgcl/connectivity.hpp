#pragma once

// Functional-connectivity graphs from ROI-by-time windows.

#include "fgcl/numcore.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace fgcl {

enum class Role { DmtActor, DmtPartner, Pst };

std::string to_string(Role role);
Role role_from_string(const std::string& s);

enum class Feedback : int { Wrong = 0, Correct = 1 };

/// One trial of one subject: n_roi x n_time samples plus provenance.
struct RoiTimeSeries {
  Matrix values;
  int dyad_id = 0;
  int subject_id = 0;
  Role role = Role::Pst;
  int trial_index = 0;
  Feedback label = Feedback::Wrong;
};

struct GraphMeta {
  int dyad_id = 0;
  int subject_id = 0;
  Role role = Role::Pst;
  int trial_index = 0;
  int view_index = 0;
};

/// X: Pearson node features (unit diagonal). H: partial-correlation edge features (zero
/// diagonal). W = |H|, the adjacency used by the spectral convolution.
struct FcGraph {
  Matrix x;
  Matrix h;
  Matrix w;
  Feedback label = Feedback::Wrong;
  GraphMeta meta;

  Eigen::Index n() const { return x.rows(); }
};

/// Contiguous column windows starting at 0, step, 2*step, ... while start + width <= n_time.
std::vector<Matrix> sliding_windows(const Matrix& series, Eigen::Index width, Eigen::Index step);

inline std::size_t window_count(Eigen::Index n_time, Eigen::Index width, Eigen::Index step) {
  return width > n_time ? 0 : static_cast<std::size_t>((n_time - width) / step + 1);
}

struct CorrelationStats {
  int zero_variance_rows = 0;
};

/// Row-wise sample Pearson correlation. Zero-variance rows correlate 0 with every other row.
Matrix pearson_matrix(const Matrix& window, CorrelationStats* stats = nullptr);

struct PartialCorrStats {
  double ridge_used = 0.0;  ///< as a fraction of mean(diag(S))
  bool escalated = false;
};

/// Partial correlations from the ridge-regularised precision matrix of the row covariance.
/// `ridge` is relative to mean(diag(S)). Throws NumericError if inversion fails at every
/// escalation level.
Matrix partial_corr_matrix(const Matrix& window, double ridge, PartialCorrStats* stats = nullptr);

inline constexpr double kDefaultRidge = 1e-3;

FcGraph build_graph(const Matrix& window, Feedback label, const GraphMeta& meta, double ridge = kDefaultRidge);

/// L = I - D^-1/2 W D^-1/2 (isolated nodes contribute 0 to D^-1/2).
Matrix normalized_laplacian(const Matrix& w);

/// 2 L / lambda_max - I, or L - I when lambda_max < 1e-9.
Matrix scaled_laplacian(const Matrix& w);

// Graph documents: {n, x, h, w (row-major n*n arrays), y, dyad_id, subject_id, role,
// trial_index, view_index}.
nlohmann::json graph_to_json(const FcGraph& g);
FcGraph graph_from_json(const nlohmann::json& j);
void save_graph(const FcGraph& g, const std::filesystem::path& path);
FcGraph load_graph(const std::filesystem::path& path);

}  // namespace fgcl
