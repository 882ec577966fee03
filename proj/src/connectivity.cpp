#include "fgcl/connectivity.hpp"

#include <cmath>
#include <fstream>

namespace fgcl {

std::string to_string(Role role) {
  switch (role) {
    case Role::DmtActor: return "DMT_actor";
    case Role::DmtPartner: return "DMT_partner";
    case Role::Pst: return "PST";
  }
  return "PST";
}

Role role_from_string(const std::string& s) {
  if (s == "DMT_actor") return Role::DmtActor;
  if (s == "DMT_partner") return Role::DmtPartner;
  if (s == "PST") return Role::Pst;
  throw ContractViolation("unknown role '" + s + "'");
}

std::vector<Matrix> sliding_windows(const Matrix& series, Eigen::Index width, Eigen::Index step) {
  if (width < 1 || step < 1) throw ContractViolation("sliding_windows: width and step must be >= 1");
  if (width > series.cols()) {
    throw ContractViolation("sliding_windows: window width " + std::to_string(width) +
                            " exceeds series length " + std::to_string(series.cols()));
  }
  std::vector<Matrix> windows;
  windows.reserve(window_count(series.cols(), width, step));
  for (Eigen::Index start = 0; start + width <= series.cols(); start += step)
    windows.emplace_back(series.middleCols(start, width));
  return windows;
}

namespace {

Matrix center_rows(const Matrix& window) {
  return window.colwise() - window.rowwise().mean();
}

void require_window(const Matrix& window, const char* who) {
  if (window.cols() < 2) throw ContractViolation(std::string(who) + ": need at least 2 samples per row");
  if (window.rows() < 1) throw ContractViolation(std::string(who) + ": empty window");
  if (!window.allFinite()) throw NumericError(std::string(who) + ": non-finite samples");
}

Matrix clamp_unit(Matrix m) { return m.cwiseMax(-1.0).cwiseMin(1.0); }

}  // namespace

Matrix pearson_matrix(const Matrix& window, CorrelationStats* stats) {
  require_window(window, "pearson_matrix");
  const Matrix centered = center_rows(window);
  Vector norms = centered.rowwise().norm();
  const double scale = window.cwiseAbs().maxCoeff();
  const double floor = 1e-12 * std::max(scale, 1.0) * std::sqrt(static_cast<double>(window.cols()));

  int zero_rows = 0;
  Vector inv(norms.size());
  for (Eigen::Index i = 0; i < norms.size(); ++i) {
    if (norms(i) <= floor) {
      inv(i) = 0.0;
      ++zero_rows;
    } else {
      inv(i) = 1.0 / norms(i);
    }
  }
  const Matrix normalized = inv.asDiagonal() * centered;
  Matrix corr = normalized * normalized.transpose();
  corr = (0.5 * (corr + corr.transpose())).eval();
  corr.diagonal().setOnes();
  if (stats) stats->zero_variance_rows = zero_rows;
  return clamp_unit(std::move(corr));
}

Matrix partial_corr_matrix(const Matrix& window, double ridge, PartialCorrStats* stats) {
  require_window(window, "partial_corr_matrix");
  if (ridge < 0.0) throw ContractViolation("partial_corr_matrix: ridge must be >= 0");
  const Eigen::Index n = window.rows();
  const Matrix centered = center_rows(window);
  const Matrix cov = centered * centered.transpose() / static_cast<double>(window.cols() - 1);
  const double mean_diag = cov.diagonal().mean();
  if (mean_diag <= 0.0) {
    if (stats) *stats = PartialCorrStats{ridge, false};
    return Matrix::Zero(n, n);
  }

  std::vector<double> levels{ridge};
  for (double r : {1e-6, 1e-4, 1e-2})
    if (r > ridge) levels.push_back(r);

  for (std::size_t attempt = 0; attempt < levels.size(); ++attempt) {
    Matrix reg = cov;
    reg.diagonal().array() += levels[attempt] * mean_diag;
    Eigen::LLT<Matrix> llt(reg);
    if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-13)) continue;
    const Matrix precision = llt.solve(Matrix::Identity(n, n));
    if (!precision.allFinite()) continue;

    const Vector d = precision.diagonal().cwiseSqrt().cwiseInverse();
    Matrix partial = -(d.asDiagonal() * precision * d.asDiagonal());
    partial = (0.5 * (partial + partial.transpose())).eval();
    partial.diagonal().setZero();
    if (stats) *stats = PartialCorrStats{levels[attempt], attempt > 0};
    return clamp_unit(std::move(partial));
  }
  throw NumericError("partial_corr_matrix: covariance could not be inverted at any ridge level");
}

FcGraph build_graph(const Matrix& window, Feedback label, const GraphMeta& meta, double ridge) {
  FcGraph g;
  g.x = pearson_matrix(window);
  g.h = partial_corr_matrix(window, ridge);
  g.w = g.h.cwiseAbs();
  g.w.diagonal().setZero();
  g.label = label;
  g.meta = meta;
  return g;
}

Matrix normalized_laplacian(const Matrix& w) {
  if (w.rows() != w.cols()) throw ContractViolation("normalized_laplacian: adjacency must be square");
  const double tol = 1e-12 * std::max(1.0, w.cwiseAbs().maxCoeff());
  if ((w - w.transpose()).cwiseAbs().maxCoeff() > tol)
    throw ContractViolation("normalized_laplacian: adjacency must be symmetric");
  if (w.size() > 0 && w.minCoeff() < 0.0) throw ContractViolation("normalized_laplacian: negative edge weight");

  const Vector degree = w.rowwise().sum();
  Vector inv_sqrt(degree.size());
  for (Eigen::Index i = 0; i < degree.size(); ++i) inv_sqrt(i) = degree(i) > 0.0 ? 1.0 / std::sqrt(degree(i)) : 0.0;
  Matrix lap = -(inv_sqrt.asDiagonal() * w * inv_sqrt.asDiagonal());
  lap.diagonal().array() += 1.0;
  return 0.5 * (lap + lap.transpose());
}

Matrix scaled_laplacian(const Matrix& w) {
  Matrix lap = normalized_laplacian(w);
  const double lambda_max = power_iteration(lap).value;
  const Eigen::Index n = lap.rows();
  if (lambda_max < 1e-9) return lap - Matrix::Identity(n, n);
  return (2.0 / lambda_max) * lap - Matrix::Identity(n, n);
}

namespace {

nlohmann::json flatten_row_major(const Matrix& m) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) arr.push_back(m(i, j));
  return arr;
}

Matrix unflatten_row_major(const nlohmann::json& arr, Eigen::Index n, const char* field) {
  if (!arr.is_array() || static_cast<Eigen::Index>(arr.size()) != n * n)
    throw IoError(std::string("graph document: field '") + field + "' must hold n*n numbers");
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = arr[static_cast<std::size_t>(i * n + j)].get<double>();
  return m;
}

}  // namespace

nlohmann::json graph_to_json(const FcGraph& g) {
  return nlohmann::json{{"n", g.n()},
                        {"x", flatten_row_major(g.x)},
                        {"h", flatten_row_major(g.h)},
                        {"w", flatten_row_major(g.w)},
                        {"y", static_cast<int>(g.label)},
                        {"dyad_id", g.meta.dyad_id},
                        {"subject_id", g.meta.subject_id},
                        {"role", to_string(g.meta.role)},
                        {"trial_index", g.meta.trial_index},
                        {"view_index", g.meta.view_index}};
}

FcGraph graph_from_json(const nlohmann::json& j) {
  FcGraph g;
  try {
    const auto n = j.at("n").get<Eigen::Index>();
    g.x = unflatten_row_major(j.at("x"), n, "x");
    g.h = unflatten_row_major(j.at("h"), n, "h");
    g.w = unflatten_row_major(j.at("w"), n, "w");
    g.label = j.at("y").get<int>() == 1 ? Feedback::Correct : Feedback::Wrong;
    g.meta.dyad_id = j.at("dyad_id").get<int>();
    g.meta.subject_id = j.at("subject_id").get<int>();
    g.meta.role = role_from_string(j.at("role").get<std::string>());
    g.meta.trial_index = j.at("trial_index").get<int>();
    g.meta.view_index = j.at("view_index").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("graph document: ") + e.what());
  }
  return g;
}

void save_graph(const FcGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write graph file " + path.string());
  out << graph_to_json(g).dump() << '\n';
  if (!out) throw IoError("write failed for graph file " + path.string());
}

FcGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read graph file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed graph file " + path.string() + ": " + e.what());
  }
  try {
    return graph_from_json(j);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace fgcl
