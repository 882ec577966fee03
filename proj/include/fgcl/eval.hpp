#pragma once

// Classification metrics, trial-stage partitioning and the attraction (pair-similarity) report.

#include "fgcl/connectivity.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fgcl {

/// Undefined metrics (e.g. AUC with a single class present) are empty optionals.
struct MetricsRecord {
  double acc = 0.0;
  std::optional<double> auc;
  std::optional<double> f1;
  std::optional<double> sen;
  std::optional<double> spec;
  int n_samples = 0;
  int positive_count = 0;
  int tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Confusion-matrix metrics at `threshold` (p >= threshold predicts class 1) and the
/// tie-corrected Mann-Whitney AUC.
MetricsRecord compute_metrics(std::span<const double> probs, std::span<const int> labels, double threshold = 0.5);

/// AUC with average ranks for ties; empty when either class is absent.
std::optional<double> rank_auc(std::span<const double> scores, std::span<const int> labels);

nlohmann::json metrics_to_json(const MetricsRecord& m);

enum class Stage { Early, Middle, Late };

std::string to_string(Stage stage);

/// Trial t of n (0-based): early if t < floor(n/3), late if t >= floor(2n/3), else middle.
Stage stage_of(int t, int n);
std::vector<Stage> stage_split(int n);

inline constexpr int kAttractionBins = 64;

struct AttractionReport {
  std::vector<double> positive;
  std::vector<double> negative;
  std::array<int, kAttractionBins> positive_hist{};
  std::array<int, kAttractionBins> negative_hist{};
  double mean_positive = 0.0;
  double mean_negative = 0.0;
  double gap = 0.0;
};

using IndexPair = std::pair<std::size_t, std::size_t>;

struct AttractionPairs {
  std::vector<IndexPair> positive;
  std::vector<IndexPair> negative;
};

/// Pairs over graphs from the same dyad: positives are the two members' graphs of one trial,
/// negatives are any two graphs of different trials.
AttractionPairs attraction_pairs(std::span<const GraphMeta> meta);

/// Cosine similarity of each pair of feature rows, 64-bin histograms over [-1, 1], class means.
AttractionReport attraction_report(const Matrix& features, const AttractionPairs& pairs);

/// Row i is the row-major flattening of graph i's Pearson matrix.
Matrix raw_graph_features(std::span<const FcGraph> graphs);

void write_attraction_csv(const AttractionReport& report, const std::filesystem::path& path);

}  // namespace fgcl
