#include "fgcl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace fgcl {

std::optional<double> rank_auc(std::span<const double> scores, std::span<const int> labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t r = i; r <= j; ++r) rank[order[r]] = avg;
    i = j + 1;
  }
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == 1) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

MetricsRecord compute_metrics(std::span<const double> probs, std::span<const int> labels, double threshold) {
  if (probs.size() != labels.size() || probs.empty())
    throw ContractViolation("compute_metrics: probabilities and labels must be equal-length and non-empty");
  MetricsRecord m;
  m.n_samples = static_cast<int>(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool pred = probs[i] >= threshold;
    const bool truth = labels[i] == 1;
    m.positive_count += truth;
    if (pred && truth) ++m.tp;
    else if (pred) ++m.fp;
    else if (truth) ++m.fn;
    else ++m.tn;
  }
  m.acc = static_cast<double>(m.tp + m.tn) / m.n_samples;
  if (m.tp + m.fn > 0) m.sen = static_cast<double>(m.tp) / (m.tp + m.fn);
  if (m.tn + m.fp > 0) m.spec = static_cast<double>(m.tn) / (m.tn + m.fp);
  if (2 * m.tp + m.fp + m.fn > 0) m.f1 = 2.0 * m.tp / (2.0 * m.tp + m.fp + m.fn);
  m.auc = rank_auc(probs, labels);
  return m;
}

nlohmann::json metrics_to_json(const MetricsRecord& m) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return nlohmann::json{{"acc", m.acc},         {"auc", opt(m.auc)},
                        {"f1", opt(m.f1)},      {"sen", opt(m.sen)},
                        {"spec", opt(m.spec)},  {"n_samples", m.n_samples},
                        {"positive_count", m.positive_count},
                        {"auc_defined", m.auc.has_value()},
                        {"sen_defined", m.sen.has_value()},
                        {"spec_defined", m.spec.has_value()},
                        {"f1_defined", m.f1.has_value()}};
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::Early: return "early";
    case Stage::Middle: return "middle";
    case Stage::Late: return "late";
  }
  return "late";
}

Stage stage_of(int t, int n) {
  if (n < 3) throw ContractViolation("stage_split: a dyad needs at least 3 trials");
  if (t < 0 || t >= n) throw ContractViolation("stage_split: trial index out of range");
  if (t < n / 3) return Stage::Early;
  if (t >= (2 * n) / 3) return Stage::Late;
  return Stage::Middle;
}

std::vector<Stage> stage_split(int n) {
  if (n < 3) throw ContractViolation("stage_split: a dyad needs at least 3 trials");
  std::vector<Stage> out(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) out[static_cast<std::size_t>(t)] = stage_of(t, n);
  return out;
}

AttractionPairs attraction_pairs(std::span<const GraphMeta> meta) {
  AttractionPairs pairs;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    for (std::size_t j = i + 1; j < meta.size(); ++j) {
      if (meta[i].dyad_id != meta[j].dyad_id) continue;
      if (meta[i].trial_index == meta[j].trial_index) {
        if (meta[i].subject_id != meta[j].subject_id) pairs.positive.emplace_back(i, j);
      } else {
        pairs.negative.emplace_back(i, j);
      }
    }
  }
  return pairs;
}

namespace {

int bin_of(double s) {
  const int b = static_cast<int>(std::floor((s + 1.0) / 2.0 * kAttractionBins));
  return std::clamp(b, 0, kAttractionBins - 1);
}

double row_cosine(const Matrix& f, std::size_t i, std::size_t j) {
  const auto a = f.row(static_cast<Eigen::Index>(i));
  const auto b = f.row(static_cast<Eigen::Index>(j));
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

}  // namespace

AttractionReport attraction_report(const Matrix& features, const AttractionPairs& pairs) {
  if (pairs.positive.empty() || pairs.negative.empty())
    throw ContractViolation("attraction_report: need at least one positive and one negative pair");
  AttractionReport r;
  for (const auto& [i, j] : pairs.positive) {
    const double s = row_cosine(features, i, j);
    r.positive.push_back(s);
    ++r.positive_hist[static_cast<std::size_t>(bin_of(s))];
  }
  for (const auto& [i, j] : pairs.negative) {
    const double s = row_cosine(features, i, j);
    r.negative.push_back(s);
    ++r.negative_hist[static_cast<std::size_t>(bin_of(s))];
  }
  r.mean_positive = std::accumulate(r.positive.begin(), r.positive.end(), 0.0) / static_cast<double>(r.positive.size());
  r.mean_negative = std::accumulate(r.negative.begin(), r.negative.end(), 0.0) / static_cast<double>(r.negative.size());
  r.gap = r.mean_positive - r.mean_negative;
  return r;
}

Matrix raw_graph_features(std::span<const FcGraph> graphs) {
  if (graphs.empty()) return Matrix();
  const Eigen::Index n = graphs.front().n();
  Matrix out(static_cast<Eigen::Index>(graphs.size()), n * n);
  for (std::size_t g = 0; g < graphs.size(); ++g) {
    if (graphs[g].n() != n) throw ContractViolation("raw_graph_features: graphs differ in node count");
    for (Eigen::Index i = 0; i < n; ++i)
      out.block(static_cast<Eigen::Index>(g), i * n, 1, n) = graphs[g].x.row(i);
  }
  return out;
}

void write_attraction_csv(const AttractionReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write attraction report " + path.string());
  out << "bin_center,pos_count,neg_count\n" << std::setprecision(17);
  for (int b = 0; b < kAttractionBins; ++b) {
    const double center = -1.0 + (b + 0.5) * (2.0 / kAttractionBins);
    out << center << ',' << report.positive_hist[static_cast<std::size_t>(b)] << ','
        << report.negative_hist[static_cast<std::size_t>(b)] << '\n';
  }
}

}  // namespace fgcl
