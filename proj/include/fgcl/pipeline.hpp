#pragma once

// End-to-end experiment wiring: graph corpus construction, trial splits, per-fold
// pretrain -> embed -> classify -> score, and the results documents.

#include "fgcl/contrastive.hpp"
#include "fgcl/dgc.hpp"
#include "fgcl/eval.hpp"

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace fgcl {

struct WindowConfig {
  int width = 300;
  int step = 50;
  double ridge = kDefaultRidge;
};

enum class Protocol { Split721, LeaveDyadOut };

std::string to_string(Protocol p);
Protocol protocol_from_string(const std::string& s);

struct PipelineConfig {
  WindowConfig window;
  EncoderConfig encoder;
  ContrastiveConfig contrastive;
  DgcConfig dgc;
  Protocol protocol = Protocol::Split721;
  double threshold = 0.5;
  bool standardize_embeddings = true;  ///< z-score embedding columns over the population before DGC
  std::uint64_t rng_seed = 0;
};

/// Augmented views feed pretraining; basic (full-span) views feed embedding and DGC.
struct GraphCorpus {
  std::vector<FcGraph> views;
  std::vector<FcGraph> basic;
};

GraphCorpus build_corpus(std::span<const RoiTimeSeries> trials, const WindowConfig& cfg);

struct TrialKey {
  int dyad = 0;
  int trial = 0;
  auto operator<=>(const TrialKey&) const = default;
};

inline TrialKey trial_key(const GraphMeta& m) { return {m.dyad_id, m.trial_index}; }

/// Contrastive group id shared by both members' views of one trial.
inline int trial_group(const GraphMeta& m) { return m.dyad_id * 100000 + m.trial_index; }

using SplitAssignment = std::map<TrialKey, Split>;

/// Distinct trials of the graphs, per dyad, in trial order.
std::map<int, std::vector<int>> trials_by_dyad(std::span<const FcGraph> graphs);

/// Per dyad, shuffled trials: round(0.7 n) train, round(0.2 n) test, the rest val.
SplitAssignment split_721(std::span<const FcGraph> graphs, std::uint64_t seed);

/// All trials of `test_dyad` are test; per remaining dyad round(n/8) trials are val.
SplitAssignment dyad_holdout_split(std::span<const FcGraph> graphs, int test_dyad, std::uint64_t seed);

struct FoldAudit {
  std::set<int> test_dyads;
  std::set<int> encoder_dyads;     ///< dyads of views in the pretraining losses
  std::set<int> classifier_dyads;  ///< dyads of nodes in the DGC train/val sets
  int leaked_encoder_views = 0;    ///< training views whose trial (or dyad, for holdout) is test
  int leaked_classifier_nodes = 0;

  bool passed() const { return leaked_encoder_views == 0 && leaked_classifier_nodes == 0; }
};

struct NodePrediction {
  GraphMeta meta;
  int label = 0;
  Split split = Split::Train;
  double prob = 0.0;
};

/// role -> period ("entire", "early", "middle", "late") -> metrics; cells without test nodes
/// are absent.
using RoleMetrics = std::map<std::string, std::map<std::string, MetricsRecord>>;

struct FoldResult {
  std::string name;
  RoleMetrics metrics;
  FoldAudit audit;
  std::vector<NodePrediction> predictions;
  std::vector<ContrastiveEpoch> pretrain_history;
  std::vector<DgcEpoch> dgc_history;
};

struct ExperimentResult {
  Protocol protocol = Protocol::Split721;
  std::vector<FoldResult> folds;
};

/// Pretraining views from the train/val trials of `split`.
std::vector<TrainingView> training_views(std::span<const FcGraph> views, const SplitAssignment& split, Split which);

/// Contrastive pretraining on train views with early stopping on val views.
PretrainResult pretrain(const GraphCorpus& corpus, const SplitAssignment& split, const PipelineConfig& cfg,
                        std::uint64_t seed);

/// Rows are the embeddings of the graphs, in order.
Matrix embed_graphs(std::span<const FcGraph> graphs, const GraphEncoderParams& params);

/// Optionally standardizes `embeddings` and trains/evaluates DGC transductively.
std::vector<NodePrediction> classify_embeddings(const Matrix& embeddings, std::span<const GraphMeta> meta,
                                                std::span<const int> labels, std::span<const Split> split,
                                                const PipelineConfig& cfg, std::uint64_t seed,
                                                std::vector<DgcEpoch>* history = nullptr);

/// Metrics over test-split predictions per role and period. `trials_per_dyad` sets stages.
RoleMetrics score_predictions(std::span<const NodePrediction> predictions,
                              const std::map<int, int>& trials_per_dyad, double threshold);

std::map<int, int> trial_counts(std::span<const FcGraph> graphs);

FoldResult run_fold(const GraphCorpus& corpus, const SplitAssignment& split, const PipelineConfig& cfg,
                    const std::string& name, std::uint64_t seed);

ExperimentResult run_split_721(const GraphCorpus& corpus, const PipelineConfig& cfg);

/// One fold per dyad. Throws ContractViolation with fewer than two dyads.
ExperimentResult leave_dyad_out_cv(const GraphCorpus& corpus, const PipelineConfig& cfg);

ExperimentResult run_protocol(const GraphCorpus& corpus, const PipelineConfig& cfg);

inline constexpr int kResultsSchemaVersion = 1;

/// {schema_version, protocol, folds: {fold: {role: {period: metrics}}}, aggregate, audit}.
nlohmann::json results_to_json(const ExperimentResult& result);

/// Rows per role: Entire, Early, Middle, Late. Columns: mean and std of ACC/AUC/F1/SEN/SPEC.
void write_summary_csv(const ExperimentResult& result, const std::filesystem::path& path);

inline constexpr const char* kPredictionsHeader =
    "node_id,dyad_id,subject_id,role,trial_index,stage,label,prob_class1,split";

/// The stage column is derived from each dyad's trial count within `predictions`.
void write_predictions_csv(std::span<const NodePrediction> predictions, const std::filesystem::path& path);
std::vector<NodePrediction> read_predictions_csv(const std::filesystem::path& path);

struct EmbeddingTable {
  std::vector<GraphMeta> meta;
  std::vector<int> labels;
  std::vector<Split> split;
  Matrix z;
};

void write_embeddings_csv(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable read_embeddings_csv(const std::filesystem::path& path);

Split split_from_string(const std::string& s);

inline constexpr int kGraphIndexSchemaVersion = 1;

/// Writes views/ and basic/ graph documents plus index.json with metadata and split per graph.
void write_graph_store(const GraphCorpus& corpus, const SplitAssignment& split, const nlohmann::json& config_echo,
                       const std::filesystem::path& dir);

struct GraphStore {
  GraphCorpus corpus;
  SplitAssignment split;
};

GraphStore read_graph_store(const std::filesystem::path& dir);

}  // namespace fgcl
