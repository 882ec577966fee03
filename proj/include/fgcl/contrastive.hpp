#pragma once

// InfoNCE-style contrastive objective over grouped views and the encoder pretraining loop.

#include "fgcl/encoder.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fgcl {

/// a.b / (|a| |b|); 0 (and *degenerate = true) when either vector has zero norm.
double cosine_sim(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b,
                  bool* degenerate = nullptr);

/// Loss of anchor side_a.row(i): its positive is side_b.row(i); every other row of both sides
/// is a negative.
double anchor_loss(const Matrix& side_a, const Matrix& side_b, Eigen::Index i, double tau);

/// Sum of anchor_loss over side-A anchors plus the same with the sides swapped.
double batch_loss(const Matrix& side_a, const Matrix& side_b, double tau);

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;  ///< d loss / d embeddings, same shape as the input
  int degenerate_rows = 0;
};

/// Contrastive loss over embeddings (rows) partitioned into groups. Rows sharing a group are
/// positives of each other, all other rows are negatives. For anchor a with positives P:
///   (1/|P|) sum_p [ -s(a,p) + log( exp s(a,p) + sum_n exp s(a,n) ) ],  s = cos / tau.
/// Summed over all anchors. With groups of exactly two this is batch_loss.
LossAndGrad grouped_contrastive_loss(const Matrix& z, std::span<const int> group, double tau);

enum class PairMode { TwoView, Multiview };

std::string to_string(PairMode mode);
PairMode pair_mode_from_string(const std::string& s);

/// One encoded view: its trial group, the dyad member it came from, and the augmentation index.
struct ViewRef {
  int group = 0;
  int member = 0;
  int view = 0;
  std::size_t graph_index = 0;
};

struct PairBatch {
  std::vector<std::size_t> graph_indices;  ///< rows of the batch embedding matrix
  std::vector<int> group_of;               ///< parallel to graph_indices
  std::vector<std::pair<std::size_t, std::size_t>> positive_pairs;  ///< unordered, batch-row indices
  std::vector<int> positives_per_view;
  std::vector<int> negatives_per_view;
  int skipped_groups = 0;
  double tau = 0.5;
};

/// TwoView: one randomly chosen view per member per group. Multiview: every view.
/// Groups with fewer than two usable views are skipped and counted.
PairBatch build_pairs(std::span<const ViewRef> views, PairMode mode, double tau, Rng& rng);

struct ContrastiveConfig {
  double tau = 0.5;
  int batch_size = 68;
  double lr = 0.001;
  double weight_decay = 0.02;
  int max_epochs = 700;
  int patience = 50;
  std::vector<std::int64_t> milestones{200, 400, 600};
  double lr_gamma = 0.5;
  PairMode pair_mode = PairMode::TwoView;
  std::uint64_t rng_seed = 0;
};

struct ContrastiveEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

/// A view in the pretraining set together with its trial-group key.
struct TrainingView {
  PreparedGraph graph;
  int group = 0;
  int member = 0;
};

struct PretrainResult {
  GraphEncoderParams params;  ///< from the best validation epoch
  std::vector<ContrastiveEpoch> history;
  int best_epoch = -1;
};

/// Mean batch loss of `views` under `params` with a fixed sampling seed.
double evaluate_contrastive(std::span<const TrainingView> views, const GraphEncoderParams& params,
                            const ContrastiveConfig& cfg, std::uint64_t sampling_seed);

/// Adam + multistep schedule, early stopping on validation loss.
PretrainResult train_encoder(std::span<const TrainingView> train, std::span<const TrainingView> val,
                             GraphEncoderParams init, const ContrastiveConfig& cfg);

void write_loss_history_csv(std::span<const ContrastiveEpoch> history, const std::filesystem::path& path);

}  // namespace fgcl
