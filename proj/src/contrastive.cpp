#include "fgcl/contrastive.hpp"

#include "fgcl/log.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>

namespace fgcl {

double cosine_sim(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b, bool* degenerate) {
  if (a.size() != b.size()) throw ContractViolation("cosine_sim: length mismatch");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  if (degenerate) *degenerate = false;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double anchor_loss(const Matrix& side_a, const Matrix& side_b, Eigen::Index i, double tau) {
  const Eigen::Index n = side_a.rows();
  if (n == 0) throw ContractViolation("anchor_loss: empty minibatch");
  if (side_b.rows() != n) throw ContractViolation("anchor_loss: sides must have equal length");
  if (i < 0 || i >= n) throw ContractViolation("anchor_loss: anchor index out of range");
  if (!(tau > 0.0)) throw ContractViolation("anchor_loss: tau must be positive");

  const RowVector anchor = side_a.row(i);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(2 * n));
  for (Eigen::Index j = 0; j < n; ++j)
    if (j != i) terms.push_back(cosine_sim(anchor, side_a.row(j)) / tau);
  for (Eigen::Index j = 0; j < n; ++j) terms.push_back(cosine_sim(anchor, side_b.row(j)) / tau);
  const double positive = cosine_sim(anchor, side_b.row(i)) / tau;

  const double m = *std::max_element(terms.begin(), terms.end());
  double denom = 0.0;
  for (double t : terms) denom += std::exp(t - m);
  return std::max(0.0, m + std::log(denom) - positive);
}

double batch_loss(const Matrix& side_a, const Matrix& side_b, double tau) {
  if (side_a.rows() != side_b.rows()) throw ContractViolation("batch_loss: sides must have equal length");
  double total = 0.0;
  for (Eigen::Index i = 0; i < side_a.rows(); ++i) total += anchor_loss(side_a, side_b, i, tau);
  for (Eigen::Index i = 0; i < side_b.rows(); ++i) total += anchor_loss(side_b, side_a, i, tau);
  return total;
}

LossAndGrad grouped_contrastive_loss(const Matrix& z, std::span<const int> group, double tau) {
  const Eigen::Index n = z.rows();
  if (static_cast<Eigen::Index>(group.size()) != n) throw ContractViolation("grouped_contrastive_loss: one group id per row");
  if (!(tau > 0.0)) throw ContractViolation("grouped_contrastive_loss: tau must be positive");

  LossAndGrad out;
  out.grad = Matrix::Zero(n, z.cols());
  if (n == 0) return out;

  const Vector norms = z.rowwise().norm();
  Matrix zn = Matrix::Zero(n, z.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (norms(i) > 0.0)
      zn.row(i) = z.row(i) / norms(i);
    else
      ++out.degenerate_rows;
  }
  const Matrix s = zn * zn.transpose() / tau;
  Matrix g = Matrix::Zero(n, n);

  std::vector<Eigen::Index> pos, neg;
  for (Eigen::Index a = 0; a < n; ++a) {
    pos.clear();
    neg.clear();
    for (Eigen::Index b = 0; b < n; ++b) {
      if (b == a) continue;
      (group[static_cast<std::size_t>(b)] == group[static_cast<std::size_t>(a)] ? pos : neg).push_back(b);
    }
    if (pos.empty()) continue;

    double row_max = -std::numeric_limits<double>::infinity();
    for (Eigen::Index b : pos) row_max = std::max(row_max, s(a, b));
    for (Eigen::Index b : neg) row_max = std::max(row_max, s(a, b));
    double neg_sum = 0.0;
    for (Eigen::Index b : neg) neg_sum += std::exp(s(a, b) - row_max);

    const double inv_p = 1.0 / static_cast<double>(pos.size());
    for (Eigen::Index p : pos) {
      const double lse = row_max + std::log(std::exp(s(a, p) - row_max) + neg_sum);
      out.loss += inv_p * (lse - s(a, p));
      g(a, p) += inv_p * (std::exp(s(a, p) - lse) - 1.0);
      for (Eigen::Index b : neg) g(a, b) += inv_p * std::exp(s(a, b) - lse);
    }
  }

  const Matrix dzn = (g + g.transpose()) * zn / tau;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (norms(i) == 0.0) continue;
    const double proj = zn.row(i).dot(dzn.row(i));
    out.grad.row(i) = (dzn.row(i) - proj * zn.row(i)) / norms(i);
  }
  return out;
}

std::string to_string(PairMode mode) { return mode == PairMode::TwoView ? "two_view" : "multiview"; }

PairMode pair_mode_from_string(const std::string& s) {
  if (s == "two_view") return PairMode::TwoView;
  if (s == "multiview") return PairMode::Multiview;
  throw ContractViolation("unknown pair_mode '" + s + "' (expected two_view or multiview)");
}

PairBatch build_pairs(std::span<const ViewRef> views, PairMode mode, double tau, Rng& rng) {
  if (!(tau > 0.0)) throw ContractViolation("build_pairs: tau must be positive");
  // group -> member -> views, ordered for determinism
  std::map<int, std::map<int, std::vector<const ViewRef*>>> grouped;
  for (const ViewRef& v : views) grouped[v.group][v.member].push_back(&v);

  PairBatch batch;
  batch.tau = tau;
  std::vector<std::vector<std::size_t>> rows_by_group;
  for (auto& [group_id, members] : grouped) {
    std::vector<const ViewRef*> chosen;
    for (auto& [member, list] : members) {
      std::sort(list.begin(), list.end(), [](const ViewRef* a, const ViewRef* b) { return a->view < b->view; });
      if (mode == PairMode::TwoView) {
        std::uniform_int_distribution<std::size_t> pick(0, list.size() - 1);
        chosen.push_back(list[pick(rng)]);
      } else {
        chosen.insert(chosen.end(), list.begin(), list.end());
      }
    }
    if (chosen.size() < 2) {
      ++batch.skipped_groups;
      continue;
    }
    std::vector<std::size_t> rows;
    for (const ViewRef* v : chosen) {
      rows.push_back(batch.graph_indices.size());
      batch.graph_indices.push_back(v->graph_index);
      batch.group_of.push_back(group_id);
    }
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = i + 1; j < rows.size(); ++j) batch.positive_pairs.emplace_back(rows[i], rows[j]);
    rows_by_group.push_back(std::move(rows));
  }
  if (batch.skipped_groups > 0) log::warn("build_pairs: skipped {} trial group(s) with fewer than two views", batch.skipped_groups);

  const auto total = static_cast<int>(batch.graph_indices.size());
  batch.positives_per_view.assign(batch.graph_indices.size(), 0);
  batch.negatives_per_view.assign(batch.graph_indices.size(), 0);
  for (const auto& rows : rows_by_group) {
    const auto size = static_cast<int>(rows.size());
    for (std::size_t r : rows) {
      batch.positives_per_view[r] = size - 1;
      batch.negatives_per_view[r] = total - size;
    }
  }
  return batch;
}

namespace {

/// Trial groups in first-appearance order, each with its view refs.
std::vector<std::vector<ViewRef>> group_views(std::span<const TrainingView> views) {
  std::map<int, std::size_t> slot;
  std::vector<std::vector<ViewRef>> groups;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto [it, inserted] = slot.emplace(views[i].group, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(
        ViewRef{views[i].group, views[i].member, views[i].graph.meta.view_index, i});
  }
  return groups;
}

std::size_t groups_per_batch(const std::vector<std::vector<ViewRef>>& groups, const ContrastiveConfig& cfg) {
  std::size_t views_per_group = 2;
  if (cfg.pair_mode == PairMode::Multiview) {
    views_per_group = 1;
    for (const auto& g : groups) views_per_group = std::max(views_per_group, g.size());
  }
  return std::max<std::size_t>(2, static_cast<std::size_t>(cfg.batch_size) / views_per_group);
}

/// Consecutive chunks of `order`; a trailing chunk with a single group joins the previous one.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t per_batch) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += per_batch) {
    const std::size_t end = std::min(order.size(), start + per_batch);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (batches.size() > 1 && batches.back().size() < 2) {
    batches[batches.size() - 2].insert(batches[batches.size() - 2].end(), batches.back().begin(), batches.back().end());
    batches.pop_back();
  }
  return batches;
}

struct BatchOutcome {
  double loss = 0.0;
  bool valid = false;
};

BatchOutcome run_batch(std::span<const TrainingView> views, const std::vector<std::vector<ViewRef>>& groups,
                       const std::vector<std::size_t>& batch_groups, const GraphEncoderParams& params,
                       const ParameterRefs* grads, const ContrastiveConfig& cfg, Rng& rng) {
  const bool train = grads != nullptr;
  std::vector<ViewRef> refs;
  for (std::size_t g : batch_groups) refs.insert(refs.end(), groups[g].begin(), groups[g].end());
  const PairBatch pairs = build_pairs(refs, cfg.pair_mode, cfg.tau, rng);
  if (pairs.graph_indices.size() < 2) return {};

  std::vector<std::unique_ptr<EncoderTrace>> traces;
  Matrix z(static_cast<Eigen::Index>(pairs.graph_indices.size()), params.config.embedding_dim);
  for (std::size_t r = 0; r < pairs.graph_indices.size(); ++r) {
    traces.push_back(std::make_unique<EncoderTrace>(views[pairs.graph_indices[r]].graph, params, train));
    z.row(static_cast<Eigen::Index>(r)) = traces.back()->embedding();
  }
  const LossAndGrad lg = grouped_contrastive_loss(z, pairs.group_of, cfg.tau);
  if (train) {
    zero_grads(*grads);
    for (std::size_t r = 0; r < traces.size(); ++r)
      traces[r]->accumulate_gradients(lg.grad.row(static_cast<Eigen::Index>(r)), *grads);
  }
  return {lg.loss, true};
}

}  // namespace

double evaluate_contrastive(std::span<const TrainingView> views, const GraphEncoderParams& params,
                            const ContrastiveConfig& cfg, std::uint64_t sampling_seed) {
  const auto groups = group_views(views);
  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(sampling_seed);
  double total = 0.0;
  int count = 0;
  for (const auto& batch : make_batches(order, groups_per_batch(groups, cfg))) {
    const BatchOutcome out = run_batch(views, groups, batch, params, nullptr, cfg, rng);
    if (!out.valid) continue;
    total += out.loss;
    ++count;
  }
  return count > 0 ? total / count : 0.0;
}

PretrainResult train_encoder(std::span<const TrainingView> train, std::span<const TrainingView> val,
                             GraphEncoderParams init, const ContrastiveConfig& cfg) {
  if (train.empty() || val.empty()) throw ContractViolation("train_encoder: train and validation sets must be non-empty");
  if (!(cfg.tau > 0.0) || cfg.batch_size < 2 || cfg.lr < 0.0 || cfg.weight_decay < 0.0 || cfg.patience < 0)
    throw ContractViolation("train_encoder: invalid contrastive configuration");

  PretrainResult result;
  result.params = init;
  GraphEncoderParams params = std::move(init);
  const ParameterRefs refs = params.parameters();
  AdamState adam;
  Rng rng(cfg.rng_seed);
  const std::uint64_t val_seed = cfg.rng_seed ^ 0x9e3779b97f4a7c15ULL;

  const auto groups = group_views(train);
  const std::size_t per_batch = groups_per_batch(groups, cfg);
  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_val = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = multistep_lr(epoch, cfg.lr, cfg.milestones, cfg.lr_gamma);
    std::shuffle(order.begin(), order.end(), rng);
    double train_total = 0.0;
    int batches = 0;
    for (const auto& batch : make_batches(order, per_batch)) {
      const BatchOutcome out = run_batch(train, groups, batch, params, &refs, cfg, rng);
      if (!out.valid) continue;
      if (!std::isfinite(out.loss))
        throw NumericError("train_encoder: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches));
      adam_step(refs, adam, lr, cfg.weight_decay);
      train_total += out.loss;
      ++batches;
    }
    const double val_loss = evaluate_contrastive(val, params, cfg, val_seed);
    if (!std::isfinite(val_loss))
      throw NumericError("train_encoder: non-finite validation loss at epoch " + std::to_string(epoch));
    result.history.push_back(ContrastiveEpoch{epoch, batches > 0 ? train_total / batches : 0.0, val_loss, lr});
    log::debug("pretrain epoch {}: train {:.6f} val {:.6f} lr {:.3g}", epoch, result.history.back().train_loss,
               val_loss, lr);

    if (val_loss < best_val) {
      best_val = val_loss;
      result.params = params;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale > cfg.patience) {
      log::info("pretrain: early stop at epoch {} (best epoch {})", epoch, result.best_epoch);
      break;
    }
  }
  return result;
}

void write_loss_history_csv(std::span<const ContrastiveEpoch> history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write loss history " + path.string());
  out << "epoch,train_loss,val_loss,lr\n" << std::setprecision(17);
  for (const auto& e : history) out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.lr << '\n';
}

}  // namespace fgcl
