// fgcl: batch front end for the synthetic-data -> graphs -> pretrain -> embed -> classify -> eval chain.

#include "fgcl/config.hpp"
#include "fgcl/log.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace fgcl;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string protocol;
  std::string dataset;
  std::string graphs;
  std::string checkpoint;
  std::string embeddings;
  std::string predictions;
};

RunConfig effective_config(const Options& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) cfg.apply_seed(*o.seed);
  if (!o.protocol.empty()) cfg.pipeline.protocol = protocol_from_string(o.protocol);
  return cfg;
}

fs::path prepare_out(const fs::path& dir, const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  const std::string echo = run_config_to_ini(cfg);
  std::ofstream out(dir / "config_echo.ini", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "config_echo.ini").string());
  out << echo;
  log::info("effective config:\n{}", echo);
  return dir;
}

fs::path pick(const std::string& flag, const std::string& fallback) { return flag.empty() ? fs::path(fallback) : fs::path(flag); }

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void cmd_synth(const RunConfig& cfg, const fs::path& out) {
  prepare_out(out, cfg);
  const auto trials = generate(cfg.synth);
  write_dataset(trials, cfg.synth, out);
  std::cout << "wrote " << trials.size() << " trial files to " << out.string() << '\n';
}

void cmd_graphs(const RunConfig& cfg, const fs::path& dataset, const fs::path& out) {
  const auto manifest = load_manifest(dataset);
  std::vector<RoiTimeSeries> trials;
  std::size_t skipped = 0;
  for (const auto& rec : manifest.trials) {
    try {
      trials.push_back(load_trial(dataset, rec));
    } catch (const IoError& e) {
      ++skipped;
      log::warn("skipping trial: {}", e.what());
    }
  }
  if (skipped > 0) log::warn("skipped {} of {} trial files", skipped, manifest.trials.size());
  if (static_cast<double>(skipped) > 0.05 * static_cast<double>(manifest.trials.size()))
    throw IoError("more than 5% of trial files in " + dataset.string() + " are unreadable");

  prepare_out(out, cfg);
  const GraphCorpus corpus = build_corpus(trials, cfg.pipeline.window);
  const auto split = split_721(corpus.basic, seed_stream(cfg.pipeline.rng_seed, 100));
  write_graph_store(corpus, split, run_config_to_json(cfg), out);
  std::cout << "wrote " << corpus.views.size() << " view graphs and " << corpus.basic.size() << " basic graphs to "
            << out.string() << '\n';
}

GraphEncoderParams cmd_pretrain(const RunConfig& cfg, const GraphStore& store, const fs::path& out) {
  prepare_out(out, cfg);
  const PretrainResult r = pretrain(store.corpus, store.split, cfg.pipeline, seed_stream(cfg.pipeline.rng_seed, 0));
  save_checkpoint(r.params, out / "checkpoint.json");
  write_loss_history_csv(r.history, out / "loss_history.csv");
  std::cout << "pretrained " << r.history.size() << " epochs (best " << r.best_epoch << "), checkpoint "
            << (out / "checkpoint.json").string() << '\n';
  return r.params;
}

EmbeddingTable embedding_table(const GraphStore& store, const GraphEncoderParams& params) {
  EmbeddingTable t;
  t.z = embed_graphs(store.corpus.basic, params);
  for (const auto& g : store.corpus.basic) {
    t.meta.push_back(g.meta);
    t.labels.push_back(static_cast<int>(g.label));
    t.split.push_back(store.split.at(trial_key(g.meta)));
  }
  return t;
}

void cmd_embed(const RunConfig& cfg, const GraphStore& store, const fs::path& checkpoint, const fs::path& out) {
  prepare_out(out, cfg);
  const EmbeddingTable t = embedding_table(store, load_checkpoint(checkpoint));
  write_embeddings_csv(t, out / "embeddings.csv");
  std::cout << "wrote " << t.z.rows() << " embeddings to " << (out / "embeddings.csv").string() << '\n';
}

std::vector<NodePrediction> cmd_classify(const RunConfig& cfg, const fs::path& embeddings, const fs::path& out) {
  prepare_out(out, cfg);
  const EmbeddingTable t = read_embeddings_csv(embeddings);
  std::vector<DgcEpoch> history;
  auto preds = classify_embeddings(t.z, t.meta, t.labels, t.split, cfg.pipeline,
                                   seed_stream(cfg.pipeline.rng_seed, 0), &history);
  write_predictions_csv(preds, out / "predictions.csv");
  std::cout << "wrote " << preds.size() << " predictions to " << (out / "predictions.csv").string() << '\n';
  return preds;
}

std::map<int, int> counts_from_predictions(std::span<const NodePrediction> preds) {
  std::map<int, int> out;
  for (const auto& p : preds) out[p.meta.dyad_id] = std::max(out[p.meta.dyad_id], p.meta.trial_index + 1);
  return out;
}

void write_results(const ExperimentResult& r, const fs::path& out) {
  write_json(results_to_json(r), out / "results.json");
  write_summary_csv(r, out / "summary.csv");
  for (const auto& f : r.folds) {
    if (!f.predictions.empty()) write_predictions_csv(f.predictions, out / ("predictions_" + f.name + ".csv"));
    if (!f.pretrain_history.empty()) write_loss_history_csv(f.pretrain_history, out / ("loss_history_" + f.name + ".csv"));
  }
  std::cout << "wrote " << r.folds.size() << " fold(s) to " << (out / "results.json").string() << '\n';
}

ExperimentResult score_only(const std::vector<NodePrediction>& preds, double threshold) {
  ExperimentResult r;
  FoldResult f;
  f.name = "split_721";
  f.metrics = score_predictions(preds, counts_from_predictions(preds), threshold);
  r.folds.push_back(std::move(f));
  return r;
}

void cmd_eval(const RunConfig& cfg, const Options& o, const fs::path& out) {
  prepare_out(out, cfg);
  if (!o.predictions.empty()) {
    if (cfg.pipeline.protocol != Protocol::Split721)
      throw ContractViolation("--predictions can only be scored under the split_721 protocol");
    write_results(score_only(read_predictions_csv(o.predictions), cfg.pipeline.threshold), out);
    return;
  }
  const GraphStore store = read_graph_store(pick(o.graphs, cfg.io.graphs_dir));
  ExperimentResult r;
  if (cfg.pipeline.protocol == Protocol::Split721) {
    r.protocol = Protocol::Split721;
    r.folds.push_back(run_fold(store.corpus, store.split, cfg.pipeline, "split_721", seed_stream(cfg.pipeline.rng_seed, 0)));
  } else {
    r = leave_dyad_out_cv(store.corpus, cfg.pipeline);
  }
  write_results(r, out);
}

void cmd_attraction(const RunConfig& cfg, const GraphStore& store, const std::optional<GraphEncoderParams>& trained,
                    const fs::path& out) {
  prepare_out(out, cfg);
  std::vector<FcGraph> held_out;
  for (const auto& g : store.corpus.basic)
    if (store.split.at(trial_key(g.meta)) == Split::Test) held_out.push_back(g);
  if (held_out.empty()) throw ContractViolation("attraction: no test-split graphs in the graph store");

  GraphEncoderParams params;
  if (trained) {
    params = *trained;
  } else {
    EncoderConfig ecfg = cfg.pipeline.encoder;
    ecfg.input_dim = static_cast<int>(held_out.front().x.cols());
    params = GraphEncoderParams::init(ecfg, seed_stream(cfg.pipeline.rng_seed, 1));
    log::info("attraction: no checkpoint given, using an untrained encoder");
  }
  std::vector<GraphMeta> meta;
  for (const auto& g : held_out) meta.push_back(g.meta);
  const AttractionPairs pairs = attraction_pairs(meta);
  const AttractionReport emb = attraction_report(embed_graphs(held_out, params), pairs);
  const AttractionReport raw = attraction_report(raw_graph_features(held_out), pairs);
  write_attraction_csv(emb, out / "attraction_embedding.csv");
  write_attraction_csv(raw, out / "attraction_raw.csv");
  auto summary = [](const AttractionReport& r) {
    return nlohmann::json{{"mean_pos", r.mean_positive},
                          {"mean_neg", r.mean_negative},
                          {"gap", r.gap},
                          {"positive_pairs", r.positive.size()},
                          {"negative_pairs", r.negative.size()}};
  };
  write_json({{"trained", trained.has_value()}, {"embedding", summary(emb)}, {"raw", summary(raw)}},
             out / "attraction_summary.json");
  std::cout << "attraction gap: embedding " << emb.gap << ", raw " << raw.gap << '\n';
}

void cmd_run(const RunConfig& cfg, const fs::path& out) {
  const fs::path dataset = out / cfg.io.dataset_dir, graphs = out / cfg.io.graphs_dir;
  const fs::path model = out / cfg.io.model_dir, results = out / cfg.io.results_dir;
  cmd_synth(cfg, dataset);
  cmd_graphs(cfg, dataset, graphs);
  const GraphStore store = read_graph_store(graphs);
  const GraphEncoderParams params = cmd_pretrain(cfg, store, model);
  prepare_out(model, cfg);
  write_embeddings_csv(embedding_table(store, params), model / "embeddings.csv");
  const auto preds = cmd_classify(cfg, model / "embeddings.csv", results);
  if (cfg.pipeline.protocol == Protocol::Split721) {
    ExperimentResult r = score_only(preds, cfg.pipeline.threshold);
    write_json(results_to_json(r), results / "results.json");
    write_summary_csv(r, results / "summary.csv");
  } else {
    write_results(leave_dyad_out_cv(store.corpus, cfg.pipeline), results);
  }
  cmd_attraction(cfg, store, params, results);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fgcl: functional graph contrastive learning with dynamic graph classification"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed_value = 0;

  auto common = [&](CLI::App* sub, bool needs_out = true) {
    sub->add_option("--config", o.config, "Run configuration file");
    auto* out = sub->add_option("--out", o.out, "Output directory");
    if (needs_out) out->required();
    sub->add_option("--seed", seed_value, "Seed overriding rng_seed")->each([&](const std::string&) { o.seed = seed_value; });
    sub->add_option("--protocol", o.protocol, "split_721 or leave_dyad_out");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dyad dataset");
  common(synth);
  auto* graphs = app.add_subcommand("graphs", "Build connectivity graphs and the split index");
  common(graphs);
  graphs->add_option("--dataset", o.dataset, "Dataset directory (default: io.dataset_dir)");
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Contrastive encoder pretraining");
  common(pretrain_cmd);
  pretrain_cmd->add_option("--graphs", o.graphs, "Graph directory (default: io.graphs_dir)");
  auto* embed = app.add_subcommand("embed", "Embed the basic views with a checkpoint");
  common(embed);
  embed->add_option("--graphs", o.graphs, "Graph directory (default: io.graphs_dir)");
  embed->add_option("--checkpoint", o.checkpoint, "Encoder checkpoint")->required();
  auto* classify_cmd = app.add_subcommand("classify", "Train DGC on embeddings and predict");
  common(classify_cmd);
  classify_cmd->add_option("--embeddings", o.embeddings, "Embeddings CSV")->required();
  auto* eval = app.add_subcommand("eval", "Run an evaluation protocol");
  common(eval);
  eval->add_option("--graphs", o.graphs, "Graph directory (default: io.graphs_dir)");
  eval->add_option("--predictions", o.predictions, "Score an existing predictions CSV instead of training");
  auto* attraction = app.add_subcommand("attraction", "Positive/negative pair similarity report");
  common(attraction);
  attraction->add_option("--graphs", o.graphs, "Graph directory (default: io.graphs_dir)");
  attraction->add_option("--checkpoint", o.checkpoint, "Encoder checkpoint (default: untrained encoder)");
  auto* run = app.add_subcommand("run", "Full chain: synth, graphs, pretrain, embed, classify, eval, attraction");
  common(run);

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig cfg = effective_config(o);
    const fs::path out = o.out;
    if (synth->parsed()) cmd_synth(cfg, out);
    else if (graphs->parsed()) cmd_graphs(cfg, pick(o.dataset, cfg.io.dataset_dir), out);
    else if (pretrain_cmd->parsed()) cmd_pretrain(cfg, read_graph_store(pick(o.graphs, cfg.io.graphs_dir)), out);
    else if (embed->parsed()) cmd_embed(cfg, read_graph_store(pick(o.graphs, cfg.io.graphs_dir)), o.checkpoint, out);
    else if (classify_cmd->parsed()) cmd_classify(cfg, o.embeddings, out);
    else if (eval->parsed()) cmd_eval(cfg, o, out);
    else if (attraction->parsed()) {
      std::optional<GraphEncoderParams> params;
      if (!o.checkpoint.empty()) params = load_checkpoint(o.checkpoint);
      cmd_attraction(cfg, read_graph_store(pick(o.graphs, cfg.io.graphs_dir)), params, out);
    } else if (run->parsed()) cmd_run(cfg, out);
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
