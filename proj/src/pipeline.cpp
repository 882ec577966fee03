#include "fgcl/pipeline.hpp"

#include "fgcl/log.hpp"
#include "fgcl/synthdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace fgcl {

std::string to_string(Protocol p) { return p == Protocol::Split721 ? "split_721" : "leave_dyad_out"; }

Protocol protocol_from_string(const std::string& s) {
  if (s == "split_721") return Protocol::Split721;
  if (s == "leave_dyad_out") return Protocol::LeaveDyadOut;
  throw ContractViolation("unknown protocol '" + s + "' (expected split_721 or leave_dyad_out)");
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw IoError("unknown split '" + s + "'");
}

GraphCorpus build_corpus(std::span<const RoiTimeSeries> trials, const WindowConfig& cfg) {
  if (cfg.width < 2 || cfg.step < 1) throw ContractViolation("build_corpus: window width must be >= 2 and step >= 1");
  GraphCorpus corpus;
  for (const auto& t : trials) {
    GraphMeta meta{t.dyad_id, t.subject_id, t.role, t.trial_index, 0};
    const auto windows = sliding_windows(t.values, cfg.width, cfg.step);
    for (std::size_t v = 0; v < windows.size(); ++v) {
      meta.view_index = static_cast<int>(v);
      corpus.views.push_back(build_graph(windows[v], t.label, meta, cfg.ridge));
    }
    meta.view_index = 0;
    corpus.basic.push_back(build_graph(t.values, t.label, meta, cfg.ridge));
  }
  return corpus;
}

std::map<int, std::vector<int>> trials_by_dyad(std::span<const FcGraph> graphs) {
  std::map<int, std::set<int>> seen;
  for (const auto& g : graphs) seen[g.meta.dyad_id].insert(g.meta.trial_index);
  std::map<int, std::vector<int>> out;
  for (const auto& [d, s] : seen) out[d] = std::vector<int>(s.begin(), s.end());
  return out;
}

std::map<int, int> trial_counts(std::span<const FcGraph> graphs) {
  std::map<int, int> out;
  for (const auto& [d, trials] : trials_by_dyad(graphs)) out[d] = trials.back() + 1;
  return out;
}

SplitAssignment split_721(std::span<const FcGraph> graphs, std::uint64_t seed) {
  SplitAssignment out;
  for (auto [d, trials] : trials_by_dyad(graphs)) {
    Rng rng(seed_stream(seed, static_cast<std::uint64_t>(d)));
    std::shuffle(trials.begin(), trials.end(), rng);
    const auto n = static_cast<double>(trials.size());
    const auto n_train = static_cast<std::size_t>(std::lround(0.7 * n));
    const auto n_test = static_cast<std::size_t>(std::lround(0.2 * n));
    for (std::size_t i = 0; i < trials.size(); ++i) {
      const Split s = i < n_train ? Split::Train : i < n_train + n_test ? Split::Test : Split::Val;
      out[{d, trials[i]}] = s;
    }
  }
  return out;
}

SplitAssignment dyad_holdout_split(std::span<const FcGraph> graphs, int test_dyad, std::uint64_t seed) {
  const auto by_dyad = trials_by_dyad(graphs);
  if (!by_dyad.contains(test_dyad))
    throw ContractViolation("dyad_holdout_split: dyad " + std::to_string(test_dyad) + " has no graphs");
  SplitAssignment out;
  for (auto [d, trials] : by_dyad) {
    if (d == test_dyad) {
      for (int t : trials) out[{d, t}] = Split::Test;
      continue;
    }
    Rng rng(seed_stream(seed, static_cast<std::uint64_t>(d)));
    std::shuffle(trials.begin(), trials.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::lround(static_cast<double>(trials.size()) / 8.0));
    for (std::size_t i = 0; i < trials.size(); ++i) out[{d, trials[i]}] = i < n_val ? Split::Val : Split::Train;
  }
  return out;
}

namespace {

Split split_of(const SplitAssignment& split, const GraphMeta& m) {
  const auto it = split.find(trial_key(m));
  if (it == split.end())
    throw ContractViolation("no split assignment for dyad " + std::to_string(m.dyad_id) + " trial " +
                            std::to_string(m.trial_index));
  return it->second;
}

}  // namespace

std::vector<TrainingView> training_views(std::span<const FcGraph> views, const SplitAssignment& split, Split which) {
  std::vector<TrainingView> out;
  for (const auto& g : views) {
    if (split_of(split, g.meta) != which) continue;
    out.push_back(TrainingView{prepare_graph(g), trial_group(g.meta), g.meta.subject_id});
  }
  return out;
}

PretrainResult pretrain(const GraphCorpus& corpus, const SplitAssignment& split, const PipelineConfig& cfg,
                        std::uint64_t seed) {
  const auto train = training_views(corpus.views, split, Split::Train);
  const auto val = training_views(corpus.views, split, Split::Val);
  ContrastiveConfig ccfg = cfg.contrastive;
  ccfg.rng_seed = seed_stream(seed, 2);
  EncoderConfig ecfg = cfg.encoder;
  if (!corpus.views.empty()) ecfg.input_dim = static_cast<int>(corpus.views.front().x.cols());
  log::info("pretrain: {} train views, {} val views", train.size(), val.size());
  return train_encoder(train, val, GraphEncoderParams::init(ecfg, seed_stream(seed, 1)), ccfg);
}

Matrix embed_graphs(std::span<const FcGraph> graphs, const GraphEncoderParams& params) {
  std::vector<PreparedGraph> prepared;
  prepared.reserve(graphs.size());
  for (const auto& g : graphs) prepared.push_back(prepare_graph(g));
  return encode_all(prepared, params);
}

std::vector<NodePrediction> classify_embeddings(const Matrix& embeddings, std::span<const GraphMeta> meta,
                                                std::span<const int> labels, std::span<const Split> split,
                                                const PipelineConfig& cfg, std::uint64_t seed,
                                                std::vector<DgcEpoch>* history) {
  const auto m = static_cast<std::size_t>(embeddings.rows());
  if (meta.size() != m || labels.size() != m || split.size() != m)
    throw ContractViolation("classify_embeddings: metadata, labels and split must match the embedding rows");

  PopulationGraph pop;
  pop.features = embeddings;
  if (cfg.standardize_embeddings && embeddings.rows() > 1) {
    const RowVector mean = embeddings.colwise().mean();
    pop.features.rowwise() -= mean;
    const RowVector sd = (pop.features.array().square().colwise().sum() / static_cast<double>(m)).sqrt().matrix();
    for (Eigen::Index j = 0; j < pop.features.cols(); ++j)
      if (sd(j) > 1e-12) pop.features.col(j) /= sd(j);
  }
  pop.labels.assign(labels.begin(), labels.end());
  pop.split.assign(split.begin(), split.end());

  DgcConfig dcfg = cfg.dgc;
  dcfg.rng_seed = seed_stream(seed, 3);
  const DgcTrainResult trained = train_dgc(pop, dcfg);
  if (history) *history = trained.history;
  const std::vector<double> probs = classify(pop, trained.params, dcfg.k);

  std::vector<NodePrediction> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = NodePrediction{meta[i], labels[i], split[i], probs[i]};
  return out;
}

RoleMetrics score_predictions(std::span<const NodePrediction> predictions, const std::map<int, int>& trials_per_dyad,
                              double threshold) {
  struct Cell {
    std::vector<double> probs;
    std::vector<int> labels;
  };
  std::map<std::string, std::map<std::string, Cell>> cells;
  for (const auto& p : predictions) {
    if (p.split != Split::Test) continue;
    const auto it = trials_per_dyad.find(p.meta.dyad_id);
    if (it == trials_per_dyad.end()) throw ContractViolation("score_predictions: unknown dyad in predictions");
    const std::string stage = to_string(stage_of(p.meta.trial_index, it->second));
    for (const std::string& period : {std::string("entire"), stage}) {
      Cell& c = cells[to_string(p.meta.role)][period];
      c.probs.push_back(p.prob);
      c.labels.push_back(p.label);
    }
  }
  RoleMetrics out;
  for (const auto& [role, periods] : cells)
    for (const auto& [period, c] : periods) out[role][period] = compute_metrics(c.probs, c.labels, threshold);
  return out;
}

FoldResult run_fold(const GraphCorpus& corpus, const SplitAssignment& split, const PipelineConfig& cfg,
                    const std::string& name, std::uint64_t seed) {
  FoldResult fold;
  fold.name = name;

  for (const auto& [key, s] : split)
    if (s == Split::Test) fold.audit.test_dyads.insert(key.dyad);
  std::set<int> fully_test = fold.audit.test_dyads;
  for (const auto& [key, s] : split)
    if (s != Split::Test) fully_test.erase(key.dyad);

  auto leaks = [&](const GraphMeta& m) {
    return split_of(split, m) == Split::Test || fully_test.count(m.dyad_id) > 0;
  };
  for (const auto& g : corpus.views) {
    if (split_of(split, g.meta) == Split::Test) continue;
    fold.audit.encoder_dyads.insert(g.meta.dyad_id);
    fold.audit.leaked_encoder_views += leaks(g.meta);
  }

  const PretrainResult pre = pretrain(corpus, split, cfg, seed);
  fold.pretrain_history = pre.history;

  const Matrix z = embed_graphs(corpus.basic, pre.params);
  std::vector<GraphMeta> meta;
  std::vector<int> labels;
  std::vector<Split> node_split;
  for (const auto& g : corpus.basic) {
    meta.push_back(g.meta);
    labels.push_back(static_cast<int>(g.label));
    node_split.push_back(split_of(split, g.meta));
    if (node_split.back() != Split::Test) {
      fold.audit.classifier_dyads.insert(g.meta.dyad_id);
      fold.audit.leaked_classifier_nodes += leaks(g.meta);
    }
  }
  fold.predictions = classify_embeddings(z, meta, labels, node_split, cfg, seed, &fold.dgc_history);
  fold.metrics = score_predictions(fold.predictions, trial_counts(corpus.basic), cfg.threshold);
  log::info("fold {}: audit {}", name, fold.audit.passed() ? "passed" : "FAILED");
  return fold;
}

ExperimentResult run_split_721(const GraphCorpus& corpus, const PipelineConfig& cfg) {
  ExperimentResult r;
  r.protocol = Protocol::Split721;
  const auto split = split_721(corpus.basic, seed_stream(cfg.rng_seed, 100));
  r.folds.push_back(run_fold(corpus, split, cfg, "split_721", seed_stream(cfg.rng_seed, 0)));
  return r;
}

ExperimentResult leave_dyad_out_cv(const GraphCorpus& corpus, const PipelineConfig& cfg) {
  const auto dyads = trials_by_dyad(corpus.basic);
  if (dyads.size() < 2) throw ContractViolation("leave_dyad_out_cv: need at least two dyads");
  ExperimentResult r;
  r.protocol = Protocol::LeaveDyadOut;
  for (const auto& [d, trials] : dyads) {
    const auto fold_seed = seed_stream(cfg.rng_seed, 1000 + static_cast<std::uint64_t>(d));
    const auto split = dyad_holdout_split(corpus.basic, d, seed_stream(fold_seed, 100));
    r.folds.push_back(run_fold(corpus, split, cfg, "dyad_" + std::to_string(d), fold_seed));
  }
  return r;
}

ExperimentResult run_protocol(const GraphCorpus& corpus, const PipelineConfig& cfg) {
  return cfg.protocol == Protocol::Split721 ? run_split_721(corpus, cfg) : leave_dyad_out_cv(corpus, cfg);
}

namespace {

const char* const kPeriods[] = {"entire", "early", "middle", "late"};
const char* const kMetricNames[] = {"acc", "auc", "f1", "sen", "spec"};

std::optional<double> metric_value(const MetricsRecord& m, const std::string& name) {
  if (name == "acc") return m.acc;
  if (name == "auc") return m.auc;
  if (name == "f1") return m.f1;
  if (name == "sen") return m.sen;
  return m.spec;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  int n = 0;
};

// Sample standard deviation; zero for a single value.
MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  r.n = static_cast<int>(v.size());
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= r.n;
  if (r.n > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / (r.n - 1));
  }
  return r;
}

using Aggregate = std::map<std::string, std::map<std::string, std::map<std::string, MeanStd>>>;

Aggregate aggregate(const ExperimentResult& result) {
  std::map<std::string, std::map<std::string, std::map<std::string, std::vector<double>>>> samples;
  for (const auto& f : result.folds)
    for (const auto& [role, periods] : f.metrics)
      for (const auto& [period, m] : periods)
        for (const char* name : kMetricNames)
          if (const auto v = metric_value(m, name)) samples[role][period][name].push_back(*v);
  Aggregate out;
  for (const auto& [role, periods] : samples)
    for (const auto& [period, metrics] : periods)
      for (const auto& [name, values] : metrics) out[role][period][name] = mean_std(values);
  return out;
}

nlohmann::json set_json(const std::set<int>& s) { return nlohmann::json(std::vector<int>(s.begin(), s.end())); }

}  // namespace

nlohmann::json results_to_json(const ExperimentResult& result) {
  nlohmann::json folds = nlohmann::json::object();
  nlohmann::json audit = nlohmann::json::object();
  for (const auto& f : result.folds) {
    nlohmann::json roles = nlohmann::json::object();
    for (const auto& [role, periods] : f.metrics)
      for (const auto& [period, m] : periods) roles[role][period] = metrics_to_json(m);
    folds[f.name] = roles;
    audit[f.name] = {{"test_dyads", set_json(f.audit.test_dyads)},
                     {"encoder_dyads", set_json(f.audit.encoder_dyads)},
                     {"classifier_dyads", set_json(f.audit.classifier_dyads)},
                     {"leaked_encoder_views", f.audit.leaked_encoder_views},
                     {"leaked_classifier_nodes", f.audit.leaked_classifier_nodes},
                     {"passed", f.audit.passed()}};
  }
  nlohmann::json agg = nlohmann::json::object();
  for (const auto& [role, periods] : aggregate(result))
    for (const auto& [period, metrics] : periods)
      for (const auto& [name, ms] : metrics)
        agg[role][period][name] = {{"mean", ms.mean}, {"std", ms.std}, {"n", ms.n}};
  return nlohmann::json{{"schema_version", kResultsSchemaVersion},
                        {"protocol", to_string(result.protocol)},
                        {"fold_count", result.folds.size()},
                        {"folds", folds},
                        {"aggregate", agg},
                        {"audit", audit}};
}

void write_summary_csv(const ExperimentResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write summary " + path.string());
  out << "role,period,ACC,ACC_std,AUC,AUC_std,F1,F1_std,SEN,SEN_std,SPEC,SPEC_std,folds\n" << std::setprecision(6);
  for (const auto& [role, periods] : aggregate(result)) {
    for (const char* period : kPeriods) {
      const auto it = periods.find(period);
      if (it == periods.end()) continue;
      std::string label = period;
      label[0] = static_cast<char>(std::toupper(label[0]));
      out << role << ',' << label;
      int folds = 0;
      for (const char* name : kMetricNames) {
        const auto m = it->second.find(name);
        if (m == it->second.end()) {
          out << ",,";
          continue;
        }
        out << ',' << m->second.mean << ',' << m->second.std;
        folds = std::max(folds, m->second.n);
      }
      out << ',' << folds << '\n';
    }
  }
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_field(const std::string& s, const std::filesystem::path& path) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError("malformed field '" + s + "' in " + path.string());
  return v;
}

std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path, const std::string& expected_prefix) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind(expected_prefix, 0) != 0)
    throw IoError("unexpected header in " + path.string());
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) rows.push_back(split_fields(line));
  }
  return rows;
}

void write_double(std::ostream& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  out.write(buf, res.ptr - buf);
}

}  // namespace

void write_predictions_csv(std::span<const NodePrediction> predictions, const std::filesystem::path& path) {
  // Predictions cover every node, so the largest trial index fixes each dyad's stage boundaries.
  std::map<int, int> trials;
  for (const auto& p : predictions) trials[p.meta.dyad_id] = std::max(trials[p.meta.dyad_id], p.meta.trial_index + 1);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write predictions " + path.string());
  out << kPredictionsHeader << '\n';
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    out << i << ',' << p.meta.dyad_id << ',' << p.meta.subject_id << ',' << to_string(p.meta.role) << ','
        << p.meta.trial_index << ',' << to_string(stage_of(p.meta.trial_index, trials.at(p.meta.dyad_id))) << ','
        << p.label << ',';
    write_double(out, p.prob);
    out << ',' << to_string(p.split) << '\n';
  }
}

std::vector<NodePrediction> read_predictions_csv(const std::filesystem::path& path) {
  std::vector<NodePrediction> out;
  for (const auto& f : read_csv_rows(path, kPredictionsHeader)) {
    if (f.size() != 9) throw IoError("wrong field count in " + path.string());
    NodePrediction p;
    p.meta.dyad_id = parse_field<int>(f[1], path);
    p.meta.subject_id = parse_field<int>(f[2], path);
    p.meta.role = role_from_string(f[3]);
    p.meta.trial_index = parse_field<int>(f[4], path);
    p.label = parse_field<int>(f[6], path);
    p.prob = parse_field<double>(f[7], path);
    p.split = split_from_string(f[8]);
    out.push_back(p);
  }
  return out;
}

void write_embeddings_csv(const EmbeddingTable& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write embeddings " + path.string());
  out << "node,dyad_id,subject_id,role,trial_index,split,label";
  for (Eigen::Index j = 0; j < t.z.cols(); ++j) out << ",z" << j;
  out << '\n';
  for (std::size_t i = 0; i < t.meta.size(); ++i) {
    const auto& m = t.meta[i];
    out << i << ',' << m.dyad_id << ',' << m.subject_id << ',' << to_string(m.role) << ',' << m.trial_index << ','
        << to_string(t.split[i]) << ',' << t.labels[i];
    for (Eigen::Index j = 0; j < t.z.cols(); ++j) {
      out << ',';
      write_double(out, t.z(static_cast<Eigen::Index>(i), j));
    }
    out << '\n';
  }
}

EmbeddingTable read_embeddings_csv(const std::filesystem::path& path) {
  const auto rows = read_csv_rows(path, "node,dyad_id,subject_id,role,trial_index,split,label");
  EmbeddingTable t;
  if (rows.empty()) throw IoError("no embeddings in " + path.string());
  const auto width = rows.front().size();
  if (width < 8) throw IoError("embedding rows need at least one dimension in " + path.string());
  t.z.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 7));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != width) throw IoError("ragged embedding rows in " + path.string());
    GraphMeta m;
    m.dyad_id = parse_field<int>(f[1], path);
    m.subject_id = parse_field<int>(f[2], path);
    m.role = role_from_string(f[3]);
    m.trial_index = parse_field<int>(f[4], path);
    t.meta.push_back(m);
    t.split.push_back(split_from_string(f[5]));
    t.labels.push_back(parse_field<int>(f[6], path));
    for (std::size_t j = 7; j < width; ++j)
      t.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 7)) = parse_field<double>(f[j], path);
  }
  return t;
}

void write_graph_store(const GraphCorpus& corpus, const SplitAssignment& split, const nlohmann::json& config_echo,
                       const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"views", "basic"}) {
    fs::create_directories(dir / sub, ec);
    if (ec) throw IoError("cannot create " + (dir / sub).string() + ": " + ec.message());
  }
  nlohmann::json entries = nlohmann::json::array();
  char name[128];
  auto emit = [&](const FcGraph& g, const char* kind) {
    std::snprintf(name, sizeof name, "%s/d%02d_s%03d_t%03d_v%02d.json", kind, g.meta.dyad_id, g.meta.subject_id,
                  g.meta.trial_index, g.meta.view_index);
    save_graph(g, dir / name);
    entries.push_back({{"file", name},
                       {"kind", kind},
                       {"dyad_id", g.meta.dyad_id},
                       {"subject_id", g.meta.subject_id},
                       {"role", to_string(g.meta.role)},
                       {"trial_index", g.meta.trial_index},
                       {"view_index", g.meta.view_index},
                       {"label", static_cast<int>(g.label)},
                       {"split", to_string(split_of(split, g.meta))}});
  };
  for (const auto& g : corpus.views) emit(g, "views");
  for (const auto& g : corpus.basic) emit(g, "basic");
  const nlohmann::json index{{"schema_version", kGraphIndexSchemaVersion},
                             {"config", config_echo},
                             {"view_count", corpus.views.size()},
                             {"basic_count", corpus.basic.size()},
                             {"graphs", entries}};
  std::ofstream out(dir / "index.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "index.json").string());
  out << index.dump(2) << '\n';
}

GraphStore read_graph_store(const std::filesystem::path& dir) {
  const auto path = dir / "index.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open graph index " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed graph index " + path.string() + ": " + e.what());
  }
  const int version = j.value("schema_version", -1);
  if (version != kGraphIndexSchemaVersion)
    throw IoError("graph index schema version " + std::to_string(version) + " in " + path.string() +
                  " is not the supported version " + std::to_string(kGraphIndexSchemaVersion));
  GraphStore store;
  for (const auto& e : j.at("graphs")) {
    FcGraph g = load_graph(dir / e.at("file").get<std::string>());
    store.split[trial_key(g.meta)] = split_from_string(e.at("split").get<std::string>());
    (e.at("kind").get<std::string>() == "basic" ? store.corpus.basic : store.corpus.views).push_back(std::move(g));
  }
  return store;
}

}  // namespace fgcl
