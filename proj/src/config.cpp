#include "fgcl/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <array>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace fgcl {

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
    throw ContractViolation("config: invalid value '" + raw + "' for " + key);
  return v;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ContractViolation("config: invalid boolean '" + raw + "' for " + key);
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& raw) {
  std::vector<T> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_number<T>(key, item));
  }
  return out;
}

/// Shortest text that parses back to the same value.
template <typename T>
std::string fmt_number(T v) {
  std::array<char, 32> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

std::string fmt_double(double v) { return fmt_number(v); }

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt_number(v[i]);
  return out;
}

#define FGCL_INT(field) [](RunConfig& c, const std::string& v) { c.field = parse_number<int>(#field, v); }
#define FGCL_DOUBLE(field) [](RunConfig& c, const std::string& v) { c.field = parse_number<double>(#field, v); }

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"rng_seed", [](RunConfig& c, const std::string& v) { c.rng_seed = parse_number<std::uint64_t>("rng_seed", v); }},

      {"synth.n_dyads", FGCL_INT(synth.n_dyads)},
      {"synth.n_pst_dyads", FGCL_INT(synth.n_pst_dyads)},
      {"synth.trials_per_dyad", FGCL_INT(synth.trials_per_dyad)},
      {"synth.n_roi", FGCL_INT(synth.n_roi)},
      {"synth.n_time", FGCL_INT(synth.n_time)},
      {"synth.latent_dim", FGCL_INT(synth.latent_dim)},
      {"synth.class_separation", FGCL_DOUBLE(synth.class_separation)},
      {"synth.trial_coherence", FGCL_DOUBLE(synth.trial_coherence)},
      {"synth.fingerprint_strength", FGCL_DOUBLE(synth.fingerprint_strength)},
      {"synth.noise_sigma", FGCL_DOUBLE(synth.noise_sigma)},
      {"synth.sensor_noise", FGCL_DOUBLE(synth.sensor_noise)},
      {"synth.contagion_ramp",
       [](RunConfig& c, const std::string& v) {
         const auto r = parse_list<double>("synth.contagion_ramp", v);
         if (r.size() != 3) throw ContractViolation("config: synth.contagion_ramp needs three values");
         c.synth.contagion_ramp = {r[0], r[1], r[2]};
       }},
      {"synth.ramp_role",
       [](RunConfig& c, const std::string& v) {
         try {
           c.synth.ramp_role = role_from_string(trim(v));
         } catch (const std::exception&) {
           throw ContractViolation("config: invalid synth.ramp_role '" + v + "'");
         }
       }},

      {"window.width", FGCL_INT(pipeline.window.width)},
      {"window.step", FGCL_INT(pipeline.window.step)},
      {"window.ridge", FGCL_DOUBLE(pipeline.window.ridge)},

      {"encoder.cheb_order", FGCL_INT(pipeline.encoder.cheb_order)},
      {"encoder.pool_ratio", FGCL_DOUBLE(pipeline.encoder.pool_ratio)},
      {"encoder.block1_width", FGCL_INT(pipeline.encoder.block1_width)},
      {"encoder.block2_width", FGCL_INT(pipeline.encoder.block2_width)},
      {"encoder.mlp_hidden", FGCL_INT(pipeline.encoder.mlp_hidden)},
      {"encoder.embedding_dim", FGCL_INT(pipeline.encoder.embedding_dim)},

      {"contrastive.tau", FGCL_DOUBLE(pipeline.contrastive.tau)},
      {"contrastive.batch_size", FGCL_INT(pipeline.contrastive.batch_size)},
      {"contrastive.lr", FGCL_DOUBLE(pipeline.contrastive.lr)},
      {"contrastive.weight_decay", FGCL_DOUBLE(pipeline.contrastive.weight_decay)},
      {"contrastive.epochs", FGCL_INT(pipeline.contrastive.max_epochs)},
      {"contrastive.patience", FGCL_INT(pipeline.contrastive.patience)},
      {"contrastive.lr_gamma", FGCL_DOUBLE(pipeline.contrastive.lr_gamma)},
      {"contrastive.milestones",
       [](RunConfig& c, const std::string& v) {
         c.pipeline.contrastive.milestones = parse_list<std::int64_t>("contrastive.milestones", v);
       }},
      {"contrastive.pair_mode",
       [](RunConfig& c, const std::string& v) {
         try {
           c.pipeline.contrastive.pair_mode = pair_mode_from_string(trim(v));
         } catch (const std::exception&) {
           throw ContractViolation("config: invalid contrastive.pair_mode '" + v + "'");
         }
       }},

      {"dgc.k", FGCL_INT(pipeline.dgc.k)},
      {"dgc.epochs", FGCL_INT(pipeline.dgc.epochs)},
      {"dgc.lr", FGCL_DOUBLE(pipeline.dgc.lr)},
      {"dgc.weight_decay", FGCL_DOUBLE(pipeline.dgc.weight_decay)},
      {"dgc.lr_gamma", FGCL_DOUBLE(pipeline.dgc.lr_gamma)},
      {"dgc.milestones",
       [](RunConfig& c, const std::string& v) {
         c.pipeline.dgc.milestones = parse_list<std::int64_t>("dgc.milestones", v);
       }},
      {"dgc.hidden1", FGCL_INT(pipeline.dgc.hidden1)},
      {"dgc.hidden2", FGCL_INT(pipeline.dgc.hidden2)},
      {"dgc.alpha", FGCL_DOUBLE(pipeline.dgc.focal.alpha)},
      {"dgc.gamma", FGCL_DOUBLE(pipeline.dgc.focal.gamma)},
      {"dgc.standardize",
       [](RunConfig& c, const std::string& v) {
         c.pipeline.standardize_embeddings = parse_bool("dgc.standardize", v);
       }},

      {"eval.protocol",
       [](RunConfig& c, const std::string& v) { c.pipeline.protocol = protocol_from_string(trim(v)); }},
      {"eval.threshold", FGCL_DOUBLE(pipeline.threshold)},

      {"io.dataset_dir", [](RunConfig& c, const std::string& v) { c.io.dataset_dir = trim(v); }},
      {"io.graphs_dir", [](RunConfig& c, const std::string& v) { c.io.graphs_dir = trim(v); }},
      {"io.model_dir", [](RunConfig& c, const std::string& v) { c.io.model_dir = trim(v); }},
      {"io.results_dir", [](RunConfig& c, const std::string& v) { c.io.results_dir = trim(v); }},
  };
  return table;
}

#undef FGCL_INT
#undef FGCL_DOUBLE

}  // namespace

void RunConfig::apply_seed(std::uint64_t seed) {
  rng_seed = seed;
  synth.rng_seed = seed;
  pipeline.rng_seed = seed;
}

RunConfig parse_run_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ContractViolation(std::string("config: ") + e.message() + " at line " + std::to_string(e.line()));
  }

  RunConfig cfg;
  const auto& table = setters();
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      const auto it = table.find(name);
      if (it == table.end()) throw ContractViolation("config: unknown key '" + name + "'");
      it->second(cfg, node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) {
      const std::string full = name + "." + key;
      const auto it = table.find(full);
      if (it == table.end()) throw ContractViolation("config: unknown key '" + key + "' in section [" + name + "]");
      it->second(cfg, leaf.data());
    }
  }
  cfg.apply_seed(cfg.rng_seed);
  validate(cfg.synth);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_to_ini(const RunConfig& c) {
  const auto& s = c.synth;
  const auto& p = c.pipeline;
  std::ostringstream o;
  o << "rng_seed = " << c.rng_seed << "\n\n[synth]\n"
    << "n_dyads = " << s.n_dyads << "\nn_pst_dyads = " << s.n_pst_dyads << "\ntrials_per_dyad = " << s.trials_per_dyad
    << "\nn_roi = " << s.n_roi << "\nn_time = " << s.n_time << "\nlatent_dim = " << s.latent_dim
    << "\nclass_separation = " << fmt_double(s.class_separation)
    << "\ntrial_coherence = " << fmt_double(s.trial_coherence)
    << "\nfingerprint_strength = " << fmt_double(s.fingerprint_strength)
    << "\ncontagion_ramp = " << join(std::vector<double>(s.contagion_ramp.begin(), s.contagion_ramp.end()))
    << "\nramp_role = " << to_string(s.ramp_role) << "\nnoise_sigma = " << fmt_double(s.noise_sigma)
    << "\nsensor_noise = " << fmt_double(s.sensor_noise) << "\n\n[window]\n"
    << "width = " << p.window.width << "\nstep = " << p.window.step << "\nridge = " << fmt_double(p.window.ridge)
    << "\n\n[encoder]\n"
    << "cheb_order = " << p.encoder.cheb_order << "\npool_ratio = " << fmt_double(p.encoder.pool_ratio)
    << "\nblock1_width = " << p.encoder.block1_width << "\nblock2_width = " << p.encoder.block2_width
    << "\nmlp_hidden = " << p.encoder.mlp_hidden << "\nembedding_dim = " << p.encoder.embedding_dim
    << "\n\n[contrastive]\n"
    << "tau = " << fmt_double(p.contrastive.tau) << "\nbatch_size = " << p.contrastive.batch_size
    << "\nlr = " << fmt_double(p.contrastive.lr) << "\nweight_decay = " << fmt_double(p.contrastive.weight_decay)
    << "\nepochs = " << p.contrastive.max_epochs << "\npatience = " << p.contrastive.patience
    << "\nmilestones = " << join(p.contrastive.milestones) << "\nlr_gamma = " << fmt_double(p.contrastive.lr_gamma)
    << "\npair_mode = " << to_string(p.contrastive.pair_mode) << "\n\n[dgc]\n"
    << "k = " << p.dgc.k << "\nepochs = " << p.dgc.epochs << "\nlr = " << fmt_double(p.dgc.lr)
    << "\nweight_decay = " << fmt_double(p.dgc.weight_decay) << "\nmilestones = " << join(p.dgc.milestones)
    << "\nlr_gamma = " << fmt_double(p.dgc.lr_gamma) << "\nhidden1 = " << p.dgc.hidden1
    << "\nhidden2 = " << p.dgc.hidden2 << "\nalpha = " << fmt_double(p.dgc.focal.alpha)
    << "\ngamma = " << fmt_double(p.dgc.focal.gamma)
    << "\nstandardize = " << (p.standardize_embeddings ? "true" : "false") << "\n\n[eval]\n"
    << "protocol = " << to_string(p.protocol) << "\nthreshold = " << fmt_double(p.threshold) << "\n\n[io]\n"
    << "dataset_dir = " << c.io.dataset_dir << "\ngraphs_dir = " << c.io.graphs_dir
    << "\nmodel_dir = " << c.io.model_dir << "\nresults_dir = " << c.io.results_dir << '\n';
  return o.str();
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(run_config_to_ini(cfg));
  pt::ini_parser::read_ini(in, tree);
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      j[name] = node.data();
      continue;
    }
    for (const auto& [key, leaf] : node) j[name][key] = leaf.data();
  }
  return j;
}

}  // namespace fgcl
