#include "fgcl/synthdata.hpp"

#include "fgcl/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace fgcl {

namespace {

constexpr int kFrequenciesPerSource = 8;
constexpr int kMaxCycles = 40;

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

// latent_dim sources, each a sum of random-amplitude integer-cycle sinusoids with random
// phases, scaled to unit variance over the trial.
Matrix source_bank(int latent_dim, int n_time, Rng& rng) {
  std::uniform_int_distribution<int> cycles(1, kMaxCycles);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> amp(0.5, 1.5);
  Matrix s = Matrix::Zero(latent_dim, n_time);
  for (int k = 0; k < latent_dim; ++k) {
    for (int f = 0; f < kFrequenciesPerSource; ++f) {
      const double w = 2.0 * std::numbers::pi * cycles(rng) / n_time;
      const double ph = phase(rng);
      const double a = amp(rng);
      for (int t = 0; t < n_time; ++t) s(k, t) += a * std::sin(w * t + ph);
    }
    const double mean = s.row(k).mean();
    s.row(k).array() -= mean;
    const double sd = std::sqrt(s.row(k).squaredNorm() / n_time);
    if (sd > 0.0) s.row(k) /= sd;
  }
  return s;
}

}  // namespace

void validate(const SynthConfig& cfg) {
  if (cfg.n_dyads < 1) throw ContractViolation("synth: n_dyads must be >= 1");
  if (cfg.n_pst_dyads < 0 || cfg.n_pst_dyads > cfg.n_dyads)
    throw ContractViolation("synth: n_pst_dyads must lie in [0, n_dyads]");
  if (cfg.trials_per_dyad < 3) throw ContractViolation("synth: trials_per_dyad must be >= 3");
  if (cfg.n_roi < 2 || cfg.n_time < 2 || cfg.latent_dim < 1)
    throw ContractViolation("synth: n_roi, n_time must be >= 2 and latent_dim >= 1");
  const double strengths[] = {cfg.class_separation, cfg.trial_coherence, cfg.fingerprint_strength,
                              cfg.noise_sigma,      cfg.sensor_noise,    cfg.contagion_ramp[0],
                              cfg.contagion_ramp[1], cfg.contagion_ramp[2]};
  for (double s : strengths)
    if (!(s >= 0.0) || !std::isfinite(s)) throw ContractViolation("synth: strengths must be finite and >= 0");
}

nlohmann::json synth_config_to_json(const SynthConfig& cfg) {
  return nlohmann::json{{"n_dyads", cfg.n_dyads},
                        {"n_pst_dyads", cfg.n_pst_dyads},
                        {"trials_per_dyad", cfg.trials_per_dyad},
                        {"n_roi", cfg.n_roi},
                        {"n_time", cfg.n_time},
                        {"latent_dim", cfg.latent_dim},
                        {"class_separation", cfg.class_separation},
                        {"trial_coherence", cfg.trial_coherence},
                        {"fingerprint_strength", cfg.fingerprint_strength},
                        {"contagion_ramp", cfg.contagion_ramp},
                        {"ramp_role", to_string(cfg.ramp_role)},
                        {"noise_sigma", cfg.noise_sigma},
                        {"sensor_noise", cfg.sensor_noise},
                        {"rng_seed", cfg.rng_seed}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  c.n_dyads = j.at("n_dyads").get<int>();
  c.n_pst_dyads = j.at("n_pst_dyads").get<int>();
  c.trials_per_dyad = j.at("trials_per_dyad").get<int>();
  c.n_roi = j.at("n_roi").get<int>();
  c.n_time = j.at("n_time").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.class_separation = j.at("class_separation").get<double>();
  c.trial_coherence = j.at("trial_coherence").get<double>();
  c.fingerprint_strength = j.at("fingerprint_strength").get<double>();
  c.contagion_ramp = j.at("contagion_ramp").get<std::array<double, 3>>();
  c.ramp_role = role_from_string(j.at("ramp_role").get<std::string>());
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.sensor_noise = j.at("sensor_noise").get<double>();
  c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  return c;
}

std::vector<RoiTimeSeries> generate(const SynthConfig& cfg) {
  validate(cfg);
  const int L = cfg.latent_dim;
  const double mix_scale = 1.0 / std::sqrt(static_cast<double>(L));

  Rng shared(seed_stream(cfg.rng_seed, 0));
  const Matrix base_mixing = gaussian(cfg.n_roi, L, shared, mix_scale);
  const Vector class_dir = gaussian(L, 1, shared);
  const Vector class_latent[2] = {-class_dir, class_dir};

  std::vector<RoiTimeSeries> out;
  out.reserve(static_cast<std::size_t>(cfg.n_dyads) * 2 * cfg.trials_per_dyad);
  const int n_dmt = cfg.n_dyads - cfg.n_pst_dyads;

  for (int d = 0; d < cfg.n_dyads; ++d) {
    Rng rng(seed_stream(cfg.rng_seed, static_cast<std::uint64_t>(d) + 1));
    const bool dmt = d < n_dmt;
    const Role roles[2] = {dmt ? Role::DmtActor : Role::Pst, dmt ? Role::DmtPartner : Role::Pst};

    Matrix mixing[2];
    Vector fingerprint[2];
    for (int m = 0; m < 2; ++m) {
      mixing[m] = base_mixing + cfg.fingerprint_strength * gaussian(cfg.n_roi, L, rng, mix_scale);
      fingerprint[m] = gaussian(L, 1, rng);
    }

    std::vector<int> labels(static_cast<std::size_t>(cfg.trials_per_dyad));
    for (int t = 0; t < cfg.trials_per_dyad; ++t) labels[static_cast<std::size_t>(t)] = t % 2;
    std::shuffle(labels.begin(), labels.end(), rng);

    const auto stages = stage_split(cfg.trials_per_dyad);
    for (int t = 0; t < cfg.trials_per_dyad; ++t) {
      const int y = labels[static_cast<std::size_t>(t)];
      const Vector shared_latent = gaussian(L, 1, rng);
      for (int m = 0; m < 2; ++m) {
        const double mult =
            roles[m] == cfg.ramp_role ? cfg.contagion_ramp[static_cast<std::size_t>(stages[static_cast<std::size_t>(t)])] : 1.0;
        const Vector latent = cfg.trial_coherence * shared_latent + cfg.class_separation * mult * class_latent[y] +
                              cfg.fingerprint_strength * fingerprint[m] + gaussian(L, 1, rng, cfg.noise_sigma);
        const Vector scale = (0.5 * latent.array()).exp().matrix();
        const Matrix sources = source_bank(L, cfg.n_time, rng);
        RoiTimeSeries s;
        s.values = mixing[m] * scale.asDiagonal() * sources + gaussian(cfg.n_roi, cfg.n_time, rng, cfg.sensor_noise);
        s.dyad_id = d;
        s.subject_id = 2 * d + m;
        s.role = roles[m];
        s.trial_index = t;
        s.label = static_cast<Feedback>(y);
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

void write_matrix_csv(const Matrix& m, const std::filesystem::path& path) {
  std::string text;
  text.reserve(static_cast<std::size_t>(m.size()) * 24);
  char buf[64];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) text.push_back(',');
      const auto res = std::to_chars(buf, buf + sizeof buf, m(i, j), std::chars_format::general, 17);
      text.append(buf, res.ptr);
    }
    text.push_back('\n');
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  std::vector<double> values;
  Eigen::Index rows = 0, cols = -1;
  const char* p = text.data();
  const char* end = p + text.size();
  while (p < end) {
    Eigen::Index c = 0;
    while (true) {
      double v = 0.0;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc() || !std::isfinite(v))
        throw IoError("malformed number in " + path.string() + " at row " + std::to_string(rows + 1));
      values.push_back(v);
      ++c;
      p = res.ptr;
      if (p < end && *p == ',') {
        ++p;
        continue;
      }
      break;
    }
    if (p < end && *p == '\r') ++p;
    if (p < end && *p != '\n') throw IoError("unexpected character in " + path.string());
    if (p < end) ++p;
    if (cols < 0) cols = c;
    else if (c != cols) throw IoError("ragged rows in " + path.string());
    ++rows;
  }
  if (rows == 0) throw IoError("empty matrix file " + path.string());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = values[static_cast<std::size_t>(i * cols + j)];
  return m;
}

void write_dataset(const std::vector<RoiTimeSeries>& trials, const SynthConfig& cfg,
                   const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "trials", ec);
  if (ec) throw IoError("cannot create " + (dir / "trials").string() + ": " + ec.message());

  nlohmann::json records = nlohmann::json::array();
  char name[96];
  for (const auto& s : trials) {
    std::snprintf(name, sizeof name, "trials/d%02d_s%03d_t%03d.csv", s.dyad_id, s.subject_id, s.trial_index);
    write_matrix_csv(s.values, dir / name);
    records.push_back({{"file", name},
                       {"dyad_id", s.dyad_id},
                       {"subject_id", s.subject_id},
                       {"role", to_string(s.role)},
                       {"trial_index", s.trial_index},
                       {"label", static_cast<int>(s.label)}});
  }
  const nlohmann::json manifest{
      {"schema_version", kDatasetSchemaVersion}, {"config", synth_config_to_json(cfg)}, {"trials", records}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
  const int version = j.value("schema_version", -1);
  if (version != kDatasetSchemaVersion)
    throw IoError("dataset schema version " + std::to_string(version) + " in " + path.string() +
                  " is not the supported version " + std::to_string(kDatasetSchemaVersion));
  DatasetManifest m;
  try {
    m.config = synth_config_from_json(j.at("config"));
    for (const auto& r : j.at("trials")) {
      TrialRecord rec;
      rec.file = r.at("file").get<std::string>();
      rec.dyad_id = r.at("dyad_id").get<int>();
      rec.subject_id = r.at("subject_id").get<int>();
      rec.role = role_from_string(r.at("role").get<std::string>());
      rec.trial_index = r.at("trial_index").get<int>();
      rec.label = static_cast<Feedback>(r.at("label").get<int>());
      m.trials.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
  return m;
}

RoiTimeSeries load_trial(const std::filesystem::path& dir, const TrialRecord& rec) {
  RoiTimeSeries s;
  s.values = read_matrix_csv(dir / rec.file);
  s.dyad_id = rec.dyad_id;
  s.subject_id = rec.subject_id;
  s.role = rec.role;
  s.trial_index = rec.trial_index;
  s.label = rec.label;
  return s;
}

std::vector<RoiTimeSeries> load_dataset(const std::filesystem::path& dir) {
  const auto manifest = load_manifest(dir);
  std::vector<RoiTimeSeries> out;
  out.reserve(manifest.trials.size());
  for (const auto& rec : manifest.trials) out.push_back(load_trial(dir, rec));
  return out;
}

}  // namespace fgcl
