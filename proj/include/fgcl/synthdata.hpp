#pragma once

// Seeded synthetic dyad generator and its on-disk dataset format.

#include "fgcl/connectivity.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fgcl {

/// Each member's latent for trial t is
///   trial_coherence * u_t + class_separation * stage_mult * c_y + fingerprint_strength * f_s + noise_sigma * e
/// and scales the variance of `latent_dim` smooth sources mixed into `n_roi` channels by a
/// per-subject matrix. stage_mult comes from contagion_ramp for members of ramp_role, else 1.
/// The first n_dyads - n_pst_dyads dyads are DMT (actor + partner), the rest PST-PST.
struct SynthConfig {
  int n_dyads = 4;
  int n_pst_dyads = 1;
  int trials_per_dyad = 60;
  int n_roi = 68;
  int n_time = 768;
  int latent_dim = 8;
  double class_separation = 1.0;
  double trial_coherence = 1.0;
  double fingerprint_strength = 0.7;
  std::array<double, 3> contagion_ramp{1.0, 1.0, 1.0};
  Role ramp_role = Role::DmtActor;
  double noise_sigma = 0.3;
  double sensor_noise = 0.5;  ///< white channel noise std relative to unit-variance sources
  std::uint64_t rng_seed = 0;
};

void validate(const SynthConfig& cfg);

nlohmann::json synth_config_to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j);

/// Trials ordered by dyad, then trial index, then member. Deterministic in cfg.
std::vector<RoiTimeSeries> generate(const SynthConfig& cfg);

inline constexpr int kDatasetSchemaVersion = 1;

struct TrialRecord {
  std::string file;  ///< relative to the dataset directory
  int dyad_id = 0;
  int subject_id = 0;
  Role role = Role::Pst;
  int trial_index = 0;
  Feedback label = Feedback::Wrong;
};

struct DatasetManifest {
  SynthConfig config;
  std::vector<TrialRecord> trials;
};

/// Writes manifest.json and one CSV per trial (rows = ROIs, columns = samples).
void write_dataset(const std::vector<RoiTimeSeries>& trials, const SynthConfig& cfg,
                   const std::filesystem::path& dir);

/// Throws IoError on a missing file or a schema_version mismatch.
DatasetManifest load_manifest(const std::filesystem::path& dir);

/// Reads one trial CSV. Throws IoError on malformed content.
RoiTimeSeries load_trial(const std::filesystem::path& dir, const TrialRecord& rec);

std::vector<RoiTimeSeries> load_dataset(const std::filesystem::path& dir);

void write_matrix_csv(const Matrix& m, const std::filesystem::path& path);
Matrix read_matrix_csv(const std::filesystem::path& path);

}  // namespace fgcl
