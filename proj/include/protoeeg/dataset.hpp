#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

namespace protoeeg {

inline constexpr std::size_t kChannels = 37;
inline constexpr std::size_t kTimeSteps = 128;
inline constexpr double kSampleRateHz = 128.0;
inline constexpr std::size_t kVoteClasses = 9;
inline constexpr std::size_t kAnnotators = 8;
// Binary label threshold: a window is positive when at least this many
// annotators marked it.
inline constexpr int kPositiveVotes = 4;

// One window in time-major layout: values[t * channels + c], microvolts.
struct EEGSample {
  std::uint64_t sample_id = 0;
  std::uint8_t votes = 0;
  std::vector<float> values;

  bool positive() const { return votes >= kPositiveVotes; }
};

enum class Split { train, val, test };
const char* split_name(Split split);

struct DatasetManifest {
  int version = 1;
  std::size_t sample_count = 0;
  std::size_t channel_count = kChannels;
  std::size_t time_steps = kTimeSteps;
  double sample_rate_hz = kSampleRateHz;
  std::vector<std::uint64_t> train_ids;
  std::vector<std::uint64_t> val_ids;
  std::vector<std::uint64_t> test_ids;
  std::uint64_t generator_seed = 0;
  std::string config_digest;

  const std::vector<std::uint64_t>& ids(Split split) const;
  bool operator==(const DatasetManifest&) const = default;
};

void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

struct Annotator {
  double sensitivity = 12.0;  // logistic slope in salience units
  double bias = 0.45;         // salience at which the vote probability is 1/2
};

struct SynthConfig {
  std::size_t n_samples = 2000;
  std::uint64_t seed = 0;
  double sample_rate_hz = kSampleRateHz;  // one-second windows: time steps == rate
  double spike_rate = 0.5;
  double salience_min = 0.0;
  double salience_max = 1.0;
  double background_uv = 10.0;  // RMS of the pink background per channel
  double pink_exponent = 1.0;
  double common_fraction = 0.3;  // share of background power common to all channels
  double alpha_uv = 4.0;
  double line_noise_uv = 0.0;    // 60 Hz interference, only when below Nyquist
  double sharp_width_ms_min = 20.0;
  double sharp_width_ms_max = 70.0;
  double slow_width_ms_min = 150.0;
  double slow_width_ms_max = 350.0;
  double onset_jitter_ms = 50.0;  // sharp peak offset from the window centre
  double amplitude_uv_min = 120.0;  // event peak at salience 1
  double amplitude_uv_max = 200.0;
  std::size_t field_halfwidth_min = 2;  // channels on each side of the focus
  std::size_t field_halfwidth_max = 6;
  std::array<Annotator, kAnnotators> annotators = default_annotators();
  double vote_noise = 0.5;  // std of per-vote logit noise

  static std::array<Annotator, kAnnotators> default_annotators();
  void validate() const;
  std::size_t time_steps() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
// Rejects unknown keys; missing keys keep their defaults.
void from_json(const nlohmann::json& j, SynthConfig& c);

std::string config_digest(const nlohmann::json& j);

struct SyntheticDataset {
  std::vector<EEGSample> samples;
  std::vector<double> salience;  // generator ground truth, parallel to samples
  DatasetManifest manifest;
};

SyntheticDataset generate_synthetic(const SynthConfig& config);

// Votes from the simulated panel for a window of the given salience.
int simulate_votes(double salience, const SynthConfig& config, std::mt19937_64& rng);

struct SplitFractions {
  double train = 0.73;
  double val = 0.12;
  double test = 0.15;
};

// Stratified by vote class and deterministic under seed.
DatasetManifest split(const std::vector<EEGSample>& samples, SplitFractions fractions, std::uint64_t seed,
                      DatasetManifest base = {});

std::array<std::size_t, kVoteClasses> class_histogram(const std::vector<EEGSample>& samples);

// Binary sample file.
void write_samples(const std::string& path, const std::vector<EEGSample>& samples, std::size_t time_steps,
                   std::size_t channels = kChannels);
std::vector<EEGSample> read_samples(const std::string& path);

// Directory layout: <dir>/dataset.peeg plus <dir>/manifest.json.
inline constexpr const char* kSamplesFile = "dataset.peeg";
inline constexpr const char* kManifestFile = "manifest.json";

void save_dataset(const std::string& dir, const std::vector<EEGSample>& samples, const DatasetManifest& manifest);
struct LoadedDataset {
  std::vector<EEGSample> samples;
  DatasetManifest manifest;

  std::vector<EEGSample> subset(Split split) const;
  const EEGSample* find(std::uint64_t sample_id) const;
};
LoadedDataset load_dataset(const std::string& dir);

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

}  // namespace protoeeg
