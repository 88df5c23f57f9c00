#include "protoeeg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>

#include "binary_io.hpp"
#include "protoeeg/errors.hpp"
#include "protoeeg/json_util.hpp"

namespace protoeeg {

using nlohmann::json;

namespace {

constexpr char kDatasetMagic[4] = {'P', 'E', 'E', 'G'};
constexpr std::uint32_t kDatasetVersion = 1;

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Fourier basis for one-second windows, used to synthesize 1/f^a noise.
struct PinkBasis {
  std::size_t steps = 0;
  std::size_t freqs = 0;
  std::vector<double> cos_table;  // [t][k]
  std::vector<double> sin_table;
  std::vector<double> amplitude;  // per k, normalized to unit total variance

  PinkBasis(std::size_t steps_, double exponent) : steps(steps_), freqs(steps_ / 2) {
    cos_table.resize(steps * freqs);
    sin_table.resize(steps * freqs);
    amplitude.resize(freqs);
    double power = 0.0;
    for (std::size_t k = 0; k < freqs; ++k) {
      amplitude[k] = std::pow(static_cast<double>(k + 1), -exponent / 2.0);
      power += amplitude[k] * amplitude[k];
    }
    for (auto& a : amplitude) a /= std::sqrt(power);
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t k = 0; k < freqs; ++k) {
        const double phase = 2.0 * std::numbers::pi * static_cast<double>((k + 1) * t) / static_cast<double>(steps);
        cos_table[t * freqs + k] = std::cos(phase);
        sin_table[t * freqs + k] = std::sin(phase);
      }
    }
  }

  void draw(std::mt19937_64& rng, double rms, std::vector<double>& out) const {
    std::normal_distribution<double> normal;
    std::vector<double> a(freqs), b(freqs);
    for (std::size_t k = 0; k < freqs; ++k) {
      a[k] = normal(rng) * amplitude[k];
      b[k] = normal(rng) * amplitude[k];
    }
    out.assign(steps, 0.0);
    for (std::size_t t = 0; t < steps; ++t) {
      double acc = 0.0;
      const double* ct = cos_table.data() + t * freqs;
      const double* st = sin_table.data() + t * freqs;
      for (std::size_t k = 0; k < freqs; ++k) acc += a[k] * ct[k] + b[k] * st[k];
      out[t] = rms * acc;
    }
  }
};

EEGSample synthesize_one(const SynthConfig& cfg, const PinkBasis& basis, std::uint64_t index, double& salience) {
  auto rng = derived_rng(cfg.seed, index);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t steps = cfg.time_steps();
  const double fs = cfg.sample_rate_hz;

  std::vector<double> window(steps * kChannels, 0.0);
  std::vector<double> trace;

  // Background: shared plus per-channel pink noise.
  const double common_rms = cfg.background_uv * std::sqrt(cfg.common_fraction);
  const double own_rms = cfg.background_uv * std::sqrt(1.0 - cfg.common_fraction);
  basis.draw(rng, common_rms, trace);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < kChannels; ++c) window[t * kChannels + c] = trace[t];
  }
  for (std::size_t c = 0; c < kChannels; ++c) {
    basis.draw(rng, own_rms, trace);
    for (std::size_t t = 0; t < steps; ++t) window[t * kChannels + c] += trace[t];
  }

  // Alpha rhythm with a random frequency and per-channel gain.
  const double alpha_hz = 8.0 + 4.0 * unit(rng);
  const double alpha_phase = 2.0 * std::numbers::pi * unit(rng);
  for (std::size_t c = 0; c < kChannels; ++c) {
    const double gain = cfg.alpha_uv * (0.5 + 0.5 * unit(rng));
    for (std::size_t t = 0; t < steps; ++t) {
      window[t * kChannels + c] +=
          gain * std::sin(2.0 * std::numbers::pi * alpha_hz * static_cast<double>(t) / fs + alpha_phase);
    }
  }

  if (cfg.line_noise_uv > 0.0 && 60.0 < fs / 2.0) {
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    for (std::size_t t = 0; t < steps; ++t) {
      const double v = cfg.line_noise_uv * std::sin(2.0 * std::numbers::pi * 60.0 * static_cast<double>(t) / fs + phase);
      for (std::size_t c = 0; c < kChannels; ++c) window[t * kChannels + c] += v;
    }
  }

  // Spike-and-wave: triangular sharp transient then a half-sine slow wave,
  // on a contiguous channel field with exponential falloff from the focus.
  salience = 0.0;
  if (unit(rng) < cfg.spike_rate) {
    salience = cfg.salience_min + (cfg.salience_max - cfg.salience_min) * unit(rng);
    const double peak = -salience * (cfg.amplitude_uv_min + (cfg.amplitude_uv_max - cfg.amplitude_uv_min) * unit(rng));
    const double sharp_s = 1e-3 * (cfg.sharp_width_ms_min + (cfg.sharp_width_ms_max - cfg.sharp_width_ms_min) * unit(rng));
    const double slow_s = 1e-3 * (cfg.slow_width_ms_min + (cfg.slow_width_ms_max - cfg.slow_width_ms_min) * unit(rng));
    // The sharp peak sits near the window centre, as in detector-aligned
    // clinical windows.
    const double duration = static_cast<double>(steps) / fs;
    const double peak_time = 0.5 * duration + 1e-3 * cfg.onset_jitter_ms * (2.0 * unit(rng) - 1.0);
    const double onset = peak_time - 0.5 * sharp_s;
    std::uniform_int_distribution<std::size_t> focus_dist(0, kChannels - 1);
    std::uniform_int_distribution<std::size_t> extent_dist(cfg.field_halfwidth_min, cfg.field_halfwidth_max);
    const std::size_t focus = focus_dist(rng);
    const std::size_t extent = extent_dist(rng);

    std::vector<double> shape(steps, 0.0);
    for (std::size_t t = 0; t < steps; ++t) {
      const double time = static_cast<double>(t) / fs - onset;
      if (time >= 0.0 && time < sharp_s) {
        shape[t] = 1.0 - std::abs(2.0 * time / sharp_s - 1.0);
      } else if (time >= sharp_s && time < sharp_s + slow_s) {
        shape[t] = 0.5 * std::sin(std::numbers::pi * (time - sharp_s) / slow_s);
      }
    }
    const auto lo = focus >= extent ? focus - extent : 0;
    const auto hi = std::min(kChannels - 1, focus + extent);
    for (std::size_t c = lo; c <= hi; ++c) {
      const double distance = std::abs(static_cast<double>(c) - static_cast<double>(focus));
      const double gain = peak * std::exp(-distance / (0.5 * static_cast<double>(extent) + 0.5));
      for (std::size_t t = 0; t < steps; ++t) window[t * kChannels + c] += gain * shape[t];
    }
  }

  EEGSample sample;
  sample.sample_id = index;
  sample.votes = static_cast<std::uint8_t>(simulate_votes(salience, cfg, rng));
  sample.values.resize(window.size());
  std::transform(window.begin(), window.end(), sample.values.begin(), [](double v) { return static_cast<float>(v); });
  return sample;
}

}  // namespace

const char* split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

const std::vector<std::uint64_t>& DatasetManifest::ids(Split split) const {
  switch (split) {
    case Split::train: return train_ids;
    case Split::val: return val_ids;
    case Split::test: return test_ids;
  }
  return train_ids;
}

void to_json(json& j, const DatasetManifest& m) {
  j = json{{"version", m.version},
           {"sample_count", m.sample_count},
           {"channel_count", m.channel_count},
           {"time_steps", m.time_steps},
           {"sample_rate_hz", m.sample_rate_hz},
           {"splits", {{"train", m.train_ids}, {"val", m.val_ids}, {"test", m.test_ids}}},
           {"generator_seed", m.generator_seed},
           {"config_digest", m.config_digest}};
}

void from_json(const json& j, DatasetManifest& m) {
  try {
    m.version = j.at("version").get<int>();
    m.sample_count = j.at("sample_count").get<std::size_t>();
    m.channel_count = j.at("channel_count").get<std::size_t>();
    m.time_steps = j.at("time_steps").get<std::size_t>();
    m.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    const auto& s = j.at("splits");
    m.train_ids = s.at("train").get<std::vector<std::uint64_t>>();
    m.val_ids = s.at("val").get<std::vector<std::uint64_t>>();
    m.test_ids = s.at("test").get<std::vector<std::uint64_t>>();
    m.generator_seed = j.at("generator_seed").get<std::uint64_t>();
    m.config_digest = j.at("config_digest").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

std::array<Annotator, kAnnotators> SynthConfig::default_annotators() {
  // A spread of strict and lenient readers; every panel member is reliable
  // far from its own threshold.
  return {{{10.0, 0.30}, {14.0, 0.50}, {12.0, 0.40}, {16.0, 0.60},
           {11.0, 0.35}, {15.0, 0.55}, {13.0, 0.45}, {12.0, 0.65}}};
}

std::size_t SynthConfig::time_steps() const { return static_cast<std::size_t>(std::llround(sample_rate_hz)); }

void SynthConfig::validate() const {
  if (n_samples == 0) throw ConfigError("n_samples must be positive");
  if (!(sample_rate_hz >= 16.0)) throw ConfigError("sample_rate_hz must be at least 16");
  if (!(spike_rate >= 0.0 && spike_rate <= 1.0)) throw ConfigError("spike_rate must lie in [0, 1]");
  if (!(salience_min >= 0.0 && salience_min <= salience_max && salience_max <= 1.0)) {
    throw ConfigError("salience range must satisfy 0 <= min <= max <= 1");
  }
  if (!(sharp_width_ms_min > 0.0 && sharp_width_ms_min <= sharp_width_ms_max) ||
      !(slow_width_ms_min > 0.0 && slow_width_ms_min <= slow_width_ms_max)) {
    throw ConfigError("spike widths must be positive with min <= max");
  }
  if (!(onset_jitter_ms >= 0.0)) throw ConfigError("onset_jitter_ms must be non-negative");
  const double window_ms = 1e3 * static_cast<double>(time_steps()) / sample_rate_hz;
  if (0.5 * window_ms + onset_jitter_ms + 0.5 * sharp_width_ms_max + slow_width_ms_max > window_ms ||
      0.5 * window_ms < onset_jitter_ms + 0.5 * sharp_width_ms_max) {
    throw ConfigError("spike-and-wave must fit in the window");
  }
  if (!(amplitude_uv_min >= 0.0 && amplitude_uv_min <= amplitude_uv_max)) throw ConfigError("bad amplitude range");
  if (field_halfwidth_min > field_halfwidth_max) throw ConfigError("bad field half-width range");
  if (!(background_uv >= 0.0) || !(alpha_uv >= 0.0) || !(line_noise_uv >= 0.0) || !(vote_noise >= 0.0)) {
    throw ConfigError("amplitudes and noise scales must be non-negative");
  }
  if (!(common_fraction >= 0.0 && common_fraction <= 1.0)) throw ConfigError("common_fraction must lie in [0, 1]");
}

void to_json(json& j, const SynthConfig& c) {
  json panel = json::array();
  for (const auto& a : c.annotators) panel.push_back({{"sensitivity", a.sensitivity}, {"bias", a.bias}});
  j = json{{"n_samples", c.n_samples},
           {"seed", c.seed},
           {"sample_rate_hz", c.sample_rate_hz},
           {"spike_rate", c.spike_rate},
           {"salience_min", c.salience_min},
           {"salience_max", c.salience_max},
           {"background_uv", c.background_uv},
           {"pink_exponent", c.pink_exponent},
           {"common_fraction", c.common_fraction},
           {"alpha_uv", c.alpha_uv},
           {"line_noise_uv", c.line_noise_uv},
           {"sharp_width_ms", {c.sharp_width_ms_min, c.sharp_width_ms_max}},
           {"slow_width_ms", {c.slow_width_ms_min, c.slow_width_ms_max}},
           {"onset_jitter_ms", c.onset_jitter_ms},
           {"amplitude_uv", {c.amplitude_uv_min, c.amplitude_uv_max}},
           {"field_halfwidth", {c.field_halfwidth_min, c.field_halfwidth_max}},
           {"annotators", panel},
           {"vote_noise", c.vote_noise}};
}

void from_json(const json& j, SynthConfig& c) {
  using jsonutil::read;
  const std::string ctx = "synth";
  jsonutil::reject_unknown(j,
                           {"n_samples", "seed", "sample_rate_hz", "spike_rate", "salience_min", "salience_max",
                            "background_uv", "pink_exponent", "common_fraction", "alpha_uv", "line_noise_uv",
                            "sharp_width_ms", "slow_width_ms", "onset_jitter_ms", "amplitude_uv", "field_halfwidth", "annotators",
                            "vote_noise"},
                           ctx);
  read(j, "n_samples", c.n_samples, ctx);
  read(j, "seed", c.seed, ctx);
  read(j, "sample_rate_hz", c.sample_rate_hz, ctx);
  read(j, "spike_rate", c.spike_rate, ctx);
  read(j, "salience_min", c.salience_min, ctx);
  read(j, "salience_max", c.salience_max, ctx);
  read(j, "background_uv", c.background_uv, ctx);
  read(j, "pink_exponent", c.pink_exponent, ctx);
  read(j, "common_fraction", c.common_fraction, ctx);
  read(j, "alpha_uv", c.alpha_uv, ctx);
  read(j, "line_noise_uv", c.line_noise_uv, ctx);
  read(j, "vote_noise", c.vote_noise, ctx);
  read(j, "onset_jitter_ms", c.onset_jitter_ms, ctx);
  auto read_range = [&](const char* key, auto& lo, auto& hi) {
    using T = std::decay_t<decltype(lo)>;
    std::vector<T> range;
    read(j, key, range, ctx);
    if (!j.contains(key)) return;
    if (range.size() != 2) throw ConfigError("key '" + ctx + "." + key + "' must be a [min, max] pair");
    lo = range[0];
    hi = range[1];
  };
  read_range("sharp_width_ms", c.sharp_width_ms_min, c.sharp_width_ms_max);
  read_range("slow_width_ms", c.slow_width_ms_min, c.slow_width_ms_max);
  read_range("amplitude_uv", c.amplitude_uv_min, c.amplitude_uv_max);
  read_range("field_halfwidth", c.field_halfwidth_min, c.field_halfwidth_max);
  if (j.contains("annotators")) {
    const auto& panel = j.at("annotators");
    if (!panel.is_array() || panel.size() != kAnnotators) {
      throw ConfigError("key 'synth.annotators' must list exactly 8 annotators");
    }
    for (std::size_t i = 0; i < kAnnotators; ++i) {
      jsonutil::reject_unknown(panel[i], {"sensitivity", "bias"}, "synth.annotators");
      read(panel[i], "sensitivity", c.annotators[i].sensitivity, "synth.annotators");
      read(panel[i], "bias", c.annotators[i].bias, "synth.annotators");
    }
  }
}

std::string config_digest(const json& j) {
  const std::string text = j.dump();
  return io::hex32(io::crc32_of({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()}));
}

int simulate_votes(double salience, const SynthConfig& config, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  int votes = 0;
  for (const auto& a : config.annotators) {
    const double p = sigmoid(a.sensitivity * (salience - a.bias) + config.vote_noise * noise(rng));
    if (unit(rng) < p) ++votes;
  }
  return votes;
}

SyntheticDataset generate_synthetic(const SynthConfig& config) {
  config.validate();
  const PinkBasis basis(config.time_steps(), config.pink_exponent);
  SyntheticDataset out;
  out.samples.resize(config.n_samples);
  out.salience.resize(config.n_samples);
  for (std::size_t i = 0; i < config.n_samples; ++i) {
    out.samples[i] = synthesize_one(config, basis, i, out.salience[i]);
  }
  DatasetManifest base;
  base.time_steps = config.time_steps();
  base.sample_rate_hz = config.sample_rate_hz;
  base.generator_seed = config.seed;
  base.config_digest = config_digest(json(config));
  out.manifest = split(out.samples, SplitFractions{}, config.seed, base);
  return out;
}

DatasetManifest split(const std::vector<EEGSample>& samples, SplitFractions fractions, std::uint64_t seed,
                      DatasetManifest base) {
  if (samples.empty()) throw ConfigError("split: no samples");
  if (fractions.train < 0.0 || fractions.val < 0.0 || fractions.test < 0.0 ||
      std::abs(fractions.train + fractions.val + fractions.test - 1.0) > 1e-9) {
    throw ConfigError("split: fractions must be non-negative and sum to 1");
  }
  std::map<int, std::vector<std::uint64_t>> by_class;
  for (const auto& s : samples) by_class[s.votes].push_back(s.sample_id);

  DatasetManifest m = std::move(base);
  m.sample_count = samples.size();
  m.train_ids.clear();
  m.val_ids.clear();
  m.test_ids.clear();
  for (auto& [votes, ids] : by_class) {
    std::sort(ids.begin(), ids.end());
    auto rng = derived_rng(seed, static_cast<std::uint64_t>(votes));
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n = static_cast<double>(ids.size());
    auto n_val = static_cast<std::size_t>(std::llround(n * fractions.val));
    auto n_test = static_cast<std::size_t>(std::llround(n * fractions.test));
    if (ids.size() >= 3) {
      if (fractions.val > 0.0) n_val = std::max<std::size_t>(n_val, 1);
      if (fractions.test > 0.0) n_test = std::max<std::size_t>(n_test, 1);
      if (fractions.train > 0.0 && n_val + n_test >= ids.size()) {
        if (n_val >= n_test) --n_val;
        else --n_test;
      }
    }
    n_val = std::min(n_val, ids.size());
    n_test = std::min(n_test, ids.size() - n_val);
    m.val_ids.insert(m.val_ids.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
    m.test_ids.insert(m.test_ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_val),
                      ids.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
    m.train_ids.insert(m.train_ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), ids.end());
  }
  std::sort(m.train_ids.begin(), m.train_ids.end());
  std::sort(m.val_ids.begin(), m.val_ids.end());
  std::sort(m.test_ids.begin(), m.test_ids.end());
  return m;
}

std::array<std::size_t, kVoteClasses> class_histogram(const std::vector<EEGSample>& samples) {
  std::array<std::size_t, kVoteClasses> counts{};
  for (const auto& s : samples) {
    if (s.votes >= kVoteClasses) throw IndexError("vote count out of range");
    ++counts[s.votes];
  }
  return counts;
}

void write_samples(const std::string& path, const std::vector<EEGSample>& samples, std::size_t time_steps,
                   std::size_t channels) {
  const std::size_t per_sample = time_steps * channels;
  io::Writer header;
  header.put_bytes({reinterpret_cast<const std::uint8_t*>(kDatasetMagic), 4});
  header.put<std::uint32_t>(kDatasetVersion);
  header.put<std::uint32_t>(static_cast<std::uint32_t>(samples.size()));
  header.put<std::uint32_t>(static_cast<std::uint32_t>(time_steps));
  header.put<std::uint32_t>(static_cast<std::uint32_t>(channels));

  io::Writer payload;
  for (const auto& s : samples) {
    if (s.values.size() != per_sample) {
      throw DimensionError("sample " + std::to_string(s.sample_id) + " does not have " + std::to_string(per_sample) +
                           " values");
    }
    if (s.votes >= kVoteClasses) throw ContractError("sample " + std::to_string(s.sample_id) + " has votes > 8");
    payload.put<std::uint64_t>(s.sample_id);
    payload.put<std::uint8_t>(s.votes);
    for (float v : s.values) {
      if (!std::isfinite(v)) throw NumericError("sample " + std::to_string(s.sample_id) + " has non-finite values");
      payload.put<float>(v);
    }
  }
  const std::uint32_t crc = io::crc32_of(payload.bytes());
  auto& bytes = header.bytes();
  bytes.insert(bytes.end(), payload.bytes().begin(), payload.bytes().end());
  header.put<std::uint32_t>(crc);
  io::write_file(path, bytes);
}

std::vector<EEGSample> read_samples(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::Reader in(bytes);
  const auto magic = in.get_bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kDatasetMagic)) throw FormatError("bad magic bytes in '" + path + "'");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>("sample_count");
  const auto steps = in.get<std::uint32_t>("time_steps");
  const auto channels = in.get<std::uint32_t>("channels");
  if (steps == 0 || channels == 0) throw FormatError("dataset header has zero time_steps or channels");
  const std::size_t record = 8 + 1 + 4 * static_cast<std::size_t>(steps) * channels;
  const std::size_t payload_size = record * count;
  in.require(payload_size, "payload");
  const auto payload = std::span<const std::uint8_t>(bytes).subspan(in.offset(), payload_size);
  if (in.remaining() != payload_size + 4) {
    if (in.remaining() < payload_size + 4) throw FormatError("truncated file while reading 'checksum'");
    throw FormatError("trailing bytes after 'checksum'");
  }

  std::vector<EEGSample> samples(count);
  for (auto& s : samples) {
    s.sample_id = in.get<std::uint64_t>("sample_id");
    s.votes = in.get<std::uint8_t>("votes");
    s.values.resize(static_cast<std::size_t>(steps) * channels);
    const auto raw = in.get_bytes(s.values.size() * 4, "values");
    std::memcpy(s.values.data(), raw.data(), raw.size());
  }
  const auto stored = in.get<std::uint32_t>("checksum");
  if (stored != io::crc32_of(payload)) throw FormatError("checksum mismatch in '" + path + "'");
  for (const auto& s : samples) {
    if (s.votes >= kVoteClasses) throw FormatError("field 'votes' out of range for sample " + std::to_string(s.sample_id));
  }
  return samples;
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << json(manifest).dump(2) << '\n';
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("manifest '" + path + "' is not valid JSON: " + e.what());
  }
  return j.get<DatasetManifest>();
}

void save_dataset(const std::string& dir, const std::vector<EEGSample>& samples, const DatasetManifest& manifest) {
  std::filesystem::create_directories(dir);
  write_samples((std::filesystem::path(dir) / kSamplesFile).string(), samples, manifest.time_steps,
                manifest.channel_count);
  write_manifest((std::filesystem::path(dir) / kManifestFile).string(), manifest);
}

LoadedDataset load_dataset(const std::string& dir) {
  LoadedDataset out;
  out.samples = read_samples((std::filesystem::path(dir) / kSamplesFile).string());
  out.manifest = read_manifest((std::filesystem::path(dir) / kManifestFile).string());
  if (out.manifest.sample_count != out.samples.size()) {
    throw FormatError("manifest sample_count does not match the sample file");
  }
  for (const auto& s : out.samples) {
    if (s.values.size() != out.manifest.time_steps * out.manifest.channel_count) {
      throw FormatError("manifest time_steps/channel_count do not match the sample file");
    }
  }
  return out;
}

std::vector<EEGSample> LoadedDataset::subset(Split which) const {
  std::map<std::uint64_t, const EEGSample*> index;
  for (const auto& s : samples) index[s.sample_id] = &s;
  std::vector<EEGSample> out;
  for (auto id : manifest.ids(which)) {
    auto it = index.find(id);
    if (it == index.end()) throw ReferenceError("manifest references unknown sample " + std::to_string(id));
    out.push_back(*it->second);
  }
  return out;
}

const EEGSample* LoadedDataset::find(std::uint64_t sample_id) const {
  for (const auto& s : samples) {
    if (s.sample_id == sample_id) return &s;
  }
  return nullptr;
}

}  // namespace protoeeg
