#include "protoeeg/sigproc.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "protoeeg/errors.hpp"

namespace protoeeg::sigproc {

FilterSpec FilterSpec::notch(double center_hz, double sample_rate_hz, double q) {
  FilterSpec spec;
  spec.kind = FilterKind::notch;
  spec.center_or_cutoff_hz = center_hz;
  spec.sample_rate_hz = sample_rate_hz;
  spec.quality = q;
  return spec;
}

FilterSpec FilterSpec::highpass(double cutoff_hz, double sample_rate_hz, int order) {
  FilterSpec spec;
  spec.kind = FilterKind::highpass;
  spec.center_or_cutoff_hz = cutoff_hz;
  spec.sample_rate_hz = sample_rate_hz;
  spec.order = order;
  return spec;
}

void FilterSpec::validate() const {
  if (!(sample_rate_hz > 0.0) || !(center_or_cutoff_hz > 0.0)) {
    throw ConfigError("filter frequencies must be positive");
  }
  if (center_or_cutoff_hz >= sample_rate_hz / 2.0) {
    throw ConfigError("filter frequency " + std::to_string(center_or_cutoff_hz) + " Hz is not below Nyquist (" +
                      std::to_string(sample_rate_hz / 2.0) + " Hz)");
  }
  if (kind == FilterKind::notch && !(quality > 0.0)) throw ConfigError("notch Q must be positive");
  if (kind == FilterKind::highpass && order < 1) throw ConfigError("high-pass order must be >= 1");
}

std::vector<Biquad> design(const FilterSpec& spec) {
  spec.validate();
  const double w0 = 2.0 * std::numbers::pi * spec.center_or_cutoff_hz / spec.sample_rate_hz;
  const double cw = std::cos(w0);
  const double sw = std::sin(w0);
  std::vector<Biquad> sections;

  if (spec.kind == FilterKind::notch) {
    // 3 dB bandwidth of exactly f0 / Q.
    const double alpha = std::tan(w0 / (2.0 * spec.quality));
    const double a0 = 1.0 + alpha;
    sections.push_back({1.0 / a0, -2.0 * cw / a0, 1.0 / a0, -2.0 * cw / a0, (1.0 - alpha) / a0});
    return sections;
  }

  // Butterworth high-pass as a cascade of prewarped bilinear sections; the
  // pole pairs sit at angles (2k+1)pi/(2N) and set each section's Q.
  const int n = spec.order;
  for (int k = 0; k < n / 2; ++k) {
    const double q = 1.0 / (2.0 * std::cos(std::numbers::pi * (2.0 * k + 1.0) / (2.0 * n)));
    const double alpha = sw / (2.0 * q);
    const double a0 = 1.0 + alpha;
    const double b = (1.0 + cw) / 2.0;
    sections.push_back({b / a0, -2.0 * b / a0, b / a0, -2.0 * cw / a0, (1.0 - alpha) / a0});
  }
  if (n % 2 == 1) {
    const double k = std::tan(w0 / 2.0);
    const double norm = 1.0 / (1.0 + k);
    sections.push_back({norm, -norm, 0.0, (k - 1.0) * norm, 0.0});
  }
  return sections;
}

std::vector<double> apply_sections(std::span<const double> signal, std::span<const Biquad> sections) {
  std::vector<double> y(signal.begin(), signal.end());
  for (const auto& s : sections) {
    double z1 = 0.0, z2 = 0.0;  // transposed direct form II
    for (double& v : y) {
      const double x = v;
      const double out = s.b0 * x + z1;
      z1 = s.b1 * x - s.a1 * out + z2;
      z2 = s.b2 * x - s.a2 * out;
      v = out;
    }
  }
  return y;
}

namespace {

void check_length(std::span<const double> signal) {
  if (signal.size() < 3) throw ConfigError("filters need at least 3 samples");
}

}  // namespace

std::vector<double> notch_filter(std::span<const double> signal, const FilterSpec& spec) {
  if (spec.kind != FilterKind::notch) throw ConfigError("notch_filter called with a non-notch spec");
  check_length(signal);
  return apply_sections(signal, design(spec));
}

std::vector<double> highpass_filter(std::span<const double> signal, const FilterSpec& spec) {
  if (spec.kind != FilterKind::highpass) throw ConfigError("highpass_filter called with a non-highpass spec");
  check_length(signal);
  return apply_sections(signal, design(spec));
}

std::vector<double> resample(std::span<const double> signal, double fs_in, double fs_out) {
  if (!(fs_in > 0.0) || !(fs_out > 0.0)) throw ConfigError("resample: sample rates must be positive");
  if (signal.empty()) return {};
  const auto n_in = static_cast<std::ptrdiff_t>(signal.size());
  const auto n_out = static_cast<std::size_t>(std::llround(static_cast<double>(signal.size()) * fs_out / fs_in));
  const double ratio = fs_in / fs_out;
  // Lowpass at the smaller Nyquist rate when decimating.
  const double cutoff = std::min(1.0, fs_out / fs_in);
  const double half_width = kResampleTapsPerSide / cutoff;

  std::vector<double> out(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(pos - half_width)));
    const auto hi = std::min<std::ptrdiff_t>(n_in - 1, static_cast<std::ptrdiff_t>(std::floor(pos + half_width)));
    double acc = 0.0, weight_sum = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      const double u = pos - static_cast<double>(k);
      const double arg = std::numbers::pi * cutoff * u;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
      const double window = 0.5 * (1.0 + std::cos(std::numbers::pi * u / half_width));
      const double weight = sinc * window;
      acc += weight * signal[static_cast<std::size_t>(k)];
      weight_sum += weight;
    }
    out[i] = acc / weight_sum;
  }
  return out;
}

std::vector<double> preprocess_window(std::span<const double> time_major, std::size_t channels, double fs_in,
                                      const PreprocessOptions& options) {
  if (channels == 0 || time_major.size() % channels != 0) {
    throw DimensionError("preprocess_window: data is not a whole number of channel rows");
  }
  const std::size_t steps = time_major.size() / channels;
  const bool use_notch = options.notch_hz < fs_in / 2.0;
  const auto notch = design(FilterSpec::notch(options.notch_hz, use_notch ? fs_in : 4.0 * options.notch_hz,
                                              options.notch_q));
  const auto highpass = design(FilterSpec::highpass(options.highpass_hz, fs_in, options.highpass_order));

  std::vector<double> result;
  std::size_t out_steps = 0;
  std::vector<double> channel(steps);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < steps; ++t) channel[t] = time_major[t * channels + c];
    std::vector<double> y = use_notch ? apply_sections(channel, notch) : channel;
    y = apply_sections(y, highpass);
    y = resample(y, fs_in, options.target_rate_hz);
    if (c == 0) {
      out_steps = y.size();
      result.assign(out_steps * channels, 0.0);
    }
    for (std::size_t t = 0; t < out_steps; ++t) result[t * channels + c] = y[t];
  }
  return result;
}

}  // namespace protoeeg::sigproc
