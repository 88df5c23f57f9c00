#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace protoeeg::sigproc {

enum class FilterKind { notch, highpass };

struct FilterSpec {
  FilterKind kind = FilterKind::notch;
  double center_or_cutoff_hz = 60.0;
  double sample_rate_hz = 128.0;
  double quality = 30.0;  // notch Q
  int order = 4;          // highpass Butterworth order

  static FilterSpec notch(double center_hz, double sample_rate_hz, double q = 30.0);
  static FilterSpec highpass(double cutoff_hz, double sample_rate_hz, int order = 4);
  void validate() const;
};

// Second-order section, a0 normalized to 1.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

std::vector<Biquad> design(const FilterSpec& spec);

// Causal cascade filtering with zero initial state.
std::vector<double> apply_sections(std::span<const double> signal, std::span<const Biquad> sections);

std::vector<double> notch_filter(std::span<const double> signal, const FilterSpec& spec);
std::vector<double> highpass_filter(std::span<const double> signal, const FilterSpec& spec);

inline constexpr int kResampleTapsPerSide = 16;

// Hann-windowed sinc interpolation; output length round(n * fs_out / fs_in).
std::vector<double> resample(std::span<const double> signal, double fs_in, double fs_out);

struct PreprocessOptions {
  double notch_hz = 60.0;
  double notch_q = 30.0;
  double highpass_hz = 0.5;
  int highpass_order = 4;
  double target_rate_hz = 128.0;
};

// Applies notch, high-pass and resampling to every channel of a time-major
// (time x channels) window. The notch is skipped when its frequency is at or
// above the input Nyquist rate.
std::vector<double> preprocess_window(std::span<const double> time_major, std::size_t channels, double fs_in,
                                      const PreprocessOptions& options);

}  // namespace protoeeg::sigproc
