#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoeeg/dataset.hpp"
#include "protoeeg/model.hpp"

namespace protoeeg {

struct BinaryScore {
  double p_pos = 0.5;
  double p_neg = 0.5;
  double pos_raw = 0.0;  // mean probability of the positive vote classes
  double neg_raw = 0.0;
  std::uint64_t sample_id = 0;
  bool positive = false;
};

// Averages vote classes >= 4 and <= 3, then a two-way softmax.
BinaryScore binarize(std::span<const double> probs9, std::uint64_t sample_id = 0, bool positive = false);

struct RocPoint {
  double threshold = 0.0;  // scores >= threshold are called positive
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocResult {
  double auroc = 0.0;
  std::vector<RocPoint> curve;  // from (0,0) to (1,1)
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

// Threshold sweep over distinct scores; tied scores move the curve
// diagonally, which credits tied pairs with one half.
RocResult auroc(std::span<const double> scores, std::span<const int> labels);

inline bool in_filtered_view(int votes) { return votes < 3 || votes > 5; }
std::vector<EEGSample> filtered_view(const std::vector<EEGSample>& samples);

struct BootstrapCI {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t rounds = 10000;
  std::uint64_t seed = 0;
};

// Percentile interval (2.5 / 97.5) over resampled AUROCs. Each round draws
// from its own generator seeded by (seed, round); single-class draws are
// redrawn.
BootstrapCI bootstrap_ci(std::span<const double> scores, std::span<const int> labels, std::size_t rounds = 10000,
                         std::uint64_t seed = 0);

struct ScoreRecord {
  std::uint64_t sample_id = 0;
  int votes = 0;
  std::vector<double> probabilities;
  BinaryScore binary;
};

struct EvalOptions {
  std::size_t rounds = 10000;
  std::uint64_t seed = 0;
  bool filtered = true;
};

struct MetricsReport {
  BootstrapCI unfiltered;
  std::optional<BootstrapCI> filtered;
  std::size_t n_test = 0;
  std::size_t n_filtered = 0;
  std::uint64_t seed = 0;
  std::size_t rounds = 0;
};

nlohmann::json to_json(const MetricsReport& m);

std::vector<ScoreRecord> score_samples(const ProtoEEGNet& model, const std::vector<EEGSample>& samples);
MetricsReport metrics_from_scores(const std::vector<ScoreRecord>& scores, const EvalOptions& options);

struct EvalResult {
  std::vector<ScoreRecord> scores;
  MetricsReport metrics;
};

EvalResult evaluate(const ProtoEEGNet& model, const std::vector<EEGSample>& test, const EvalOptions& options = {});

// CSV with full-precision numbers: sample_id,votes,p_pos,p_neg,prob_0..prob_8
std::string scores_to_csv(const std::vector<ScoreRecord>& scores);
std::vector<ScoreRecord> scores_from_csv(const std::string& text);

}  // namespace protoeeg
