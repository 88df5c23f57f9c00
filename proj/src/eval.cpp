#include "protoeeg/eval.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "protoeeg/errors.hpp"
#include "protoeeg/parallel.hpp"

namespace protoeeg {

using nlohmann::json;

BinaryScore binarize(std::span<const double> probs9, std::uint64_t sample_id, bool positive) {
  if (probs9.size() != kVoteClasses) {
    throw ContractError("binarize expects " + std::to_string(kVoteClasses) + " probabilities, got " +
                        std::to_string(probs9.size()));
  }
  double sum = 0.0;
  for (double p : probs9) {
    if (!std::isfinite(p) || p < 0.0) throw ContractError("binarize: probabilities must be finite and >= 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ContractError("binarize: probabilities sum to " + std::to_string(sum));

  BinaryScore b;
  b.sample_id = sample_id;
  b.positive = positive;
  for (std::size_t k = 0; k < kVoteClasses; ++k) {
    if (static_cast<int>(k) >= kPositiveVotes) b.pos_raw += probs9[k];
    else b.neg_raw += probs9[k];
  }
  b.pos_raw /= static_cast<double>(kVoteClasses - kPositiveVotes);
  b.neg_raw /= static_cast<double>(kPositiveVotes);
  const double e = std::exp(b.neg_raw - b.pos_raw);
  b.p_pos = 1.0 / (1.0 + e);
  b.p_neg = e / (1.0 + e);
  return b;
}

RocResult auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auroc: scores and labels differ in length");
  RocResult r;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw NumericError("auroc: non-finite score at index " + std::to_string(i));
    if (labels[i] != 0 && labels[i] != 1) throw ContractError("auroc: labels must be 0 or 1");
    (labels[i] ? r.n_pos : r.n_neg) += 1;
  }
  if (r.n_pos == 0 || r.n_neg == 0) {
    throw UndefinedMetricError("AUROC needs both classes (positives " + std::to_string(r.n_pos) + ", negatives " +
                               std::to_string(r.n_neg) + ")");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  // Twice the trapezoid area in units of (1/n_neg) x (1/n_pos), kept integral
  // so the sweep and pair counting agree exactly.
  std::uint64_t twice_area = 0;
  std::uint64_t tp = 0, fp = 0;
  const double pos = static_cast<double>(r.n_pos), neg = static_cast<double>(r.n_neg);
  r.curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    std::uint64_t dtp = 0, dfp = 0;
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? dtp : dfp) += 1;
    twice_area += dfp * (2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    r.curve.push_back({s, static_cast<double>(fp) / neg, static_cast<double>(tp) / pos});
  }
  r.auroc = static_cast<double>(twice_area) / (2.0 * pos * neg);
  return r;
}

std::vector<EEGSample> filtered_view(const std::vector<EEGSample>& samples) {
  std::vector<EEGSample> out;
  for (const auto& s : samples) {
    if (in_filtered_view(s.votes)) out.push_back(s);
  }
  return out;
}

BootstrapCI bootstrap_ci(std::span<const double> scores, std::span<const int> labels, std::size_t rounds,
                         std::uint64_t seed) {
  if (rounds < 1) throw ConfigError("bootstrap needs at least one round");
  BootstrapCI ci;
  ci.point = auroc(scores, labels).auroc;
  ci.rounds = rounds;
  ci.seed = seed;

  const std::size_t n = scores.size();
  std::vector<double> estimates(rounds);
  parallel_for(rounds, [&](std::size_t round) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(round), static_cast<std::uint32_t>(round >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (;;) {
      std::size_t positives = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = pick(rng);
        s[i] = scores[k];
        y[i] = labels[k];
        positives += static_cast<std::size_t>(labels[k]);
      }
      if (positives != 0 && positives != n) break;
    }
    estimates[round] = auroc(s, y).auroc;
  });
  std::sort(estimates.begin(), estimates.end());
  auto percentile = [&](double q) {
    const double pos = q * static_cast<double>(rounds - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, rounds - 1);
    return estimates[lo] + (pos - static_cast<double>(lo)) * (estimates[hi] - estimates[lo]);
  };
  // Percentile bounds can miss a point estimate that sits in a heavy tail.
  ci.lower = std::min(percentile(0.025), ci.point);
  ci.upper = std::max(percentile(0.975), ci.point);
  return ci;
}

json to_json(const MetricsReport& m) {
  json j;
  j["auroc_unfiltered"] = m.unfiltered.point;
  j["ci_unfiltered"] = {m.unfiltered.lower, m.unfiltered.upper};
  if (m.filtered) {
    j["auroc_filtered"] = m.filtered->point;
    j["ci_filtered"] = {m.filtered->lower, m.filtered->upper};
  } else {
    j["auroc_filtered"] = nullptr;
    j["ci_filtered"] = nullptr;
  }
  j["n_test"] = m.n_test;
  j["n_filtered"] = m.n_filtered;
  j["seed"] = m.seed;
  j["rounds"] = m.rounds;
  return j;
}

std::vector<ScoreRecord> score_samples(const ProtoEEGNet& model, const std::vector<EEGSample>& samples) {
  std::vector<ScoreRecord> out(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    const auto& s = samples[i];
    auto& r = out[i];
    r.sample_id = s.sample_id;
    r.votes = s.votes;
    r.probabilities = model.probabilities_of(s);
    r.binary = binarize(r.probabilities, s.sample_id, s.positive());
  });
  return out;
}

MetricsReport metrics_from_scores(const std::vector<ScoreRecord>& scores, const EvalOptions& options) {
  if (scores.empty()) throw ConfigError("the test split is empty");
  MetricsReport m;
  m.seed = options.seed;
  m.rounds = options.rounds;
  m.n_test = scores.size();
  std::vector<double> s, sf;
  std::vector<int> y, yf;
  for (const auto& r : scores) {
    const int label = r.votes >= kPositiveVotes ? 1 : 0;
    s.push_back(r.binary.p_pos);
    y.push_back(label);
    if (in_filtered_view(r.votes)) {
      sf.push_back(r.binary.p_pos);
      yf.push_back(label);
    }
  }
  m.n_filtered = sf.size();
  m.unfiltered = bootstrap_ci(s, y, options.rounds, options.seed);
  if (options.filtered) m.filtered = bootstrap_ci(sf, yf, options.rounds, options.seed);
  return m;
}

EvalResult evaluate(const ProtoEEGNet& model, const std::vector<EEGSample>& test, const EvalOptions& options) {
  if (test.empty()) throw ConfigError("the test split is empty");
  EvalResult r;
  r.scores = score_samples(model, test);
  r.metrics = metrics_from_scores(r.scores, options);
  return r;
}

std::string scores_to_csv(const std::vector<ScoreRecord>& scores) {
  std::string out = "sample_id,votes,p_pos,p_neg";
  for (std::size_t k = 0; k < kVoteClasses; ++k) out += ",prob_" + std::to_string(k);
  out += '\n';
  char buf[64];
  for (const auto& r : scores) {
    std::snprintf(buf, sizeof buf, "%" PRIu64 ",%d", r.sample_id, r.votes);
    out += buf;
    auto put = [&](double v) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    };
    put(r.binary.p_pos);
    put(r.binary.p_neg);
    for (double p : r.probabilities) put(p);
    out += '\n';
  }
  return out;
}

std::vector<ScoreRecord> scores_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample_id,votes,p_pos,p_neg", 0) != 0) {
    throw FormatError("scores file has an unexpected header");
  }
  std::vector<ScoreRecord> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4 + kVoteClasses) throw FormatError("scores row " + std::to_string(row) + " is malformed");
    try {
      ScoreRecord r;
      r.sample_id = std::stoull(cells[0]);
      r.votes = std::stoi(cells[1]);
      for (std::size_t k = 0; k < kVoteClasses; ++k) r.probabilities.push_back(std::stod(cells[4 + k]));
      r.binary = binarize(r.probabilities, r.sample_id, r.votes >= kPositiveVotes);
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw FormatError("scores row " + std::to_string(row) + " is malformed");
    }
  }
  return out;
}

}  // namespace protoeeg
