#include "protoeeg/explain.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "protoeeg/errors.hpp"
#include "protoeeg/parallel.hpp"

namespace protoeeg {

using nlohmann::json;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void require_pushed(const PrototypeBank& bank) {
  for (std::size_t j = 0; j < bank.size(); ++j) {
    if (!bank.provenance[j]) {
      throw ProvenanceError("prototype " + std::to_string(j) +
                            " has no push provenance; run `push` (or train through a push epoch) first");
    }
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << text;
  if (!out) throw FormatError("failed writing '" + path + "'");
}

ClassEvidence evidence_for(std::size_t k, const std::vector<double>& sims, const ProtoEEGNet& model,
                           std::size_t top_k) {
  const auto& bank = model.prototypes();
  const auto& head = model.head();
  const std::size_t n = head.num_prototypes();
  const auto points = points_contributed(sims, head);
  const auto logits = class_logits(sims, head);

  ClassEvidence ev;
  ev.cls = k;
  ev.logit = logits[k];
  std::vector<ExplanationRow> rows;
  for (std::size_t j = 0; j < n; ++j) {
    ev.points_total += points[k * n + j];
    rows.push_back({j, bank.class_of(j), bank.index_in_class(j), sims[j], head.at(k, j), points[k * n + j],
                    bank.provenance[j]->sample_id});
  }
  ev.residual = ev.logit - ev.points_total;
  std::stable_sort(rows.begin(), rows.end(), [](const ExplanationRow& a, const ExplanationRow& b) {
    return std::abs(a.points) > std::abs(b.points);
  });
  rows.resize(std::min(top_k, rows.size()));
  ev.rows = std::move(rows);
  return ev;
}

}  // namespace

json to_json(const Explanation& e) {
  json classes = json::array();
  for (const auto& c : e.classes) {
    json rows = json::array();
    for (const auto& r : c.rows) {
      rows.push_back({{"prototype", r.prototype},
                      {"class", r.cls},
                      {"index", r.index},
                      {"similarity", r.similarity},
                      {"connection", r.connection},
                      {"points", r.points},
                      {"source_sample_id", r.source_sample_id}});
    }
    classes.push_back({{"class", c.cls},
                       {"logit", c.logit},
                       {"points_total", c.points_total},
                       {"residual", c.residual},
                       {"rows", rows}});
  }
  return json{{"sample_id", e.sample_id},
              {"predicted", e.predicted},
              {"probabilities", e.probabilities},
              {"p_pos", e.binary.p_pos},
              {"p_neg", e.binary.p_neg},
              {"residual", e.residual},
              {"classes", classes}};
}

Explanation explain(const ProtoEEGNet& model, const EEGSample& sample, std::size_t top_k) {
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
  const auto& bank = model.prototypes();
  require_pushed(bank);

  const auto latent = model.latent_of(sample);
  const auto sims = similarities(latent, bank);
  Explanation e;
  e.sample_id = sample.sample_id;
  e.probabilities = class_probabilities(sims, model.head());
  const auto& p = e.probabilities;
  e.predicted = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  if (p.size() == kVoteClasses) e.binary = binarize(p, sample.sample_id, sample.positive());

  e.classes.push_back(evidence_for(e.predicted, sims, model, top_k));
  const bool predicted_positive = static_cast<int>(e.predicted) >= kPositiveVotes;
  std::optional<std::size_t> other;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if ((static_cast<int>(k) >= kPositiveVotes) == predicted_positive) continue;
    if (!other || p[k] > p[*other]) other = k;
  }
  if (other) e.classes.push_back(evidence_for(*other, sims, model, top_k));
  for (const auto& c : e.classes) e.residual = std::max(e.residual, std::abs(c.residual));
  return e;
}

ClassEvidence class_evidence(const ProtoEEGNet& model, const EEGSample& sample, std::size_t cls, std::size_t top_k) {
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
  if (cls >= model.config().num_classes) throw ContractError("class " + std::to_string(cls) + " is out of range");
  require_pushed(model.prototypes());
  return evidence_for(cls, similarities(model.latent_of(sample), model.prototypes()), model, top_k);
}

std::string render_text(const Explanation& e) {
  std::string out;
  out += "sample_id " + std::to_string(e.sample_id) + "\n";
  out += "predicted_class " + std::to_string(e.predicted) + "\n";
  out += "probabilities";
  for (double v : e.probabilities) out += " " + num(v);
  out += "\n";
  out += "p_pos " + num(e.binary.p_pos) + " p_neg " + num(e.binary.p_neg) + "\n";
  for (const auto& c : e.classes) {
    out += "\nclass " + std::to_string(c.cls) + " logit " + num(c.logit) + " points_total " + num(c.points_total) +
           " residual " + num(c.residual) + "\n";
    out += "rank prototype class index similarity connection points source_sample_id\n";
    for (std::size_t i = 0; i < c.rows.size(); ++i) {
      const auto& r = c.rows[i];
      out += std::to_string(i + 1) + " " + std::to_string(r.prototype) + " " + std::to_string(r.cls) + " " +
             std::to_string(r.index) + " " + num(r.similarity) + " " + num(r.connection) + " " + num(r.points) + " " +
             std::to_string(r.source_sample_id) + "\n";
    }
  }
  return out;
}

namespace {

constexpr double kPanelW = 360.0;
constexpr double kPanelH = 300.0;
constexpr double kGap = 30.0;
constexpr double kCaption = 70.0;

// Stacked channel traces, each scaled to the sample's peak amplitude.
std::string traces(const EEGSample& s, std::size_t channels, double x0, double y0) {
  const std::size_t steps = channels == 0 ? 0 : s.values.size() / channels;
  double peak = 0.0;
  for (float v : s.values) peak = std::max(peak, std::abs(static_cast<double>(v)));
  const double lane = kPanelH / static_cast<double>(channels);
  const double scale = peak > 0.0 ? 0.9 * lane / peak : 0.0;
  std::string out = "<rect x=\"" + coord(x0) + "\" y=\"" + coord(y0) + "\" width=\"" + coord(kPanelW) +
                    "\" height=\"" + coord(kPanelH) + "\" fill=\"none\" stroke=\"#999\"/>\n";
  for (std::size_t c = 0; c < channels; ++c) {
    out += "<polyline fill=\"none\" stroke=\"#1f3b73\" stroke-width=\"0.6\" points=\"";
    const double mid = y0 + (static_cast<double>(c) + 0.5) * lane;
    for (std::size_t t = 0; t < steps; ++t) {
      const double x = x0 + kPanelW * static_cast<double>(t) / static_cast<double>(std::max<std::size_t>(steps - 1, 1));
      const double y = mid - scale * static_cast<double>(s.values[t * channels + c]);
      if (t) out += ' ';
      out += coord(x) + "," + coord(y);
    }
    out += "\"/>\n";
  }
  return out;
}

std::string label(double x, double y, const std::string& text, int size = 12) {
  return "<text x=\"" + coord(x) + "\" y=\"" + coord(y) + "\" font-family=\"monospace\" font-size=\"" +
         std::to_string(size) + "\">" + text + "</text>\n";
}

}  // namespace

std::string render_svg(const Explanation& e, const LoadedDataset& dataset) {
  const EEGSample* query = dataset.find(e.sample_id);
  if (!query) throw ReferenceError("sample " + std::to_string(e.sample_id) + " is not in the dataset");
  const std::size_t channels = dataset.manifest.channel_count;

  std::size_t columns = 1;
  for (const auto& c : e.classes) columns = std::max(columns, c.rows.size());
  const double width = kGap + static_cast<double>(columns + 1) * (kPanelW + kGap);
  const double row_h = kPanelH + kCaption + kGap;
  const double height = 60.0 + static_cast<double>(e.classes.size()) * row_h;

  std::string body;
  body += label(kGap, 24, "sample " + std::to_string(e.sample_id) + "  predicted class " +
                              std::to_string(e.predicted) + "  p_pos " + num(e.binary.p_pos), 14);
  for (std::size_t ci = 0; ci < e.classes.size(); ++ci) {
    const auto& c = e.classes[ci];
    const double top = 60.0 + static_cast<double>(ci) * row_h;
    body += label(kGap, top - 8, "class " + std::to_string(c.cls) + "  logit " + num(c.logit) + "  points_total " +
                                     num(c.points_total));
    body += traces(*query, channels, kGap, top);
    body += label(kGap, top + kPanelH + 18, "this EEG (sample " + std::to_string(e.sample_id) + ")");
    for (std::size_t ri = 0; ri < c.rows.size(); ++ri) {
      const auto& r = c.rows[ri];
      const EEGSample* src = dataset.find(r.source_sample_id);
      if (!src) {
        throw ReferenceError("prototype source sample " + std::to_string(r.source_sample_id) +
                             " is not in the dataset");
      }
      const double x0 = kGap + static_cast<double>(ri + 1) * (kPanelW + kGap);
      body += traces(*src, channels, x0, top);
      body += label(x0, top + kPanelH + 18,
                    "prototype " + std::to_string(r.prototype) + " (" + std::to_string(r.cls) + "," +
                        std::to_string(r.index) + ") from sample " + std::to_string(r.source_sample_id), 11);
      body += label(x0, top + kPanelH + 34, "similarity " + num(r.similarity), 11);
      body += label(x0, top + kPanelH + 50, "connection " + num(r.connection), 11);
      body += label(x0, top + kPanelH + 66, "points " + num(r.points), 11);
    }
  }
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         coord(width) + "\" height=\"" + coord(height) + "\" viewBox=\"0 0 " + coord(width) + " " + coord(height) +
         "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" + body + "</svg>\n";
}

ReportPaths render_report(const Explanation& e, const LoadedDataset& dataset, const std::string& dir) {
  const std::string svg = render_svg(e, dataset);
  std::filesystem::create_directories(dir);
  const auto base = std::filesystem::path(dir) / ("explain_" + std::to_string(e.sample_id));
  ReportPaths paths{base.string() + ".json", base.string() + ".svg", base.string() + ".txt"};
  write_text(paths.json, to_json(e).dump(2) + "\n");
  write_text(paths.svg, svg);
  write_text(paths.text, render_text(e));
  return paths;
}

std::vector<PrototypeSummary> global_prototype_report(const ProtoEEGNet& model,
                                                      const std::vector<EEGSample>& train) {
  const auto& bank = model.prototypes();
  require_pushed(bank);
  std::vector<std::vector<double>> sims(train.size());
  parallel_for(train.size(), [&](std::size_t i) { sims[i] = similarities(model.latent_of(train[i]), bank); });

  std::vector<PrototypeSummary> rows;
  for (std::size_t j = 0; j < bank.size(); ++j) {
    PrototypeSummary r;
    r.prototype = j;
    r.cls = bank.class_of(j);
    r.index = bank.index_in_class(j);
    r.source_sample_id = bank.provenance[j]->sample_id;
    std::size_t on = 0;
    double on_sum = 0.0;
    r.on_class_max = -1.0;
    r.off_class_max = -1.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      const double s = sims[i][j];
      if (train[i].votes == r.cls) {
        ++on;
        on_sum += s;
        r.on_class_max = std::max(r.on_class_max, s);
      } else {
        r.off_class_max = std::max(r.off_class_max, s);
      }
    }
    if (on == 0) throw ReferenceError("class " + std::to_string(r.cls) + " has no training samples");
    r.on_class_mean = on_sum / static_cast<double>(on);
    r.flagged = r.off_class_max > r.on_class_max;
    rows.push_back(r);
  }
  return rows;
}

json to_json(const std::vector<PrototypeSummary>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"prototype", r.prototype},
                   {"class", r.cls},
                   {"index", r.index},
                   {"source_sample_id", r.source_sample_id},
                   {"on_class_mean", r.on_class_mean},
                   {"on_class_max", r.on_class_max},
                   {"off_class_max", r.off_class_max},
                   {"flagged", r.flagged}});
  }
  return out;
}

std::string render_prototype_table(const std::vector<PrototypeSummary>& rows) {
  std::string out = "prototype class index source_sample_id on_class_mean on_class_max off_class_max flagged\n";
  for (const auto& r : rows) {
    out += std::to_string(r.prototype) + " " + std::to_string(r.cls) + " " + std::to_string(r.index) + " " +
           std::to_string(r.source_sample_id) + " " + num(r.on_class_mean) + " " + num(r.on_class_max) + " " +
           num(r.off_class_max) + " " + (r.flagged ? "yes" : "no") + "\n";
  }
  return out;
}

}  // namespace protoeeg
