#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoeeg/dataset.hpp"
#include "protoeeg/eval.hpp"
#include "protoeeg/model.hpp"

namespace protoeeg {

struct ExplanationRow {
  std::size_t prototype = 0;
  std::size_t cls = 0;    // prototype class c
  std::size_t index = 0;  // l within the class
  double similarity = 0.0;
  double connection = 0.0;  // head weight to the explained class
  double points = 0.0;      // similarity * connection
  std::uint64_t source_sample_id = 0;
};

struct ClassEvidence {
  std::size_t cls = 0;
  double logit = 0.0;
  double points_total = 0.0;  // over all prototypes, in head order
  double residual = 0.0;      // logit - points_total
  std::vector<ExplanationRow> rows;  // top_k by |points|, descending
};

// Evidence for the predicted class, then for the most probable class on
// the other side of the spike / non-spike boundary.
struct Explanation {
  std::uint64_t sample_id = 0;
  std::size_t predicted = 0;
  std::vector<double> probabilities;
  BinaryScore binary;
  std::vector<ClassEvidence> classes;
  double residual = 0.0;  // largest |residual| over all classes
};

nlohmann::json to_json(const Explanation& e);

Explanation explain(const ProtoEEGNet& model, const EEGSample& sample, std::size_t top_k = 3);

// Evidence for any one class.
ClassEvidence class_evidence(const ProtoEEGNet& model, const EEGSample& sample, std::size_t cls,
                             std::size_t top_k = 3);

struct ReportPaths {
  std::string json;
  std::string svg;
  std::string text;
};

// Writes explain_<sample_id>.{json,svg,txt} into `dir`.
ReportPaths render_report(const Explanation& explanation, const LoadedDataset& dataset, const std::string& dir);
std::string render_text(const Explanation& explanation);
std::string render_svg(const Explanation& explanation, const LoadedDataset& dataset);

struct PrototypeSummary {
  std::size_t prototype = 0;
  std::size_t cls = 0;
  std::size_t index = 0;
  std::uint64_t source_sample_id = 0;
  double on_class_mean = 0.0;
  double on_class_max = 0.0;
  double off_class_max = 0.0;
  bool flagged = false;  // off-class max exceeds on-class max
};

// Similarities of every prototype over the training samples.
std::vector<PrototypeSummary> global_prototype_report(const ProtoEEGNet& model, const std::vector<EEGSample>& train);
nlohmann::json to_json(const std::vector<PrototypeSummary>& rows);
std::string render_prototype_table(const std::vector<PrototypeSummary>& rows);

}  // namespace protoeeg
