#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "protoeeg/dataset.hpp"
#include "protoeeg/eval.hpp"
#include "protoeeg/model.hpp"
#include "protoeeg/sigproc.hpp"
#include "protoeeg/training.hpp"

namespace protoeeg::cli {

struct SplitOptions {
  SplitFractions fractions;
  std::uint64_t seed = 0;
};

struct ExplainOptions {
  std::size_t top_k = 3;
  std::size_t count = 5;  // test samples explained when no ids are given
};

struct RunConfig {
  std::uint64_t seed = 0;
  SynthConfig synth;
  SplitOptions split;
  sigproc::PreprocessOptions preprocess;
  ModelConfig model;
  TrainConfig train;
  EvalOptions eval;
  ExplainOptions explain;
};

nlohmann::json to_json(const RunConfig& c);

// A dotted key such as "train.batch_size" and its raw text. The text is
// parsed as JSON when possible, otherwise taken as a string.
using Override = std::pair<std::string, std::string>;

// Defaults <- config file <- overrides. The top-level seed fills every
// section seed that neither the file nor an override sets.
RunConfig resolve_config(const std::optional<std::string>& file, const std::vector<Override>& overrides);

}  // namespace protoeeg::cli
