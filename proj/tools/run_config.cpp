#include "run_config.hpp"

#include <fstream>
#include <sstream>

#include "protoeeg/errors.hpp"
#include "protoeeg/json_util.hpp"

namespace protoeeg::cli {

using nlohmann::json;

namespace {

constexpr const char* kSeeded[] = {"synth", "split", "model", "train", "eval"};

json preprocess_json(const sigproc::PreprocessOptions& p) {
  return {{"notch_hz", p.notch_hz},
          {"notch_q", p.notch_q},
          {"highpass_hz", p.highpass_hz},
          {"highpass_order", p.highpass_order},
          {"target_rate_hz", p.target_rate_hz}};
}

void set_path(json& root, const std::string& dotted, json value) {
  json* node = &root;
  std::size_t start = 0;
  for (;;) {
    const auto dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("malformed override key '" + dotted + "'");
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace

json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"synth", c.synth},
          {"split",
           {{"train", c.split.fractions.train},
            {"val", c.split.fractions.val},
            {"test", c.split.fractions.test},
            {"seed", c.split.seed}}},
          {"preprocess", preprocess_json(c.preprocess)},
          {"model", c.model},
          {"train", c.train},
          {"eval", {{"rounds", c.eval.rounds}, {"seed", c.eval.seed}, {"filtered", c.eval.filtered}}},
          {"explain", {{"top_k", c.explain.top_k}, {"count", c.explain.count}}}};
}

RunConfig resolve_config(const std::optional<std::string>& file, const std::vector<Override>& overrides) {
  json user = json::object();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot read config file '" + *file + "'");
    std::stringstream text;
    text << in.rdbuf();
    const std::string body = text.str();
    if (body.find_first_not_of(" \t\r\n") != std::string::npos) {
      try {
        user = json::parse(body);
      } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + *file + "' is not valid JSON: " + e.what());
      }
    }
    if (!user.is_object()) throw ConfigError("config file must hold a JSON object");
  }
  for (const auto& [key, raw] : overrides) {
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    set_path(user, key, std::move(value));
  }

  jsonutil::reject_unknown(user, {"seed", "synth", "split", "preprocess", "model", "train", "eval", "explain"}, "");
  RunConfig c;
  jsonutil::read(user, "seed", c.seed, "");
  for (const char* section : kSeeded) {
    if (user.contains(section) && !user.at(section).is_object()) {
      throw ConfigError("key '" + std::string(section) + "' must be a JSON object");
    }
    if (!user.contains(section) || !user.at(section).contains("seed")) user[section]["seed"] = c.seed;
  }

  c.synth = user.at("synth").get<SynthConfig>();
  c.model = user.at("model").get<ModelConfig>();
  c.train = user.at("train").get<TrainConfig>();

  const auto& split = user.at("split");
  jsonutil::reject_unknown(split, {"train", "val", "test", "seed"}, "split");
  jsonutil::read(split, "train", c.split.fractions.train, "split");
  jsonutil::read(split, "val", c.split.fractions.val, "split");
  jsonutil::read(split, "test", c.split.fractions.test, "split");
  jsonutil::read(split, "seed", c.split.seed, "split");

  const auto& ev = user.at("eval");
  jsonutil::reject_unknown(ev, {"rounds", "seed", "filtered"}, "eval");
  c.eval.filtered = false;
  jsonutil::read(ev, "rounds", c.eval.rounds, "eval");
  jsonutil::read(ev, "seed", c.eval.seed, "eval");
  jsonutil::read(ev, "filtered", c.eval.filtered, "eval");
  if (c.eval.rounds < 1) throw ConfigError("eval.rounds must be at least 1");

  if (user.contains("preprocess")) {
    const auto& p = user.at("preprocess");
    jsonutil::reject_unknown(p, {"notch_hz", "notch_q", "highpass_hz", "highpass_order", "target_rate_hz"},
                             "preprocess");
    jsonutil::read(p, "notch_hz", c.preprocess.notch_hz, "preprocess");
    jsonutil::read(p, "notch_q", c.preprocess.notch_q, "preprocess");
    jsonutil::read(p, "highpass_hz", c.preprocess.highpass_hz, "preprocess");
    jsonutil::read(p, "highpass_order", c.preprocess.highpass_order, "preprocess");
    jsonutil::read(p, "target_rate_hz", c.preprocess.target_rate_hz, "preprocess");
  }
  if (user.contains("explain")) {
    const auto& e = user.at("explain");
    jsonutil::reject_unknown(e, {"top_k", "count"}, "explain");
    jsonutil::read(e, "top_k", c.explain.top_k, "explain");
    jsonutil::read(e, "count", c.explain.count, "explain");
    if (c.explain.top_k < 1) throw ConfigError("explain.top_k must be at least 1");
  }

  c.synth.validate();
  c.model.validate();
  // The training schedule is checked by the commands that train.
  return c;
}

}  // namespace protoeeg::cli
