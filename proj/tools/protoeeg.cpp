// protoeeg: command-line driver for data generation, training, evaluation
// and explanation. Exit codes: 0 ok, 1 usage/config, 2 data/format,
// 3 numeric/training.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "protoeeg/checksum.hpp"
#include "protoeeg/dataset.hpp"
#include "protoeeg/errors.hpp"
#include "protoeeg/eval.hpp"
#include "protoeeg/explain.hpp"
#include "protoeeg/model.hpp"
#include "protoeeg/sigproc.hpp"
#include "protoeeg/training.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace protoeeg;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> config;
  std::string out;
  std::vector<std::string> sets;
  std::vector<cli::Override> extra;  // filled from subcommand flags
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw FormatError("cannot write " + path.string());
}

std::vector<cli::Override> overrides_of(const Common& c) {
  std::vector<cli::Override> out;
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed) out.emplace_back("seed", std::to_string(*c.seed));
  out.insert(out.end(), c.extra.begin(), c.extra.end());
  return out;
}

class Run {
 public:
  Run(const std::string& command, const Common& common)
      : command_(command), dir_(common.out), config_(cli::resolve_config(common.config, overrides_of(common))) {
    fs::create_directories(dir_);
    write_text(dir_ / "config.json", cli::to_json(config_).dump(2) + "\n");
  }

  const cli::RunConfig& config() const { return config_; }
  const fs::path& dir() const { return dir_; }
  fs::path path(const std::string& name) const { return dir_ / name; }

  void input(const std::string& name, const std::string& file) { inputs_[name] = file_checksum(file); }

  // Records every regular file now in the output directory.
  void finish() {
    json artifacts = json::object();
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir_)) {
      if (e.is_regular_file() && e.path().filename() != "run.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) artifacts[f.filename().string()] = file_checksum(f.string());
    const json config = cli::to_json(config_);
    json run = {{"command", command_},
                {"seed", config_.seed},
                {"config_digest", config_digest(config)},
                {"inputs", inputs_},
                {"artifacts", artifacts}};
    write_text(dir_ / "run.json", run.dump(2) + "\n");
  }

 private:
  std::string command_;
  fs::path dir_;
  cli::RunConfig config_;
  json inputs_ = json::object();
};

std::string model_path(const std::string& arg) {
  const fs::path p(arg);
  if (fs::is_directory(p)) return (p / "final.pegm").string();
  if (fs::exists(p)) return p.string();
  if (p.extension() != ".pegm" && fs::exists(fs::path(arg + ".pegm"))) return arg + ".pegm";
  throw ReferenceError("model not found: " + arg);
}

LoadedDataset load_data(Run& run, const std::string& dir) {
  auto data = load_dataset(dir);
  run.input("dataset", (fs::path(dir) / kSamplesFile).string());
  run.input("manifest", (fs::path(dir) / kManifestFile).string());
  return data;
}

ProtoEEGNet load_checked(Run& run, const std::string& arg) {
  const auto path = model_path(arg);
  auto model = load_model(path);
  run.input("model", path);
  return model;
}

int cmd_synth(Run& run) {
  const auto& cfg = run.config();
  auto data = generate_synthetic(cfg.synth);
  const auto manifest = split(data.samples, cfg.split.fractions, cfg.split.seed, data.manifest);
  save_dataset(run.dir().string(), data.samples, manifest);
  std::ofstream sal(run.path("salience.csv"));
  sal << "sample_id,votes,salience\n";
  char line[96];
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    std::snprintf(line, sizeof line, "%llu,%d,%.17g\n", static_cast<unsigned long long>(data.samples[i].sample_id),
                  static_cast<int>(data.samples[i].votes), data.salience[i]);
    sal << line;
  }
  sal.close();
  run.finish();
  std::cout << "wrote " << data.samples.size() << " samples to " << run.dir().string() << "\n";
  return 0;
}

int cmd_preprocess(Run& run, const std::string& data_dir) {
  auto data = load_data(run, data_dir);
  const auto& opt = run.config().preprocess;
  const double fs_in = data.manifest.sample_rate_hz;
  const std::size_t channels = data.manifest.channel_count;
  std::size_t steps_out = 0;
  for (auto& s : data.samples) {
    const std::vector<double> in(s.values.begin(), s.values.end());
    const auto y = sigproc::preprocess_window(in, channels, fs_in, opt);
    s.values.assign(y.begin(), y.end());
    steps_out = y.size() / channels;
  }
  data.manifest.time_steps = steps_out;
  data.manifest.sample_rate_hz = opt.target_rate_hz;
  save_dataset(run.dir().string(), data.samples, data.manifest);
  run.finish();
  std::cout << "preprocessed " << data.samples.size() << " samples: " << fs_in << " Hz -> " << opt.target_rate_hz
            << " Hz\n";
  return 0;
}

int cmd_split(Run& run, const std::string& data_dir) {
  auto data = load_data(run, data_dir);
  const auto& cfg = run.config();
  const auto manifest = split(data.samples, cfg.split.fractions, cfg.split.seed, data.manifest);
  save_dataset(run.dir().string(), data.samples, manifest);
  run.finish();
  std::cout << "train " << manifest.train_ids.size() << " val " << manifest.val_ids.size() << " test "
            << manifest.test_ids.size() << "\n";
  return 0;
}

int cmd_train(Run& run, const std::string& data_dir, bool quiet) {
  const auto data = load_data(run, data_dir);
  const auto& cfg = run.config();
  ProtoEEGNet model(cfg.model);
  Trainer trainer(model, cfg.train, data.subset(Split::train), data.subset(Split::val));
  if (!quiet) {
    trainer.on_epoch([](const EpochRecord& r) {
      std::fprintf(stderr, "epoch %d %s loss %.6g ce %.6g val_acc %.4f\n", r.epoch, r.stage.c_str(), r.loss.total,
                   r.loss.cross_entropy, r.val_accuracy.value_or(0.0));
    });
  }
  const auto history = trainer.train(run.dir().string());
  write_text(run.path("history.jsonl"), history.to_json_lines());
  run.finish();
  std::cout << "trained " << cfg.train.num_train_epochs << " epochs; model at " << run.path("final.pegm").string()
            << "\n";
  return 0;
}

int cmd_eval(Run& run, const std::string& model_arg, const std::string& data_dir) {
  const auto model = load_checked(run, model_arg);
  const auto data = load_data(run, data_dir);
  const auto result = evaluate(model, data.subset(Split::test), run.config().eval);
  write_text(run.path("metrics.json"), to_json(result.metrics).dump(2) + "\n");
  write_text(run.path("scores.csv"), scores_to_csv(result.scores));
  run.finish();
  const auto& m = result.metrics;
  std::printf("auroc %.4f [%.4f, %.4f] n=%zu\n", m.unfiltered.point, m.unfiltered.lower, m.unfiltered.upper,
              m.n_test);
  if (m.filtered) {
    std::printf("filtered auroc %.4f [%.4f, %.4f] n=%zu\n", m.filtered->point, m.filtered->lower,
                m.filtered->upper, m.n_filtered);
  }
  return 0;
}

int cmd_push(Run& run, const std::string& model_arg, const std::string& data_dir, int epoch, bool last_layer) {
  auto model = load_checked(run, model_arg);
  const auto data = load_data(run, data_dir);
  Trainer trainer(model, run.config().train, data.subset(Split::train));
  json out = {{"pushes", trainer.push_prototypes(epoch)}};
  if (last_layer) {
    const auto report = trainer.optimize_last_layer();
    out["last_layer"] = report;
    if (!report.converged) std::fprintf(stderr, "warning: last-layer optimization did not converge\n");
  }
  save_model(model, run.path("pushed.pegm").string());
  write_text(run.path("pushes.json"), out.dump(2) + "\n");
  run.finish();
  std::cout << "pushed " << model.prototypes().size() << " prototypes\n";
  return 0;
}

int cmd_explain(Run& run, const std::string& model_arg, const std::string& data_dir,
                const std::vector<std::uint64_t>& ids) {
  const auto model = load_checked(run, model_arg);
  const auto data = load_data(run, data_dir);
  const auto& opt = run.config().explain;
  std::vector<std::uint64_t> chosen = ids;
  if (chosen.empty()) {
    const auto& test = data.manifest.test_ids;
    chosen.assign(test.begin(), test.begin() + static_cast<std::ptrdiff_t>(std::min(opt.count, test.size())));
  }
  for (auto id : chosen) {
    const auto* sample = data.find(id);
    if (sample == nullptr) throw ReferenceError("no sample with id " + std::to_string(id));
    render_report(explain(model, *sample, opt.top_k), data, run.dir().string());
  }
  run.finish();
  std::cout << "explained " << chosen.size() << " samples\n";
  return 0;
}

int cmd_report(Run& run, const std::string& model_arg, const std::string& data_dir) {
  const auto model = load_checked(run, model_arg);
  const auto data = load_data(run, data_dir);
  const auto rows = global_prototype_report(model, data.subset(Split::train));
  write_text(run.path("prototypes.json"), to_json(rows).dump(2) + "\n");
  const auto table = render_prototype_table(rows);
  write_text(run.path("prototypes.txt"), table);
  run.finish();
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ProtoEEGNet: prototype classifier for epileptiform discharge detection"};
  app.require_subcommand(1);
  Common common;

  std::string data_dir;
  std::string model_arg;
  std::optional<std::size_t> n_samples;
  std::optional<int> epochs, warm, secondary_warm, batch_size, push_start, top_k, count;
  std::optional<std::size_t> rounds;
  std::vector<int> push_epochs;
  std::vector<std::uint64_t> sample_ids;
  bool filtered = false;
  bool quiet = false;
  bool last_layer = false;
  int push_epoch = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Master seed");
    sub->add_option("--config", common.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, "Output directory")->required();
    sub->add_option("--set", common.sets, "Config override key=value (dotted keys)");
  };
  auto add_data = [&](CLI::App* sub) { sub->add_option("--data", data_dir, "Dataset directory")->required(); };
  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--model", model_arg, "Model file, run directory, or path without .pegm")->required();
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-annotator dataset");
  add_common(synth);
  synth->add_option("--n", n_samples, "Number of samples");

  auto* pre = app.add_subcommand("preprocess", "Notch, high-pass and resample a dataset");
  add_common(pre);
  add_data(pre);

  auto* spl = app.add_subcommand("split", "Re-split a dataset into train/val/test");
  add_common(spl);
  add_data(spl);

  auto* tr = app.add_subcommand("train", "Train a model");
  add_common(tr);
  add_data(tr);
  tr->add_option("--epochs", epochs, "Total epochs");
  tr->add_option("--warm", warm, "Warm epochs");
  tr->add_option("--secondary-warm", secondary_warm, "Secondary warm epochs");
  tr->add_option("--push-start", push_start, "First epoch eligible for a push");
  tr->add_option("--push-epochs", push_epochs, "Push epochs, comma separated")->delimiter(',');
  tr->add_option("--batch-size", batch_size, "Minibatch size");
  tr->add_flag("--quiet", quiet, "No per-epoch progress");

  auto* ev = app.add_subcommand("eval", "Evaluate a model on the test split");
  add_common(ev);
  add_model(ev);
  add_data(ev);
  ev->add_flag("--filtered", filtered, "Also report AUROC without 3/8, 4/8 and 5/8 vote samples");
  ev->add_option("--rounds", rounds, "Bootstrap rounds");

  auto* pu = app.add_subcommand("push", "Project prototypes onto training latents");
  add_common(pu);
  add_model(pu);
  add_data(pu);
  pu->add_option("--epoch", push_epoch, "Epoch recorded in the push provenance");
  pu->add_flag("--last-layer", last_layer, "Refit the last layer after the push");

  auto* ex = app.add_subcommand("explain", "Write case-based explanation reports");
  add_common(ex);
  add_model(ex);
  add_data(ex);
  ex->add_option("--sample-id", sample_ids, "Sample to explain (repeatable)");
  ex->add_option("--top-k", top_k, "Prototypes listed per class");
  ex->add_option("--count", count, "Test samples explained when no id is given");

  auto* rep = app.add_subcommand("report", "Global prototype similarity report");
  add_common(rep);
  add_model(rep);
  add_data(rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  auto flag = [&](const char* key, const auto& v) {
    if (v) common.extra.emplace_back(key, std::to_string(*v));
  };
  flag("synth.n_samples", n_samples);
  flag("train.num_train_epochs", epochs);
  flag("train.num_warm_epochs", warm);
  flag("train.num_secondary_warm_epochs", secondary_warm);
  flag("train.push_start", push_start);
  flag("train.batch_size", batch_size);
  flag("eval.rounds", rounds);
  flag("explain.top_k", top_k);
  flag("explain.count", count);
  if (!push_epochs.empty()) common.extra.emplace_back("train.push_epochs", json(push_epochs).dump());
  if (filtered) common.extra.emplace_back("eval.filtered", "true");

  try {
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    Run run(name, common);
    if (name == "synth") return cmd_synth(run);
    if (name == "preprocess") return cmd_preprocess(run, data_dir);
    if (name == "split") return cmd_split(run, data_dir);
    if (name == "train") return cmd_train(run, data_dir, quiet);
    if (name == "eval") return cmd_eval(run, model_arg, data_dir);
    if (name == "push") return cmd_push(run, model_arg, data_dir, push_epoch, last_layer);
    if (name == "explain") return cmd_explain(run, model_arg, data_dir, sample_ids);
    if (name == "report") return cmd_report(run, model_arg, data_dir);
    std::cerr << app.help();
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const ContractError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const ReferenceError& e) {
    std::cerr << "reference error: " << e.what() << "\n";
    return 2;
  } catch (const ProvenanceError& e) {
    std::cerr << "provenance error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "filesystem error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
