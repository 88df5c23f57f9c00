#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoeeg/adam.hpp"
#include "protoeeg/dataset.hpp"
#include "protoeeg/losses.hpp"
#include "protoeeg/model.hpp"

namespace protoeeg {

struct LearningRates {
  double warm_prototypes = 0.003;
  double secondary_prototypes = 0.003;
  double secondary_features = 0.001;
  double joint_prototypes = 0.05;
  double joint_features = 0.001;
  double joint_last_layer = 1e-5;
  // Accepted for config compatibility. The model has no add-on layers.
  double secondary_add_on_layers = 0.003;
  double joint_add_on_layers = 0.001;
};

struct LastLayerConfig {
  std::size_t max_iters = 5000;
  double tol = 1e-10;
};

// Epochs are numbered 1..num_train_epochs. A push listed at epoch e runs
// after that epoch's gradient updates, followed by the last-layer fit.
struct TrainConfig {
  int num_train_epochs = 130;
  int num_warm_epochs = 10;
  int num_secondary_warm_epochs = 10;
  int push_start = 70;
  std::vector<int> push_epochs{110, 120, 130};
  int joint_lr_step_size = 30;
  double joint_lr_gamma = 0.5;
  LearningRates lr;
  std::size_t batch_size = 32;
  std::size_t train_push_batch_size = 75;
  LossCoefficients coefs;
  LastLayerConfig last_layer;
  std::uint64_t seed = 0;

  void validate() const;
  // "warm", "secondary_warm" or "joint".
  std::string stage_of(int epoch) const;
  bool is_push_epoch(int epoch) const;
  // Multiplier applied to the joint learning rates during `epoch`.
  double joint_lr_factor(int epoch) const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct PushRecord {
  std::size_t prototype = 0;
  std::size_t cls = 0;
  std::size_t index = 0;
  std::uint64_t sample_id = 0;
  double similarity = 0.0;  // before the prototype was overwritten
  int epoch = 0;
};

void to_json(nlohmann::json& j, const PushRecord& r);

struct LastLayerReport {
  std::vector<double> objective;  // initial value, then one entry per iteration
  std::size_t iterations = 0;
  bool converged = false;
  double offclass_mean_abs_before = 0.0;
  double offclass_mean_abs_after = 0.0;
};

void to_json(nlohmann::json& j, const LastLayerReport& r);

struct EpochRecord {
  int epoch = 0;
  std::string stage;
  BatchLossReport loss;  // batch-size weighted mean over the epoch
  std::map<std::string, double> lr;
  std::optional<double> val_accuracy;
  std::optional<double> val_cross_entropy;
  std::vector<PushRecord> pushes;
  std::optional<LastLayerReport> last_layer;
  std::vector<std::string> warnings;
};

void to_json(nlohmann::json& j, const EpochRecord& r);

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int warm_end = 0;
  int secondary_warm_end = 0;

  std::vector<int> push_epochs() const;
  // One JSON object per line.
  std::string to_json_lines() const;
};

// Full-batch objective of the convex stage at head weights `w`.
double last_layer_objective(const std::vector<double>& sims, const std::vector<std::size_t>& labels,
                            std::span<const double> w, std::size_t num_classes, std::size_t per_class,
                            double l1);

// Owns the optimizer state for one run over a model it mutates.
class Trainer {
 public:
  Trainer(ProtoEEGNet& model, TrainConfig config, std::vector<EEGSample> train, std::vector<EEGSample> val = {});

  // Stage drivers. Each runs whole epochs starting at `first_epoch`.
  std::vector<EpochRecord> run_warm_stage(int first_epoch, int epochs);
  std::vector<EpochRecord> run_secondary_warm_stage(int first_epoch, int epochs);
  std::vector<EpochRecord> run_joint_stage(int first_epoch, int last_epoch);

  std::vector<PushRecord> push_prototypes(int epoch);
  LastLayerReport optimize_last_layer();
  LastLayerReport optimize_last_layer(double l1, const LastLayerConfig& config);

  // warm -> secondary warm -> joint with pushes at the configured epochs.
  // With a checkpoint directory, writes epoch_<e>.pegm at every push and
  // final.pegm at the end.
  TrainHistory train(const std::optional<std::string>& checkpoint_dir = std::nullopt);

  void on_epoch(std::function<void(const EpochRecord&)> fn) { on_epoch_ = std::move(fn); }
  const TrainConfig& config() const { return config_; }

 private:
  EpochRecord run_epoch(int epoch, const std::string& stage, diff::Adam& opt);
  void set_trainable(bool features, bool prototypes, bool head);
  void finish_epoch(EpochRecord& record);
  std::vector<std::vector<double>> train_latents() const;

  ProtoEEGNet& model_;
  TrainConfig config_;
  std::vector<EEGSample> train_;
  std::vector<EEGSample> val_;
  std::vector<std::size_t> labels_;
  std::optional<diff::Adam> joint_opt_;
  std::function<void(const EpochRecord&)> on_epoch_;
};

struct TrainResult {
  ProtoEEGNet model;
  TrainHistory history;
};

TrainResult train(const TrainConfig& config, const ModelConfig& model_config, const LoadedDataset& data,
                  const std::optional<std::string>& checkpoint_dir = std::nullopt);

}  // namespace protoeeg
