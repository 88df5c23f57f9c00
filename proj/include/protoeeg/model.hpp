#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoeeg/dataset.hpp"
#include "protoeeg/ops.hpp"
#include "protoeeg/tensor.hpp"

namespace protoeeg {

using diff::Tensor;

struct ConvBlockSpec {
  std::size_t out_channels = 0;
  std::size_t kernel_h = 1;  // time extent
  std::size_t kernel_w = 1;  // channel extent
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
};

// Stand-in for the SpikeNet feature extractor. Each block is
// conv -> LayerNorm -> ELU; the stack must reduce the input to a
// latent_dim x 1 x 1 map.
struct BackboneConfig {
  std::size_t input_time = kTimeSteps;
  std::size_t input_channels = kChannels;
  std::vector<ConvBlockSpec> blocks = standard_blocks();
  double layer_norm_eps = 1e-5;

  // 1x128x37 -> 16x62x17 -> 32x29x7 -> 64x10x3 -> 128x1x1. The last
  // kernel spans 10 time steps.
  static std::vector<ConvBlockSpec> standard_blocks();
  std::size_t latent_dim() const { return blocks.empty() ? 0 : blocks.back().out_channels; }
  // Output extents (C, H, W) after every block.
  std::vector<std::array<std::size_t, 3>> block_shapes() const;
  void validate() const;
};

struct ModelConfig {
  BackboneConfig backbone;
  std::size_t num_classes = kVoteClasses;
  std::size_t prototypes_per_class = 12;
  std::uint64_t seed = 0;

  std::size_t num_prototypes() const { return num_classes * prototypes_per_class; }
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct PushProvenance {
  std::uint64_t sample_id = 0;
  double similarity = 0.0;
  int epoch = 0;
  bool operator==(const PushProvenance&) const = default;
};

struct Backbone {
  struct Block {
    ConvBlockSpec spec;
    Tensor kernels;  // out x in x kH x kW
    Tensor gain;     // per output channel
    Tensor bias;
  };
  BackboneConfig config;
  std::vector<Block> blocks;

  static Backbone init(const BackboneConfig& config, std::uint64_t seed);
  // input: 1 x T x C. Returns the unnormalized latent as a vector.
  Tensor features(const Tensor& input) const;
  std::vector<Tensor> parameters() const;
};

// Prototype p^(c,l) lives in row c * per_class + l of `vectors`.
struct PrototypeBank {
  std::size_t num_classes = 0;
  std::size_t per_class = 0;
  std::size_t dim = 0;
  Tensor vectors;  // (num_classes * per_class) x dim
  std::vector<std::optional<PushProvenance>> provenance;

  static PrototypeBank init(std::size_t num_classes, std::size_t per_class, std::size_t dim, std::uint64_t seed);
  std::size_t size() const { return num_classes * per_class; }
  std::size_t class_of(std::size_t j) const { return j / per_class; }
  std::size_t index_in_class(std::size_t j) const { return j % per_class; }
  std::span<const double> row(std::size_t j) const { return vectors.values().subspan(j * dim, dim); }
  // Projects every row back onto the unit sphere.
  void renormalize();
  bool fully_pushed() const;
};

struct HeadWeights {
  Tensor weights;  // num_classes x num_prototypes, no bias

  // 1 where the prototype belongs to the logit's class, -0.5 elsewhere.
  static HeadWeights init(std::size_t num_classes, std::size_t per_class);
  std::size_t num_classes() const { return weights.dim(0); }
  std::size_t num_prototypes() const { return weights.dim(1); }
  double at(std::size_t k, std::size_t j) const { return weights[k * num_prototypes() + j]; }
};

struct ForwardResult {
  Tensor latent;         // unit norm
  Tensor similarities;   // one per prototype
  Tensor logits;
  Tensor probabilities;
};

class ProtoEEGNet {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  ProtoEEGNet() = default;
  explicit ProtoEEGNet(ModelConfig config);

  // Copies share parameter storage; clone() does not.
  ProtoEEGNet clone() const;

  const ModelConfig& config() const { return config_; }
  Backbone& backbone() { return backbone_; }
  const Backbone& backbone() const { return backbone_; }
  PrototypeBank& prototypes() { return prototypes_; }
  const PrototypeBank& prototypes() const { return prototypes_; }
  HeadWeights& head() { return head_; }
  const HeadWeights& head() const { return head_; }
  std::string config_digest() const;

  static Tensor input_tensor(const EEGSample& sample, const BackboneConfig& config);

  Tensor embed(const Tensor& input) const;
  Tensor embed(const EEGSample& sample) const;
  ForwardResult forward(const EEGSample& sample) const;

  // Graph-free inference helpers.
  std::vector<double> latent_of(const EEGSample& sample) const;
  std::vector<double> probabilities_of(const EEGSample& sample) const;

 private:
  ModelConfig config_;
  Backbone backbone_;
  PrototypeBank prototypes_;
  HeadWeights head_;
};

// Plain-value forms of the prediction path.
std::vector<double> similarities(std::span<const double> latent, const PrototypeBank& bank);
std::vector<double> class_logits(std::span<const double> sims, const HeadWeights& head);
std::vector<double> class_probabilities(std::span<const double> sims, const HeadWeights& head);
// Row-major num_classes x num_prototypes matrix of sims[j] * w(k, j).
std::vector<double> points_contributed(std::span<const double> sims, const HeadWeights& head);

void save_model(const ProtoEEGNet& model, const std::string& path);
ProtoEEGNet load_model(const std::string& path);

}  // namespace protoeeg
