#include "protoeeg/model.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "binary_io.hpp"
#include "protoeeg/errors.hpp"
#include "protoeeg/json_util.hpp"

namespace protoeeg {

using nlohmann::json;

namespace {

constexpr char kModelMagic[4] = {'P', 'E', 'G', 'M'};

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

std::size_t conv_extent(std::size_t in, std::size_t kernel, std::size_t stride) {
  if (kernel > in || kernel == 0 || stride == 0) return 0;
  return (in - kernel) / stride + 1;
}

}  // namespace

std::vector<ConvBlockSpec> BackboneConfig::standard_blocks() {
  return {{16, 5, 5, 2, 2}, {32, 5, 4, 2, 2}, {64, 10, 3, 2, 2}, {128, 10, 3, 1, 1}};
}

std::vector<std::array<std::size_t, 3>> BackboneConfig::block_shapes() const {
  std::vector<std::array<std::size_t, 3>> shapes;
  std::size_t c = 1, h = input_time, w = input_channels;
  for (const auto& b : blocks) {
    h = conv_extent(h, b.kernel_h, b.stride_h);
    w = conv_extent(w, b.kernel_w, b.stride_w);
    c = b.out_channels;
    shapes.push_back({c, h, w});
  }
  return shapes;
}

void BackboneConfig::validate() const {
  if (blocks.empty()) throw ConfigError("backbone needs at least one block");
  if (!(layer_norm_eps > 0.0)) throw ConfigError("layer_norm_eps must be positive");
  for (const auto& b : blocks) {
    if (b.out_channels == 0 || b.kernel_h == 0 || b.kernel_w == 0 || b.stride_h == 0 || b.stride_w == 0) {
      throw ConfigError("backbone block extents and strides must be positive");
    }
  }
  for (const auto& s : block_shapes()) {
    if (s[1] == 0 || s[2] == 0) throw ConfigError("backbone kernels exceed the feature map");
  }
  const auto last = block_shapes().back();
  if (last[1] != 1 || last[2] != 1) {
    throw ConfigError("backbone must reduce the input to latent x 1 x 1, got " + std::to_string(last[0]) + "x" +
                      std::to_string(last[1]) + "x" + std::to_string(last[2]));
  }
}

void ModelConfig::validate() const {
  backbone.validate();
  if (num_classes < 2) throw ConfigError("need at least two classes");
  if (prototypes_per_class < 1) throw ConfigError("need at least one prototype per class");
}

void to_json(json& j, const ModelConfig& c) {
  json blocks = json::array();
  for (const auto& b : c.backbone.blocks) {
    blocks.push_back({{"out_channels", b.out_channels},
                      {"kernel", {b.kernel_h, b.kernel_w}},
                      {"stride", {b.stride_h, b.stride_w}}});
  }
  j = json{{"input_time", c.backbone.input_time},
           {"input_channels", c.backbone.input_channels},
           {"blocks", blocks},
           {"layer_norm_eps", c.backbone.layer_norm_eps},
           {"num_classes", c.num_classes},
           {"prototypes_per_class", c.prototypes_per_class},
           {"seed", c.seed}};
}

void from_json(const json& j, ModelConfig& c) {
  using jsonutil::read;
  const std::string ctx = "model";
  jsonutil::reject_unknown(
      j, {"input_time", "input_channels", "blocks", "layer_norm_eps", "num_classes", "prototypes_per_class", "seed"},
      ctx);
  read(j, "input_time", c.backbone.input_time, ctx);
  read(j, "input_channels", c.backbone.input_channels, ctx);
  read(j, "layer_norm_eps", c.backbone.layer_norm_eps, ctx);
  read(j, "num_classes", c.num_classes, ctx);
  read(j, "prototypes_per_class", c.prototypes_per_class, ctx);
  read(j, "seed", c.seed, ctx);
  if (j.contains("blocks")) {
    c.backbone.blocks.clear();
    for (const auto& b : j.at("blocks")) {
      jsonutil::reject_unknown(b, {"out_channels", "kernel", "stride"}, "model.blocks");
      ConvBlockSpec spec;
      std::vector<std::size_t> kernel{1, 1}, stride{1, 1};
      read(b, "out_channels", spec.out_channels, "model.blocks");
      read(b, "kernel", kernel, "model.blocks");
      read(b, "stride", stride, "model.blocks");
      if (kernel.size() != 2 || stride.size() != 2) throw ConfigError("model.blocks kernel/stride must be pairs");
      spec.kernel_h = kernel[0];
      spec.kernel_w = kernel[1];
      spec.stride_h = stride[0];
      spec.stride_w = stride[1];
      c.backbone.blocks.push_back(spec);
    }
  }
}

Backbone Backbone::init(const BackboneConfig& config, std::uint64_t seed) {
  config.validate();
  Backbone bb;
  bb.config = config;
  auto rng = stream_rng(seed, 1);
  std::size_t in_channels = 1;
  for (const auto& spec : config.blocks) {
    const std::size_t fan_in = in_channels * spec.kernel_h * spec.kernel_w;
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<double> k(spec.out_channels * fan_in);
    for (auto& v : k) v = normal(rng);
    Block block;
    block.spec = spec;
    block.kernels =
        Tensor::from({spec.out_channels, in_channels, spec.kernel_h, spec.kernel_w}, std::move(k), true);
    block.gain = Tensor::full({spec.out_channels}, 1.0, true);
    block.bias = Tensor::zeros({spec.out_channels}, true);
    bb.blocks.push_back(std::move(block));
    in_channels = spec.out_channels;
  }
  return bb;
}

Tensor Backbone::features(const Tensor& input) const {
  Tensor x = input;
  for (const auto& b : blocks) {
    x = diff::conv2d_valid(x, b.kernels, {b.spec.stride_h, b.spec.stride_w});
    x = diff::layer_norm(x, b.gain, b.bias, config.layer_norm_eps);
    x = diff::elu(x);
  }
  return diff::reshape(x, {x.size()});
}

std::vector<Tensor> Backbone::parameters() const {
  std::vector<Tensor> out;
  for (const auto& b : blocks) {
    out.push_back(b.kernels);
    out.push_back(b.gain);
    out.push_back(b.bias);
  }
  return out;
}

PrototypeBank PrototypeBank::init(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                                  std::uint64_t seed) {
  PrototypeBank bank;
  bank.num_classes = num_classes;
  bank.per_class = per_class;
  bank.dim = dim;
  auto rng = stream_rng(seed, 2);
  std::normal_distribution<double> normal;
  std::vector<double> v(num_classes * per_class * dim);
  for (auto& x : v) x = normal(rng);
  bank.vectors = Tensor::from({num_classes * per_class, dim}, std::move(v), true);
  bank.provenance.assign(bank.size(), std::nullopt);
  bank.renormalize();
  return bank;
}

void PrototypeBank::renormalize() {
  auto v = vectors.mutable_values();
  for (std::size_t j = 0; j < size(); ++j) {
    double n2 = 0.0;
    for (std::size_t d = 0; d < dim; ++d) n2 += v[j * dim + d] * v[j * dim + d];
    const double n = std::sqrt(n2);
    if (n <= diff::kMinNorm) throw DegenerateInputError("prototype " + std::to_string(j) + " collapsed to zero");
    for (std::size_t d = 0; d < dim; ++d) v[j * dim + d] /= n;
  }
}

bool PrototypeBank::fully_pushed() const {
  for (const auto& p : provenance) {
    if (!p) return false;
  }
  return true;
}

HeadWeights HeadWeights::init(std::size_t num_classes, std::size_t per_class) {
  const std::size_t n = num_classes * per_class;
  std::vector<double> w(num_classes * n);
  for (std::size_t k = 0; k < num_classes; ++k) {
    for (std::size_t j = 0; j < n; ++j) w[k * n + j] = (j / per_class == k) ? 1.0 : -0.5;
  }
  return {Tensor::from({num_classes, n}, std::move(w), true)};
}

ProtoEEGNet::ProtoEEGNet(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  backbone_ = Backbone::init(config_.backbone, config_.seed);
  prototypes_ = PrototypeBank::init(config_.num_classes, config_.prototypes_per_class, config_.backbone.latent_dim(),
                                    config_.seed);
  head_ = HeadWeights::init(config_.num_classes, config_.prototypes_per_class);
}

ProtoEEGNet ProtoEEGNet::clone() const {
  ProtoEEGNet out;
  out.config_ = config_;
  out.backbone_ = backbone_;
  for (auto& b : out.backbone_.blocks) {
    b.kernels = b.kernels.clone(b.kernels.requires_grad());
    b.gain = b.gain.clone(b.gain.requires_grad());
    b.bias = b.bias.clone(b.bias.requires_grad());
  }
  out.prototypes_ = prototypes_;
  out.prototypes_.vectors = prototypes_.vectors.clone(prototypes_.vectors.requires_grad());
  out.head_.weights = head_.weights.clone(head_.weights.requires_grad());
  return out;
}

std::string ProtoEEGNet::config_digest() const { return protoeeg::config_digest(json(config_)); }

Tensor ProtoEEGNet::input_tensor(const EEGSample& sample, const BackboneConfig& config) {
  const std::size_t n = config.input_time * config.input_channels;
  if (sample.values.size() != n) {
    throw DimensionError("sample " + std::to_string(sample.sample_id) + " has " +
                         std::to_string(sample.values.size()) + " values, model expects " + std::to_string(n));
  }
  std::vector<double> v(sample.values.begin(), sample.values.end());
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError("sample " + std::to_string(sample.sample_id) + " is not finite");
  }
  return Tensor::from({1, config.input_time, config.input_channels}, std::move(v));
}

Tensor ProtoEEGNet::embed(const Tensor& input) const {
  const Tensor raw = backbone_.features(input);
  return diff::l2_normalize(raw);  // throws on near-zero latents
}

Tensor ProtoEEGNet::embed(const EEGSample& sample) const { return embed(input_tensor(sample, config_.backbone)); }

ForwardResult ProtoEEGNet::forward(const EEGSample& sample) const {
  ForwardResult r;
  r.latent = embed(sample);
  r.similarities = diff::linear(r.latent, prototypes_.vectors);
  r.logits = diff::linear(r.similarities, head_.weights);
  r.probabilities = diff::softmax(r.logits);
  return r;
}

std::vector<double> ProtoEEGNet::latent_of(const EEGSample& sample) const {
  diff::NoGradGuard guard;
  const Tensor z = embed(sample);
  return {z.values().begin(), z.values().end()};
}

std::vector<double> ProtoEEGNet::probabilities_of(const EEGSample& sample) const {
  diff::NoGradGuard guard;
  const auto r = forward(sample);
  return {r.probabilities.values().begin(), r.probabilities.values().end()};
}

std::vector<double> similarities(std::span<const double> latent, const PrototypeBank& bank) {
  if (latent.size() != bank.dim) throw DimensionError("latent dimension does not match the prototype bank");
  std::vector<double> sims(bank.size());
  for (std::size_t j = 0; j < bank.size(); ++j) {
    const auto p = bank.row(j);
    double acc = 0.0;
    for (std::size_t d = 0; d < bank.dim; ++d) acc += p[d] * latent[d];
    sims[j] = acc;
  }
  return sims;
}

std::vector<double> class_logits(std::span<const double> sims, const HeadWeights& head) {
  const std::size_t k_count = head.num_classes(), n = head.num_prototypes();
  if (sims.size() != n) throw DimensionError("similarity vector does not match the head");
  const auto w = head.weights.values();
  std::vector<double> q(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += w[k * n + j] * sims[j];
    q[k] = acc;
  }
  return q;
}

std::vector<double> class_probabilities(std::span<const double> sims, const HeadWeights& head) {
  const auto q = class_logits(sims, head);
  diff::NoGradGuard guard;
  const auto p = diff::softmax(Tensor::vector(q));
  return {p.values().begin(), p.values().end()};
}

std::vector<double> points_contributed(std::span<const double> sims, const HeadWeights& head) {
  const std::size_t k_count = head.num_classes(), n = head.num_prototypes();
  if (sims.size() != n) throw DimensionError("similarity vector does not match the head");
  const auto w = head.weights.values();
  std::vector<double> points(k_count * n);
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t j = 0; j < n; ++j) points[k * n + j] = w[k * n + j] * sims[j];
  }
  return points;
}

namespace {

struct NamedBlock {
  std::string name;
  Tensor tensor;
};

std::vector<NamedBlock> parameter_blocks(const ProtoEEGNet& model) {
  std::vector<NamedBlock> out;
  for (std::size_t i = 0; i < model.backbone().blocks.size(); ++i) {
    const auto& b = model.backbone().blocks[i];
    const std::string p = "backbone." + std::to_string(i);
    out.push_back({p + ".kernels", b.kernels});
    out.push_back({p + ".gain", b.gain});
    out.push_back({p + ".bias", b.bias});
  }
  out.push_back({"prototypes", model.prototypes().vectors});
  out.push_back({"head", model.head().weights});
  return out;
}

}  // namespace

void save_model(const ProtoEEGNet& model, const std::string& path) {
  json header;
  header["format_version"] = ProtoEEGNet::kFormatVersion;
  header["config"] = model.config();
  header["config_digest"] = model.config_digest();
  json blocks = json::array();
  for (const auto& b : parameter_blocks(model)) blocks.push_back({{"name", b.name}, {"shape", b.tensor.shape()}});
  header["parameter_blocks"] = blocks;
  json provenance = json::array();
  const auto& bank = model.prototypes();
  for (std::size_t j = 0; j < bank.size(); ++j) {
    if (!bank.provenance[j]) {
      provenance.push_back(nullptr);
      continue;
    }
    const auto& p = *bank.provenance[j];
    provenance.push_back({{"prototype", j},
                          {"class", bank.class_of(j)},
                          {"index", bank.index_in_class(j)},
                          {"sample_id", p.sample_id},
                          {"similarity", p.similarity},
                          {"epoch", p.epoch}});
  }
  header["provenance"] = provenance;

  const std::string text = header.dump();
  io::Writer w;
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(kModelMagic), 4});
  w.put<std::uint32_t>(ProtoEEGNet::kFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.put_string(text);
  for (const auto& b : parameter_blocks(model)) {
    for (double v : b.tensor.values()) w.put<double>(v);
  }
  const std::uint32_t crc = io::crc32_of(w.bytes());
  w.put<std::uint32_t>(crc);
  io::write_file(path, w.bytes());
}

ProtoEEGNet load_model(const std::string& path) {
  const auto bytes = io::read_file(path);
  if (bytes.size() < 4) throw FormatError("truncated file while reading 'magic'");
  io::Reader in(bytes);
  const auto magic = in.get_bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kModelMagic)) throw FormatError("bad magic bytes in '" + path + "'");
  const auto version = in.get<std::uint32_t>("version");
  if (version != ProtoEEGNet::kFormatVersion) throw FormatError("unsupported model version " + std::to_string(version));
  const auto header_len = in.get<std::uint32_t>("header_length");
  const auto header_bytes = in.get_bytes(header_len, "header");
  json header;
  try {
    header = json::parse(header_bytes.begin(), header_bytes.end());
  } catch (const json::exception& e) {
    throw FormatError(std::string("model header is not valid JSON: ") + e.what());
  }

  ModelConfig config;
  std::vector<json> provenance;
  try {
    config = header.at("config").get<ModelConfig>();
    provenance = header.at("provenance").get<std::vector<json>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("model header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model header: ") + e.what());
  }
  ProtoEEGNet model(config);

  auto blocks = parameter_blocks(model);
  const auto declared = header.at("parameter_blocks");
  if (declared.size() != blocks.size()) throw FormatError("parameter block count mismatch");
  std::size_t total = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (declared[i].at("shape").get<diff::Shape>() != blocks[i].tensor.shape()) {
      throw FormatError("shape mismatch for block '" + blocks[i].name + "'");
    }
    total += blocks[i].tensor.size();
  }
  in.require(total * sizeof(double), "parameters");
  if (in.remaining() < total * sizeof(double) + 4) throw FormatError("truncated file while reading 'checksum'");
  for (auto& b : blocks) {
    auto dst = b.tensor.mutable_values();
    const auto raw = in.get_bytes(dst.size() * sizeof(double), "parameters");
    std::memcpy(dst.data(), raw.data(), raw.size());
  }
  const std::size_t body = in.offset();
  const auto stored = in.get<std::uint32_t>("checksum");
  if (in.remaining() != 0) throw FormatError("trailing bytes after 'checksum'");
  if (stored != io::crc32_of(std::span<const std::uint8_t>(bytes).first(body))) {
    throw FormatError("checksum mismatch in '" + path + "'");
  }

  auto& bank = model.prototypes();
  if (provenance.size() != bank.size()) throw FormatError("provenance count mismatch");
  for (std::size_t j = 0; j < bank.size(); ++j) {
    if (provenance[j].is_null()) continue;
    PushProvenance p;
    p.sample_id = provenance[j].at("sample_id").get<std::uint64_t>();
    p.similarity = provenance[j].at("similarity").get<double>();
    p.epoch = provenance[j].at("epoch").get<int>();
    bank.provenance[j] = p;
  }
  return model;
}

}  // namespace protoeeg
