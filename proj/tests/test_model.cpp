#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "protoeeg/errors.hpp"
#include "protoeeg/model.hpp"

using namespace protoeeg;
namespace fs = std::filesystem;

namespace {

EEGSample random_sample(std::mt19937_64& rng, std::uint64_t id = 0, double scale = 20.0) {
  EEGSample s;
  s.sample_id = id;
  s.values.resize(kTimeSteps * kChannels);
  std::normal_distribution<double> d(0.0, scale);
  for (auto& v : s.values) v = static_cast<float>(d(rng));
  return s;
}

// Step-by-step forward pass through the block table with plain loops.
std::vector<double> reference_latent(const ProtoEEGNet& model, const EEGSample& s) {
  const auto& cfg = model.config().backbone;
  std::size_t c_in = 1, h = cfg.input_time, w = cfg.input_channels;
  std::vector<double> x(s.values.begin(), s.values.end());
  for (const auto& b : model.backbone().blocks) {
    const auto& sp = b.spec;
    const std::size_t ho = (h - sp.kernel_h) / sp.stride_h + 1, wo = (w - sp.kernel_w) / sp.stride_w + 1;
    std::vector<double> y(sp.out_channels * ho * wo, 0.0);
    const auto k = b.kernels.values();
    for (std::size_t o = 0; o < sp.out_channels; ++o)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < c_in; ++c)
            for (std::size_t a = 0; a < sp.kernel_h; ++a)
              for (std::size_t e = 0; e < sp.kernel_w; ++e)
                acc += x[(c * h + i * sp.stride_h + a) * w + j * sp.stride_w + e] *
                       k[((o * c_in + c) * sp.kernel_h + a) * sp.kernel_w + e];
          y[(o * ho + i) * wo + j] = acc;
        }
    double mu = 0.0, var = 0.0;
    for (double v : y) mu += v;
    mu /= static_cast<double>(y.size());
    for (double v : y) var += (v - mu) * (v - mu);
    var /= static_cast<double>(y.size());
    const std::size_t per = ho * wo;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double n = (y[i] - mu) / std::sqrt(var + cfg.layer_norm_eps);
      const double v = b.gain[i / per] * n + b.bias[i / per];
      y[i] = v > 0.0 ? v : std::exp(v) - 1.0;
    }
    x = std::move(y);
    c_in = sp.out_channels;
    h = ho;
    w = wo;
  }
  double norm = 0.0;
  for (double v : x) norm += v * v;
  norm = std::sqrt(norm);
  for (auto& v : x) v /= norm;
  return x;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("protoeeg_test_model_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("standard backbone shapes") {
    const BackboneConfig cfg;
    const auto shapes = cfg.block_shapes();
    REQUIRE(shapes.size() == 4);
    CHECK(shapes[0] == std::array<std::size_t, 3>{16, 62, 17});
    CHECK(shapes[1] == std::array<std::size_t, 3>{32, 29, 7});
    CHECK(shapes[2] == std::array<std::size_t, 3>{64, 10, 3});
    CHECK(shapes[3] == std::array<std::size_t, 3>{128, 1, 1});
    CHECK(cfg.latent_dim() == 128);
    BackboneConfig bad;
    bad.blocks.pop_back();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("latent is unit norm and matches a loop-level forward pass") {
    ProtoEEGNet model(ModelConfig{});
    std::mt19937_64 rng(1);
    for (auto& b : model.backbone().blocks) {
      for (auto& g : b.gain.mutable_values()) g = 1.0 + 0.3 * std::normal_distribution<double>()(rng);
      for (auto& v : b.bias.mutable_values()) v = 0.2 * std::normal_distribution<double>()(rng);
    }
    for (int i = 0; i < 3; ++i) {
      const auto s = random_sample(rng, i);
      const auto z = model.latent_of(s);
      REQUIRE(z.size() == 128);
      double n = 0.0;
      for (double v : z) n += v * v;
      CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-9);
      const auto ref = reference_latent(model, s);
      double worst = 0.0;
      for (std::size_t d = 0; d < z.size(); ++d) worst = std::max(worst, std::abs(z[d] - ref[d]));
      CHECK(worst <= 1e-10);
      CHECK(model.latent_of(s) == z);
    }
  }

  TEST_CASE("non-finite and wrongly sized inputs are rejected") {
    ProtoEEGNet model(oracle::small_model(3, 2, 1));
    EEGSample s;
    s.values.assign(16 * 6, 1.0f);
    s.values[3] = std::nanf("");
    CHECK_THROWS_AS(model.latent_of(s), NumericError);
    s.values.resize(10);
    CHECK_THROWS_AS(model.latent_of(s), DimensionError);
  }

  TEST_CASE("prototype bank initialization") {
    const auto a = PrototypeBank::init(9, 12, 128, 5);
    const auto b = PrototypeBank::init(9, 12, 128, 5);
    CHECK(std::equal(a.vectors.values().begin(), a.vectors.values().end(), b.vectors.values().begin()));
    double mean_abs = 0.0;
    int pairs = 0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      const auto r = a.row(j);
      CHECK(std::abs(std::sqrt(oracle::dot(r.data(), r.data(), 128)) - 1.0) <= 1e-9);
      for (std::size_t k = j + 1; k < a.size(); ++k) {
        mean_abs += std::abs(oracle::dot(r.data(), a.row(k).data(), 128));
        ++pairs;
      }
      CHECK_FALSE(a.provenance[j].has_value());
    }
    CHECK(mean_abs / pairs < 0.3);
    CHECK_FALSE(a.fully_pushed());
  }

  TEST_CASE("head initialization pattern") {
    const auto h = HeadWeights::init(9, 12);
    CHECK(h.at(3, 3 * 12 + 5) == 1.0);
    CHECK(h.at(3, 7 * 12) == -0.5);
    for (std::size_t k = 0; k < 9; ++k) {
      int ones = 0, halves = 0;
      for (std::size_t j = 0; j < 108; ++j) {
        ones += h.at(k, j) == 1.0;
        halves += h.at(k, j) == -0.5;
      }
      CHECK(ones == 12);
      CHECK(halves == 96);
    }
  }

  TEST_CASE("similarities, logits and probabilities against dense oracles") {
    std::mt19937_64 rng(2);
    auto bank = PrototypeBank::init(9, 12, 128, 3);
    HeadWeights head{Tensor::from({9, 108}, oracle::normal(9 * 108, rng))};
    for (int trial = 0; trial < 20; ++trial) {
      const auto z = oracle::unit(128, rng);
      const auto sims = similarities(z, bank);
      for (std::size_t j = 0; j < 108; ++j) {
        const auto c = diff::cosine_similarity(Tensor::vector(z), Tensor::vector({bank.row(j).begin(), bank.row(j).end()}));
        CHECK(std::abs(sims[j] - c.item()) <= 1e-12);
        CHECK(std::abs(sims[j]) <= 1.0);
      }
      const std::vector<double> w(head.weights.values().begin(), head.weights.values().end());
      const auto ref = oracle::logits_of(sims, w, 9);
      const auto logits = class_logits(sims, head);
      for (std::size_t k = 0; k < 9; ++k) CHECK(std::abs(logits[k] - ref[k]) <= 1e-12);
      const auto p = class_probabilities(sims, head);
      double total = 0.0;
      for (double v : p) total += v;
      CHECK(std::abs(total - 1.0) <= 1e-12);

      const auto pts = points_contributed(sims, head);
      for (std::size_t k = 0; k < 9; ++k) {
        double row = 0.0;
        for (std::size_t j = 0; j < 108; ++j) {
          CHECK(pts[k * 108 + j] == sims[j] * head.at(k, j));
          row += pts[k * 108 + j];
        }
        CHECK(std::abs(row - logits[k]) <= 1e-12);
      }
    }
  }

  TEST_CASE("similarity and probability edge cases") {
    auto bank = PrototypeBank::init(9, 12, 128, 4);
    const auto r = bank.row(17);
    const auto sims = similarities({r.begin(), r.end()}, bank);
    CHECK(std::abs(sims[17] - 1.0) <= 1e-12);

    const auto head = HeadWeights::init(9, 12);
    const auto uniform = class_probabilities(std::vector<double>(108, 0.0), head);
    for (double p : uniform) CHECK(p == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
    for (double v : points_contributed(std::vector<double>(108, 0.0), head)) CHECK(v == 0.0);

    std::vector<double> one_hot(108, 0.0);
    one_hot[5 * 12 + 2] = 1.0;
    const auto p = class_probabilities(one_hot, head);
    CHECK(std::max_element(p.begin(), p.end()) - p.begin() == 5);

    HeadWeights single{Tensor::from({1, 1}, {1.273})};
    CHECK(points_contributed(std::vector<double>{0.8}, single)[0] == doctest::Approx(1.0184).epsilon(1e-14));
    CHECK_THROWS_AS(similarities(std::vector<double>(5, 0.0), bank), DimensionError);
  }

  TEST_CASE("forward graph agrees with the plain-value path") {
    ProtoEEGNet model(ModelConfig{});
    std::mt19937_64 rng(5);
    const auto s = random_sample(rng);
    const auto f = model.forward(s);
    const auto p = model.probabilities_of(s);
    for (std::size_t k = 0; k < 9; ++k) CHECK(std::abs(f.probabilities[k] - p[k]) <= 1e-12);
  }

  TEST_CASE("checkpoint round trip is bit-exact, provenance included") {
    const auto dir = scratch("roundtrip");
    ProtoEEGNet model(oracle::small_model(9, 12, 6));
    std::mt19937_64 rng(6);
    for (auto& v : model.head().weights.mutable_values()) v += 0.01 * std::normal_distribution<double>()(rng);
    model.prototypes().provenance[4] = PushProvenance{77, 0.93, 20};
    const auto path = (dir / "m.pegm").string();
    save_model(model, path);
    const auto back = load_model(path);
    CHECK(back.config_digest() == model.config_digest());
    CHECK(back.prototypes().provenance == model.prototypes().provenance);
    const auto samples = oracle::random_samples(100, 16 * 6, 9, rng);
    for (const auto& s : samples) CHECK(back.probabilities_of(s) == model.probabilities_of(s));
    save_model(back, (dir / "m2.pegm").string());
    std::ifstream a(path, std::ios::binary), b(dir / "m2.pegm", std::ios::binary);
    CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));
  }

  TEST_CASE("corrupt checkpoints raise format errors") {
    const auto dir = scratch("corrupt");
    ProtoEEGNet model(oracle::small_model(3, 2, 7));
    const auto path = dir / "m.pegm";
    save_model(model, path.string());
    std::ifstream in(path, std::ios::binary);
    const std::string good(std::istreambuf_iterator<char>(in), {});
    auto write = [&](const std::string& bytes) { std::ofstream(path, std::ios::binary) << bytes; };

    write(good.substr(0, good.size() - 10));
    CHECK_THROWS_AS(load_model(path.string()), FormatError);
    auto bad = good;
    bad[0] = 'Q';
    write(bad);
    CHECK_THROWS_AS(load_model(path.string()), FormatError);
    bad = good;
    bad[4] = 7;
    write(bad);
    CHECK_THROWS_AS(load_model(path.string()), FormatError);
    bad = good;
    bad[bad.size() - 20] ^= 0x10;
    write(bad);
    CHECK_THROWS_WITH_AS(load_model(path.string()), doctest::Contains("checksum"), FormatError);
    CHECK_THROWS_AS(load_model((dir / "missing.pegm").string()), FormatError);
  }

  TEST_CASE("clone does not share storage") {
    ProtoEEGNet model(oracle::small_model(3, 2, 8));
    auto copy = model;
    auto deep = model.clone();
    model.head().weights.mutable_values()[0] = 42.0;
    CHECK(copy.head().at(0, 0) == 42.0);
    CHECK(deep.head().at(0, 0) == 1.0);
    CHECK(deep.head().weights.requires_grad() == model.head().weights.requires_grad());
  }

  TEST_CASE("model config JSON is strict") {
    nlohmann::json j = ModelConfig{};
    CHECK(nlohmann::json(j.get<ModelConfig>()) == j);
    j["extra"] = true;
    CHECK_THROWS_AS(j.get<ModelConfig>(), ConfigError);
  }
}
