#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "protoeeg/errors.hpp"
#include "protoeeg/losses.hpp"

using namespace protoeeg;

namespace {

struct Batch {
  std::vector<ForwardResult> results;
  std::vector<std::vector<double>> latents;
  std::vector<std::size_t> labels;
};

Batch random_batch(std::size_t n, const PrototypeBank& bank, const HeadWeights& head, std::mt19937_64& rng) {
  Batch b;
  std::uniform_int_distribution<std::size_t> cls(0, bank.num_classes - 1);
  for (std::size_t i = 0; i < n; ++i) {
    b.latents.push_back(oracle::unit(bank.dim, rng));
    ForwardResult r;
    r.latent = Tensor::vector(b.latents.back());
    r.similarities = diff::linear(r.latent, bank.vectors);
    r.logits = diff::linear(r.similarities, head.weights);
    r.probabilities = diff::softmax(r.logits);
    b.results.push_back(r);
    b.labels.push_back(cls(rng));
  }
  return b;
}

HeadWeights random_head(std::mt19937_64& rng) {
  auto head = HeadWeights::init(9, 12);
  for (auto& v : head.weights.mutable_values()) v += 0.2 * std::normal_distribution<double>()(rng);
  return head;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("components and total match brute force on 100 random batches") {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<std::size_t> size(1, 16);
    std::uniform_real_distribution<double> coef(0.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
      const auto bank = PrototypeBank::init(9, 12, 128, 100 + trial);
      const auto head = random_head(rng);
      const auto batch = random_batch(size(rng), bank, head, rng);
      const LossCoefficients coefs{0.5 + coef(rng), coef(rng), coef(rng), coef(rng), coef(rng)};

      const auto ob = oracle::bank_of(bank);
      const std::vector<double> w(head.weights.values().begin(), head.weights.values().end());
      std::vector<std::vector<double>> sims;
      double ce = 0.0;
      for (std::size_t i = 0; i < batch.latents.size(); ++i) {
        sims.push_back(oracle::sims_of(batch.latents[i], ob));
        const auto z = oracle::logits_of(sims.back(), w, 9);
        ce += oracle::log_sum_exp(z) - z[batch.labels[i]];
      }
      ce /= static_cast<double>(sims.size());
      const double clst = oracle::cluster(sims, batch.labels, 12);
      const double sep = oracle::separation(sims, batch.labels, 12);
      const double ortho = oracle::orthogonality(ob);
      const double l1 = oracle::l1_offclass(w, 9, 12);

      std::vector<Tensor> latents;
      for (const auto& z : batch.latents) latents.push_back(Tensor::vector(z));
      CHECK(std::abs(cluster_loss(latents, batch.labels, bank).item() - clst) <= 1e-10);
      CHECK(std::abs(separation_loss(latents, batch.labels, bank).item() - sep) <= 1e-10);
      CHECK(std::abs(orthogonality_loss(bank).item() - ortho) <= 1e-10);
      CHECK(std::abs(l1_offclass(head, 12).item() - l1) <= 1e-10);

      const auto total = total_loss(batch.results, batch.labels, bank, head, coefs);
      const double expected =
          coefs.crs_ent * ce + coefs.clst * clst + coefs.sep * sep + coefs.ortho * ortho + coefs.l1 * l1;
      CHECK(std::abs(total.report.total - expected) <= 1e-10);
      CHECK(std::abs(total.report.cross_entropy - ce) <= 1e-10);
      const auto& r = total.report;
      CHECK(std::abs(r.total - (coefs.crs_ent * r.cross_entropy + coefs.clst * r.cluster + coefs.sep * r.separation +
                                coefs.ortho * r.orthogonality + coefs.l1 * r.l1)) <= 1e-12);
    }
  }

  TEST_CASE("fresh head L1 is exactly 432") {
    const auto head = HeadWeights::init(9, 12);
    CHECK(l1_offclass(head, 12).item() == 432.0);
  }

  TEST_CASE("cluster and separation edge cases") {
    const auto bank = PrototypeBank::init(9, 12, 128, 2);
    std::vector<Tensor> latents;
    std::vector<std::size_t> labels;
    for (std::size_t c = 0; c < 9; ++c) {
      const auto r = bank.row(c * 12 + c);
      latents.push_back(Tensor::vector({r.begin(), r.end()}));
      labels.push_back(c);
    }
    CHECK(std::abs(cluster_loss(latents, labels, bank).item() + 1.0) <= 1e-12);

    // One latent equal to an other-class prototype contributes 1.
    const auto r = bank.row(40);
    CHECK(std::abs(separation_loss({Tensor::vector({r.begin(), r.end()})}, {0}, bank).item() - 1.0) <= 1e-12);
  }

  TEST_CASE("orthogonality edge cases") {
    PrototypeBank bank;
    bank.num_classes = 2;
    bank.per_class = 2;
    bank.dim = 3;
    bank.vectors = Tensor::from({4, 3}, {1, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0});
    bank.provenance.resize(4);
    // Class 0 holds two identical vectors, class 1 is orthonormal.
    CHECK(orthogonality_loss(bank).item() == 2.0);
  }

  TEST_CASE("misuse is rejected") {
    const auto bank = PrototypeBank::init(3, 2, 8, 1);
    std::vector<Tensor> one{Tensor::vector(std::vector<double>(8, 0.5))};
    CHECK_THROWS_AS(cluster_loss(one, {0, 1}, bank), ContractError);
    CHECK_THROWS_AS(cluster_loss(one, {5}, bank), ContractError);
    LossCoefficients bad;
    bad.crs_ent = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    nlohmann::json j = LossCoefficients{};
    j["clust"] = 0.1;
    CHECK_THROWS_AS(j.get<LossCoefficients>(), ConfigError);
  }

  TEST_CASE("finite differences: total loss through the whole model") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      ProtoEEGNet model(oracle::small_model(9, 12, 200 + trial));
      for (auto& v : model.head().weights.mutable_values()) v += 0.1 * std::normal_distribution<double>()(rng);
      for (auto& b : model.backbone().blocks) {
        for (auto& v : b.gain.mutable_values()) v += 0.2 * std::normal_distribution<double>()(rng);
        for (auto& v : b.bias.mutable_values()) v += 0.2 * std::normal_distribution<double>()(rng);
      }
      const auto samples = oracle::random_samples(3, 16 * 6, 9, rng, 10 * trial);
      std::vector<std::size_t> labels;
      for (const auto& s : samples) labels.push_back(s.votes);
      const LossCoefficients coefs{1.25, 0.1, 0.2, 0.5, 0.01};
      auto f = [&] {
        std::vector<ForwardResult> batch;
        for (const auto& s : samples) batch.push_back(model.forward(s));
        return total_loss(batch, labels, model.prototypes(), model.head(), coefs).total;
      };
      auto params = model.backbone().parameters();
      params.push_back(model.prototypes().vectors);
      params.push_back(model.head().weights);
      CHECK(oracle::gradient_error(f, params) <= 1e-4);
    }
  }
}
