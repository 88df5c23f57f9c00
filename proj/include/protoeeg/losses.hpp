#pragma once

#include <cstddef>
#include <vector>

#include <json.hpp>

#include "protoeeg/model.hpp"

namespace protoeeg {

// Loss weights. `clst` multiplies the cluster loss, which already carries a
// leading minus, so a positive value rewards same-class similarity.
struct LossCoefficients {
  double crs_ent = 1.25;
  double clst = 0.1;
  double sep = 0.0;
  double ortho = 0.5;
  double l1 = 0.01;

  void validate() const;
};

void to_json(nlohmann::json& j, const LossCoefficients& c);
void from_json(const nlohmann::json& j, LossCoefficients& c);

struct BatchLossReport {
  double total = 0.0;
  double cross_entropy = 0.0;
  double cluster = 0.0;
  double separation = 0.0;
  double orthogonality = 0.0;
  double l1 = 0.0;
  std::size_t batch_size = 0;
};

void to_json(nlohmann::json& j, const BatchLossReport& r);

// -(1/N) sum_i max_{class(j) == y_i} sim_ij.
Tensor cluster_loss(const std::vector<Tensor>& latents, const std::vector<std::size_t>& labels,
                    const PrototypeBank& bank);
// (1/N) sum_i max_{class(j) != y_i} sim_ij.
Tensor separation_loss(const std::vector<Tensor>& latents, const std::vector<std::size_t>& labels,
                       const PrototypeBank& bank);
// Same terms from precomputed per-sample similarity vectors.
Tensor cluster_from_similarities(const std::vector<Tensor>& sims, const std::vector<std::size_t>& labels,
                                 const PrototypeBank& bank);
Tensor separation_from_similarities(const std::vector<Tensor>& sims, const std::vector<std::size_t>& labels,
                                    const PrototypeBank& bank);

// sum_c || P_c P_c^T - I ||_F^2 over each class's prototype block.
Tensor orthogonality_loss(const PrototypeBank& bank);

// Absolute sum of head weights connecting a logit to other-class prototypes.
Tensor l1_offclass(const HeadWeights& head, std::size_t per_class);

struct LossResult {
  Tensor total;
  BatchLossReport report;
};

LossResult total_loss(const std::vector<ForwardResult>& batch, const std::vector<std::size_t>& labels,
                      const PrototypeBank& bank, const HeadWeights& head, const LossCoefficients& coefs);

}  // namespace protoeeg
