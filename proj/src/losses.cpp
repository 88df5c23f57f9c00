#include "protoeeg/losses.hpp"

#include <cmath>
#include <string>

#include "protoeeg/errors.hpp"
#include "protoeeg/json_util.hpp"

namespace protoeeg {

using nlohmann::json;

void LossCoefficients::validate() const {
  for (double v : {crs_ent, clst, sep, ortho, l1}) {
    if (!std::isfinite(v)) throw ConfigError("loss coefficients must be finite");
  }
  if (!(crs_ent > 0.0)) throw ConfigError("coefs.crs_ent must be positive");
}

void to_json(json& j, const LossCoefficients& c) {
  j = json{{"crs_ent", c.crs_ent}, {"clst", c.clst}, {"sep", c.sep}, {"ortho", c.ortho}, {"l1", c.l1}};
}

void from_json(const json& j, LossCoefficients& c) {
  const std::string ctx = "train.coefs";
  jsonutil::reject_unknown(j, {"crs_ent", "clst", "sep", "ortho", "l1"}, ctx);
  jsonutil::read(j, "crs_ent", c.crs_ent, ctx);
  jsonutil::read(j, "clst", c.clst, ctx);
  jsonutil::read(j, "sep", c.sep, ctx);
  jsonutil::read(j, "ortho", c.ortho, ctx);
  jsonutil::read(j, "l1", c.l1, ctx);
}

void to_json(json& j, const BatchLossReport& r) {
  j = json{{"total", r.total},
           {"cross_entropy", r.cross_entropy},
           {"cluster", r.cluster},
           {"separation", r.separation},
           {"orthogonality", r.orthogonality},
           {"l1", r.l1},
           {"batch_size", r.batch_size}};
}

namespace {

void check_batch(std::size_t n, const std::vector<std::size_t>& labels, const PrototypeBank& bank) {
  if (n == 0 || n != labels.size()) throw DimensionError("loss: batch and label counts differ or are empty");
  if (bank.per_class == 0) throw ConfigError("loss: a class has no prototypes");
  for (auto y : labels) {
    if (y >= bank.num_classes) throw IndexError("loss: label " + std::to_string(y) + " out of range");
  }
}

std::vector<std::size_t> class_members(const PrototypeBank& bank, std::size_t c, bool same) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < bank.size(); ++j) {
    if ((bank.class_of(j) == c) == same) idx.push_back(j);
  }
  return idx;
}

std::vector<Tensor> similarity_vectors(const std::vector<Tensor>& latents, const PrototypeBank& bank) {
  std::vector<Tensor> sims;
  sims.reserve(latents.size());
  for (const auto& z : latents) sims.push_back(diff::linear(z, bank.vectors));
  return sims;
}

}  // namespace

Tensor cluster_from_similarities(const std::vector<Tensor>& sims, const std::vector<std::size_t>& labels,
                                 const PrototypeBank& bank) {
  check_batch(sims.size(), labels, bank);
  std::vector<Tensor> best;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    best.push_back(diff::max_of(diff::gather(sims[i], class_members(bank, labels[i], true))));
  }
  return diff::scale(diff::mean(best), -1.0);
}

Tensor separation_from_similarities(const std::vector<Tensor>& sims, const std::vector<std::size_t>& labels,
                                    const PrototypeBank& bank) {
  check_batch(sims.size(), labels, bank);
  if (bank.num_classes < 2) throw ConfigError("separation loss needs prototypes of at least two classes");
  std::vector<Tensor> best;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    best.push_back(diff::max_of(diff::gather(sims[i], class_members(bank, labels[i], false))));
  }
  return diff::mean(best);
}

Tensor cluster_loss(const std::vector<Tensor>& latents, const std::vector<std::size_t>& labels,
                    const PrototypeBank& bank) {
  check_batch(latents.size(), labels, bank);
  return cluster_from_similarities(similarity_vectors(latents, bank), labels, bank);
}

Tensor separation_loss(const std::vector<Tensor>& latents, const std::vector<std::size_t>& labels,
                       const PrototypeBank& bank) {
  check_batch(latents.size(), labels, bank);
  if (bank.num_classes < 2) throw ConfigError("separation loss needs prototypes of at least two classes");
  return separation_from_similarities(similarity_vectors(latents, bank), labels, bank);
}

Tensor orthogonality_loss(const PrototypeBank& bank) {
  const std::size_t l = bank.per_class;
  std::vector<double> identity(l * l, 0.0);
  for (std::size_t i = 0; i < l; ++i) identity[i * l + i] = 1.0;
  const Tensor eye = Tensor::from({l, l}, identity);
  std::vector<Tensor> terms;
  for (std::size_t c = 0; c < bank.num_classes; ++c) {
    const Tensor block = diff::rows(bank.vectors, c * l, l);
    terms.push_back(diff::sum_squares(diff::sub(diff::matmul_nt(block, block), eye)));
  }
  return diff::sum(diff::concat(terms));
}

Tensor l1_offclass(const HeadWeights& head, std::size_t per_class) {
  const std::size_t k_count = head.num_classes(), n = head.num_prototypes();
  std::vector<bool> mask(k_count * n);
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t j = 0; j < n; ++j) mask[k * n + j] = (j / per_class) != k;
  }
  return diff::masked_abs_sum(head.weights, mask);
}

LossResult total_loss(const std::vector<ForwardResult>& batch, const std::vector<std::size_t>& labels,
                      const PrototypeBank& bank, const HeadWeights& head, const LossCoefficients& coefs) {
  check_batch(batch.size(), labels, bank);
  std::vector<Tensor> ce_terms, sims;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ce_terms.push_back(diff::cross_entropy(batch[i].probabilities, labels[i]));
    sims.push_back(batch[i].similarities);
  }
  const Tensor ce = diff::mean(ce_terms);
  const Tensor clst = cluster_from_similarities(sims, labels, bank);
  const Tensor sep = bank.num_classes >= 2 ? separation_from_similarities(sims, labels, bank) : Tensor::scalar(0.0);
  const Tensor ortho = orthogonality_loss(bank);
  const Tensor l1 = l1_offclass(head, bank.per_class);

  Tensor total = diff::scale(ce, coefs.crs_ent);
  total = diff::add(total, diff::scale(sep, coefs.sep));
  total = diff::add(total, diff::scale(clst, coefs.clst));
  total = diff::add(total, diff::scale(ortho, coefs.ortho));
  total = diff::add(total, diff::scale(l1, coefs.l1));

  LossResult out;
  out.total = total;
  out.report.total = total.item();
  out.report.cross_entropy = ce.item();
  out.report.cluster = clst.item();
  out.report.separation = sep.item();
  out.report.orthogonality = ortho.item();
  out.report.l1 = l1.item();
  out.report.batch_size = batch.size();
  return out;
}

}  // namespace protoeeg
