#include "protoeeg/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <sstream>

#include "protoeeg/errors.hpp"
#include "protoeeg/json_util.hpp"
#include "protoeeg/parallel.hpp"

namespace protoeeg {

using nlohmann::json;

namespace {

constexpr const char* kWarm = "warm";
constexpr const char* kSecondary = "secondary_warm";
constexpr const char* kJoint = "joint";

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("train.") + name + " must be positive");
}

std::vector<Tensor> feature_params(const ProtoEEGNet& m) { return m.backbone().parameters(); }

double offclass_mean_abs(std::span<const double> w, std::size_t num_classes, std::size_t per_class) {
  const std::size_t n = num_classes * per_class;
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j / per_class == k) continue;
      acc += std::abs(w[k * n + j]);
      ++count;
    }
  }
  return count == 0 ? 0.0 : acc / static_cast<double>(count);
}

// Smooth part of the convex objective and its gradient.
double smooth_part(const std::vector<double>& sims, const std::vector<std::size_t>& labels, std::span<const double> w,
                   std::size_t num_classes, std::size_t m, std::vector<double>* grad) {
  const std::size_t n = labels.size();
  if (grad) grad->assign(w.size(), 0.0);
  std::vector<double> q(num_classes);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* s = sims.data() + i * m;
    for (std::size_t k = 0; k < num_classes; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += w[k * m + j] * s[j];
      q[k] = acc;
    }
    const double top = *std::max_element(q.begin(), q.end());
    double z = 0.0;
    for (double v : q) z += std::exp(v - top);
    total += top + std::log(z) - q[labels[i]];
    if (grad) {
      for (std::size_t k = 0; k < num_classes; ++k) {
        const double r = std::exp(q[k] - top) / z - (k == labels[i] ? 1.0 : 0.0);
        double* g = grad->data() + k * m;
        for (std::size_t j = 0; j < m; ++j) g[j] += r * s[j];
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  if (grad) {
    for (double& g : *grad) g *= inv;
  }
  return total * inv;
}

double offclass_l1(std::span<const double> w, std::size_t num_classes, std::size_t per_class) {
  const std::size_t m = num_classes * per_class;
  double acc = 0.0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    for (std::size_t j = 0; j < m; ++j) {
      if (j / per_class != k) acc += std::abs(w[k * m + j]);
    }
  }
  return acc;
}

}  // namespace

void TrainConfig::validate() const {
  if (num_train_epochs < 1) throw ConfigError("train.num_train_epochs must be at least 1");
  if (num_warm_epochs < 0 || num_secondary_warm_epochs < 0) throw ConfigError("warm epoch counts must be >= 0");
  if (num_warm_epochs + num_secondary_warm_epochs > num_train_epochs) {
    throw ConfigError("num_warm_epochs + num_secondary_warm_epochs exceeds num_train_epochs");
  }
  if (push_epochs.empty()) throw ConfigError("train.push_epochs must not be empty");
  for (std::size_t i = 0; i < push_epochs.size(); ++i) {
    if (push_epochs[i] <= push_start) {
      throw ConfigError("push epoch " + std::to_string(push_epochs[i]) + " is not after push_start " +
                        std::to_string(push_start));
    }
    if (i > 0 && push_epochs[i] <= push_epochs[i - 1]) throw ConfigError("train.push_epochs must be increasing");
  }
  if (push_epochs.back() != num_train_epochs) {
    throw ConfigError("the final push epoch must equal num_train_epochs (" + std::to_string(num_train_epochs) + ")");
  }
  if (joint_lr_step_size < 1) throw ConfigError("train.joint_lr_step_size must be at least 1");
  if (!(joint_lr_gamma > 0.0 && joint_lr_gamma <= 1.0)) throw ConfigError("train.joint_lr_gamma must be in (0, 1]");
  require_positive(lr.warm_prototypes, "lr.warm_prototypes");
  require_positive(lr.secondary_prototypes, "lr.secondary_prototypes");
  require_positive(lr.secondary_features, "lr.secondary_features");
  require_positive(lr.joint_prototypes, "lr.joint_prototypes");
  require_positive(lr.joint_features, "lr.joint_features");
  require_positive(lr.joint_last_layer, "lr.joint_last_layer");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (train_push_batch_size < 1) throw ConfigError("train.train_push_batch_size must be at least 1");
  if (last_layer.max_iters < 1) throw ConfigError("train.last_layer.max_iters must be at least 1");
  require_positive(last_layer.tol, "last_layer.tol");
  coefs.validate();
}

std::string TrainConfig::stage_of(int epoch) const {
  if (epoch <= num_warm_epochs) return kWarm;
  if (epoch <= num_warm_epochs + num_secondary_warm_epochs) return kSecondary;
  return kJoint;
}

bool TrainConfig::is_push_epoch(int epoch) const {
  return std::find(push_epochs.begin(), push_epochs.end(), epoch) != push_epochs.end();
}

double TrainConfig::joint_lr_factor(int epoch) const {
  const int offset = std::max(0, epoch - num_warm_epochs - num_secondary_warm_epochs - 1);
  return std::pow(joint_lr_gamma, offset / joint_lr_step_size);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"num_train_epochs", c.num_train_epochs},
           {"num_warm_epochs", c.num_warm_epochs},
           {"num_secondary_warm_epochs", c.num_secondary_warm_epochs},
           {"push_start", c.push_start},
           {"push_epochs", c.push_epochs},
           {"joint_lr_step_size", c.joint_lr_step_size},
           {"joint_lr_gamma", c.joint_lr_gamma},
           {"lr",
            {{"warm_prototypes", c.lr.warm_prototypes},
             {"secondary_prototypes", c.lr.secondary_prototypes},
             {"secondary_features", c.lr.secondary_features},
             {"secondary_add_on_layers", c.lr.secondary_add_on_layers},
             {"joint_prototypes", c.lr.joint_prototypes},
             {"joint_features", c.lr.joint_features},
             {"joint_last_layer", c.lr.joint_last_layer},
             {"joint_add_on_layers", c.lr.joint_add_on_layers}}},
           {"batch_size", c.batch_size},
           {"train_push_batch_size", c.train_push_batch_size},
           {"coefs", c.coefs},
           {"last_layer", {{"max_iters", c.last_layer.max_iters}, {"tol", c.last_layer.tol}}},
           {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  using jsonutil::read;
  const std::string ctx = "train";
  jsonutil::reject_unknown(j,
                           {"num_train_epochs", "num_warm_epochs", "num_secondary_warm_epochs", "push_start",
                            "push_epochs", "joint_lr_step_size", "joint_lr_gamma", "lr", "batch_size",
                            "train_push_batch_size", "coefs", "last_layer", "seed"},
                           ctx);
  read(j, "num_train_epochs", c.num_train_epochs, ctx);
  read(j, "num_warm_epochs", c.num_warm_epochs, ctx);
  read(j, "num_secondary_warm_epochs", c.num_secondary_warm_epochs, ctx);
  read(j, "push_start", c.push_start, ctx);
  read(j, "push_epochs", c.push_epochs, ctx);
  read(j, "joint_lr_step_size", c.joint_lr_step_size, ctx);
  read(j, "joint_lr_gamma", c.joint_lr_gamma, ctx);
  read(j, "batch_size", c.batch_size, ctx);
  read(j, "train_push_batch_size", c.train_push_batch_size, ctx);
  read(j, "seed", c.seed, ctx);
  if (j.contains("lr")) {
    const auto& l = j.at("lr");
    const std::string lc = "train.lr";
    jsonutil::reject_unknown(l,
                             {"warm_prototypes", "secondary_prototypes", "secondary_features",
                              "secondary_add_on_layers", "joint_prototypes", "joint_features", "joint_last_layer",
                              "joint_add_on_layers"},
                             lc);
    read(l, "warm_prototypes", c.lr.warm_prototypes, lc);
    read(l, "secondary_prototypes", c.lr.secondary_prototypes, lc);
    read(l, "secondary_features", c.lr.secondary_features, lc);
    read(l, "secondary_add_on_layers", c.lr.secondary_add_on_layers, lc);
    read(l, "joint_prototypes", c.lr.joint_prototypes, lc);
    read(l, "joint_features", c.lr.joint_features, lc);
    read(l, "joint_last_layer", c.lr.joint_last_layer, lc);
    read(l, "joint_add_on_layers", c.lr.joint_add_on_layers, lc);
  }
  if (j.contains("coefs")) c.coefs = j.at("coefs").get<LossCoefficients>();
  if (j.contains("last_layer")) {
    const auto& l = j.at("last_layer");
    jsonutil::reject_unknown(l, {"max_iters", "tol"}, "train.last_layer");
    read(l, "max_iters", c.last_layer.max_iters, "train.last_layer");
    read(l, "tol", c.last_layer.tol, "train.last_layer");
  }
}

void to_json(json& j, const PushRecord& r) {
  j = json{{"prototype", r.prototype}, {"class", r.cls},           {"index", r.index},
           {"sample_id", r.sample_id}, {"similarity", r.similarity}, {"epoch", r.epoch}};
}

void to_json(json& j, const LastLayerReport& r) {
  j = json{{"iterations", r.iterations},
           {"converged", r.converged},
           {"objective_start", r.objective.empty() ? 0.0 : r.objective.front()},
           {"objective_end", r.objective.empty() ? 0.0 : r.objective.back()},
           {"offclass_mean_abs_before", r.offclass_mean_abs_before},
           {"offclass_mean_abs_after", r.offclass_mean_abs_after}};
}

void to_json(json& j, const EpochRecord& r) {
  j = json{{"epoch", r.epoch}, {"stage", r.stage}, {"loss", r.loss}, {"lr", r.lr}};
  j["val_accuracy"] = r.val_accuracy ? json(*r.val_accuracy) : json(nullptr);
  j["val_cross_entropy"] = r.val_cross_entropy ? json(*r.val_cross_entropy) : json(nullptr);
  j["pushes"] = r.pushes;
  j["last_layer"] = r.last_layer ? json(*r.last_layer) : json(nullptr);
  j["warnings"] = r.warnings;
}

std::vector<int> TrainHistory::push_epochs() const {
  std::vector<int> out;
  for (const auto& e : epochs) {
    if (!e.pushes.empty()) out.push_back(e.epoch);
  }
  return out;
}

std::string TrainHistory::to_json_lines() const {
  std::ostringstream out;
  for (const auto& e : epochs) out << json(e).dump() << '\n';
  return out.str();
}

double last_layer_objective(const std::vector<double>& sims, const std::vector<std::size_t>& labels,
                            std::span<const double> w, std::size_t num_classes, std::size_t per_class, double l1) {
  const std::size_t m = num_classes * per_class;
  if (w.size() != num_classes * m || sims.size() != labels.size() * m) {
    throw DimensionError("last_layer_objective: inconsistent sizes");
  }
  return smooth_part(sims, labels, w, num_classes, m, nullptr) + l1 * offclass_l1(w, num_classes, per_class);
}

Trainer::Trainer(ProtoEEGNet& model, TrainConfig config, std::vector<EEGSample> train, std::vector<EEGSample> val)
    : model_(model), config_(std::move(config)), train_(std::move(train)), val_(std::move(val)) {
  config_.validate();
  if (train_.empty()) throw ConfigError("the training split is empty");
  const std::size_t classes = model_.config().num_classes;
  for (const auto* set : {&train_, &val_}) {
    for (const auto& s : *set) {
      if (s.votes >= classes) {
        throw ContractError("sample " + std::to_string(s.sample_id) + " has label " + std::to_string(s.votes) +
                            " but the model has " + std::to_string(classes) + " classes");
      }
    }
  }
  for (const auto& s : train_) labels_.push_back(s.votes);
}

void Trainer::set_trainable(bool features, bool prototypes, bool head) {
  for (auto& p : model_.backbone().parameters()) p.set_requires_grad(features);
  model_.prototypes().vectors.set_requires_grad(prototypes);
  model_.head().weights.set_requires_grad(head);
}

EpochRecord Trainer::run_epoch(int epoch, const std::string& stage, diff::Adam& opt) {
  EpochRecord record;
  record.epoch = epoch;
  record.stage = stage;
  for (const auto& g : opt.groups()) record.lr[g.name] = g.lr;

  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);

  BatchLossReport sum;
  for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
    const std::size_t end = std::min(order.size(), start + config_.batch_size);
    std::vector<ForwardResult> batch;
    std::vector<std::size_t> labels;
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(model_.forward(train_[order[i]]));
      labels.push_back(labels_[order[i]]);
    }
    const auto loss = total_loss(batch, labels, model_.prototypes(), model_.head(), config_.coefs);
    if (!std::isfinite(loss.report.total)) {
      throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
    }
    diff::backward(loss.total);
    opt.step();
    opt.zero_grad();
    model_.prototypes().renormalize();

    const double n = static_cast<double>(end - start);
    sum.total += n * loss.report.total;
    sum.cross_entropy += n * loss.report.cross_entropy;
    sum.cluster += n * loss.report.cluster;
    sum.separation += n * loss.report.separation;
    sum.orthogonality += n * loss.report.orthogonality;
    sum.l1 += n * loss.report.l1;
    sum.batch_size += end - start;
  }
  const double inv = 1.0 / static_cast<double>(sum.batch_size);
  record.loss = {sum.total * inv,         sum.cross_entropy * inv, sum.cluster * inv, sum.separation * inv,
                 sum.orthogonality * inv, sum.l1 * inv,            config_.batch_size};
  set_trainable(false, false, false);
  return record;
}

void Trainer::finish_epoch(EpochRecord& record) {
  if (!val_.empty()) {
    std::vector<std::vector<double>> probs(val_.size());
    parallel_for(val_.size(), [&](std::size_t i) { probs[i] = model_.probabilities_of(val_[i]); });
    double correct = 0.0, ce = 0.0;
    for (std::size_t i = 0; i < val_.size(); ++i) {
      const auto& p = probs[i];
      const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
      if (best == val_[i].votes) correct += 1.0;
      ce -= std::log(std::max(p[val_[i].votes], diff::kLogFloor));
    }
    record.val_accuracy = correct / static_cast<double>(val_.size());
    record.val_cross_entropy = ce / static_cast<double>(val_.size());
  }
  if (on_epoch_) on_epoch_(record);
}

std::vector<EpochRecord> Trainer::run_warm_stage(int first_epoch, int epochs) {
  diff::Adam opt;
  opt.add_group("prototypes", {model_.prototypes().vectors}, config_.lr.warm_prototypes);
  std::vector<EpochRecord> out;
  for (int e = first_epoch; e < first_epoch + epochs; ++e) {
    set_trainable(false, true, false);
    out.push_back(run_epoch(e, kWarm, opt));
    finish_epoch(out.back());
  }
  return out;
}

std::vector<EpochRecord> Trainer::run_secondary_warm_stage(int first_epoch, int epochs) {
  diff::Adam opt;
  opt.add_group("prototypes", {model_.prototypes().vectors}, config_.lr.secondary_prototypes);
  opt.add_group("features", feature_params(model_), config_.lr.secondary_features);
  std::vector<EpochRecord> out;
  for (int e = first_epoch; e < first_epoch + epochs; ++e) {
    set_trainable(true, true, false);
    out.push_back(run_epoch(e, kSecondary, opt));
    finish_epoch(out.back());
  }
  return out;
}

std::vector<EpochRecord> Trainer::run_joint_stage(int first_epoch, int last_epoch) {
  if (!joint_opt_) {
    joint_opt_.emplace();
    joint_opt_->add_group("prototypes", {model_.prototypes().vectors}, config_.lr.joint_prototypes);
    joint_opt_->add_group("features", feature_params(model_), config_.lr.joint_features);
    joint_opt_->add_group("last_layer", {model_.head().weights}, config_.lr.joint_last_layer);
  }
  std::vector<EpochRecord> out;
  for (int e = first_epoch; e <= last_epoch; ++e) {
    const double f = config_.joint_lr_factor(e);
    joint_opt_->set_lr("prototypes", config_.lr.joint_prototypes * f);
    joint_opt_->set_lr("features", config_.lr.joint_features * f);
    joint_opt_->set_lr("last_layer", config_.lr.joint_last_layer * f);
    set_trainable(true, true, true);
    out.push_back(run_epoch(e, kJoint, *joint_opt_));
    finish_epoch(out.back());
  }
  return out;
}

std::vector<std::vector<double>> Trainer::train_latents() const {
  std::vector<std::vector<double>> latents(train_.size());
  parallel_for(train_.size(), [&](std::size_t i) { latents[i] = model_.latent_of(train_[i]); });
  return latents;
}

std::vector<PushRecord> Trainer::push_prototypes(int epoch) {
  auto& bank = model_.prototypes();
  std::vector<std::vector<std::size_t>> by_class(bank.num_classes);
  for (std::size_t i = 0; i < train_.size(); ++i) by_class[labels_[i]].push_back(i);
  for (std::size_t c = 0; c < bank.num_classes; ++c) {
    if (by_class[c].empty()) {
      throw ConfigError("cannot push: class " + std::to_string(c) + " has no training samples");
    }
  }

  // Latents are computed in chunks of train_push_batch_size; every sample is
  // independent, so chunking does not change any value.
  std::vector<std::vector<double>> latents(train_.size());
  for (std::size_t start = 0; start < train_.size(); start += config_.train_push_batch_size) {
    const std::size_t end = std::min(train_.size(), start + config_.train_push_batch_size);
    parallel_for(end - start, [&](std::size_t k) { latents[start + k] = model_.latent_of(train_[start + k]); });
  }

  std::vector<PushRecord> records;
  auto v = bank.vectors.mutable_values();
  for (std::size_t j = 0; j < bank.size(); ++j) {
    const std::size_t c = bank.class_of(j);
    std::size_t best = by_class[c].front();
    double best_sim = -2.0;
    for (std::size_t i : by_class[c]) {
      double s = 0.0;
      for (std::size_t d = 0; d < bank.dim; ++d) s += v[j * bank.dim + d] * latents[i][d];
      if (s > best_sim || (s == best_sim && train_[i].sample_id < train_[best].sample_id)) {
        best_sim = s;
        best = i;
      }
    }
    std::copy(latents[best].begin(), latents[best].end(), v.begin() + static_cast<std::ptrdiff_t>(j * bank.dim));
    bank.provenance[j] = PushProvenance{train_[best].sample_id, best_sim, epoch};
    records.push_back({j, c, bank.index_in_class(j), train_[best].sample_id, best_sim, epoch});
  }
  return records;
}

LastLayerReport Trainer::optimize_last_layer() { return optimize_last_layer(config_.coefs.l1, config_.last_layer); }

LastLayerReport Trainer::optimize_last_layer(double l1, const LastLayerConfig& cfg) {
  if (!(l1 >= 0.0) || !std::isfinite(l1)) throw ConfigError("l1 coefficient must be finite and >= 0");
  const auto& bank = model_.prototypes();
  const std::size_t kc = bank.num_classes, per = bank.per_class, m = bank.size();

  const auto latents = train_latents();
  std::vector<double> sims;
  sims.reserve(train_.size() * m);
  for (const auto& z : latents) {
    const auto s = similarities(z, bank);
    sims.insert(sims.end(), s.begin(), s.end());
  }

  auto w_tensor = model_.head().weights.mutable_values();
  std::vector<double> x(w_tensor.begin(), w_tensor.end());
  LastLayerReport report;
  report.offclass_mean_abs_before = offclass_mean_abs(x, kc, per);

  auto objective = [&](const std::vector<double>& w) {
    return smooth_part(sims, labels_, w, kc, m, nullptr) + l1 * offclass_l1(w, kc, per);
  };
  // z = prox(y - t g): soft-threshold on off-class entries only.
  auto prox_step = [&](const std::vector<double>& y, const std::vector<double>& g, double t) {
    std::vector<double> z(y.size());
    for (std::size_t k = 0; k < kc; ++k) {
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t idx = k * m + j;
        const double u = y[idx] - t * g[idx];
        if (j / per == k) {
          z[idx] = u;
        } else {
          const double a = std::abs(u) - t * l1;
          z[idx] = a > 0.0 ? std::copysign(a, u) : 0.0;
        }
      }
    }
    return z;
  };
  // Backtracking proximal step from y. Returns the step and updates t.
  std::vector<double> g;
  auto step_from = [&](const std::vector<double>& y, double& t) {
    const double fy = smooth_part(sims, labels_, y, kc, m, &g);
    for (int tries = 0; tries < 80; ++tries) {
      auto z = prox_step(y, g, t);
      double lin = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double d = z[i] - y[i];
        lin += g[i] * d;
        sq += d * d;
      }
      const double fz = smooth_part(sims, labels_, z, kc, m, nullptr);
      if (fz <= fy + lin + sq / (2.0 * t) + 1e-15 * std::abs(fy)) return z;
      t *= 0.5;
    }
    return y;
  };

  double fx = objective(x);
  report.objective.push_back(fx);
  std::vector<double> y = x;
  double theta = 1.0, t = 1.0;
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    t *= 1.5;
    auto z = step_from(y, t);
    double fz = objective(z);
    bool restarted = false;
    if (fz > fx) {
      // Momentum overshot; take a plain step from x instead.
      restarted = true;
      theta = 1.0;
      z = step_from(x, t);
      fz = objective(z);
    }
    ++report.iterations;
    if (fz > fx) {
      // No representable decrease remains.
      report.objective.push_back(fx);
      report.converged = true;
      break;
    }
    const double decrease = fx - fz;
    const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    y.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      y[i] = restarted ? z[i] : z[i] + ((theta - 1.0) / theta_next) * (z[i] - x[i]);
    }
    theta = restarted ? 1.0 : theta_next;
    x = std::move(z);
    fx = fz;
    report.objective.push_back(fx);
    if (decrease < cfg.tol) {
      report.converged = true;
      break;
    }
  }
  std::copy(x.begin(), x.end(), w_tensor.begin());
  report.offclass_mean_abs_after = offclass_mean_abs(x, kc, per);
  return report;
}

TrainHistory Trainer::train(const std::optional<std::string>& checkpoint_dir) {
  TrainHistory history;
  history.warm_end = config_.num_warm_epochs;
  history.secondary_warm_end = config_.num_warm_epochs + config_.num_secondary_warm_epochs;
  if (checkpoint_dir) std::filesystem::create_directories(*checkpoint_dir);

  auto after_epoch = [&](EpochRecord& rec) {
    if (config_.is_push_epoch(rec.epoch)) {
      rec.pushes = push_prototypes(rec.epoch);
      rec.last_layer = optimize_last_layer();
      if (!rec.last_layer->converged) {
        rec.warnings.push_back("last-layer optimization stopped at max_iters=" +
                               std::to_string(config_.last_layer.max_iters) + " without converging");
      }
      if (checkpoint_dir) {
        save_model(model_, (std::filesystem::path(*checkpoint_dir) / ("epoch_" + std::to_string(rec.epoch) + ".pegm"))
                               .string());
      }
    }
    history.epochs.push_back(rec);
  };

  // Epoch records are reported after any push so the callback sees them.
  auto callback = std::move(on_epoch_);
  on_epoch_ = nullptr;
  auto run = [&](std::vector<EpochRecord> recs) {
    for (auto& r : recs) {
      after_epoch(r);
      if (callback) callback(history.epochs.back());
    }
  };

  std::optional<diff::Adam> warm, secondary;
  for (int e = 1; e <= config_.num_train_epochs; ++e) {
    const auto stage = config_.stage_of(e);
    if (stage == kWarm) {
      if (!warm) {
        warm.emplace();
        warm->add_group("prototypes", {model_.prototypes().vectors}, config_.lr.warm_prototypes);
      }
      set_trainable(false, true, false);
      auto rec = run_epoch(e, kWarm, *warm);
      finish_epoch(rec);
      run({rec});
    } else if (stage == kSecondary) {
      if (!secondary) {
        secondary.emplace();
        secondary->add_group("prototypes", {model_.prototypes().vectors}, config_.lr.secondary_prototypes);
        secondary->add_group("features", feature_params(model_), config_.lr.secondary_features);
      }
      set_trainable(true, true, false);
      auto rec = run_epoch(e, kSecondary, *secondary);
      finish_epoch(rec);
      run({rec});
    } else {
      run(run_joint_stage(e, e));
    }
  }
  on_epoch_ = std::move(callback);
  if (checkpoint_dir) save_model(model_, (std::filesystem::path(*checkpoint_dir) / "final.pegm").string());
  return history;
}

TrainResult train(const TrainConfig& config, const ModelConfig& model_config, const LoadedDataset& data,
                  const std::optional<std::string>& checkpoint_dir) {
  ProtoEEGNet model(model_config);
  Trainer trainer(model, config, data.subset(Split::train), data.subset(Split::val));
  auto history = trainer.train(checkpoint_dir);
  return {std::move(model), std::move(history)};
}

}  // namespace protoeeg
