#pragma once

// Reference implementations used by the unit and acceptance tests. Nothing
// here calls the library routine it is meant to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <vector>

#include "protoeeg/dataset.hpp"
#include "protoeeg/model.hpp"
#include "protoeeg/ops.hpp"
#include "protoeeg/tensor.hpp"

namespace oracle {

using protoeeg::diff::Tensor;

inline std::vector<double> normal(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline Tensor param(protoeeg::diff::Shape shape, std::mt19937_64& rng, double sd = 1.0) {
  const auto n = protoeeg::diff::shape_size(shape);
  return Tensor::from(std::move(shape), normal(n, rng, sd), true);
}

// Redraws until every pair of entries is at least `gap` apart, so that a
// finite-difference step cannot cross a max or abs kink.
inline Tensor spread_param(protoeeg::diff::Shape shape, std::mt19937_64& rng, double gap) {
  for (;;) {
    auto t = param(shape, rng);
    auto v = t.values();
    bool ok = true;
    for (std::size_t i = 0; i < v.size() && ok; ++i) {
      ok = std::abs(v[i]) > gap;
      for (std::size_t j = i + 1; j < v.size() && ok; ++j) ok = std::abs(v[i] - v[j]) > gap;
    }
    if (ok) return t;
  }
}

inline std::vector<double> unit(std::size_t n, std::mt19937_64& rng) {
  auto v = normal(n, rng);
  double s = 0.0;
  for (double x : v) s += x * x;
  s = std::sqrt(s);
  for (auto& x : v) x /= s;
  return v;
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// ---- finite differences -------------------------------------------------

// Largest norm-wise relative error ||analytic - numeric|| / max(||a||, ||n||)
// over the parameter tensors. f builds the scalar from the current values.
inline double gradient_error(const std::function<Tensor()>& f, std::vector<Tensor> params, double h = 1e-5) {
  for (auto& p : params) p.zero_grad();
  protoeeg::diff::backward(f());
  double worst = 0.0;
  for (auto& p : params) {
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto v = p.mutable_values();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      double plus = 0.0, minus = 0.0;
      {
        protoeeg::diff::NoGradGuard guard;
        v[i] = keep + h;
        plus = f().item();
        v[i] = keep - h;
        minus = f().item();
      }
      v[i] = keep;
      const double numeric = (plus - minus) / (2.0 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    const double denom = std::sqrt(std::max(a2, n2));
    if (denom > 1e-300) worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  return worst;
}

// Scalar probe of a tensor-valued op: <out, r> for a fixed random r.
inline Tensor probe(const Tensor& out, const std::vector<double>& r) {
  const Tensor flat = protoeeg::diff::reshape(out, {out.size()});
  return protoeeg::diff::dot(flat, Tensor::vector(r));
}

// ---- losses -------------------------------------------------------------

struct Bank {
  std::size_t classes = 0, per_class = 0, dim = 0;
  std::vector<double> v;  // row-major (classes * per_class) x dim
};

inline Bank bank_of(const protoeeg::PrototypeBank& b) {
  return {b.num_classes, b.per_class, b.dim, {b.vectors.values().begin(), b.vectors.values().end()}};
}

inline std::vector<double> sims_of(const std::vector<double>& z, const Bank& b) {
  std::vector<double> s(b.classes * b.per_class);
  for (std::size_t j = 0; j < s.size(); ++j) s[j] = dot(&b.v[j * b.dim], z.data(), b.dim);
  return s;
}

inline double cluster(const std::vector<std::vector<double>>& sims, const std::vector<std::size_t>& y,
                      std::size_t per_class) {
  double total = 0.0;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < sims[i].size(); ++j) {
      if (j / per_class == y[i]) best = std::max(best, sims[i][j]);
    }
    total += best;
  }
  return -total / static_cast<double>(sims.size());
}

inline double separation(const std::vector<std::vector<double>>& sims, const std::vector<std::size_t>& y,
                         std::size_t per_class) {
  double total = 0.0;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < sims[i].size(); ++j) {
      if (j / per_class != y[i]) best = std::max(best, sims[i][j]);
    }
    total += best;
  }
  return total / static_cast<double>(sims.size());
}

inline double orthogonality(const Bank& b) {
  double total = 0.0;
  for (std::size_t c = 0; c < b.classes; ++c) {
    for (std::size_t l = 0; l < b.per_class; ++l) {
      for (std::size_t m = 0; m < b.per_class; ++m) {
        const double g = dot(&b.v[(c * b.per_class + l) * b.dim], &b.v[(c * b.per_class + m) * b.dim], b.dim);
        const double e = g - (l == m ? 1.0 : 0.0);
        total += e * e;
      }
    }
  }
  return total;
}

inline double l1_offclass(const std::vector<double>& w, std::size_t classes, std::size_t per_class) {
  const std::size_t m = classes * per_class;
  double total = 0.0;
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t j = 0; j < m; ++j) {
      if (j / per_class != k) total += std::abs(w[k * m + j]);
    }
  }
  return total;
}

inline std::vector<double> logits_of(const std::vector<double>& sims, const std::vector<double>& w,
                                     std::size_t classes) {
  const std::size_t m = sims.size();
  std::vector<double> out(classes);
  for (std::size_t k = 0; k < classes; ++k) out[k] = dot(&w[k * m], sims.data(), m);
  return out;
}

inline double log_sum_exp(const std::vector<double>& x) {
  const double hi = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - hi);
  return hi + std::log(s);
}

inline std::vector<double> softmax(const std::vector<double>& x) {
  const double lse = log_sum_exp(x);
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = std::exp(x[i] - lse);
  return p;
}

// ---- convex last-layer stage ---------------------------------------------

// Mean cross-entropy of the linear head plus l1 times the off-class L1 norm.
inline double last_layer_objective(const std::vector<std::vector<double>>& sims, const std::vector<std::size_t>& y,
                                   const std::vector<double>& w, std::size_t classes, std::size_t per_class,
                                   double l1) {
  double ce = 0.0;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    const auto z = logits_of(sims[i], w, classes);
    ce += log_sum_exp(z) - z[y[i]];
  }
  return ce / static_cast<double>(sims.size()) + l1 * l1_offclass(w, classes, per_class);
}

// Solves the same problem by writing each off-class weight as u - v with
// u, v >= 0, which turns the L1 term into a linear one, then running
// projected gradient descent with backtracking on the smooth reformulation.
inline double split_variable_solve(const std::vector<std::vector<double>>& sims, const std::vector<std::size_t>& y,
                                   std::vector<double> w0, std::size_t classes, std::size_t per_class, double l1,
                                   std::size_t iters = 200000) {
  const std::size_t m = classes * per_class, n = sims.size();
  const std::size_t nw = classes * m;
  auto off = [&](std::size_t idx) { return (idx % m) / per_class != idx / m; };
  // x = [w (on-class entries used), u, v]
  std::vector<double> x(3 * nw, 0.0);
  for (std::size_t i = 0; i < nw; ++i) {
    if (off(i)) {
      x[nw + i] = std::max(w0[i], 0.0);
      x[2 * nw + i] = std::max(-w0[i], 0.0);
    } else {
      x[i] = w0[i];
    }
  }
  auto weights = [&](const std::vector<double>& s) {
    std::vector<double> w(nw);
    for (std::size_t i = 0; i < nw; ++i) w[i] = off(i) ? s[nw + i] - s[2 * nw + i] : s[i];
    return w;
  };
  auto value = [&](const std::vector<double>& s) {
    const auto w = weights(s);
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto z = logits_of(sims[i], w, classes);
      f += log_sum_exp(z) - z[y[i]];
    }
    f /= static_cast<double>(n);
    for (std::size_t i = 0; i < nw; ++i) {
      if (off(i)) f += l1 * (s[nw + i] + s[2 * nw + i]);
    }
    return f;
  };
  auto gradient = [&](const std::vector<double>& s) {
    const auto w = weights(s);
    std::vector<double> gw(nw, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto p = softmax(logits_of(sims[i], w, classes));
      p[y[i]] -= 1.0;
      for (std::size_t k = 0; k < classes; ++k) {
        for (std::size_t j = 0; j < m; ++j) gw[k * m + j] += p[k] * sims[i][j] / static_cast<double>(n);
      }
    }
    std::vector<double> g(3 * nw, 0.0);
    for (std::size_t i = 0; i < nw; ++i) {
      if (off(i)) {
        g[nw + i] = gw[i] + l1;
        g[2 * nw + i] = -gw[i] + l1;
      } else {
        g[i] = gw[i];
      }
    }
    return g;
  };
  double t = 1.0;
  double fx = value(x);
  for (std::size_t it = 0; it < iters; ++it) {
    const auto g = gradient(x);
    std::vector<double> xn(x.size());
    double fn = 0.0;
    for (;;) {
      double lin = 0.0, quad = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        double v = x[i] - t * g[i];
        if (i >= nw) v = std::max(v, 0.0);
        xn[i] = v;
        lin += g[i] * (v - x[i]);
        quad += (v - x[i]) * (v - x[i]);
      }
      fn = value(xn);
      if (fn <= fx + lin + quad / (2.0 * t) + 1e-15) break;
      t *= 0.5;
    }
    const double decrease = fx - fn;
    x = xn;
    fx = fn;
    t *= 1.25;
    if (decrease >= 0.0 && decrease < 1e-15) break;
  }
  return fx;
}

// ---- evaluation -----------------------------------------------------------

// Pairwise count: P(score_pos > score_neg) + 0.5 P(tie).
inline double pairwise_auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// ---- push -----------------------------------------------------------------

struct PushTarget {
  std::uint64_t sample_id = 0;
  std::vector<double> latent;
};

// For every prototype, the same-class training latent of highest cosine
// similarity to the prototype as it stood before the push; ties go to the
// smaller sample id.
inline std::vector<PushTarget> exhaustive_push(const protoeeg::ProtoEEGNet& model,
                                               const std::vector<protoeeg::EEGSample>& train) {
  const auto bank = bank_of(model.prototypes());
  std::vector<std::vector<double>> z;
  for (const auto& s : train) z.push_back(model.latent_of(s));
  std::vector<PushTarget> out;
  for (std::size_t j = 0; j < bank.classes * bank.per_class; ++j) {
    const std::size_t c = j / bank.per_class;
    const double* p = &bank.v[j * bank.dim];
    double pn = std::sqrt(dot(p, p, bank.dim));
    double best = -std::numeric_limits<double>::infinity();
    std::size_t arg = train.size();
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (train[i].votes != c) continue;
      const double zn = std::sqrt(dot(z[i].data(), z[i].data(), bank.dim));
      const double cs = dot(p, z[i].data(), bank.dim) / (pn * zn);
      if (arg == train.size() || cs > best + 1e-12 ||
          (std::abs(cs - best) <= 1e-12 && train[i].sample_id < train[arg].sample_id)) {
        best = std::max(best, cs);
        arg = i;
      }
    }
    out.push_back({train[arg].sample_id, z[arg]});
  }
  return out;
}

// ---- small models ---------------------------------------------------------

// 16 x 6 input reduced to a 16-dimensional latent in two blocks.
inline protoeeg::ModelConfig small_model(std::size_t classes, std::size_t per_class, std::uint64_t seed,
                                         std::size_t latent = 16) {
  protoeeg::ModelConfig c;
  c.backbone.input_time = 16;
  c.backbone.input_channels = 6;
  c.backbone.blocks = {{4, 5, 3, 2, 1}, {latent, 6, 4, 1, 1}};
  c.num_classes = classes;
  c.prototypes_per_class = per_class;
  c.seed = seed;
  return c;
}

inline std::vector<protoeeg::EEGSample> random_samples(std::size_t n, std::size_t values, std::size_t classes,
                                                       std::mt19937_64& rng, std::uint64_t first_id = 0) {
  std::vector<protoeeg::EEGSample> out(n);
  std::normal_distribution<double> d(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].sample_id = first_id + i;
    out[i].votes = static_cast<std::uint8_t>(i % classes);
    out[i].values.resize(values);
    for (auto& v : out[i].values) v = static_cast<float>(d(rng));
  }
  return out;
}

// Class-dependent inputs: the label shifts the mean of one channel band, and
// a fraction of labels are then flipped so the classes overlap.
inline std::vector<protoeeg::EEGSample> toy_samples(std::size_t n, std::size_t time, std::size_t channels,
                                                    std::size_t classes, double flip, std::mt19937_64& rng) {
  std::vector<protoeeg::EEGSample> out(n);
  std::normal_distribution<double> d(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, classes - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i % classes;
    out[i].sample_id = i;
    out[i].values.resize(time * channels);
    for (std::size_t t = 0; t < time; ++t) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double bump = (c % classes == cls) ? 1.5 * std::sin(0.7 * static_cast<double>(t)) : 0.0;
        out[i].values[t * channels + c] = static_cast<float>(d(rng) + bump);
      }
    }
    out[i].votes = static_cast<std::uint8_t>(u(rng) < flip ? pick(rng) : cls);
  }
  return out;
}

}  // namespace oracle
