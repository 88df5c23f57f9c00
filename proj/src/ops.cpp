#include "protoeeg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "kernels.hpp"
#include "protoeeg/errors.hpp"

namespace protoeeg::diff {

using detail::Node;

namespace {

// Builds an output node. The backward closure is attached only when some
// input participates in differentiation.
template <typename Backward>
Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
                   Backward&& bw) {
  auto out = std::make_shared<Node>();
  out->shape = std::move(shape);
  out->value = std::move(value);
  if (grad_mode_enabled()) {
    for (const Tensor* in : inputs) {
      if (in->requires_grad()) out->requires_grad = true;
    }
  }
  if (out->requires_grad) {
    for (const Tensor* in : inputs) out->parents.push_back(in->node());
    Node* self = out.get();
    out->backward_fn = [self, fn = std::forward<Backward>(bw)]() { fn(*self); };
  }
  return Tensor::wrap(std::move(out));
}

Node* raw(const Tensor& t) { return t.node().get(); }

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
  }
}

void require_same_size(const Tensor& a, const Tensor& b, const char* what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": size mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

double norm_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

Tensor conv2d_valid(const Tensor& input, const Tensor& kernels, Stride stride) {
  require_rank(input, 3, "conv2d_valid input");
  require_rank(kernels, 4, "conv2d_valid kernels");
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != cin) {
    throw DimensionError("conv2d_valid: kernels expect " + std::to_string(kernels.dim(1)) + " input channels, got " +
                         std::to_string(cin));
  }
  if (stride.h < 1 || stride.w < 1) throw ConfigError("conv2d_valid: strides must be >= 1");
  if (kh > h || kw > w) throw DimensionError("conv2d_valid: kernel larger than input");

  const std::size_t oh = (h - kh) / stride.h + 1;
  const std::size_t ow = (w - kw) / stride.w + 1;
  const std::size_t positions = oh * ow;
  const std::size_t patch = cin * kh * kw;

  // Transposed im2col: patches[p][r], p indexes output position (y, x) and
  // r indexes (ci, a, b). Every inner loop below then runs over r.
  auto patches = std::make_shared<std::vector<double>>(positions * patch);
  const auto in = input.values();
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double* dst = patches->data() + (y * ow + x) * patch;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t a = 0; a < kh; ++a) {
          const double* src = in.data() + (ci * h + y * stride.h + a) * w + x * stride.w;
          std::copy(src, src + kw, dst);
          dst += kw;
        }
      }
    }
  }

  std::vector<double> out(cout * positions);
  kernels::dot_rows(kernels.values().data(), patches->data(), out.data(), cout, positions, patch);

  Node* in_node = raw(input);
  Node* k_node = raw(kernels);
  return make_result(
      Shape{cout, oh, ow}, std::move(out), {&input, &kernels},
      [=](Node& self) {
        const double* g = self.grad.data();
        if (k_node->requires_grad) {
          kernels::accumulate_rows(g, patches->data(), k_node->grad.data(), cout, positions, patch);
        }
        if (in_node->requires_grad) {
          std::vector<double> g_t(positions * cout);
          for (std::size_t co = 0; co < cout; ++co) {
            for (std::size_t p = 0; p < positions; ++p) g_t[p * cout + co] = g[co * positions + p];
          }
          std::vector<double> dpatches(positions * patch, 0.0);
          kernels::accumulate_rows(g_t.data(), k_node->value.data(), dpatches.data(), positions, cout, patch);
          double* di = in_node->grad.data();
          for (std::size_t p = 0; p < positions; ++p) {
            const std::size_t y = p / ow, x = p % ow;
            const double* src = dpatches.data() + p * patch;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              for (std::size_t a = 0; a < kh; ++a) {
                double* dst = di + (ci * h + y * stride.h + a) * w + x * stride.w;
                for (std::size_t b = 0; b < kw; ++b) dst[b] += src[b];
                src += kw;
              }
            }
          }
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t channels = x.dim(0);
  if (gain.size() != channels || bias.size() != channels) {
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(channels) + " entries");
  }
  const std::size_t n = x.size();
  const std::size_t per_channel = n / channels;
  const auto xv = x.values();

  double mu = 0.0;
  for (double v : xv) mu += v;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double v : xv) var += (v - mu) * (v - mu);
  var /= static_cast<double>(n);
  const double inv_std = 1.0 / std::sqrt(var + eps);

  auto xhat = std::make_shared<std::vector<double>>(n);
  std::vector<double> out(n);
  const auto g = gain.values();
  const auto b = bias.values();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = c * per_channel; i < (c + 1) * per_channel; ++i) {
      (*xhat)[i] = (xv[i] - mu) * inv_std;
      out[i] = g[c] * (*xhat)[i] + b[c];
    }
  }

  Node* xn = raw(x);
  Node* gn = raw(gain);
  Node* bn = raw(bias);
  return make_result(x.shape(), std::move(out), {&x, &gain, &bias}, [=](Node& self) {
    const auto& dy = self.grad;
    if (gn->requires_grad || bn->requires_grad) {
      for (std::size_t c = 0; c < channels; ++c) {
        double dg = 0.0, db = 0.0;
        for (std::size_t i = c * per_channel; i < (c + 1) * per_channel; ++i) {
          dg += dy[i] * (*xhat)[i];
          db += dy[i];
        }
        if (gn->requires_grad) gn->grad[c] += dg;
        if (bn->requires_grad) bn->grad[c] += db;
      }
    }
    if (xn->requires_grad) {
      std::vector<double> dxhat(n);
      double sum_d = 0.0, sum_dx = 0.0;
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = c * per_channel; i < (c + 1) * per_channel; ++i) {
          dxhat[i] = dy[i] * gn->value[c];
          sum_d += dxhat[i];
          sum_dx += dxhat[i] * (*xhat)[i];
        }
      }
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        xn->grad[i] += inv_std * (dxhat[i] - inv_n * sum_d - (*xhat)[i] * inv_n * sum_dx);
      }
    }
  });
}

Tensor elu(const Tensor& x) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : std::expm1(xv[i]);
  Node* xn = raw(x);
  return make_result(x.shape(), out, {&x}, [xn](Node& self) {
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      const double slope = xn->value[i] > 0.0 ? 1.0 : self.value[i] + 1.0;
      xn->grad[i] += self.grad[i] * slope;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weights) {
  require_rank(weights, 2, "linear weights");
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  if (x.size() != n) {
    throw DimensionError("linear: weights " + shape_string(weights.shape()) + " cannot multiply " +
                         shape_string(x.shape()));
  }
  const auto xv = x.values();
  const auto wv = weights.values();
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    // Plain left-to-right accumulation: explanation reports rely on
    // reproducing this sum term by term.
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += wv[i * n + j] * xv[j];
    out[i] = acc;
  }
  Node* xn = raw(x);
  Node* wn = raw(weights);
  return make_result(Shape{m}, std::move(out), {&x, &weights}, [=](Node& self) {
    for (std::size_t i = 0; i < m; ++i) {
      const double g = self.grad[i];
      if (g == 0.0) continue;
      if (wn->requires_grad) {
        for (std::size_t j = 0; j < n; ++j) wn->grad[i * n + j] += g * xn->value[j];
      }
      if (xn->requires_grad) {
        for (std::size_t j = 0; j < n; ++j) xn->grad[j] += g * wn->value[i * n + j];
      }
    }
  });
}

Tensor softmax(const Tensor& logits) {
  const auto q = logits.values();
  double hi = -INFINITY;
  for (double v : q) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite logit");
    hi = std::max(hi, v);
  }
  std::vector<double> out(q.size());
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    out[i] = std::exp(q[i] - hi);
    total += out[i];
  }
  for (double& v : out) v /= total;
  Node* qn = raw(logits);
  return make_result(logits.shape(), std::move(out), {&logits}, [qn](Node& self) {
    double inner = 0.0;
    for (std::size_t i = 0; i < self.value.size(); ++i) inner += self.grad[i] * self.value[i];
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      qn->grad[i] += self.value[i] * (self.grad[i] - inner);
    }
  });
}

Tensor cross_entropy(const Tensor& probs, std::size_t label) {
  if (label >= probs.size()) {
    throw IndexError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                     std::to_string(probs.size()) + " classes");
  }
  const double p = probs[label];
  const double floored = std::max(p, kLogFloor);
  Node* pn = raw(probs);
  return make_result(Shape{1}, {-std::log(floored)}, {&probs}, [=](Node& self) {
    if (p > kLogFloor) pn->grad[label] += -self.grad[0] / p;
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  require_same_size(a, b, "cosine_similarity");
  const double na = norm_of(a.values());
  const double nb = norm_of(b.values());
  if (na <= kMinNorm || nb <= kMinNorm) throw DegenerateInputError("cosine_similarity: near-zero norm");
  double inner = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) inner += a[i] * b[i];
  const double cosine = std::clamp(inner / (na * nb), -1.0, 1.0);
  Node* an = raw(a);
  Node* bn = raw(b);
  return make_result(Shape{1}, {cosine}, {&a, &b}, [=](Node& self) {
    const double g = self.grad[0];
    const double inv = 1.0 / (na * nb);
    const double raw_cos = inner * inv;
    for (std::size_t i = 0; i < an->value.size(); ++i) {
      if (an->requires_grad) an->grad[i] += g * (bn->value[i] * inv - raw_cos * an->value[i] / (na * na));
      if (bn->requires_grad) bn->grad[i] += g * (an->value[i] * inv - raw_cos * bn->value[i] / (nb * nb));
    }
  });
}

Tensor l2_normalize(const Tensor& v) {
  const double n = norm_of(v.values());
  if (n <= kMinNorm) throw DegenerateInputError("l2_normalize: near-zero norm");
  std::vector<double> out(v.values().begin(), v.values().end());
  for (double& x : out) x /= n;
  Node* vn = raw(v);
  return make_result(v.shape(), std::move(out), {&v}, [vn, n](Node& self) {
    double inner = 0.0;
    for (std::size_t i = 0; i < self.value.size(); ++i) inner += self.value[i] * self.grad[i];
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      vn->grad[i] += (self.grad[i] - self.value[i] * inner) / n;
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  Node* xn = raw(x);
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {&x}, [xn](Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_size(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Node* an = raw(a);
  Node* bn = raw(b);
  return make_result(a.shape(), std::move(out), {&a, &b}, [an, bn](Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (an->requires_grad) an->grad[i] += self.grad[i];
      if (bn->requires_grad) bn->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  Node* xn = raw(x);
  return make_result(x.shape(), std::move(out), {&x}, [xn, factor](Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * factor;
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_same_size(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  Node* an = raw(a);
  Node* bn = raw(b);
  return make_result(Shape{1}, {acc}, {&a, &b}, [an, bn](Node& self) {
    const double g = self.grad[0];
    for (std::size_t i = 0; i < an->value.size(); ++i) {
      if (an->requires_grad) an->grad[i] += g * bn->value[i];
      if (bn->requires_grad) bn->grad[i] += g * an->value[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  Node* xn = raw(x);
  return make_result(Shape{1}, {acc}, {&x}, [xn](Node& self) {
    for (double& g : xn->grad) g += self.grad[0];
  });
}

Tensor sum_squares(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v * v;
  Node* xn = raw(x);
  return make_result(Shape{1}, {acc}, {&x}, [xn](Node& self) {
    for (std::size_t i = 0; i < xn->value.size(); ++i) xn->grad[i] += 2.0 * xn->value[i] * self.grad[0];
  });
}

Tensor masked_abs_sum(const Tensor& x, const std::vector<bool>& mask) {
  if (mask.size() != x.size()) throw DimensionError("masked_abs_sum: mask size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (mask[i]) acc += std::abs(x[i]);
  }
  Node* xn = raw(x);
  return make_result(Shape{1}, {acc}, {&x}, [xn, mask](Node& self) {
    for (std::size_t i = 0; i < xn->value.size(); ++i) {
      if (!mask[i]) continue;
      const double v = xn->value[i];
      const double sign = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
      xn->grad[i] += sign * self.grad[0];
    }
  });
}

Tensor max_of(const Tensor& x) {
  const auto xv = x.values();
  const std::size_t arg = static_cast<std::size_t>(std::max_element(xv.begin(), xv.end()) - xv.begin());
  Node* xn = raw(x);
  return make_result(Shape{1}, {xv[arg]}, {&x}, [xn, arg](Node& self) { xn->grad[arg] += self.grad[0]; });
}

Tensor gather(const Tensor& x, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw DimensionError("gather: empty index set");
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= x.size()) throw IndexError("gather: index out of range");
    out[i] = x[indices[i]];
  }
  Node* xn = raw(x);
  return make_result(Shape{indices.size()}, std::move(out), {&x}, [xn, indices](Node& self) {
    for (std::size_t i = 0; i < indices.size(); ++i) xn->grad[indices[i]] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  std::vector<double> out;
  auto node = std::make_shared<Node>();
  std::vector<Node*> inputs;
  for (const auto& part : parts) {
    out.insert(out.end(), part.values().begin(), part.values().end());
    if (part.requires_grad() && grad_mode_enabled()) node->requires_grad = true;
    inputs.push_back(raw(part));
  }
  node->shape = Shape{out.size()};
  node->value = std::move(out);
  if (node->requires_grad) {
    for (const auto& part : parts) node->parents.push_back(part.node());
    Node* self = node.get();
    node->backward_fn = [self, inputs]() {
      std::size_t offset = 0;
      for (Node* in : inputs) {
        if (in->requires_grad) {
          for (std::size_t i = 0; i < in->value.size(); ++i) in->grad[i] += self->grad[offset + i];
        }
        offset += in->value.size();
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor mean(const std::vector<Tensor>& scalars) {
  return scale(sum(concat(scalars)), 1.0 / static_cast<double>(scalars.size()));
}

Tensor rows(const Tensor& matrix, std::size_t begin, std::size_t count) {
  require_rank(matrix, 2, "rows");
  const std::size_t cols = matrix.dim(1);
  if (count == 0 || begin + count > matrix.dim(0)) throw IndexError("rows: range out of bounds");
  const auto v = matrix.values();
  std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                          v.begin() + static_cast<std::ptrdiff_t>((begin + count) * cols));
  Node* mn = raw(matrix);
  return make_result(Shape{count, cols}, std::move(out), {&matrix}, [mn, begin, cols](Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) mn->grad[begin * cols + i] += self.grad[i];
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt lhs");
  require_rank(b, 2, "matmul_nt rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) throw DimensionError("matmul_nt: inner dimensions differ");
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[j * k + t];
      out[i * n + j] = acc;
    }
  }
  Node* an = raw(a);
  Node* bn = raw(b);
  return make_result(Shape{m, n}, std::move(out), {&a, &b}, [=](Node& self) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double g = self.grad[i * n + j];
        if (g == 0.0) continue;
        for (std::size_t t = 0; t < k; ++t) {
          if (an->requires_grad) an->grad[i * k + t] += g * bn->value[j * k + t];
          if (bn->requires_grad) bn->grad[j * k + t] += g * an->value[i * k + t];
        }
      }
    }
  });
}

}  // namespace protoeeg::diff
