#pragma once

#include <cstddef>
#include <vector>

#include "protoeeg/tensor.hpp"

namespace protoeeg::diff {

struct Stride {
  std::size_t h = 1;
  std::size_t w = 1;
};

// Valid (unpadded) cross-correlation. input: C_in x H x W,
// kernels: C_out x C_in x kH x kW. Output C_out x H' x W' with
// H' = (H - kH) / sH + 1.
Tensor conv2d_valid(const Tensor& input, const Tensor& kernels, Stride stride);

// Normalizes each sample over all of its entries (biased variance), then
// applies per-channel gain and bias. Channels are the leading axis of x;
// gain and bias have shape {C}.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

Tensor elu(const Tensor& x);

// weights (m x n) times x (n); no bias.
Tensor linear(const Tensor& x, const Tensor& weights);

Tensor softmax(const Tensor& logits);

inline constexpr double kLogFloor = 1e-12;

// -log(max(probs[label], 1e-12)).
Tensor cross_entropy(const Tensor& probs, std::size_t label);

inline constexpr double kMinNorm = 1e-8;

Tensor cosine_similarity(const Tensor& a, const Tensor& b);
Tensor l2_normalize(const Tensor& v);

// Structural helpers used to assemble losses.
Tensor reshape(const Tensor& x, Shape shape);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& x);
Tensor sum_squares(const Tensor& x);
// Sum of |x_i| over entries where mask[i] is set.
Tensor masked_abs_sum(const Tensor& x, const std::vector<bool>& mask);
// Maximum entry; the gradient flows to the first maximizer.
Tensor max_of(const Tensor& x);
Tensor gather(const Tensor& x, const std::vector<std::size_t>& indices);
// Concatenates flattened inputs into one vector.
Tensor concat(const std::vector<Tensor>& parts);
Tensor mean(const std::vector<Tensor>& scalars);
// Rows [begin, begin + count) of a matrix.
Tensor rows(const Tensor& matrix, std::size_t begin, std::size_t count);
// a (m x k) times transpose(b) (n x k) -> m x n.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

}  // namespace protoeeg::diff
