#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hoit/ad/tensor.hpp"

namespace hoit::ad {

// Elementwise binary primitives require identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
// Throws NumericError on non-positive entries.
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);

// Full reduction to a 0-d tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Reduces the last axis: [..., C] -> [...].
Tensor sum_last(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end);

// Numerically stable (max-subtracted) softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

// Normalizes the last axis; gain and bias have the size of that axis.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// y = x W^T + b over the last axis of x. W is [out x in]; b may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Rows of `table` [V x d] gathered into an [n x d] tensor.
Tensor embedding_lookup(const Tensor& table,
                        std::span<const std::size_t> indices);

// Weighted softmax cross entropy summed over rows of [R x K] logits:
// sum_r weight[r] * (logsumexp(z_r) - z_r[target[r]]).
Tensor cross_entropy(const Tensor& logits,
                     std::span<const std::size_t> targets,
                     std::span<const double> weights);
// Single [K] logit vector.
Tensor cross_entropy(const Tensor& logits, std::size_t target,
                     double weight = 1.0);

// Square-kernel convolution over an [H x W x Cin] map with weight
// [Cout x k x k x Cin] and bias [Cout]; returns [Ho x Wo x Cout].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding);

}  // namespace hoit::ad
