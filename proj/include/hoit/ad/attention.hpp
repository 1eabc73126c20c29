#pragma once

#include <cstddef>

#include "hoit/ad/tensor.hpp"

namespace hoit::ad {

struct AttentionOutput {
  Tensor output;   // [Lq x d]
  Tensor weights;  // [heads x Lq x Lk], detached; each row sums to 1
};

// Scaled dot-product attention split over `heads` column groups of width
// d / heads, each scaled by 1/sqrt(d / heads). Inputs are already projected.
// Throws ConfigError if d is not divisible by `heads`.
AttentionOutput multi_head_attention(const Tensor& query, const Tensor& key,
                                     const Tensor& value, std::size_t heads);

// Head-averaged [Lq x Lk] attention map.
Tensor mean_over_heads(const Tensor& weights);

}  // namespace hoit::ad
