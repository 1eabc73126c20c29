#pragma once

#include <cstddef>

#include "hoit/ad/tensor.hpp"

namespace hoit::model {

// Fixed 2D sine/cosine encoding of an H x W grid, returned as [H*W x d] in
// row-major cell order. Channels [0, d/2) encode the row, [d/2, d) the column.
// Within each half, channel j uses frequency 1 / T^(2 floor(j/2) / (d/2)),
// sine on even j and cosine on odd j, applied to the position
// (index + 1) / extent * 2 pi. T = 10000.
// Throws ConfigError if d is not divisible by 4.
ad::Tensor positional_encoding(std::size_t height, std::size_t width, std::size_t d);

}  // namespace hoit::model
