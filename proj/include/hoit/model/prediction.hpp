#pragma once

#include <cstddef>
#include <vector>

#include "hoit/ad/tensor.hpp"
#include "hoit/geometry/box.hpp"

namespace hoit::model {

// One decoded quintuple. The last logit of every class branch is background;
// the human branch is [foreground, background].
struct HoiPrediction {
  std::vector<double> human_logits;
  std::vector<double> object_logits;
  std::vector<double> interaction_logits;
  geometry::Box human_box;
  geometry::Box object_box;
};

// Head outputs for all N queries, kept as graph tensors so the loss can
// differentiate through them.
struct HeadOutputs {
  ad::Tensor human_logits;        // [N x 2]
  ad::Tensor object_logits;       // [N x C_obj+1]
  ad::Tensor interaction_logits;  // [N x C_int+1]
  ad::Tensor human_boxes;         // [N x 4], (cx, cy, w, h) in (0, 1)
  ad::Tensor object_boxes;        // [N x 4]

  std::size_t size() const { return human_logits.defined() ? human_logits.size(0) : 0; }
  HoiPrediction prediction(std::size_t query) const;
  std::vector<HoiPrediction> predictions() const;
};

}  // namespace hoit::model
