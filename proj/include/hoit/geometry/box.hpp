#pragma once

#include "hoit/ad/tensor.hpp"

namespace hoit::geometry {

// Axis-aligned box in normalized center form.
struct Box {
  double cx = 0.5;
  double cy = 0.5;
  double w = 1.0;
  double h = 1.0;

  bool operator==(const Box&) const = default;
};

struct Corners {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
};

Corners to_corners(const Box& b);
Box from_corners(const Corners& c);

// w > 0, h > 0 and all fields finite.
bool is_valid(const Box& b);

double area(const Corners& c);

// Zero-area overlaps (shared edges or corners) give 0.
double iou(const Corners& a, const Corners& b);
double iou(const Box& a, const Box& b);

// IoU minus the fraction of the smallest enclosing box not covered by the
// union. Lies in (-1, 1].
double giou(const Corners& a, const Corners& b);
double giou(const Box& a, const Box& b);

// Sum of |difference| over (cx, cy, w, h).
double box_l1(const Box& a, const Box& b);

// Differentiable row-wise forms over [M x 4] center-format tensors; both
// return [M].
ad::Tensor giou(const ad::Tensor& a, const ad::Tensor& b);
ad::Tensor box_l1(const ad::Tensor& a, const ad::Tensor& b);

ad::Tensor boxes_to_tensor(const Box* boxes, std::size_t count);

}  // namespace hoit::geometry
