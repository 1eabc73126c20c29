#include "hoit/geometry/box.hpp"

#include <algorithm>
#include <cmath>

#include "hoit/ad/ops.hpp"
#include "hoit/errors.hpp"

namespace hoit::geometry {

Corners to_corners(const Box& b) {
  return {b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w, b.cy + 0.5 * b.h};
}

Box from_corners(const Corners& c) {
  return {0.5 * (c.x1 + c.x2), 0.5 * (c.y1 + c.y2), c.x2 - c.x1, c.y2 - c.y1};
}

bool is_valid(const Box& b) {
  return std::isfinite(b.cx) && std::isfinite(b.cy) && std::isfinite(b.w) &&
         std::isfinite(b.h) && b.w > 0.0 && b.h > 0.0;
}

double area(const Corners& c) {
  return std::max(0.0, c.x2 - c.x1) * std::max(0.0, c.y2 - c.y1);
}

namespace {

double intersection(const Corners& a, const Corners& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
}

}  // namespace

double iou(const Corners& a, const Corners& b) {
  const double inter = intersection(a, b);
  const double uni = area(a) + area(b) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double iou(const Box& a, const Box& b) { return iou(to_corners(a), to_corners(b)); }

double giou(const Corners& a, const Corners& b) {
  const double inter = intersection(a, b);
  const double uni = area(a) + area(b) - inter;
  const double enclosing = (std::max(a.x2, b.x2) - std::min(a.x1, b.x1)) *
                           (std::max(a.y2, b.y2) - std::min(a.y1, b.y1));
  if (!(uni > 0.0) || !(enclosing > 0.0)) return 0.0;
  // The enclosing box contains the union; clamp rounding when they coincide.
  return inter / uni - std::max(0.0, enclosing - uni) / enclosing;
}

double giou(const Box& a, const Box& b) { return giou(to_corners(a), to_corners(b)); }

double box_l1(const Box& a, const Box& b) {
  return std::fabs(a.cx - b.cx) + std::fabs(a.cy - b.cy) + std::fabs(a.w - b.w) +
         std::fabs(a.h - b.h);
}

namespace {

struct TensorCorners {
  ad::Tensor x1, y1, x2, y2, area;
};

TensorCorners tensor_corners(const ad::Tensor& boxes) {
  using namespace ad;
  const Tensor cx = slice(boxes, 1, 0, 1);
  const Tensor cy = slice(boxes, 1, 1, 2);
  const Tensor w = slice(boxes, 1, 2, 3);
  const Tensor h = slice(boxes, 1, 3, 4);
  const Tensor hw = scale(w, 0.5);
  const Tensor hh = scale(h, 0.5);
  return {cx - hw, cy - hh, cx + hw, cy + hh, w * h};
}

void require_box_rows(const ad::Tensor& a, const ad::Tensor& b) {
  if (a.dim() != 2 || a.size(1) != 4 || a.shape() != b.shape()) {
    throw ShapeError("box tensors must both be [M x 4], got " + ad::to_string(a.shape()) +
                     " and " + ad::to_string(b.shape()));
  }
}

}  // namespace

ad::Tensor giou(const ad::Tensor& a, const ad::Tensor& b) {
  using namespace ad;
  require_box_rows(a, b);
  const auto ca = tensor_corners(a);
  const auto cb = tensor_corners(b);
  const Tensor iw = relu(minimum(ca.x2, cb.x2) - maximum(ca.x1, cb.x1));
  const Tensor ih = relu(minimum(ca.y2, cb.y2) - maximum(ca.y1, cb.y1));
  const Tensor inter = iw * ih;
  const Tensor uni = ca.area + cb.area - inter;
  const Tensor ew = maximum(ca.x2, cb.x2) - minimum(ca.x1, cb.x1);
  const Tensor eh = maximum(ca.y2, cb.y2) - minimum(ca.y1, cb.y1);
  const Tensor enclosing = ew * eh;
  const Tensor result = inter / uni - (enclosing - uni) / enclosing;
  return reshape(result, {a.size(0)});
}

ad::Tensor box_l1(const ad::Tensor& a, const ad::Tensor& b) {
  require_box_rows(a, b);
  return ad::sum_last(ad::abs(ad::sub(a, b)));
}

ad::Tensor boxes_to_tensor(const Box* boxes, std::size_t count) {
  std::vector<double> v;
  v.reserve(count * 4);
  for (std::size_t i = 0; i < count; ++i) {
    v.insert(v.end(), {boxes[i].cx, boxes[i].cy, boxes[i].w, boxes[i].h});
  }
  return ad::Tensor({count, 4}, std::move(v));
}

}  // namespace hoit::geometry
