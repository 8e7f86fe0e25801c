#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>

namespace segdet {

/// Thrown for malformed inputs that violate a documented precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

/// Axis-aligned rectangle in continuous pixel coordinates (y grows down).
/// A validated box has x1 <= x2 and y1 <= y2; predicted boxes may not.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  Point center() const { return {x1 + width() / 2.0, y1 + height() / 2.0}; }
  bool valid() const { return x1 <= x2 && y1 <= y2; }

  bool contains(const BBox& o, double tol = 0.0) const {
    return o.x1 >= x1 - tol && o.y1 >= y1 - tol && o.x2 <= x2 + tol && o.y2 <= y2 + tol;
  }

  std::array<double, 4> as_array() const { return {x1, y1, x2, y2}; }
  static BBox from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }

  bool operator==(const BBox&) const = default;
};

inline BBox clip_box(const BBox& b, double width, double height) {
  auto clamp = [](double v, double lo, double hi) { return std::min(std::max(v, lo), hi); };
  BBox c{clamp(b.x1, 0.0, width), clamp(b.y1, 0.0, height), clamp(b.x2, 0.0, width),
         clamp(b.y2, 0.0, height)};
  // a box entirely outside the frame collapses onto the nearest edge
  c.x2 = std::max(c.x1, c.x2);
  c.y2 = std::max(c.y1, c.y2);
  return c;
}

inline double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

/// Intersection over union; 0 for disjoint boxes or a zero-area union.
inline double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

/// True iff iou(det, gt) >= threshold (inclusive).
inline bool match_at_overlap(const BBox& det, const BBox& gt, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw InvalidArgument("overlap threshold must lie in (0, 1]");
  }
  return iou(det, gt) >= threshold;
}

}  // namespace segdet
