#pragma once

#include <algorithm>
#include <stdexcept>

namespace dsg {

// Axis-aligned box in normalized coordinates, corner form (x_min, y_min, w, h).
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x2() const { return x + w; }
  double y2() const { return y + h; }
  double center_x() const { return x + 0.5 * w; }
  double center_y() const { return y + 0.5 * h; }
  double area() const { return w * h; }

  bool operator==(const Box& o) const {
    return x == o.x && y == o.y && w == o.w && h == o.h;
  }
};

inline double intersection_area(const Box& a, const Box& b) {
  double iw = std::min(a.x2(), b.x2()) - std::max(a.x, b.x);
  double ih = std::min(a.y2(), b.y2()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

// Intersection over union; degenerate (zero-area) operands give 0.
inline double iou(const Box& a, const Box& b) {
  if (a.area() <= 0.0 || b.area() <= 0.0) return 0.0;
  double inter = intersection_area(a, b);
  double uni = a.area() + b.area() - inter;
  return inter / uni;
}

// Smallest box containing both a and b.
inline Box union_box(const Box& a, const Box& b) {
  double x1 = std::min(a.x, b.x);
  double y1 = std::min(a.y, b.y);
  double x2 = std::max(a.x2(), b.x2());
  double y2 = std::max(a.y2(), b.y2());
  return Box{x1, y1, x2 - x1, y2 - y1};
}

// Clips a box to the unit canvas, trimming overshoot on each side.
// Formulated so a box already inside the canvas is returned bit-identically.
inline Box clip_to_canvas(const Box& b) {
  double over_left = std::max(0.0, -b.x);
  double over_right = std::max(0.0, b.x + b.w - 1.0);
  double over_top = std::max(0.0, -b.y);
  double over_bottom = std::max(0.0, b.y + b.h - 1.0);
  Box c;
  c.x = b.x + over_left;
  c.y = b.y + over_top;
  c.w = b.w - over_left - over_right;
  c.h = b.h - over_top - over_bottom;
  return c;
}

inline bool inside_canvas(const Box& b) {
  return b.x >= 0.0 && b.y >= 0.0 && b.w > 0.0 && b.h > 0.0 &&
         b.x + b.w <= 1.0 && b.y + b.h <= 1.0;
}

}  // namespace dsg
