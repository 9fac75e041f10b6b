#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>

namespace spotlight {

/// Axis-aligned pixel rectangle; (x, y) is the top-left corner, 0-based.
struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  int right() const { return x + w; }   // exclusive
  int bottom() const { return y + h; }  // exclusive
  std::int64_t area() const { return std::int64_t{w} * h; }
  bool valid() const { return w >= 1 && h >= 1 && x >= 0 && y >= 0; }

  bool fits_in(int width, int height) const {
    return valid() && right() <= width && bottom() <= height;
  }

  bool contains(const BoundingBox& o) const {
    return o.x >= x && o.y >= y && o.right() <= right() && o.bottom() <= bottom();
  }

  /// Box `inner`, given relative to this box, expressed in this box's frame.
  BoundingBox offset(const BoundingBox& inner) const {
    return {x + inner.x, y + inner.y, inner.w, inner.h};
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
  friend auto operator<=>(const BoundingBox&, const BoundingBox&) = default;
};

/// Tight box around both operands.
inline BoundingBox enclose(const BoundingBox& a, const BoundingBox& b) {
  const int x0 = std::min(a.x, b.x);
  const int y0 = std::min(a.y, b.y);
  const int x1 = std::max(a.right(), b.right());
  const int y1 = std::max(a.bottom(), b.bottom());
  return {x0, y0, x1 - x0, y1 - y0};
}

inline std::int64_t intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const std::int64_t iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const std::int64_t ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  return (iw > 0 && ih > 0) ? iw * ih : 0;
}

inline std::ostream& operator<<(std::ostream& os, const BoundingBox& b) {
  return os << '(' << b.x << ',' << b.y << ',' << b.w << ',' << b.h << ')';
}

}  // namespace spotlight
