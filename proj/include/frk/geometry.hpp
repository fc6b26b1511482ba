// Copyright 2026 The frkmap Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <vector>

#include "frk/error.hpp"

namespace frk {

/// Planar map coordinates in meters.
struct Location {
  double x{0.0};
  double y{0.0};
};

inline double squared_distance(const Location& a, const Location& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

inline double distance(const Location& a, const Location& b) {
  return std::sqrt(squared_distance(a, b));
}

/// Axis-aligned rectangle, closed on all sides.
struct BoundingBox {
  double min_x{0.0};
  double min_y{0.0};
  double max_x{0.0};
  double max_y{0.0};

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }

  bool contains(const Location& p) const {
    return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
  }

  /// Grows the box by `margin` on every side.
  BoundingBox expanded(double margin) const {
    return {min_x - margin, min_y - margin, max_x + margin, max_y + margin};
  }

  Location center() const {
    return {0.5 * (min_x + max_x), 0.5 * (min_y + max_y)};
  }
};

/// Validates that a box is finite and not inverted. Zero extent is allowed
/// (a single point is a valid, if degenerate, box).
inline void validate_box(const BoundingBox& b) {
  if (!std::isfinite(b.min_x) || !std::isfinite(b.min_y) ||
      !std::isfinite(b.max_x) || !std::isfinite(b.max_y)) {
    throw InvalidParameter("bounding box coordinates must be finite");
  }
  if (b.max_x < b.min_x || b.max_y < b.min_y) {
    throw InvalidParameter("bounding box is inverted (max < min)");
  }
}

/// Tight bounding box of a non-empty point set.
inline BoundingBox bounding_box(const std::vector<Location>& pts) {
  if (pts.empty()) {
    throw InvalidParameter("cannot take the bounding box of an empty point set");
  }
  BoundingBox b{pts[0].x, pts[0].y, pts[0].x, pts[0].y};
  for (const Location& p : pts) {
    b.min_x = std::min(b.min_x, p.x);
    b.min_y = std::min(b.min_y, p.y);
    b.max_x = std::max(b.max_x, p.x);
    b.max_y = std::max(b.max_y, p.y);
  }
  return b;
}

/// Wraps an angle in degrees to the half-open interval (-180, 180].
inline double wrap_degrees(double a) {
  a = std::fmod(a, 360.0);
  if (a <= -180.0) {
    a += 360.0;
  } else if (a > 180.0) {
    a -= 360.0;
  }
  return a;
}

/// Bearing from `from` to `to` in degrees, measured clockwise from north
/// (+y axis), in (-180, 180]. Coincident points map to 0 by convention.
inline double bearing_degrees(const Location& from, const Location& to) {
  const double dx = to.x - from.x;
  const double dy = to.y - from.y;
  if (dx == 0.0 && dy == 0.0) {
    return 0.0;
  }
  constexpr double kRadToDeg = 180.0 / M_PI;
  return wrap_degrees(std::atan2(dx, dy) * kRadToDeg);
}

}  // namespace frk
