// Copyright (c) 2026, the capcheck authors. All rights reserved.
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

#include <algorithm>
#include <optional>

namespace capcheck {

/// Axis-aligned rectangle in pixel coordinates. The internal convention is
/// (x, y, w, h) with x/y the top-left corner; all annotation input is
/// canonicalized to this layout at ingestion.
struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool valid() const { return x >= 0 && y >= 0 && w >= 1 && h >= 1; }

  int right() const { return x + w; }
  int bottom() const { return y + h; }

  bool operator==(const BoundingBox&) const = default;
};

/// Clips a box to an image of the given size. Returns nullopt when nothing
/// with positive area remains.
inline std::optional<BoundingBox> clip_box(const BoundingBox& b, int image_w, int image_h) {
  const int x0 = std::max(b.x, 0);
  const int y0 = std::max(b.y, 0);
  const int x1 = std::min(b.x + b.w, image_w);
  const int y1 = std::min(b.y + b.h, image_h);
  if (x1 - x0 < 1 || y1 - y0 < 1) return std::nullopt;
  return BoundingBox{x0, y0, x1 - x0, y1 - y0};
}

/// Smallest axis-aligned box containing both inputs.
inline BoundingBox union_box(const BoundingBox& a, const BoundingBox& b) {
  const int x0 = std::min(a.x, b.x);
  const int y0 = std::min(a.y, b.y);
  const int x1 = std::max(a.right(), b.right());
  const int y1 = std::max(a.bottom(), b.bottom());
  return BoundingBox{x0, y0, x1 - x0, y1 - y0};
}

}  // namespace capcheck
