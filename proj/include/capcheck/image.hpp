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
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "capcheck/errors.hpp"
#include "capcheck/geometry.hpp"
#include "capcheck/hash.hpp"

namespace capcheck {

/// Interleaved 8-bit RGB raster. Pixel (x, y) starts at data[3*(y*width+x)].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;

  bool empty() const { return width < 1 || height < 1; }

  uint8_t* pixel(int x, int y) { return data.data() + 3 * (static_cast<size_t>(y) * width + x); }
  const uint8_t* pixel(int x, int y) const {
    return data.data() + 3 * (static_cast<size_t>(y) * width + x);
  }

  static Image solid(int w, int h, uint8_t r, uint8_t g, uint8_t b) {
    Image img;
    img.width = w;
    img.height = h;
    img.data.resize(static_cast<size_t>(w) * h * 3);
    for (size_t i = 0; i < img.data.size(); i += 3) {
      img.data[i] = r;
      img.data[i + 1] = g;
      img.data[i + 2] = b;
    }
    return img;
  }
};

/// Content digest used as the fixture key for an image: SHA-256 over
/// dimensions and raw pixels, lowercase hex.
inline std::string image_digest(const Image& img) {
  std::string header = std::to_string(img.width) + "x" + std::to_string(img.height) + ";";
  std::string buf;
  buf.reserve(header.size() + img.data.size());
  buf.append(header);
  buf.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
  return sha256_hex(buf);
}

/// Extracts the given region. The box must lie within the image; callers
/// clip first.
inline Image crop(const Image& img, const BoundingBox& box) {
  if (!box.valid() || box.right() > img.width || box.bottom() > img.height) {
    throw InvalidInputError("crop: box outside image bounds");
  }
  Image out;
  out.width = box.w;
  out.height = box.h;
  out.data.resize(static_cast<size_t>(box.w) * box.h * 3);
  for (int y = 0; y < box.h; ++y) {
    const uint8_t* src = img.pixel(box.x, box.y + y);
    std::copy(src, src + static_cast<size_t>(box.w) * 3, out.data.begin() + static_cast<size_t>(y) * box.w * 3);
  }
  return out;
}

/// Binary PPM (P6, maxval 255) writer. Output bytes are a pure function of
/// the pixels, which keeps content-addressed crop files reproducible.
inline void write_ppm(const Image& img, const std::filesystem::path& path) {
  if (img.empty()) throw InvalidInputError("write_ppm: empty image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_ppm: cannot open " + path.string());
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  if (!out) throw IoError("write_ppm: write failed for " + path.string());
}

inline Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_ppm: cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") throw CorruptionError("read_ppm: not a binary PPM: " + path.string());
  auto next_int = [&in, &path]() {
    // Skip whitespace and '#' comment lines between header fields.
    while (true) {
      int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    int v = -1;
    in >> v;
    if (!in || v < 0) throw CorruptionError("read_ppm: bad header in " + path.string());
    return v;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (w < 1 || h < 1 || maxval != 255) {
    throw CorruptionError("read_ppm: unsupported header in " + path.string());
  }
  in.get();  // single whitespace byte after maxval
  Image img;
  img.width = w;
  img.height = h;
  img.data.resize(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size())) {
    throw CorruptionError("read_ppm: truncated pixel data in " + path.string());
  }
  return img;
}

}  // namespace capcheck
