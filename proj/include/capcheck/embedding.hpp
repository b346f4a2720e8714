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

#include <cmath>
#include <cstddef>
#include <vector>

#include "capcheck/errors.hpp"

namespace capcheck {

/// Fixed-length vector produced by an encoder backend. Values are stored as
/// 32-bit floats to match the on-disk embedding matrix exactly; all backends
/// emit unit-norm vectors (L2 norm within 1e-6 of 1).
struct EmbeddingVector {
  std::vector<float> values;

  int dim() const { return static_cast<int>(values.size()); }

  bool operator==(const EmbeddingVector&) const = default;
};

/// Plain left-to-right double accumulation. Both the retrieval index and the
/// brute-force oracle go through this, so their scores agree bitwise.
inline double dot(const float* a, const float* b, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

inline double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) throw InvalidInputError("dot: dimension mismatch");
  return dot(a.values.data(), b.values.data(), a.values.size());
}

inline double norm(const EmbeddingVector& v) {
  return std::sqrt(dot(v.values.data(), v.values.data(), v.values.size()));
}

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) throw InvalidInputError("cosine: dimension mismatch");
  if (a.values.empty()) throw InvalidInputError("cosine: empty vectors");
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw InvalidInputError("cosine: zero vector");
  return dot(a, b) / (na * nb);
}

/// Scales in double precision, then stores floats. The float-rounded result
/// keeps its norm within ~1e-7 of 1 for any practical dim.
inline EmbeddingVector normalized(const std::vector<double>& raw) {
  double sq = 0.0;
  for (double v : raw) sq += v * v;
  if (sq == 0.0) throw InvalidInputError("normalized: zero vector");
  const double inv = 1.0 / std::sqrt(sq);
  EmbeddingVector out;
  out.values.reserve(raw.size());
  for (double v : raw) out.values.push_back(static_cast<float>(v * inv));
  return out;
}

inline bool is_unit_norm(const EmbeddingVector& v, double tol = 1e-6) {
  return std::abs(norm(v) - 1.0) <= tol;
}

}  // namespace capcheck
