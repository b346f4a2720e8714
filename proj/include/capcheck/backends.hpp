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
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "capcheck/embedding.hpp"
#include "capcheck/errors.hpp"
#include "capcheck/geometry.hpp"
#include "capcheck/hash.hpp"
#include "capcheck/image.hpp"

namespace capcheck {

/// One grounded phrase hit from the open-set detector.
struct Detection {
  BoundingBox box;
  double confidence = 0.0;
  std::string phrase;

  bool operator==(const Detection&) const = default;
};

/// Which implementation backs a neural role.
enum class BackendKind { mock, scripted, remote };

struct BackendConfig {
  BackendKind kind = BackendKind::mock;
  uint64_t seed = 42;
  int dim = 64;
  std::string endpoint;      // remote only
  std::string fixture_path;  // scripted only
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual EmbeddingVector encode_text(std::string_view text) = 0;
  virtual int dim() const = 0;
};

class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual EmbeddingVector encode_image(const Image& region) = 0;
  virtual int dim() const = 0;
};

class VqaModel {
 public:
  virtual ~VqaModel() = default;
  /// Probability mass of the affirmative answer for a yes/no question.
  virtual double vqa_yes_score(const Image& image, std::string_view question) = 0;
};

class ObjectDetector {
 public:
  virtual ~ObjectDetector() = default;
  /// Boxes grounding the phrase, sorted by descending confidence. Empty
  /// means the phrase was not found in the image.
  virtual std::vector<Detection> detect_objects(const Image& image, std::string_view phrase) = 0;
};

namespace detail {

inline std::string trim_copy(std::string_view s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/// digest ^ seed initializes the generator; the filled Gaussian vector is
/// L2-normalized. Equal (seed, dim, input) always reproduces the same bits.
inline EmbeddingVector seeded_unit_vector(uint64_t digest, uint64_t seed, int dim) {
  SplitMix64 rng(digest ^ seed);
  std::vector<double> raw(static_cast<size_t>(dim));
  for (auto& v : raw) v = rng.next_gaussian();
  return normalized(raw);
}

inline void sort_by_confidence(std::vector<Detection>& dets) {
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
}

}  // namespace detail

/// Weight-free text encoder: hash-seeded pseudo-random unit vectors.
class MockTextEncoder : public TextEncoder {
 public:
  explicit MockTextEncoder(uint64_t seed = 42, int dim = 64) : seed_(seed), dim_(dim) {
    if (dim < 1) throw InvalidInputError("MockTextEncoder: dim must be positive");
  }
  explicit MockTextEncoder(const BackendConfig& config)
      : MockTextEncoder(config.seed, config.dim) {}

  EmbeddingVector encode_text(std::string_view text) override {
    const std::string trimmed = detail::trim_copy(text);
    if (trimmed.empty()) throw InvalidInputError("encode_text: empty text");
    return detail::seeded_unit_vector(fnv1a64(trimmed), seed_, dim_);
  }

  int dim() const override { return dim_; }

 private:
  uint64_t seed_;
  int dim_;
};

/// Weight-free visual encoder; the pixel buffer is reduced to a content
/// digest which seeds the vector, so one changed pixel changes the output.
class MockImageEncoder : public ImageEncoder {
 public:
  explicit MockImageEncoder(uint64_t seed = 42, int dim = 64) : seed_(seed), dim_(dim) {
    if (dim < 1) throw InvalidInputError("MockImageEncoder: dim must be positive");
  }
  explicit MockImageEncoder(const BackendConfig& config)
      : MockImageEncoder(config.seed, config.dim) {}

  EmbeddingVector encode_image(const Image& region) override {
    if (region.empty()) throw InvalidInputError("encode_image: zero-area region");
    uint64_t digest = fnv1a64(region.data.data(), region.data.size());
    digest ^= fnv1a64(std::to_string(region.width) + "x" + std::to_string(region.height));
    return detail::seeded_unit_vector(digest, seed_, dim_);
  }

  int dim() const override { return dim_; }

 private:
  uint64_t seed_;
  int dim_;
};

/// VQA answers scripted from a fixture mapping (image digest, question) to a
/// yes-probability. Unknown keys fall back to the configured default (0.5,
/// maximal uncertainty) unless defaults are disabled.
class ScriptedVqa : public VqaModel {
 public:
  explicit ScriptedVqa(std::optional<double> default_score = 0.5) : default_score_(default_score) {
    validate_default();
  }

  void set(const std::string& image_digest, const std::string& question, double score) {
    if (score < 0.0 || score > 1.0) {
      throw InvalidInputError("ScriptedVqa: score outside [0,1]");
    }
    fixtures_[image_digest + "\t" + question] = score;
  }

  void clear(const std::string& image_digest, const std::string& question) {
    fixtures_.erase(image_digest + "\t" + question);
  }

  /// Fixture file format: one entry per line, tab-separated:
  ///   <hex image digest> \t <question text> \t <score in [0,1]>
  /// Blank lines and lines starting with '#' are skipped.
  void load_fixture_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("ScriptedVqa: cannot open fixture file " + path.string());
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      const size_t t1 = line.find('\t');
      const size_t t2 = (t1 == std::string::npos) ? std::string::npos : line.find('\t', t1 + 1);
      if (t2 == std::string::npos) {
        throw InvalidInputError("ScriptedVqa: malformed fixture line " + std::to_string(lineno) +
                                " in " + path.string());
      }
      double score = 0.0;
      try {
        score = std::stod(line.substr(t2 + 1));
      } catch (const std::exception&) {
        throw InvalidInputError("ScriptedVqa: bad score on line " + std::to_string(lineno) +
                                " in " + path.string());
      }
      if (score < 0.0 || score > 1.0) {
        throw InvalidInputError("ScriptedVqa: score outside [0,1] on line " +
                                std::to_string(lineno) + " in " + path.string());
      }
      fixtures_[line.substr(0, t1) + "\t" + line.substr(t1 + 1, t2 - t1 - 1)] = score;
    }
  }

  double vqa_yes_score(const Image& image, std::string_view question) override {
    if (detail::trim_copy(question).empty()) {
      throw InvalidInputError("vqa_yes_score: empty question");
    }
    const std::string key = image_digest(image) + "\t" + std::string(question);
    auto it = fixtures_.find(key);
    if (it != fixtures_.end()) return it->second;
    if (default_score_) return *default_score_;
    throw FixtureMissError("ScriptedVqa: no fixture for question '" + std::string(question) + "'");
  }

  size_t size() const { return fixtures_.size(); }

 private:
  void validate_default() {
    if (default_score_ && (*default_score_ < 0.0 || *default_score_ > 1.0)) {
      throw InvalidInputError("ScriptedVqa: default score outside [0,1]");
    }
  }

  std::map<std::string, double> fixtures_;
  std::optional<double> default_score_;
};

/// Detector scripted from a fixture mapping (image digest, phrase) to a
/// detection list. A missing key means "not found" and yields an empty list.
class ScriptedDetector : public ObjectDetector {
 public:
  void set(const std::string& image_digest, const std::string& phrase,
           std::vector<Detection> detections) {
    for (const auto& d : detections) {
      if (d.confidence < 0.0 || d.confidence > 1.0) {
        throw InvalidInputError("ScriptedDetector: confidence outside [0,1]");
      }
    }
    fixtures_[image_digest + "\t" + phrase] = std::move(detections);
  }

  /// Fixture file format: one entry per line, tab-separated:
  ///   <hex image digest> \t <phrase> \t x,y,w,h,conf[;x,y,w,h,conf...]
  /// An empty third field scripts an explicit miss.
  void load_fixture_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("ScriptedDetector: cannot open fixture file " + path.string());
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      const size_t t1 = line.find('\t');
      const size_t t2 = (t1 == std::string::npos) ? std::string::npos : line.find('\t', t1 + 1);
      if (t2 == std::string::npos) {
        throw InvalidInputError("ScriptedDetector: malformed fixture line " +
                                std::to_string(lineno) + " in " + path.string());
      }
      const std::string digest = line.substr(0, t1);
      const std::string phrase = line.substr(t1 + 1, t2 - t1 - 1);
      std::vector<Detection> dets;
      std::stringstream records(line.substr(t2 + 1));
      std::string rec;
      while (std::getline(records, rec, ';')) {
        if (detail::trim_copy(rec).empty()) continue;
        Detection d;
        d.phrase = phrase;
        char comma = ',';
        std::stringstream fields(rec);
        if (!(fields >> d.box.x >> comma >> d.box.y >> comma >> d.box.w >> comma >> d.box.h >>
              comma >> d.confidence)) {
          throw InvalidInputError("ScriptedDetector: bad detection record on line " +
                                  std::to_string(lineno) + " in " + path.string());
        }
        if (d.confidence < 0.0 || d.confidence > 1.0) {
          throw InvalidInputError("ScriptedDetector: confidence outside [0,1] on line " +
                                  std::to_string(lineno) + " in " + path.string());
        }
        dets.push_back(std::move(d));
      }
      fixtures_[digest + "\t" + phrase] = std::move(dets);
    }
  }

  std::vector<Detection> detect_objects(const Image& image, std::string_view phrase) override {
    if (detail::trim_copy(phrase).empty()) {
      throw InvalidInputError("detect_objects: empty phrase");
    }
    auto it = fixtures_.find(image_digest(image) + "\t" + std::string(phrase));
    if (it == fixtures_.end()) return {};
    // Boxes are clipped to the queried image so the Detection invariant
    // holds regardless of what the fixture recorded.
    std::vector<Detection> out;
    for (const auto& d : it->second) {
      auto clipped = clip_box(d.box, image.width, image.height);
      if (!clipped) continue;
      Detection c = d;
      c.box = *clipped;
      out.push_back(std::move(c));
    }
    detail::sort_by_confidence(out);
    return out;
  }

 private:
  std::map<std::string, std::vector<Detection>> fixtures_;
};

}  // namespace capcheck
