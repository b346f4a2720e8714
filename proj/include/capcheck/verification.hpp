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

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "capcheck/backends.hpp"
#include "capcheck/embedding.hpp"
#include "capcheck/errors.hpp"
#include "capcheck/image.hpp"
#include "capcheck/scene_graph.hpp"

namespace capcheck {

/// Detector outcome for one unique entity name. `detected` holds exactly
/// when the box list is non-empty; detections stay sorted by descending
/// confidence.
struct DetectionResult {
  EntityMention entity;
  std::vector<Detection> detections;
  bool detected = false;

  const Detection* best() const { return detections.empty() ? nullptr : &detections.front(); }
};

struct EntityGating {
  std::vector<DetectionResult> results;
  bool detector_degraded = false;  // backend failed; everything runs VQA-only
};

/// Runs the open-set detector over every unique entity name in the graph.
/// Entities the detector cannot ground are marked undetected and validated
/// downstream by VQA alone. A detector backend failure degrades the whole
/// gating pass instead of aborting.
inline EntityGating gate_entities(const Image& image, const SceneGraph& graph,
                                  ObjectDetector& detector) {
  EntityGating gating;
  std::set<std::string> seen;
  for (const auto& mention : graph.entities) {
    if (!seen.insert(mention.name).second) continue;
    DetectionResult result;
    result.entity = {mention.name, std::nullopt};
    try {
      result.detections = detector.detect_objects(image, mention.name);
    } catch (const BackendUnavailableError&) {
      gating.detector_degraded = true;
      result.detections.clear();
    }
    result.detected = !result.detections.empty();
    gating.results.push_back(std::move(result));
  }
  if (gating.detector_degraded) {
    for (auto& r : gating.results) {
      r.detections.clear();
      r.detected = false;
    }
  }
  return gating;
}

enum class QuestionKind { attribute, relation, existence };

/// Instantiates the verification question templates:
///   attribute: "Is the {e} {a}?"
///   relation:  "Is the {s} {r} {o}?"
///   existence: "Is there {e} in the image?"
inline std::string build_question(QuestionKind kind, std::span<const std::string> parts) {
  switch (kind) {
    case QuestionKind::attribute:
      if (parts.size() != 2) throw InvalidInputError("build_question: attribute takes 2 parts");
      return "Is the " + parts[0] + " " + parts[1] + "?";
    case QuestionKind::relation:
      if (parts.size() != 3) throw InvalidInputError("build_question: relation takes 3 parts");
      return "Is the " + parts[0] + " " + parts[1] + " " + parts[2] + "?";
    case QuestionKind::existence:
      if (parts.size() != 1) throw InvalidInputError("build_question: existence takes 1 part");
      return "Is there " + parts[0] + " in the image?";
  }
  throw InvalidInputError("build_question: unknown kind");
}

inline std::string build_question(QuestionKind kind, std::initializer_list<std::string> parts) {
  std::vector<std::string> v(parts);
  return build_question(kind, std::span<const std::string>(v));
}

/// Soft yes-probability for one question; absent when the backend fails,
/// in which case the element is unverifiable by VQA.
inline std::optional<double> vqa_soft_score(const Image& image, const std::string& question,
                                            VqaModel& vqa) {
  try {
    return vqa.vqa_yes_score(image, question);
  } catch (const BackendUnavailableError&) {
    return std::nullopt;
  } catch (const FixtureMissError&) {
    return std::nullopt;
  }
}

enum class SimilarityAggregator { max, mean };

/// Similarity between a region embedding and the retrieved exemplar rows.
/// Default aggregation is max: one strongly matching exemplar is evidence
/// enough. Result lies in [-1, 1].
inline double visual_similarity_score(const EmbeddingVector& region,
                                      std::span<const EmbeddingVector> exemplars,
                                      SimilarityAggregator aggregator = SimilarityAggregator::max) {
  if (exemplars.empty()) throw InvalidInputError("visual_similarity_score: no exemplars");
  double acc = aggregator == SimilarityAggregator::max ? -2.0 : 0.0;
  for (const auto& row : exemplars) {
    const double sim = cosine(region, row);
    if (aggregator == SimilarityAggregator::max) {
      acc = std::max(acc, sim);
    } else {
      acc += sim;
    }
  }
  return aggregator == SimilarityAggregator::max ? acc
                                                 : acc / static_cast<double>(exemplars.size());
}

/// Scaling factor for the visual channel: the maximum off-diagonal pairwise
/// similarity among the exemplars themselves. A single exemplar has no pair
/// and scales by 1.
inline double visual_scaling_factor(std::span<const EmbeddingVector> exemplars) {
  if (exemplars.empty()) throw InvalidInputError("visual_scaling_factor: needs at least one row");
  if (exemplars.size() == 1) return 1.0;
  double best = -2.0;
  for (size_t i = 0; i < exemplars.size(); ++i) {
    for (size_t j = i + 1; j < exemplars.size(); ++j) {
      best = std::max(best, cosine(exemplars[i], exemplars[j]));
    }
  }
  return best;
}

/// Scaling factor for the VQA channel: the question's maximum yes-score
/// over the exemplar images. Exemplars that cannot be loaded or scored are
/// skipped; if none survive the factor is absent and the raw score is used
/// unscaled by the caller.
inline std::optional<double> vqa_scaling_factor(const std::string& question,
                                                std::span<const std::string> exemplar_refs,
                                                VqaModel& vqa,
                                                const std::filesystem::path& root = {}) {
  if (exemplar_refs.empty()) {
    throw InvalidInputError("vqa_scaling_factor: exemplar list is empty");
  }
  std::optional<double> best;
  for (const auto& ref : exemplar_refs) {
    try {
      std::filesystem::path p(ref);
      if (p.is_relative() && !root.empty()) p = root / p;
      const Image exemplar = read_ppm(p);
      const double score = vqa.vqa_yes_score(exemplar, question);
      if (!best || score > *best) best = score;
    } catch (const std::exception&) {
      continue;
    }
  }
  return best;
}

/// Rescales a raw score by its scaling factor: s / max(d, 1e-6), clamped to
/// [0, 1]. The clamp bounds cases where the raw score beats every exemplar;
/// the epsilon guard absorbs degenerate factors.
inline double rescale(double s, double d) {
  constexpr double kEpsilon = 1e-6;
  const double scaled = s / std::max(d, kEpsilon);
  return std::clamp(scaled, 0.0, 1.0);
}

/// All intermediate values for one verified element, kept for audit.
struct VerificationScores {
  std::optional<double> s_qa;         // raw VQA yes-score
  std::optional<double> s_v;          // raw visual similarity
  std::optional<double> d_qa;         // VQA scaling factor
  std::optional<double> d_v;          // visual scaling factor
  std::optional<double> s_qa_scaled;  // rescaled VQA score
  std::optional<double> s_v_scaled;   // rescaled visual score
  std::optional<double> detector_confidence;
  int exemplar_count = 0;
  std::vector<std::string> flags;

  void flag(const std::string& f) { flags.push_back(f); }
  bool has_flag(std::string_view f) const {
    return std::find(flags.begin(), flags.end(), f) != flags.end();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    auto put = [&j](const char* name, const std::optional<double>& v) {
      if (v) j[name] = *v;
    };
    put("s_qa", s_qa);
    put("s_v", s_v);
    put("d_qa", d_qa);
    put("d_v", d_v);
    put("s_qa_scaled", s_qa_scaled);
    put("s_v_scaled", s_v_scaled);
    put("detector_confidence", detector_confidence);
    j["exemplar_count"] = exemplar_count;
    if (!flags.empty()) j["flags"] = flags;
    return j;
  }
};

}  // namespace capcheck
