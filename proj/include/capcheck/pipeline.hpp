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

#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "capcheck/backends.hpp"
#include "capcheck/claims.hpp"
#include "capcheck/datastore.hpp"
#include "capcheck/errors.hpp"
#include "capcheck/image.hpp"
#include "capcheck/kb_builder.hpp"
#include "capcheck/scene_graph.hpp"
#include "capcheck/verification.hpp"

namespace capcheck {

/// Tunable pipeline parameters. Defaults: symmetric fusion (w = 0.5),
/// decision threshold 0.5, retrieval k = 5 with up to 10 exemplar crops,
/// and a 0.3 similarity floor below which a KB lookup counts as a miss.
struct PipelineConfig {
  double threshold = 0.5;
  double fusion_weight = 0.5;
  size_t retrieval_k = 5;
  size_t max_exemplars = 10;
  double similarity_floor = 0.3;
  SimilarityAggregator aggregator = SimilarityAggregator::max;
  bool similarity_against_crops = true;  // false scores against exemplar full images

  void validate() const {
    if (threshold < 0.0 || threshold > 1.0) throw InvalidInputError("config: threshold outside [0,1]");
    if (fusion_weight < 0.0 || fusion_weight > 1.0) {
      throw InvalidInputError("config: fusion weight outside [0,1]");
    }
    if (retrieval_k == 0) throw InvalidInputError("config: retrieval k must be positive");
    if (max_exemplars == 0) throw InvalidInputError("config: max exemplars must be positive");
    if (similarity_floor < -1.0 || similarity_floor > 1.0) {
      throw InvalidInputError("config: similarity floor outside [-1,1]");
    }
  }

  nlohmann::json to_json() const {
    return {{"threshold", threshold},
            {"fusion_weight", fusion_weight},
            {"retrieval_k", retrieval_k},
            {"max_exemplars", max_exemplars},
            {"similarity_floor", similarity_floor},
            {"aggregator", aggregator == SimilarityAggregator::max ? "max" : "mean"},
            {"similarity_against_crops", similarity_against_crops}};
  }
};

/// The neural roles the pipeline consumes. The parser may be null, in which
/// case the built-in rule-based parser runs.
struct Backends {
  TextEncoder* text = nullptr;
  ImageEncoder* image = nullptr;
  VqaModel* vqa = nullptr;
  ObjectDetector* detector = nullptr;
  SceneGraphParser* parser = nullptr;
};

/// Weighted combination of the two verification channels; with only one
/// channel present, that channel's score is passed through.
inline double fuse_scores(std::optional<double> s_qa_scaled, std::optional<double> s_v_scaled,
                          double w) {
  if (w < 0.0 || w > 1.0) throw InvalidInputError("fuse_scores: weight outside [0,1]");
  if (s_qa_scaled && s_v_scaled) return w * *s_qa_scaled + (1.0 - w) * *s_v_scaled;
  if (s_qa_scaled) return *s_qa_scaled;
  if (s_v_scaled) return *s_v_scaled;
  throw InvalidInputError("fuse_scores: both channels absent");
}

/// An element is hallucinated when its score falls below the threshold;
/// the boundary itself counts as present.
inline bool decide(double score, double threshold) { return score < threshold; }

struct ElementScore {
  double score = 0.0;
  bool hallucinated = false;
  VerificationScores detail;
};

/// Final per-caption output: one score per unique entity name, attribute
/// pair, and relation triplet, plus the binary decisions at the configured
/// threshold and full per-element provenance.
struct HallucinationReport {
  std::string caption;
  std::string image_ref;
  SceneGraph graph;
  std::map<std::string, ElementScore> entity_scores;
  std::map<std::pair<std::string, std::string>, ElementScore> attribute_scores;
  std::map<std::tuple<std::string, std::string, std::string>, ElementScore> relation_scores;
  bool detector_degraded = false;
  bool kb_degraded = false;
  PipelineConfig config;

  size_t element_count() const {
    return entity_scores.size() + attribute_scores.size() + relation_scores.size();
  }

  bool any_hallucinated() const {
    for (const auto& [k, v] : entity_scores) {
      if (v.hallucinated) return true;
    }
    for (const auto& [k, v] : attribute_scores) {
      if (v.hallucinated) return true;
    }
    for (const auto& [k, v] : relation_scores) {
      if (v.hallucinated) return true;
    }
    return false;
  }

  nlohmann::json to_json() const {
    nlohmann::json entities = nlohmann::json::object();
    for (const auto& [name, s] : entity_scores) {
      entities[name] = element_json(s);
    }
    nlohmann::json attributes = nlohmann::json::array();
    for (const auto& [key, s] : attribute_scores) {
      nlohmann::json ja = element_json(s);
      ja["entity"] = key.first;
      ja["attribute"] = key.second;
      attributes.push_back(std::move(ja));
    }
    nlohmann::json relations = nlohmann::json::array();
    for (const auto& [key, s] : relation_scores) {
      nlohmann::json jr = element_json(s);
      jr["subject"] = std::get<0>(key);
      jr["relation"] = std::get<1>(key);
      jr["object"] = std::get<2>(key);
      relations.push_back(std::move(jr));
    }
    return {{"caption", caption},
            {"image", image_ref},
            {"scene_graph", graph.to_json()},
            {"entity_scores", std::move(entities)},
            {"attribute_scores", std::move(attributes)},
            {"relation_scores", std::move(relations)},
            {"detector_degraded", detector_degraded},
            {"kb_degraded", kb_degraded},
            {"config", config.to_json()}};
  }

 private:
  static nlohmann::json element_json(const ElementScore& s) {
    return {{"score", s.score}, {"hallucinated", s.hallucinated}, {"detail", s.detail.to_json()}};
  }
};

namespace detail {

struct RetrievalOutcome {
  std::vector<std::string> exemplar_refs;       // resolved against KB root by caller
  std::vector<EmbeddingVector> exemplar_rows;   // embeddings of the exemplar crops
  bool miss = true;
};

/// Shared retrieval step: exact canonical key or embedding search, with the
/// similarity floor guarding against unrelated exemplars.
inline RetrievalOutcome retrieve_exemplars(const KnowledgeBase* kb, const std::string& key,
                                           const Backends& backends, const PipelineConfig& config,
                                           VerificationScores& detail) {
  RetrievalOutcome out;
  if (kb == nullptr || kb->empty()) return out;
  RetrievedSet rs;
  try {
    rs = kb->retrieve(key, config.retrieval_k, *backends.text, backends.image,
                      config.max_exemplars, config.similarity_against_crops);
  } catch (const std::exception& e) {
    detail.flag(std::string("retrieval-failed: ") + e.what());
    return out;
  }
  if (rs.entries.empty()) return out;
  if (!rs.exact_match && rs.entries.front().similarity < config.similarity_floor) {
    detail.flag("kb-miss");
    return out;
  }
  out.exemplar_refs = rs.exemplar_refs;
  out.exemplar_rows = std::move(rs.exemplar_embeddings);
  out.miss = false;
  detail.exemplar_count = static_cast<int>(out.exemplar_refs.size());
  return out;
}

/// VQA channel with exemplar-calibrated rescaling.
inline void score_vqa_channel(const Image& image, const std::string& question,
                              const RetrievalOutcome& retrieval, const KnowledgeBase* kb,
                              const Backends& backends, VerificationScores& detail) {
  detail.s_qa = vqa_soft_score(image, question, *backends.vqa);
  if (!detail.s_qa) {
    detail.flag("vqa-unavailable");
    return;
  }
  if (!retrieval.miss && !retrieval.exemplar_refs.empty()) {
    detail.d_qa = vqa_scaling_factor(question, retrieval.exemplar_refs, *backends.vqa,
                                     kb != nullptr ? kb->root() : std::filesystem::path{});
  }
  if (detail.d_qa) {
    detail.s_qa_scaled = rescale(*detail.s_qa, *detail.d_qa);
  } else {
    detail.s_qa_scaled = detail.s_qa;  // no exemplars to calibrate against
    detail.flag("qa-unscaled");
  }
}

/// Visual channel: encode the region, score against exemplar rows, rescale
/// by the exemplars' mutual similarity.
inline void score_visual_channel(const Image& region, const RetrievalOutcome& retrieval,
                                 const Backends& backends, const PipelineConfig& config,
                                 VerificationScores& detail) {
  if (retrieval.miss || retrieval.exemplar_rows.empty()) return;
  EmbeddingVector f;
  try {
    f = backends.image->encode_image(region);
  } catch (const std::exception& e) {
    detail.flag(std::string("visual-encode-failed: ") + e.what());
    return;
  }
  detail.s_v = visual_similarity_score(f, retrieval.exemplar_rows, config.aggregator);
  detail.d_v = visual_scaling_factor(retrieval.exemplar_rows);
  detail.s_v_scaled = rescale(*detail.s_v, *detail.d_v);
}

inline ElementScore finish_element(VerificationScores detail, const PipelineConfig& config) {
  ElementScore out;
  if (detail.s_qa_scaled || detail.s_v_scaled) {
    out.score = fuse_scores(detail.s_qa_scaled, detail.s_v_scaled, config.fusion_weight);
  } else {
    out.score = 0.5;  // nothing could verify this element
    detail.flag("unverifiable");
  }
  out.hallucinated = decide(out.score, config.threshold);
  out.detail = std::move(detail);
  return out;
}

}  // namespace detail

/// Runs the full verification pass over one caption: parse into a scene
/// graph, gate entities with the detector, verify each element with soft
/// VQA plus exemplar-calibrated visual similarity, fuse, and threshold.
inline HallucinationReport verify_caption(const Image& image, std::string_view caption,
                                          const KnowledgeBase* kb, const Backends& backends,
                                          const PipelineConfig& config,
                                          std::string image_ref = {}) {
  if (backends.text == nullptr || backends.image == nullptr || backends.vqa == nullptr ||
      backends.detector == nullptr) {
    throw InvalidInputError("verify_caption: text, image, vqa and detector backends are required");
  }
  if (image.empty()) throw InvalidInputError("verify_caption: unreadable or empty image");
  config.validate();

  HallucinationReport report;
  report.caption = std::string(caption);
  report.image_ref = std::move(image_ref);
  report.config = config;
  report.kb_degraded = kb == nullptr || kb->empty();
  report.graph = parse_caption(caption, backends.parser);

  EntityGating gating = gate_entities(image, report.graph, *backends.detector);
  report.detector_degraded = gating.detector_degraded;
  std::map<std::string, const DetectionResult*> by_name;
  for (const auto& r : gating.results) by_name[r.entity.name] = &r;

  auto best_box = [&](const std::string& name) -> const Detection* {
    auto it = by_name.find(name);
    return it == by_name.end() ? nullptr : it->second->best();
  };

  // Entity existence scores. Each scene-graph element lands in exactly one
  // mapping: bare mentions are scored here, attributed mentions through the
  // attribute channel below.
  for (const auto& mention : report.graph.entities) {
    if (mention.attribute) continue;
    const std::string& name = mention.name;
    const DetectionResult* result = by_name.at(name);
    VerificationScores detail;
    ElementScore score;
    if (result->detected) {
      detail.detector_confidence = result->best()->confidence;
      detail.flag("detected");
      score.score = *detail.detector_confidence;
      score.hallucinated = decide(score.score, config.threshold);
      score.detail = std::move(detail);
    } else {
      detail.flag(report.detector_degraded ? "detector-degraded" : "undetected");
      const std::string question = build_question(QuestionKind::existence, {name});
      auto retrieval = detail::retrieve_exemplars(kb, make_key(KeyKind::entity, {name}), backends,
                                                  config, detail);
      detail::score_vqa_channel(image, question, retrieval, kb, backends, detail);
      // Existence of an undetected entity rests on VQA alone.
      detail.s_v_scaled.reset();
      detail.s_v.reset();
      detail.d_v.reset();
      score = detail::finish_element(std::move(detail), config);
    }
    report.entity_scores[name] = std::move(score);
  }

  // Attribute pairs.
  for (const auto& mention : report.graph.entities) {
    if (!mention.attribute) continue;
    const auto key = std::make_pair(mention.name, *mention.attribute);
    if (report.attribute_scores.count(key)) continue;
    VerificationScores detail;
    const std::string question =
        build_question(QuestionKind::attribute, {mention.name, *mention.attribute});
    auto retrieval = detail::retrieve_exemplars(
        kb, make_key(KeyKind::attribute_pair, {mention.name, *mention.attribute}), backends,
        config, detail);
    detail::score_vqa_channel(image, question, retrieval, kb, backends, detail);
    if (const Detection* box = best_box(mention.name)) {
      detail::score_visual_channel(crop(image, box->box), retrieval, backends, config, detail);
    } else {
      detail.flag("no-region");  // undetected entity: VQA-only per the gating rule
    }
    report.attribute_scores[key] = detail::finish_element(std::move(detail), config);
  }

  // Relation triplets.
  for (const auto& triplet : report.graph.relations) {
    const auto key = std::make_tuple(triplet.subject, triplet.relation, triplet.object);
    if (report.relation_scores.count(key)) continue;
    VerificationScores detail;
    const std::string question = build_question(
        QuestionKind::relation, {triplet.subject, triplet.relation, triplet.object});
    auto retrieval = detail::retrieve_exemplars(
        kb, make_key(KeyKind::relation, {triplet.subject, triplet.relation, triplet.object}),
        backends, config, detail);
    detail::score_vqa_channel(image, question, retrieval, kb, backends, detail);
    const Detection* sbox = best_box(triplet.subject);
    const Detection* obox = best_box(triplet.object);
    if (sbox != nullptr && obox != nullptr) {
      const auto region = clip_box(union_box(sbox->box, obox->box), image.width, image.height);
      detail::score_visual_channel(region ? crop(image, *region) : image, retrieval, backends,
                                   config, detail);
    } else {
      // Missing participant region: score the whole image.
      detail::score_visual_channel(image, retrieval, backends, config, detail);
      detail.flag("full-image-region");
    }
    report.relation_scores[key] = detail::finish_element(std::move(detail), config);
  }

  return report;
}

struct BinaryAnswer {
  bool yes = false;
  Claim claim;
  HallucinationReport report;
};

/// Answers a yes/no benchmark question: convert to the affirmative claim,
/// verify it as a caption, say yes exactly when no element is flagged. The
/// mapping from per-element decisions to one answer is isolated here.
inline BinaryAnswer answer_binary_question(const Image& image, std::string_view question,
                                           const KnowledgeBase* kb, const Backends& backends,
                                           const PipelineConfig& config,
                                           std::string image_ref = {}) {
  BinaryAnswer out;
  out.claim = question_to_claim(question);
  out.report =
      verify_caption(image, out.claim.text, kb, backends, config, std::move(image_ref));
  out.yes = !out.report.any_hallucinated();
  return out;
}

}  // namespace capcheck
