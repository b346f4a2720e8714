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

#include <cstdint>
#include <memory>
#include <string>

#include "capcheck/backends.hpp"
#include "capcheck/errors.hpp"
#include "capcheck/pipeline.hpp"

namespace capcheck {

/// Full run configuration: backend selection per role plus pipeline
/// parameters. A snapshot of the effective config is embedded in every
/// output artifact so runs can be audited and reproduced.
struct RunConfig {
  uint64_t seed = 42;
  int dim = 64;
  std::string vqa_fixtures;       // fixture file for the scripted VQA model
  std::string detector_fixtures;  // fixture file for the scripted detector
  double vqa_default = 0.5;       // score for unknown VQA fixture keys
  bool vqa_default_enabled = true;
  std::string parser = "rule";
  std::string kb_path;
  std::string images_root;
  int workers = 1;
  PipelineConfig pipeline;

  void validate() const {
    pipeline.validate();
    if (dim < 1) throw InvalidInputError("config: dim must be positive");
    if (workers < 1) throw InvalidInputError("config: workers must be positive");
    if (vqa_default < 0.0 || vqa_default > 1.0) {
      throw InvalidInputError("config: vqa default outside [0,1]");
    }
    if (parser != "rule") throw InvalidInputError("config: unknown parser '" + parser + "'");
  }

  nlohmann::json to_json() const {
    nlohmann::json j = pipeline.to_json();
    j["seed"] = seed;
    j["dim"] = dim;
    j["vqa_fixtures"] = vqa_fixtures;
    j["detector_fixtures"] = detector_fixtures;
    j["vqa_default"] = vqa_default;
    j["vqa_default_enabled"] = vqa_default_enabled;
    j["parser"] = parser;
    j["kb_path"] = kb_path;
    j["images_root"] = images_root;
    j["workers"] = workers;
    return j;
  }
};

/// Owns the backend instances a RunConfig describes and exposes them
/// through the pipeline's Backends view.
struct BackendSet {
  std::unique_ptr<MockTextEncoder> text;
  std::unique_ptr<MockImageEncoder> image;
  std::unique_ptr<ScriptedVqa> vqa;
  std::unique_ptr<ScriptedDetector> detector;

  Backends view() const {
    Backends b;
    b.text = text.get();
    b.image = image.get();
    b.vqa = vqa.get();
    b.detector = detector.get();
    b.parser = nullptr;  // rule-based fallback
    return b;
  }
};

inline BackendSet make_backends(const RunConfig& config) {
  config.validate();
  BackendSet set;
  set.text = std::make_unique<MockTextEncoder>(config.seed, config.dim);
  set.image = std::make_unique<MockImageEncoder>(config.seed, config.dim);
  set.vqa = std::make_unique<ScriptedVqa>(
      config.vqa_default_enabled ? std::optional<double>(config.vqa_default) : std::nullopt);
  if (!config.vqa_fixtures.empty()) set.vqa->load_fixture_file(config.vqa_fixtures);
  set.detector = std::make_unique<ScriptedDetector>();
  if (!config.detector_fixtures.empty()) set.detector->load_fixture_file(config.detector_fixtures);
  return set;
}

}  // namespace capcheck
