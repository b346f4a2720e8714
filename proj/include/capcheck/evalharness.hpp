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

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "capcheck/errors.hpp"
#include "capcheck/geometry.hpp"
#include "capcheck/image.hpp"
#include "capcheck/pipeline.hpp"

namespace capcheck {

/// One yes/no benchmark question.
struct BenchmarkItem {
  std::string item_id;
  std::string image_ref;
  std::string question;
  bool label_yes = false;
  std::string split;
  std::optional<BoundingBox> region;  // instance-level relation benchmarks
};

enum class BenchmarkFormat { pope, rbench };

/// Loads a line-delimited benchmark file. Object-existence records carry
/// {question_id|id, image, text|question, label, split?}; relation-format
/// records add {level, box?}. Any malformed line aborts the load with an
/// error summary naming every offending line.
inline std::vector<BenchmarkItem> load_benchmark(const std::filesystem::path& path,
                                                 BenchmarkFormat format,
                                                 const std::string& default_split = "default") {
  std::ifstream in(path);
  if (!in) throw IoError("load_benchmark: cannot open " + path.string());
  std::vector<BenchmarkItem> items;
  std::vector<std::string> errors;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      BenchmarkItem item;
      if (j.contains("question_id")) {
        item.item_id = j["question_id"].is_string()
                           ? j["question_id"].get<std::string>()
                           : std::to_string(j["question_id"].get<long long>());
      } else if (j.contains("id")) {
        item.item_id = j["id"].is_string() ? j["id"].get<std::string>()
                                           : std::to_string(j["id"].get<long long>());
      } else {
        item.item_id = std::to_string(lineno);
      }
      item.image_ref = j.at("image").get<std::string>();
      item.question = j.contains("text") ? j["text"].get<std::string>()
                                         : j.at("question").get<std::string>();
      const std::string label = j.at("label").get<std::string>();
      if (label == "yes") {
        item.label_yes = true;
      } else if (label == "no") {
        item.label_yes = false;
      } else {
        throw InvalidInputError("unknown label token '" + label + "'");
      }
      if (format == BenchmarkFormat::rbench) {
        item.split = j.contains("level") ? j["level"].get<std::string>()
                                         : j.value("split", default_split);
        if (j.contains("box")) {
          const auto& b = j["box"];
          if (!b.is_array() || b.size() != 4) throw InvalidInputError("box must be [x,y,w,h]");
          item.region = BoundingBox{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(),
                                    b[3].get<int>()};
        }
      } else {
        item.split = j.value("split", default_split);
      }
      if (item.question.empty()) throw InvalidInputError("empty question");
      items.push_back(std::move(item));
    } catch (const std::exception& e) {
      errors.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = "load_benchmark: " + std::to_string(errors.size()) + " malformed record(s) in " +
                      path.string();
    for (const auto& e : errors) msg += "\n  " + e;
    throw InvalidInputError(msg);
  }
  return items;
}

/// Confusion counts and derived metrics for one split. "yes" is the
/// positive class.
struct MetricsReport {
  size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
  std::string split;
  size_t item_count = 0;
  bool degenerate_precision = false;  // tp+fp == 0
  bool degenerate_recall = false;     // tp+fn == 0

  nlohmann::json to_json() const {
    return {{"split", split},       {"item_count", item_count},
            {"tp", tp},             {"fp", fp},
            {"fn", fn},             {"tn", tn},
            {"accuracy", accuracy}, {"precision", precision},
            {"recall", recall},     {"f1", f1},
            {"degenerate_precision", degenerate_precision},
            {"degenerate_recall", degenerate_recall}};
  }
};

/// Percentage with two decimals, half-up, as the comparison tables print.
inline double percent2(double fraction) {
  return std::floor(fraction * 10000.0 + 0.5) / 100.0;
}

inline MetricsReport compute_metrics(const std::vector<bool>& predictions,
                                     const std::vector<bool>& labels,
                                     const std::string& split = "default") {
  if (predictions.size() != labels.size()) {
    throw InvalidInputError("compute_metrics: prediction/label length mismatch");
  }
  if (predictions.empty()) throw InvalidInputError("compute_metrics: empty input");
  MetricsReport m;
  m.split = split;
  m.item_count = predictions.size();
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] && labels[i]) ++m.tp;
    else if (predictions[i] && !labels[i]) ++m.fp;
    else if (!predictions[i] && labels[i]) ++m.fn;
    else ++m.tn;
  }
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(m.item_count);
  m.degenerate_precision = m.tp + m.fp == 0;
  m.degenerate_recall = m.tp + m.fn == 0;
  m.precision = m.degenerate_precision
                    ? 0.0
                    : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
  m.recall =
      m.degenerate_recall ? 0.0 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

struct ItemOutcome {
  BenchmarkItem item;
  bool predicted_yes = false;
  bool correct = false;
  bool errored = false;
  std::string error;
  nlohmann::json report;  // full hallucination report for error analysis
};

struct BenchmarkRun {
  std::map<std::string, MetricsReport> per_split;
  std::vector<ItemOutcome> items;
  size_t error_count = 0;
};

/// Evaluates every item against the pipeline. Item-level failures (missing
/// image, backend fault) are counted as wrong answers and logged; the run
/// continues. With workers > 1 items are scored concurrently against the
/// frozen KB; aggregation order stays fixed, so results are identical.
inline BenchmarkRun run_benchmark(const std::vector<BenchmarkItem>& items,
                                  const std::filesystem::path& images_root,
                                  const KnowledgeBase* kb, const Backends& backends,
                                  const PipelineConfig& config, int workers = 1) {
  BenchmarkRun run;
  run.items.resize(items.size());

  auto evaluate_one = [&](size_t idx) {
    ItemOutcome out;
    out.item = items[idx];
    try {
      std::filesystem::path img_path(out.item.image_ref);
      if (img_path.is_relative() && !images_root.empty()) img_path = images_root / img_path;
      Image image = read_ppm(img_path);
      if (out.item.region) {
        // Instance-level items are verified against the referenced region.
        const auto clipped = clip_box(*out.item.region, image.width, image.height);
        if (!clipped) throw InvalidInputError("item region lies outside the image");
        image = crop(image, *clipped);
      }
      BinaryAnswer answer = answer_binary_question(image, out.item.question, kb, backends, config,
                                                   out.item.image_ref);
      out.predicted_yes = answer.yes;
      out.report = answer.report.to_json();
      out.report["claim"] = answer.claim.text;
    } catch (const std::exception& e) {
      out.errored = true;
      out.error = e.what();
      out.predicted_yes = !out.item.label_yes;  // an unanswerable item scores as wrong
    }
    out.correct = out.predicted_yes == out.item.label_yes;
    run.items[idx] = std::move(out);
  };

  if (workers <= 1 || items.size() <= 1) {
    for (size_t i = 0; i < items.size(); ++i) evaluate_one(i);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    const int n = std::min<int>(workers, static_cast<int>(items.size()));
    pool.reserve(static_cast<size_t>(n));
    for (int t = 0; t < n; ++t) {
      pool.emplace_back([&] {
        while (true) {
          const size_t idx = next.fetch_add(1);
          if (idx >= items.size()) break;
          evaluate_one(idx);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  std::map<std::string, std::pair<std::vector<bool>, std::vector<bool>>> grouped;
  for (const auto& out : run.items) {
    if (out.errored) ++run.error_count;
    auto& [preds, labels] = grouped[out.item.split];
    preds.push_back(out.predicted_yes);
    labels.push_back(out.item.label_yes);
  }
  for (const auto& [split, pl] : grouped) {
    run.per_split[split] = compute_metrics(pl.first, pl.second, split);
  }
  return run;
}

/// Plain-text comparison table, one row per split.
inline std::string format_metrics_table(const BenchmarkRun& run) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-16s %8s %10s %8s %8s %8s\n", "Split", "Items", "Acc",
                "P", "R", "F1");
  out += buf;
  for (const auto& [split, m] : run.per_split) {
    std::snprintf(buf, sizeof(buf), "%-16s %8zu %10.2f %8.2f %8.2f %8.2f\n", split.c_str(),
                  m.item_count, percent2(m.accuracy), percent2(m.precision), percent2(m.recall),
                  percent2(m.f1));
    out += buf;
  }
  return out;
}

}  // namespace capcheck
