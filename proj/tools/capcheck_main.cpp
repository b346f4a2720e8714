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

#include <CLI11.hpp>

#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "capcheck/capcheck.hpp"

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitError = 2;
constexpr int kExitItemErrors = 3;

struct CliState {
  capcheck::RunConfig config;
  std::string aggregator = "max";
  std::string similarity_target = "crops";
  std::string out;
};

void bind_common_options(CLI::App* cmd, CliState& state) {
  auto& c = state.config;
  cmd->add_option("--seed", c.seed, "Seed for the mock encoders")->envname("CAPCHECK_SEED");
  cmd->add_option("--dim", c.dim, "Embedding dimension")->envname("CAPCHECK_DIM");
  cmd->add_option("--kb", c.kb_path, "Knowledge-base directory")->envname("CAPCHECK_KB");
  cmd->add_option("--vqa-fixtures", c.vqa_fixtures, "Scripted VQA fixture file")
      ->envname("CAPCHECK_VQA_FIXTURES");
  cmd->add_option("--detector-fixtures", c.detector_fixtures, "Scripted detector fixture file")
      ->envname("CAPCHECK_DETECTOR_FIXTURES");
  cmd->add_option("--vqa-default", c.vqa_default, "Score for unknown VQA fixture keys")
      ->envname("CAPCHECK_VQA_DEFAULT");
  cmd->add_option("--threshold", c.pipeline.threshold, "Hallucination decision threshold")
      ->envname("CAPCHECK_THRESHOLD");
  cmd->add_option("--fusion-weight", c.pipeline.fusion_weight,
                  "Weight of the VQA channel in score fusion")
      ->envname("CAPCHECK_FUSION_WEIGHT");
  cmd->add_option("--retrieval-k", c.pipeline.retrieval_k, "Entries per knowledge-base lookup")
      ->envname("CAPCHECK_RETRIEVAL_K");
  cmd->add_option("--max-exemplars", c.pipeline.max_exemplars, "Exemplar crops per lookup")
      ->envname("CAPCHECK_MAX_EXEMPLARS");
  cmd->add_option("--similarity-floor", c.pipeline.similarity_floor,
                  "Best-key similarity below which a lookup counts as a miss")
      ->envname("CAPCHECK_SIMILARITY_FLOOR");
  cmd->add_option("--aggregator", state.aggregator, "Visual similarity aggregator: max|mean")
      ->envname("CAPCHECK_AGGREGATOR");
  cmd->add_option("--similarity-target", state.similarity_target,
                  "Exemplar images used for visual similarity: crops|full")
      ->envname("CAPCHECK_SIMILARITY_TARGET");
  cmd->add_option("--images-root", c.images_root, "Directory image refs resolve against")
      ->envname("CAPCHECK_IMAGES_ROOT");
  cmd->add_option("--workers", c.workers, "Concurrent evaluation workers")
      ->envname("CAPCHECK_WORKERS");
  cmd->add_option("--out", state.out, "Output path")->envname("CAPCHECK_OUT");
}

capcheck::RunConfig finalize_config(CliState& state) {
  if (state.aggregator == "max") {
    state.config.pipeline.aggregator = capcheck::SimilarityAggregator::max;
  } else if (state.aggregator == "mean") {
    state.config.pipeline.aggregator = capcheck::SimilarityAggregator::mean;
  } else {
    throw capcheck::InvalidInputError("unknown aggregator '" + state.aggregator + "'");
  }
  if (state.similarity_target == "crops") {
    state.config.pipeline.similarity_against_crops = true;
  } else if (state.similarity_target == "full") {
    state.config.pipeline.similarity_against_crops = false;
  } else {
    throw capcheck::InvalidInputError("unknown similarity target '" + state.similarity_target +
                                      "'");
  }
  state.config.validate();
  return state.config;
}

std::optional<capcheck::KnowledgeBase> load_kb_if_configured(const capcheck::RunConfig& config) {
  if (config.kb_path.empty()) return std::nullopt;
  return capcheck::KnowledgeBase::load(config.kb_path);
}

nlohmann::json config_stamp(const capcheck::RunConfig& config,
                            const capcheck::KnowledgeBase* kb) {
  nlohmann::json j = {{"config", config.to_json()}};
  j["kb_digest"] = kb != nullptr ? kb->manifest().digest : "";
  return j;
}

void write_output(const std::string& path, const std::string& data) {
  if (path.empty() || path == "-") {
    std::cout << data;
    return;
  }
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw capcheck::IoError("cannot write " + path);
  out << data;
}

int cmd_build_kb(CliState& state, const std::string& annotations, const std::string& images,
                 const std::string& out_dir) {
  const capcheck::RunConfig config = finalize_config(state);
  capcheck::MockTextEncoder encoder(config.seed, config.dim);
  capcheck::KbBuildSummary summary;
  capcheck::KnowledgeBase kb =
      capcheck::build_kb(annotations, images, encoder, out_dir, &summary);
  kb.set_build_param("seed", std::to_string(config.seed));
  kb.save(out_dir);
  std::cout << "records:        " << summary.records << "\n"
            << "entries:        " << kb.size() << "\n"
            << "emitted:        " << summary.stats.emitted << "\n"
            << "skipped:        " << summary.stats.skipped << "\n"
            << "clipped boxes:  " << summary.stats.clipped << "\n"
            << "digest:         " << kb.manifest().digest << "\n"
            << "saved to:       " << out_dir << "\n";
  return kExitOk;
}

int cmd_verify(CliState& state, const std::string& image_path, const std::string& caption) {
  const capcheck::RunConfig config = finalize_config(state);
  const capcheck::Image image = capcheck::read_ppm(image_path);
  const auto kb = load_kb_if_configured(config);
  const capcheck::BackendSet backends = capcheck::make_backends(config);
  const capcheck::HallucinationReport report =
      capcheck::verify_caption(image, caption, kb ? &*kb : nullptr, backends.view(),
                               config.pipeline, image_path);

  nlohmann::json j = report.to_json();
  j.update(config_stamp(config, kb ? &*kb : nullptr));
  write_output(state.out, j.dump(2) + "\n");

  std::cerr << "elements: " << report.element_count()
            << "  hallucinated: " << (report.any_hallucinated() ? "yes" : "no") << "\n";
  for (const auto& [name, s] : report.entity_scores) {
    std::cerr << "  entity    " << name << "  score " << s.score
              << (s.hallucinated ? "  HALLUCINATED" : "") << "\n";
  }
  for (const auto& [key, s] : report.attribute_scores) {
    std::cerr << "  attribute " << key.first << "|" << key.second << "  score " << s.score
              << (s.hallucinated ? "  HALLUCINATED" : "") << "\n";
  }
  for (const auto& [key, s] : report.relation_scores) {
    std::cerr << "  relation  " << std::get<0>(key) << "|" << std::get<1>(key) << "|"
              << std::get<2>(key) << "  score " << s.score
              << (s.hallucinated ? "  HALLUCINATED" : "") << "\n";
  }
  return kExitOk;
}

int cmd_evaluate(CliState& state, const std::string& benchmark_path, const std::string& format,
                 const std::string& split) {
  const capcheck::RunConfig config = finalize_config(state);
  capcheck::BenchmarkFormat fmt;
  if (format == "pope") {
    fmt = capcheck::BenchmarkFormat::pope;
  } else if (format == "rbench") {
    fmt = capcheck::BenchmarkFormat::rbench;
  } else {
    throw CLI::ValidationError("--format", "unknown format token '" + format + "'");
  }
  const auto items = capcheck::load_benchmark(benchmark_path, fmt, split);
  if (items.empty()) std::cerr << "warning: benchmark file has zero items\n";

  const auto kb = load_kb_if_configured(config);
  const capcheck::BackendSet backends = capcheck::make_backends(config);
  const capcheck::BenchmarkRun run =
      capcheck::run_benchmark(items, config.images_root, kb ? &*kb : nullptr, backends.view(),
                              config.pipeline, config.workers);

  nlohmann::json summary = config_stamp(config, kb ? &*kb : nullptr);
  summary["item_count"] = items.size();
  summary["error_count"] = run.error_count;
  nlohmann::json splits = nlohmann::json::object();
  for (const auto& [name, m] : run.per_split) splits[name] = m.to_json();
  summary["splits"] = std::move(splits);

  const fs::path out_dir = state.out.empty() ? fs::path(".") : fs::path(state.out);
  fs::create_directories(out_dir);
  write_output((out_dir / "metrics_summary.json").string(), summary.dump(2) + "\n");
  for (const auto& [name, m] : run.per_split) {
    std::string safe = name;
    for (char& c : safe) {
      if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
    }
    nlohmann::json per_split = config_stamp(config, kb ? &*kb : nullptr);
    per_split["metrics"] = m.to_json();
    write_output((out_dir / ("metrics_" + safe + ".json")).string(), per_split.dump(2) + "\n");
  }
  {
    std::ofstream items_out(out_dir / "items.jsonl", std::ios::binary);
    for (const auto& item : run.items) {
      nlohmann::json ji = {{"id", item.item.item_id},
                           {"split", item.item.split},
                           {"question", item.item.question},
                           {"label", item.item.label_yes ? "yes" : "no"},
                           {"prediction", item.predicted_yes ? "yes" : "no"},
                           {"correct", item.correct}};
      if (item.errored) ji["error"] = item.error;
      if (!item.report.is_null()) ji["report"] = item.report;
      items_out << ji.dump() << "\n";
    }
  }
  write_output((out_dir / "metrics_table.txt").string(), capcheck::format_metrics_table(run));
  std::cout << capcheck::format_metrics_table(run);
  if (run.error_count > 0) {
    std::cerr << run.error_count << " item(s) failed and were counted as wrong answers\n";
    return kExitItemErrors;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "capcheck: training-free hallucination verification for image descriptions.\n"
      "Parses captions into scene graphs and validates entities, attributes and\n"
      "relations with detector gating, soft VQA scoring and exemplar retrieval."};
  app.require_subcommand(1);

  CliState state;
  // Shared options live on the app; subcommands fall through to them, so
  // they may be given before or after the subcommand name. Precedence:
  // command-line flags > CAPCHECK_* environment variables > config file >
  // built-in defaults.
  app.set_config("--config", "", "Config file with key=value lines matching the long options");
  bind_common_options(&app, state);

  std::string annotations, images, kb_out;
  CLI::App* build = app.add_subcommand("build-kb", "Cut annotated regions into a knowledge base");
  build->fallthrough();
  build->add_option("--annotations", annotations, "Annotation file (one JSON record per line)")
      ->required();
  build->add_option("--images", images, "Directory annotation image refs resolve against");
  build->add_option("--kb-out", kb_out, "Output knowledge-base directory")->required();

  std::string image_path, caption;
  CLI::App* verify = app.add_subcommand("verify", "Verify one caption against one image");
  verify->fallthrough();
  verify->add_option("--image", image_path, "Image file (binary PPM)")->required();
  verify->add_option("--caption", caption, "Caption text to verify")->required();

  std::string benchmark_path, format = "pope", split = "default";
  CLI::App* evaluate = app.add_subcommand("evaluate", "Run a yes/no benchmark file");
  evaluate->fallthrough();
  evaluate->add_option("--benchmark", benchmark_path, "Benchmark file (JSON lines)")->required();
  evaluate->add_option("--format", format, "Benchmark format: pope|rbench");
  evaluate->add_option("--split", split, "Split name for records that do not carry one");

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) return cmd_build_kb(state, annotations, images, kb_out);
    if (verify->parsed()) return cmd_verify(state, image_path, caption);
    if (evaluate->parsed()) return cmd_evaluate(state, benchmark_path, format, split);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
