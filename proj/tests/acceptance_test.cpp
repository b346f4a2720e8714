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
//
// Acceptance suite. Each criterion is one test; a listener prints exactly
// one PASS/FAIL line per criterion at the end of the run.

#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "capcheck/capcheck.hpp"
#include "testutil.hpp"

#ifndef CAPCHECK_CLI_PATH
#define CAPCHECK_CLI_PATH "capcheck"
#endif

namespace capcheck {
namespace {

// ---------------------------------------------------------------------------
// Criterion 1: metrics arithmetic reproduces the published comparison rows
// from back-solved confusion counts, within 0.01 percentage points.
// ---------------------------------------------------------------------------

void realize_counts(size_t tp, size_t fp, size_t fn, size_t tn, std::vector<bool>& preds,
                    std::vector<bool>& labels) {
  preds.clear();
  labels.clear();
  auto push = [&](bool p, bool l, size_t n) {
    for (size_t i = 0; i < n; ++i) {
      preds.push_back(p);
      labels.push_back(l);
    }
  };
  push(true, true, tp);
  push(true, false, fp);
  push(false, true, fn);
  push(false, false, tn);
}

TEST(Acceptance, C1_MetricsArithmetic) {
  struct Row {
    const char* split;
    size_t tp, fp, fn, tn;
    double acc, p, r, f1;
  };
  // Counts back-solved from the published 300-item split rows.
  const Row rows[] = {
      {"adversarial", 145, 11, 5, 139, 94.67, 92.95, 96.67, 94.77},
      {"popular", 140, 9, 10, 141, 93.67, 93.96, 93.33, 93.65},
      {"random", 144, 7, 6, 143, 95.67, 95.36, 96.00, 95.68},
  };
  for (const auto& row : rows) {
    std::vector<bool> preds, labels;
    realize_counts(row.tp, row.fp, row.fn, row.tn, preds, labels);
    ASSERT_EQ(preds.size(), 300u) << row.split;
    const MetricsReport m = compute_metrics(preds, labels, row.split);
    EXPECT_EQ(m.tp, row.tp);
    EXPECT_EQ(m.fp, row.fp);
    EXPECT_EQ(m.fn, row.fn);
    EXPECT_EQ(m.tn, row.tn);
    EXPECT_NEAR(percent2(m.accuracy), row.acc, 0.01) << row.split;
    EXPECT_NEAR(percent2(m.precision), row.p, 0.01) << row.split;
    EXPECT_NEAR(percent2(m.recall), row.r, 0.01) << row.split;
    EXPECT_NEAR(percent2(m.f1), row.f1, 0.01) << row.split;
  }
}

// ---------------------------------------------------------------------------
// Criterion 2: the visual scaling factor equals a brute-force maximum over
// all ordered off-diagonal pairwise cosines, exact to 1e-9, on 1,000 random
// unit-row matrices; rescale reproduces the reported exemplar arithmetic.
// ---------------------------------------------------------------------------

TEST(Acceptance, C2_ScalingFactorOracle) {
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const size_t n_rows = 1 + rng.next_u64() % 64;
    const int dim = 8 + static_cast<int>(rng.next_u64() % 505);  // 8..512
    std::vector<EmbeddingVector> rows;
    rows.reserve(n_rows);
    for (size_t r = 0; r < n_rows; ++r) {
      std::vector<double> raw(static_cast<size_t>(dim));
      for (auto& v : raw) v = rng.next_gaussian();
      rows.push_back(normalized(raw));
    }
    // Independent brute force: every ordered pair, plain double cosine.
    double oracle = n_rows == 1 ? 1.0 : -2.0;
    for (size_t i = 0; i < n_rows; ++i) {
      for (size_t j = 0; j < n_rows; ++j) {
        if (i == j) continue;
        double dot_ij = 0.0, ni = 0.0, nj = 0.0;
        for (int d = 0; d < dim; ++d) {
          const double a = rows[i].values[static_cast<size_t>(d)];
          const double b = rows[j].values[static_cast<size_t>(d)];
          dot_ij += a * b;
          ni += a * a;
          nj += b * b;
        }
        const double c = dot_ij / (std::sqrt(ni) * std::sqrt(nj));
        if (c > oracle) oracle = c;
      }
    }
    ASSERT_NEAR(visual_scaling_factor(rows), oracle, 1e-9) << "trial " << trial;
  }

  // Reported exemplar similarities: 0.558 best-scoring alternative 0.805.
  EXPECT_NEAR(rescale(0.558, 0.805), 0.6932, 1e-4);
  // Clamp and epsilon-guard cases.
  EXPECT_DOUBLE_EQ(rescale(0.9, 0.9), 1.0);
  EXPECT_DOUBLE_EQ(rescale(0.5, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(rescale(0.95, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(rescale(-0.3, 0.8), 0.0);
}

// ---------------------------------------------------------------------------
// Criterion 3: the retrieval index agrees with the exhaustive-scan oracle
// (same keys, same order under the lexicographic tie rule) on 100 random
// stores of up to 10,000 entries, 20 queries each. The optional approximate
// index mode is not enabled in this build, so its recall clause is vacuous.
// ---------------------------------------------------------------------------

TEST(Acceptance, C3_RetrievalOracle) {
  SplitMix64 rng(31337);
  for (int store_i = 0; store_i < 100; ++store_i) {
    const uint64_t seed = rng.next_u64();
    const int dim = 8 + static_cast<int>(rng.next_u64() % 57);  // 8..64
    MockTextEncoder enc(seed, dim);
    KnowledgeBase kb;
    const size_t n = 1 + rng.next_u64() % 10000;
    for (size_t i = 0; i < n; ++i) {
      DatastoreEntry e;
      e.key = make_key(KeyKind::entity, {"item" + std::to_string(i)});
      e.kind = KeyKind::entity;
      e.text = "item" + std::to_string(i);
      // Every eighth entry reuses the previous embedding to force ties.
      if (i % 8 == 7) {
        e.key_embedding = kb.find("entity:item" + std::to_string(i - 1))->key_embedding;
      } else {
        e.key_embedding = enc.encode_text(e.text);
      }
      e.crop_refs = {"crops/none.ppm"};
      kb.add(std::move(e));
    }
    kb.freeze();
    for (int q = 0; q < 20; ++q) {
      const std::string query = "probe " + std::to_string(rng.next_u64());
      const size_t k = 1 + rng.next_u64() % 20;
      const RetrievedSet fast = kb.retrieve(query, k, enc);
      const RetrievedSet slow = kb.brute_force_retrieve(query, k, enc);
      ASSERT_EQ(fast.entries.size(), slow.entries.size()) << "store " << store_i;
      for (size_t i = 0; i < fast.entries.size(); ++i) {
        ASSERT_EQ(fast.entries[i].key, slow.entries[i].key)
            << "store " << store_i << " query " << q << " rank " << i;
        ASSERT_EQ(fast.entries[i].similarity, slow.entries[i].similarity);
      }
      for (size_t i = 1; i < fast.entries.size(); ++i) {
        ASSERT_GE(fast.entries[i - 1].similarity, fast.entries[i].similarity);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Criterion 4: knowledge-base build completeness and persistence fidelity.
// ---------------------------------------------------------------------------

struct KbFixture {
  std::string annotations_path;
  size_t objects = 0, attributes = 0, relationships = 0;
};

KbFixture write_kb_fixture(const std::filesystem::path& dir) {
  KbFixture fx;
  std::string ann;
  SplitMix64 rng(404);
  std::filesystem::create_directories(dir / "images");
  for (int rec_i = 0; rec_i < 10; ++rec_i) {
    const std::string img_name = "kbimg" + std::to_string(rec_i) + ".ppm";
    const Image img = test::pattern_image(80, 60, 9000 + static_cast<uint64_t>(rec_i));
    write_ppm(img, dir / "images" / img_name);
    nlohmann::json objects = nlohmann::json::array();
    const size_t n_obj = 2 + rng.next_u64() % 3;
    for (size_t o = 0; o < n_obj; ++o) {
      nlohmann::json obj;
      obj["name"] = "thing" + std::to_string(rec_i) + "_" + std::to_string(o);
      // One object per third record extends out of bounds; record 7's second
      // object is fully outside and must be skipped.
      if (rec_i == 7 && o == 1) {
        obj["box"] = {300, 300, 10, 10};
      } else if (rec_i % 3 == 0 && o == 0) {
        obj["box"] = {-4, -4, 30, 30};
      } else {
        obj["box"] = {static_cast<int>(rng.next_u64() % 40),
                      static_cast<int>(rng.next_u64() % 30),
                      static_cast<int>(5 + rng.next_u64() % 30),
                      static_cast<int>(5 + rng.next_u64() % 25)};
      }
      nlohmann::json attrs = nlohmann::json::array();
      const size_t n_attr = rng.next_u64() % 3;
      for (size_t a = 0; a < n_attr; ++a) attrs.push_back("quality" + std::to_string(a));
      obj["attributes"] = attrs;
      fx.attributes += n_attr;
      objects.push_back(std::move(obj));
    }
    fx.objects += n_obj;
    nlohmann::json rels = nlohmann::json::array();
    rels.push_back({{"subject", 0}, {"relation", "near"}, {"object", 1}});
    fx.relationships += 1;
    nlohmann::json rec = {{"image_id", rec_i}, {"image", img_name}, {"objects", objects},
                          {"relationships", rels}};
    ann += rec.dump() + "\n";
  }
  const auto ann_path = dir / "annotations.jsonl";
  test::write_text_file(ann_path, ann);
  fx.annotations_path = ann_path.string();
  return fx;
}

TEST(Acceptance, C4_KbBuildAndPersistence) {
  test::TempDir dir("accept_kb");
  const KbFixture fx = write_kb_fixture(dir.path());
  MockTextEncoder enc(7, 32);

  // Completeness: emitted entries match the counting identity exactly.
  KbBuildSummary summary;
  KnowledgeBase kb = build_kb(fx.annotations_path, dir.path() / "images", enc,
                              dir.path() / "kb_a", &summary);
  EXPECT_EQ(summary.records, 10u);
  EXPECT_GT(summary.stats.skipped, 0u);  // the fixture plants one skipped object
  EXPECT_EQ(summary.stats.emitted,
            fx.objects + fx.attributes + fx.relationships - summary.stats.skipped);
  kb.save(dir.path() / "kb_a");

  // Round trip: retrieval results reproduce bit-for-bit.
  const KnowledgeBase loaded = KnowledgeBase::load(dir.path() / "kb_a");
  ASSERT_EQ(loaded.size(), kb.size());
  SplitMix64 rng(5150);
  for (int q = 0; q < 20; ++q) {
    const std::string query = "probe " + std::to_string(rng.next_u64());
    const RetrievedSet a = kb.retrieve(query, 5, enc);
    const RetrievedSet b = loaded.retrieve(query, 5, enc);
    ASSERT_EQ(a.entries.size(), b.entries.size());
    for (size_t i = 0; i < a.entries.size(); ++i) {
      ASSERT_EQ(a.entries[i].key, b.entries[i].key);
      ASSERT_EQ(a.entries[i].similarity, b.entries[i].similarity);  // bit-exact
    }
  }

  // Rebuild from the same inputs: identical manifest digest.
  KnowledgeBase kb2 = build_kb(fx.annotations_path, dir.path() / "images", enc,
                               dir.path() / "kb_b", nullptr);
  kb2.save(dir.path() / "kb_b");
  EXPECT_FALSE(kb.manifest().digest.empty());
  EXPECT_EQ(kb.manifest().digest, kb2.manifest().digest);
}

// ---------------------------------------------------------------------------
// Criterion 5: a 20-item synthetic yes/no benchmark with scripted backends
// scores 100% at default thresholds; flipping one fixture flips exactly one
// prediction.
// Criterion 7 reuses the same workspace through the CLI binary.
// ---------------------------------------------------------------------------

struct SyntheticBenchmark {
  std::vector<BenchmarkItem> items;
  std::vector<std::string> questions;  // existence questions per item
  std::vector<std::string> digests;    // image digest per item
  std::filesystem::path images_root;
  std::string vqa_fixture_path;
  std::string benchmark_path;
  std::string kb_annotations_path;
};

SyntheticBenchmark write_synthetic_benchmark(const std::filesystem::path& dir) {
  const std::vector<std::string> positives = {"dog",    "cat",  "car",  "tree",  "chair",
                                              "bottle", "horse", "boat", "clock", "bird"};
  const std::vector<std::string> negatives = {"umbrella", "elephant", "pizza", "laptop",
                                              "keyboard", "spoon",    "zebra", "couch",
                                              "train",    "kite"};
  SyntheticBenchmark bench;
  bench.images_root = dir / "images";
  std::filesystem::create_directories(bench.images_root);

  std::string vqa_fixture;
  std::string bench_lines;
  for (int i = 0; i < 20; ++i) {
    const bool positive = i < 10;
    const std::string entity = positive ? positives[static_cast<size_t>(i)]
                                        : negatives[static_cast<size_t>(i - 10)];
    const std::string img_name = "bench" + std::to_string(i) + ".ppm";
    const Image img = test::pattern_image(48, 36, 7000 + static_cast<uint64_t>(i));
    write_ppm(img, bench.images_root / img_name);
    const std::string digest = image_digest(img);
    const std::string question = "Is there a " + entity + " in the image?";
    const std::string existence_q = build_question(QuestionKind::existence, {entity});
    vqa_fixture += digest + "\t" + existence_q + "\t" + (positive ? "0.9" : "0.1") + "\n";

    nlohmann::json rec = {{"question_id", i},
                          {"image", img_name},
                          {"text", question},
                          {"label", positive ? "yes" : "no"}};
    bench_lines += rec.dump() + "\n";

    BenchmarkItem item;
    item.item_id = std::to_string(i);
    item.image_ref = img_name;
    item.question = question;
    item.label_yes = positive;
    item.split = "default";
    bench.items.push_back(std::move(item));
    bench.questions.push_back(existence_q);
    bench.digests.push_back(digest);
  }
  bench.vqa_fixture_path = (dir / "vqa_fixtures.tsv").string();
  test::write_text_file(bench.vqa_fixture_path, vqa_fixture);
  bench.benchmark_path = (dir / "benchmark.jsonl").string();
  test::write_text_file(bench.benchmark_path, bench_lines);

  // Small knowledge base covering a few of the positive entities.
  std::string ann;
  for (int rec_i = 0; rec_i < 3; ++rec_i) {
    const std::string img_name = "kb" + std::to_string(rec_i) + ".ppm";
    const Image img = test::pattern_image(64, 48, 7700 + static_cast<uint64_t>(rec_i));
    write_ppm(img, bench.images_root / img_name);
    nlohmann::json rec = {
        {"image_id", rec_i},
        {"image", img_name},
        {"objects",
         {{{"name", positives[static_cast<size_t>(rec_i) * 2]}, {"box", {4, 4, 20, 20}},
           {"attributes", {"small"}}},
          {{"name", positives[static_cast<size_t>(rec_i) * 2 + 1]}, {"box", {30, 10, 20, 20}},
           {"attributes", nlohmann::json::array()}}}},
        {"relationships", {{{"subject", 0}, {"relation", "near"}, {"object", 1}}}}};
    ann += rec.dump() + "\n";
  }
  bench.kb_annotations_path = (dir / "kb_annotations.jsonl").string();
  test::write_text_file(bench.kb_annotations_path, ann);
  return bench;
}

TEST(Acceptance, C5_EndToEndSyntheticBenchmark) {
  test::TempDir dir("accept_e2e");
  const SyntheticBenchmark bench = write_synthetic_benchmark(dir.path());

  MockTextEncoder text_enc(42, 64);
  MockImageEncoder image_enc(42, 64);
  ScriptedVqa vqa(0.5);
  vqa.load_fixture_file(bench.vqa_fixture_path);
  ScriptedDetector detector;  // no fixtures: every entity takes the VQA path

  KnowledgeBase kb = build_kb(bench.kb_annotations_path, bench.images_root, text_enc,
                              dir.path() / "kb", nullptr);
  kb.save(dir.path() / "kb");

  Backends backends;
  backends.text = &text_enc;
  backends.image = &image_enc;
  backends.vqa = &vqa;
  backends.detector = &detector;
  const PipelineConfig config;  // defaults: threshold 0.5, fusion weight 0.5

  const BenchmarkRun base = run_benchmark(bench.items, bench.images_root, &kb, backends, config);
  ASSERT_EQ(base.error_count, 0u);
  ASSERT_EQ(base.per_split.size(), 1u);
  const MetricsReport& m = base.per_split.at("default");
  EXPECT_EQ(m.item_count, 20u);
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(m.f1, 1.0);

  // Flip one fixture: item 3's existence score drops from 0.9 to 0.1.
  vqa.set(bench.digests[3], bench.questions[3], 0.1);
  const BenchmarkRun flipped = run_benchmark(bench.items, bench.images_root, &kb, backends, config);
  size_t changed = 0;
  for (size_t i = 0; i < base.items.size(); ++i) {
    if (base.items[i].predicted_yes != flipped.items[i].predicted_yes) {
      ++changed;
      EXPECT_EQ(i, 3u);
    }
  }
  EXPECT_EQ(changed, 1u);
  EXPECT_FALSE(flipped.items[3].predicted_yes);
}

// ---------------------------------------------------------------------------
// Criterion 6: question templates match the published wording verbatim over
// randomized inputs; question-to-claim conversion reproduces the dog example
// and is idempotent on generated declaratives.
// ---------------------------------------------------------------------------

TEST(Acceptance, C6_TemplateFidelity) {
  const std::vector<std::string> entities = {"man",  "hat",   "dog",  "tree", "cup",
                                             "car",  "woman", "bench", "sign", "cabinet"};
  const std::vector<std::string> attributes = {"black", "small", "wooden", "red", "round"};
  const std::vector<std::string> relations = {"wearing", "holding", "near", "on", "under"};
  SplitMix64 rng(606);
  for (int i = 0; i < 50; ++i) {
    const std::string& e = entities[rng.next_u64() % entities.size()];
    const std::string& a = attributes[rng.next_u64() % attributes.size()];
    const std::string& s = entities[rng.next_u64() % entities.size()];
    const std::string& r = relations[rng.next_u64() % relations.size()];
    const std::string& o = entities[rng.next_u64() % entities.size()];
    ASSERT_EQ(build_question(QuestionKind::attribute, {e, a}), "Is the " + e + " " + a + "?");
    ASSERT_EQ(build_question(QuestionKind::relation, {s, r, o}),
              "Is the " + s + " " + r + " " + o + "?");
    ASSERT_EQ(build_question(QuestionKind::existence, {e}), "Is there " + e + " in the image?");
  }

  // The published conversion example, exactly.
  const Claim dog = question_to_claim("Is there a dog in the image?");
  EXPECT_EQ(dog.text, "There is a dog in the image.");

  // Idempotence across 100 generated declaratives.
  int checked = 0;
  for (int i = 0; i < 100; ++i) {
    const std::string& e = entities[rng.next_u64() % entities.size()];
    const std::string& a = attributes[rng.next_u64() % attributes.size()];
    const std::string& o = entities[rng.next_u64() % entities.size()];
    const std::string& r = relations[rng.next_u64() % relations.size()];
    std::string declarative;
    switch (i % 3) {
      case 0: declarative = "There is a " + e + " in the image."; break;
      case 1: declarative = "The " + e + " is " + a + "."; break;
      default: declarative = "The " + e + " is " + r + " the " + o + "."; break;
    }
    const Claim first = question_to_claim(declarative);
    ASSERT_TRUE(first.pass_through) << declarative;
    ASSERT_EQ(first.text, declarative);
    const Claim second = question_to_claim(first.text);
    ASSERT_EQ(second.text, first.text);
    ++checked;
  }
  EXPECT_EQ(checked, 100);
}

// ---------------------------------------------------------------------------
// Criterion 7: two full CLI evaluation runs with identical seed and config
// produce byte-identical metrics summaries.
// ---------------------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CAPCHECK_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

TEST(Acceptance, C7_DeterministicEvaluation) {
  test::TempDir dir("accept_cli");
  const SyntheticBenchmark bench = write_synthetic_benchmark(dir.path());

  const std::string kb_dir = (dir.path() / "kb").string();
  ASSERT_EQ(run_cli("build-kb --annotations " + bench.kb_annotations_path + " --images " +
                    bench.images_root.string() + " --kb-out " + kb_dir + " --seed 42 --dim 64"),
            0);

  const std::string common = "evaluate --benchmark " + bench.benchmark_path +
                             " --format pope --kb " + kb_dir + " --seed 42 --dim 64" +
                             " --vqa-fixtures " + bench.vqa_fixture_path + " --images-root " +
                             bench.images_root.string();
  const std::string out_a = (dir.path() / "run_a").string();
  const std::string out_b = (dir.path() / "run_b").string();
  ASSERT_EQ(run_cli(common + " --out " + out_a), 0);
  ASSERT_EQ(run_cli(common + " --out " + out_b), 0);

  const std::string a = test::read_text_file(dir.path() / "run_a" / "metrics_summary.json");
  const std::string b = test::read_text_file(dir.path() / "run_b" / "metrics_summary.json");
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, b);  // byte-identical

  // The synthetic set also scores perfectly through the CLI.
  const nlohmann::json summary = nlohmann::json::parse(a);
  EXPECT_EQ(summary.at("error_count").get<size_t>(), 0u);
  EXPECT_DOUBLE_EQ(summary.at("splits").at("default").at("accuracy").get<double>(), 1.0);
}

class CriterionLinePrinter : public ::testing::EmptyTestEventListener {
  void OnTestEnd(const ::testing::TestInfo& info) override {
    std::printf("[ACCEPTANCE] %s: %s\n", info.name(),
                info.result()->Passed() ? "PASS" : "FAIL");
    std::fflush(stdout);
  }
};

}  // namespace
}  // namespace capcheck

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  ::testing::UnitTest::GetInstance()->listeners().Append(
      new capcheck::CriterionLinePrinter);
  return RUN_ALL_TESTS();
}
