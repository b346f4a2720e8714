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

#include <gtest/gtest.h>

#include <memory>

#include "capcheck/backends.hpp"
#include "capcheck/remote.hpp"
#include "testutil.hpp"

namespace capcheck {
namespace {

TEST(MockTextEncoder, DeterministicForFixedInstance) {
  MockTextEncoder enc(7, 8);
  const EmbeddingVector a = enc.encode_text("man");
  const EmbeddingVector b = enc.encode_text("man");
  EXPECT_EQ(a, b);  // bit-identical
  EXPECT_EQ(a.dim(), 8);
}

TEST(MockTextEncoder, EqualSeedAndDimAgreeAcrossInstances) {
  MockTextEncoder enc1(7, 8);
  MockTextEncoder enc2(7, 8);
  EXPECT_EQ(enc1.encode_text("man"), enc2.encode_text("man"));
  MockTextEncoder enc3(8, 8);
  EXPECT_NE(enc1.encode_text("man"), enc3.encode_text("man"));
}

TEST(MockTextEncoder, DistinctWordsAreNotAligned) {
  MockTextEncoder enc(7, 8);
  const EmbeddingVector man = enc.encode_text("man");
  const EmbeddingVector hat = enc.encode_text("hat");
  EXPECT_LT(cosine(man, hat), 1.0);
}

TEST(MockTextEncoder, UnitNormAcrossDims) {
  for (int dim : {2, 8, 64, 257, 512}) {
    MockTextEncoder enc(3, dim);
    for (const char* word : {"man", "hat", "a longer phrase with spaces", "x"}) {
      EXPECT_TRUE(is_unit_norm(enc.encode_text(word))) << "dim=" << dim << " word=" << word;
    }
  }
}

TEST(MockTextEncoder, EmptyTextRejected) {
  MockTextEncoder enc(7, 8);
  EXPECT_THROW(enc.encode_text(""), InvalidInputError);
  EXPECT_THROW(enc.encode_text("   "), InvalidInputError);
}

TEST(MockImageEncoder, DeterministicAndContentSensitive) {
  MockImageEncoder enc(7, 16);
  Image img = test::pattern_image(8, 6, 1);
  const EmbeddingVector a = enc.encode_image(img);
  const EmbeddingVector b = enc.encode_image(img);
  EXPECT_EQ(a, b);
  EXPECT_NEAR(cosine(a, b), 1.0, 1e-6);

  Image tweaked = img;
  tweaked.data[0] ^= 1;  // one pixel differs
  EXPECT_NE(a, enc.encode_image(tweaked));
  EXPECT_TRUE(is_unit_norm(enc.encode_image(tweaked)));
}

TEST(MockImageEncoder, ZeroAreaRejected) {
  MockImageEncoder enc(7, 16);
  Image empty;
  EXPECT_THROW(enc.encode_image(empty), InvalidInputError);
}

TEST(ScriptedVqa, FixtureEchoAndDefault) {
  ScriptedVqa vqa(0.5);
  Image img = test::pattern_image(8, 8, 2);
  vqa.set(image_digest(img), "Is the hat black?", 0.93);
  EXPECT_DOUBLE_EQ(vqa.vqa_yes_score(img, "Is the hat black?"), 0.93);
  EXPECT_DOUBLE_EQ(vqa.vqa_yes_score(img, "Is the hat red?"), 0.5);
}

TEST(ScriptedVqa, MissErrorWhenDefaultsDisabled) {
  ScriptedVqa vqa(std::nullopt);
  Image img = test::pattern_image(8, 8, 3);
  EXPECT_THROW(vqa.vqa_yes_score(img, "Is there a dog?"), FixtureMissError);
}

TEST(ScriptedVqa, OutOfRangeScoreRejectedAtLoad) {
  ScriptedVqa vqa;
  EXPECT_THROW(vqa.set("abc", "Is it red?", 1.2), InvalidInputError);

  test::TempDir dir("vqa_fixture");
  const auto path = dir.path() / "fixtures.tsv";
  test::write_text_file(path, "abc\tIs it red?\t1.5\n");
  EXPECT_THROW(vqa.load_fixture_file(path), InvalidInputError);

  test::write_text_file(path, "abc\tIs it red?\n");
  EXPECT_THROW(vqa.load_fixture_file(path), InvalidInputError);
}

TEST(ScriptedVqa, FixtureFileRoundTrip) {
  test::TempDir dir("vqa_fixture_rt");
  Image img = test::pattern_image(4, 4, 4);
  const std::string digest = image_digest(img);
  const auto path = dir.path() / "fixtures.tsv";
  test::write_text_file(path, "# comment\n" + digest + "\tIs the hat black?\t0.93\n");
  ScriptedVqa vqa;
  vqa.load_fixture_file(path);
  EXPECT_DOUBLE_EQ(vqa.vqa_yes_score(img, "Is the hat black?"), 0.93);
}

TEST(ScriptedVqa, EmptyQuestionRejected) {
  ScriptedVqa vqa;
  Image img = test::pattern_image(4, 4, 5);
  EXPECT_THROW(vqa.vqa_yes_score(img, ""), InvalidInputError);
}

TEST(ScriptedDetector, FixtureEchoSortedByConfidence) {
  ScriptedDetector det;
  Image img = test::pattern_image(64, 64, 6);
  det.set(image_digest(img), "hat",
          {{{10, 20, 30, 30}, 0.4, "hat"}, {{5, 5, 10, 10}, 0.9, "hat"}, {{1, 1, 4, 4}, 0.7, "hat"}});
  const auto dets = det.detect_objects(img, "hat");
  ASSERT_EQ(dets.size(), 3u);
  EXPECT_DOUBLE_EQ(dets[0].confidence, 0.9);
  EXPECT_DOUBLE_EQ(dets[1].confidence, 0.7);
  EXPECT_DOUBLE_EQ(dets[2].confidence, 0.4);
  EXPECT_EQ(dets[2].box, (BoundingBox{10, 20, 30, 30}));
}

TEST(ScriptedDetector, MissingKeyMeansNotFound) {
  ScriptedDetector det;
  Image img = test::pattern_image(16, 16, 7);
  EXPECT_TRUE(det.detect_objects(img, "unicorn").empty());
}

TEST(ScriptedDetector, BoxesClippedToImage) {
  ScriptedDetector det;
  Image img = test::pattern_image(20, 20, 8);
  det.set(image_digest(img), "hat", {{{15, 15, 30, 30}, 0.8, "hat"}, {{25, 25, 5, 5}, 0.9, "hat"}});
  const auto dets = det.detect_objects(img, "hat");
  ASSERT_EQ(dets.size(), 1u);  // fully outside box dropped
  EXPECT_EQ(dets[0].box, (BoundingBox{15, 15, 5, 5}));
}

TEST(ScriptedDetector, FixtureFileRoundTrip) {
  test::TempDir dir("det_fixture");
  Image img = test::pattern_image(64, 48, 9);
  const std::string digest = image_digest(img);
  const auto path = dir.path() / "detections.tsv";
  test::write_text_file(path, digest + "\that\t10,20,30,20,0.9;1,2,3,4,0.5\n" + digest +
                                  "\tunicorn\t\n");
  ScriptedDetector det;
  det.load_fixture_file(path);
  const auto dets = det.detect_objects(img, "hat");
  ASSERT_EQ(dets.size(), 2u);
  EXPECT_EQ(dets[0].box, (BoundingBox{10, 20, 30, 20}));
  EXPECT_TRUE(det.detect_objects(img, "unicorn").empty());
}

// --- remote protocol ---

struct Mocks {
  MockTextEncoder text{7, 8};
  MockImageEncoder image{7, 8};
  ScriptedVqa vqa;
  ScriptedDetector detector;
};

TEST(RemoteBackend, LoopbackEncodeTextMatchesLocalMock) {
  Mocks mocks;
  RemoteBackend remote(
      std::make_shared<LoopbackTransport>(&mocks.text, &mocks.image, &mocks.vqa, &mocks.detector),
      8);
  const EmbeddingVector local = mocks.text.encode_text("man");
  const EmbeddingVector wire = remote.encode_text("man");
  ASSERT_EQ(wire.dim(), 8);
  EXPECT_TRUE(is_unit_norm(wire));
  EXPECT_NEAR(cosine(local, wire), 1.0, 1e-9);
}

TEST(RemoteBackend, LoopbackVqaAndDetect) {
  Mocks mocks;
  Image img = test::pattern_image(64, 48, 10);
  mocks.vqa.set(image_digest(img), "Is the hat black?", 0.93);
  mocks.detector.set(image_digest(img), "hat", {{{10, 20, 30, 10}, 0.9, "hat"}});
  RemoteBackend remote(
      std::make_shared<LoopbackTransport>(&mocks.text, &mocks.image, &mocks.vqa, &mocks.detector),
      8);
  EXPECT_DOUBLE_EQ(remote.vqa_yes_score(img, "Is the hat black?"), 0.93);
  const auto dets = remote.detect_objects(img, "hat");
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_EQ(dets[0].box, (BoundingBox{10, 20, 30, 10}));
}

class UnsortedDetectionTransport : public Transport {
 public:
  std::string exchange(const std::string&) override {
    return R"({"detections":[
      {"x":1,"y":1,"w":2,"h":2,"confidence":0.3,"phrase":"hat"},
      {"x":2,"y":2,"w":2,"h":2,"confidence":0.9,"phrase":"hat"},
      {"x":3,"y":3,"w":2,"h":2,"confidence":0.6,"phrase":"hat"}]})";
  }
};

TEST(RemoteBackend, UnsortedRemoteDetectionsAreResorted) {
  RemoteBackend remote(std::make_shared<UnsortedDetectionTransport>(), 8);
  Image img = test::pattern_image(16, 16, 11);
  const auto dets = remote.detect_objects(img, "hat");
  ASSERT_EQ(dets.size(), 3u);
  // Oracle: descending order of the scripted confidences.
  EXPECT_DOUBLE_EQ(dets[0].confidence, 0.9);
  EXPECT_DOUBLE_EQ(dets[1].confidence, 0.6);
  EXPECT_DOUBLE_EQ(dets[2].confidence, 0.3);
}

class FailingTransport : public Transport {
 public:
  std::string exchange(const std::string&) override { throw IoError("connection refused"); }
};

class ErrorResponseTransport : public Transport {
 public:
  std::string exchange(const std::string&) override { return R"({"error":"model not loaded"})"; }
};

class BadScoreTransport : public Transport {
 public:
  std::string exchange(const std::string&) override { return R"({"score":1.7})"; }
};

TEST(RemoteBackend, FailuresSurfaceAsBackendUnavailable) {
  Image img = test::pattern_image(8, 8, 12);
  RemoteBackend failing(std::make_shared<FailingTransport>(), 8);
  EXPECT_THROW(failing.encode_text("man"), BackendUnavailableError);

  RemoteBackend error_resp(std::make_shared<ErrorResponseTransport>(), 8);
  EXPECT_THROW(error_resp.vqa_yes_score(img, "Is it red?"), BackendUnavailableError);

  RemoteBackend bad_score(std::make_shared<BadScoreTransport>(), 8);
  EXPECT_THROW(bad_score.vqa_yes_score(img, "Is it red?"), BackendUnavailableError);
}

TEST(RemoteBackend, WrongDimensionRejected) {
  Mocks mocks;  // serves dim-8 vectors
  RemoteBackend remote(
      std::make_shared<LoopbackTransport>(&mocks.text, &mocks.image, &mocks.vqa, &mocks.detector),
      16);
  EXPECT_THROW(remote.encode_text("man"), BackendUnavailableError);
}

}  // namespace
}  // namespace capcheck
