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

#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capcheck/backends.hpp"
#include "capcheck/embedding.hpp"
#include "capcheck/errors.hpp"
#include "capcheck/geometry.hpp"
#include "capcheck/image.hpp"
#include "capcheck/scene_graph.hpp"

namespace capcheck {

enum class KeyKind { entity, attribute_pair, relation };

inline std::string key_kind_name(KeyKind kind) {
  switch (kind) {
    case KeyKind::entity: return "entity";
    case KeyKind::attribute_pair: return "attr";
    case KeyKind::relation: return "rel";
  }
  throw InvalidInputError("key_kind_name: unknown kind");
}

/// Canonical serialization of a datastore key:
///   entity:<e>  |  attr:<e>|<a>  |  rel:<s>|<r>|<o>
/// Parts are normalized before joining; injective within a kind.
inline std::string make_key(KeyKind kind, std::span<const std::string> parts) {
  const size_t expected = kind == KeyKind::entity ? 1 : kind == KeyKind::attribute_pair ? 2 : 3;
  if (parts.size() != expected) {
    throw InvalidInputError("make_key: expected " + std::to_string(expected) + " parts for kind " +
                            key_kind_name(kind) + ", got " + std::to_string(parts.size()));
  }
  std::string out = key_kind_name(kind) + ":";
  for (size_t i = 0; i < parts.size(); ++i) {
    const std::string norm = normalize_phrase(parts[i]);
    if (norm.empty()) throw InvalidInputError("make_key: empty part after normalization");
    if (i > 0) out.push_back('|');
    out += norm;
  }
  return out;
}

inline std::string make_key(KeyKind kind, std::initializer_list<std::string> parts) {
  std::vector<std::string> v(parts);
  return make_key(kind, std::span<const std::string>(v));
}

struct ParsedKey {
  KeyKind kind;
  std::vector<std::string> parts;
};

inline std::optional<ParsedKey> parse_key(std::string_view key) {
  const size_t colon = key.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  const std::string_view prefix = key.substr(0, colon);
  KeyKind kind;
  size_t arity;
  if (prefix == "entity") {
    kind = KeyKind::entity;
    arity = 1;
  } else if (prefix == "attr") {
    kind = KeyKind::attribute_pair;
    arity = 2;
  } else if (prefix == "rel") {
    kind = KeyKind::relation;
    arity = 3;
  } else {
    return std::nullopt;
  }
  std::vector<std::string> parts;
  std::string cur;
  for (char c : key.substr(colon + 1)) {
    if (c == '|') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  if (parts.size() != arity) return std::nullopt;
  for (const auto& p : parts) {
    if (p.empty()) return std::nullopt;
  }
  return ParsedKey{kind, std::move(parts)};
}

/// Natural-text rendering of a key, used as encoder input for the key
/// embedding: "hat", "black hat", "man wearing hat".
inline std::string key_text(KeyKind kind, std::span<const std::string> parts) {
  switch (kind) {
    case KeyKind::entity:
      return parts[0];
    case KeyKind::attribute_pair:
      return parts[1] + " " + parts[0];  // attribute before entity
    case KeyKind::relation:
      return parts[0] + " " + parts[1] + " " + parts[2];
  }
  throw InvalidInputError("key_text: unknown kind");
}

/// One key's worth of exemplar material in the knowledge base.
struct DatastoreEntry {
  std::string key;
  KeyKind kind = KeyKind::entity;
  std::string text;  // natural rendering the key embedding was computed from
  EmbeddingVector key_embedding;
  std::vector<std::string> crop_refs;
  std::vector<std::string> full_refs;
};

/// Annotation input mirrors the objects/attributes/relationships structure
/// of densely annotated scene datasets, one record per image.
struct AnnotationObject {
  std::string name;
  BoundingBox box;
  std::vector<std::string> attributes;
};

struct AnnotationRelationship {
  int subject_index = -1;
  std::string relation;
  int object_index = -1;
};

struct AnnotationRecord {
  std::string image_id;
  std::string image_ref;
  std::vector<AnnotationObject> objects;
  std::vector<AnnotationRelationship> relationships;

  static AnnotationRecord from_json(const nlohmann::json& j) {
    AnnotationRecord rec;
    if (j.contains("image_id")) {
      rec.image_id = j["image_id"].is_string() ? j["image_id"].get<std::string>()
                                               : std::to_string(j["image_id"].get<long long>());
    }
    rec.image_ref = j.at("image").get<std::string>();
    for (const auto& jo : j.value("objects", nlohmann::json::array())) {
      AnnotationObject obj;
      obj.name = jo.at("name").get<std::string>();
      const auto& box = jo.at("box");
      if (!box.is_array() || box.size() != 4) {
        throw InvalidInputError("annotation record " + rec.image_id +
                                ": object box must be [x,y,w,h]");
      }
      obj.box = {box[0].get<int>(), box[1].get<int>(), box[2].get<int>(), box[3].get<int>()};
      for (const auto& a : jo.value("attributes", nlohmann::json::array())) {
        obj.attributes.push_back(a.get<std::string>());
      }
      rec.objects.push_back(std::move(obj));
    }
    for (const auto& jr : j.value("relationships", nlohmann::json::array())) {
      AnnotationRelationship rel;
      rel.subject_index = jr.at("subject").get<int>();
      rel.relation = jr.at("relation").get<std::string>();
      rel.object_index = jr.at("object").get<int>();
      const int n = static_cast<int>(rec.objects.size());
      if (rel.subject_index < 0 || rel.subject_index >= n || rel.object_index < 0 ||
          rel.object_index >= n) {
        throw InvalidInputError("annotation record " + rec.image_id +
                                ": relationship index out of range");
      }
      rec.relationships.push_back(std::move(rel));
    }
    return rec;
  }
};

/// Loads a line-delimited annotation file (one JSON record per line).
/// Malformed lines raise with the offending line number.
inline std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_annotations: cannot open " + path.string());
  std::vector<AnnotationRecord> records;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    try {
      records.push_back(AnnotationRecord::from_json(nlohmann::json::parse(line)));
    } catch (const InvalidInputError&) {
      throw;
    } catch (const std::exception& e) {
      throw InvalidInputError("load_annotations: line " + std::to_string(lineno) + " of " +
                              path.string() + ": " + e.what());
    }
  }
  return records;
}

/// Content-addressed sink for crops and full images. Files land under
/// crops/ and images/ named by their pixel digest, so identical regions
/// share one file and rebuilds are reproducible.
class CropStore {
 public:
  explicit CropStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_ / "crops");
    std::filesystem::create_directories(root_ / "images");
  }

  /// Returns a root-relative ref like "crops/<digest>.ppm".
  std::string put_crop(const Image& img) { return put(img, "crops"); }
  std::string put_full(const Image& img) { return put(img, "images"); }

  const std::filesystem::path& root() const { return root_; }

 private:
  std::string put(const Image& img, const char* subdir) {
    const std::string name = std::string(subdir) + "/" + image_digest(img) + ".ppm";
    const std::filesystem::path path = root_ / name;
    if (!std::filesystem::exists(path)) write_ppm(img, path);
    return name;
  }

  std::filesystem::path root_;
};

struct CutAndPasteStats {
  size_t emitted = 0;
  size_t skipped = 0;  // entries dropped because their region degenerated
  size_t clipped = 0;  // boxes adjusted to image bounds

  CutAndPasteStats& operator+=(const CutAndPasteStats& o) {
    emitted += o.emitted;
    skipped += o.skipped;
    clipped += o.clipped;
    return *this;
  }
};

/// Cuts every annotated region out of the image and emits one datastore
/// entry per object name, per (name, attribute) pair, and per relationship
/// triplet. Relation crops use the union of the subject and object boxes,
/// falling back to the full image when either box degenerates. Out-of-bounds
/// boxes are clipped rather than rejected; entries whose region degenerates
/// after clipping are skipped and counted.
inline std::vector<DatastoreEntry> cut_and_paste(const AnnotationRecord& record, const Image& image,
                                                 TextEncoder& encoder, CropStore& sink,
                                                 CutAndPasteStats* stats_out = nullptr) {
  if (image.empty()) throw InvalidInputError("cut_and_paste: empty image");
  CutAndPasteStats stats;
  std::vector<DatastoreEntry> entries;
  const std::string full_ref = sink.put_full(image);

  auto emit = [&](KeyKind kind, std::vector<std::string> parts, const std::string& crop_ref) {
    DatastoreEntry entry;
    try {
      entry.key = make_key(kind, std::span<const std::string>(parts));
    } catch (const InvalidInputError&) {
      ++stats.skipped;  // name or attribute empty after normalization
      return;
    }
    std::vector<std::string> norm_parts;
    for (const auto& p : parts) norm_parts.push_back(normalize_phrase(p));
    entry.kind = kind;
    entry.text = key_text(kind, norm_parts);
    entry.key_embedding = encoder.encode_text(entry.text);
    entry.crop_refs.push_back(crop_ref);
    entry.full_refs.push_back(full_ref);
    entries.push_back(std::move(entry));
    ++stats.emitted;
  };

  // Clipped boxes per object; nullopt marks a degenerate region.
  std::vector<std::optional<BoundingBox>> clipped(record.objects.size());
  for (size_t i = 0; i < record.objects.size(); ++i) {
    const auto& box = record.objects[i].box;
    clipped[i] = clip_box(box, image.width, image.height);
    if (clipped[i] && *clipped[i] != box) ++stats.clipped;
  }

  for (size_t i = 0; i < record.objects.size(); ++i) {
    const auto& obj = record.objects[i];
    if (!clipped[i]) {
      // Entity entry plus one per attribute all lose their region.
      stats.skipped += 1 + obj.attributes.size();
      continue;
    }
    const std::string crop_ref = sink.put_crop(crop(image, *clipped[i]));
    emit(KeyKind::entity, {obj.name}, crop_ref);
    for (const auto& attr : obj.attributes) {
      emit(KeyKind::attribute_pair, {obj.name, attr}, crop_ref);
    }
  }

  for (const auto& rel : record.relationships) {
    const auto& sbox = clipped[static_cast<size_t>(rel.subject_index)];
    const auto& obox = clipped[static_cast<size_t>(rel.object_index)];
    std::string crop_ref;
    if (sbox && obox) {
      crop_ref = sink.put_crop(crop(image, union_box(*sbox, *obox)));
    } else {
      crop_ref = full_ref;  // missing participant region: fall back to the full image
    }
    emit(KeyKind::relation,
         {record.objects[static_cast<size_t>(rel.subject_index)].name, rel.relation,
          record.objects[static_cast<size_t>(rel.object_index)].name},
         crop_ref);
  }

  if (stats_out != nullptr) *stats_out += stats;
  return entries;
}

struct KbBuildSummary {
  size_t records = 0;
  CutAndPasteStats stats;
};

}  // namespace capcheck
