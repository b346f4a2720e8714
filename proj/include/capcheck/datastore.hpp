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
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "capcheck/backends.hpp"
#include "capcheck/embedding.hpp"
#include "capcheck/errors.hpp"
#include "capcheck/hash.hpp"
#include "capcheck/image.hpp"
#include "capcheck/kb_builder.hpp"

namespace capcheck {

struct Manifest {
  int dim = 0;
  size_t entry_count = 0;
  std::string digest;  // sha256 over the embedding matrix and key table
  std::map<std::string, std::string> build_params;
};

/// One ranked retrieval result.
struct RetrievalHit {
  std::string key;
  double similarity = 0.0;
  const DatastoreEntry* entry = nullptr;
};

/// Result of a knowledge-base lookup: ranked entries plus the exemplar crops
/// selected from them. When an image encoder is supplied to retrieve(), each
/// exemplar ref has a matching embedding row.
struct RetrievedSet {
  std::string query_key;
  std::vector<RetrievalHit> entries;
  std::vector<std::string> exemplar_refs;
  std::vector<EmbeddingVector> exemplar_embeddings;
  bool exemplars_encoded = false;
  bool exact_match = false;
  std::vector<std::string> warnings;
};

/// The key-value exemplar store: canonical keys mapped to embedding-indexed
/// exemplar image references. Single-writer while building; freeze() makes
/// it immutable and safe for unrestricted concurrent retrieval.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  explicit KnowledgeBase(int dim) { manifest_.dim = dim; }

  /// Inserts or merges an entry. Re-adding an existing key unions the
  /// reference lists, preserving first-seen order.
  void add(DatastoreEntry entry) {
    if (frozen_) throw InvalidInputError("KnowledgeBase::add: store is frozen");
    if (entry.crop_refs.empty()) throw InvalidInputError("KnowledgeBase::add: entry has no crops");
    if (!is_unit_norm(entry.key_embedding)) {
      throw InvalidInputError("KnowledgeBase::add: key embedding is not unit-norm");
    }
    if (manifest_.dim == 0) manifest_.dim = entry.key_embedding.dim();
    if (entry.key_embedding.dim() != manifest_.dim) {
      throw InvalidInputError("KnowledgeBase::add: embedding dim " +
                              std::to_string(entry.key_embedding.dim()) +
                              " does not match store dim " + std::to_string(manifest_.dim));
    }
    auto it = entries_.find(entry.key);
    if (it == entries_.end()) {
      entries_.emplace(entry.key, std::move(entry));
    } else {
      merge_refs(it->second.crop_refs, entry.crop_refs);
      merge_refs(it->second.full_refs, entry.full_refs);
    }
    manifest_.entry_count = entries_.size();
  }

  /// Builds the retrieval index and locks the store against mutation.
  void freeze() {
    order_.clear();
    matrix_.clear();
    order_.reserve(entries_.size());
    matrix_.reserve(entries_.size() * static_cast<size_t>(manifest_.dim));
    for (const auto& [key, entry] : entries_) {
      order_.push_back(&entry);
      matrix_.insert(matrix_.end(), entry.key_embedding.values.begin(),
                     entry.key_embedding.values.end());
    }
    frozen_ = true;
  }

  bool frozen() const { return frozen_; }
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  int dim() const { return manifest_.dim; }
  const Manifest& manifest() const { return manifest_; }
  void set_build_param(const std::string& k, const std::string& v) { manifest_.build_params[k] = v; }
  const std::filesystem::path& root() const { return root_; }
  void set_root(std::filesystem::path root) { root_ = std::move(root); }

  const DatastoreEntry* find(std::string_view key) const {
    auto it = entries_.find(std::string(key));
    return it == entries_.end() ? nullptr : &it->second;
  }

  const std::map<std::string, DatastoreEntry>& entries() const { return entries_; }

  /// Resolves a stored image ref: relative refs are taken against the store
  /// root when one is set.
  std::filesystem::path resolve_ref(const std::string& ref) const {
    std::filesystem::path p(ref);
    if (p.is_relative() && !root_.empty()) return root_ / p;
    return p;
  }

  /// Top-k lookup. An exact canonical-key match short-circuits to that
  /// entry's exemplars with similarity 1.0; otherwise entries are ranked by
  /// cosine similarity between the query embedding and key embeddings, ties
  /// broken by lexicographic key order. Exemplar crops (up to max_exemplars,
  /// in rank order then insertion order) are encoded when an image encoder
  /// is supplied.
  RetrievedSet retrieve(const std::string& query_text, size_t k, TextEncoder& encoder,
                        ImageEncoder* image_encoder = nullptr, size_t max_exemplars = 10,
                        bool exemplars_from_crops = true) const {
    RetrievedSet out = rank(query_text, k, encoder, /*use_index=*/true);
    select_exemplars(out, max_exemplars, exemplars_from_crops);
    if (image_encoder != nullptr) encode_exemplars(out, *image_encoder);
    return out;
  }

  /// Exhaustive-scan twin of retrieve(); the correctness oracle for the
  /// index path. Same ranking contract, no exemplar encoding.
  RetrievedSet brute_force_retrieve(const std::string& query_text, size_t k,
                                    TextEncoder& encoder, size_t max_exemplars = 10) const {
    RetrievedSet out = rank(query_text, k, encoder, /*use_index=*/false);
    select_exemplars(out, max_exemplars, /*from_crops=*/true);
    return out;
  }

  /// Persists the store: a binary embedding matrix, a key table, and a
  /// digest-stamped manifest. Layout under `dir`:
  ///   manifest.json, embeddings.bin, keys.jsonl  (+ crops/, images/)
  void save(const std::filesystem::path& dir) {
    if (!frozen_) freeze();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const std::string emb = serialize_embeddings();
    const std::string keys = serialize_keys();
    write_file(dir / "embeddings.bin", emb);
    write_file(dir / "keys.jsonl", keys);
    const std::string emb_digest = sha256_hex(emb);
    const std::string keys_digest = sha256_hex(keys);
    manifest_.digest = sha256_hex(emb_digest + keys_digest);
    nlohmann::json j = {{"format_version", 1},
                        {"dim", manifest_.dim},
                        {"entry_count", manifest_.entry_count},
                        {"embeddings_sha256", emb_digest},
                        {"keys_sha256", keys_digest},
                        {"digest", manifest_.digest},
                        {"build_params", manifest_.build_params}};
    write_file(dir / "manifest.json", j.dump(2) + "\n");
  }

  /// Reloads a persisted store; embeddings come back bit-exact. A digest
  /// mismatch or truncated file raises CorruptionError.
  static KnowledgeBase load(const std::filesystem::path& dir) {
    const std::string manifest_raw = read_file(dir / "manifest.json");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(manifest_raw);
    } catch (const std::exception& e) {
      throw CorruptionError("KnowledgeBase::load: bad manifest: " + std::string(e.what()));
    }
    KnowledgeBase kb;
    kb.manifest_.dim = j.at("dim").get<int>();
    kb.manifest_.entry_count = j.at("entry_count").get<size_t>();
    kb.manifest_.digest = j.at("digest").get<std::string>();
    kb.manifest_.build_params =
        j.value("build_params", std::map<std::string, std::string>{});

    const std::string emb = read_file(dir / "embeddings.bin");
    const std::string keys = read_file(dir / "keys.jsonl");
    const std::string emb_digest = sha256_hex(emb);
    const std::string keys_digest = sha256_hex(keys);
    if (emb_digest != j.at("embeddings_sha256").get<std::string>() ||
        keys_digest != j.at("keys_sha256").get<std::string>() ||
        sha256_hex(emb_digest + keys_digest) != kb.manifest_.digest) {
      throw CorruptionError("KnowledgeBase::load: digest mismatch in " + dir.string());
    }
    kb.deserialize(emb, keys);
    kb.set_root(dir);
    kb.freeze();
    return kb;
  }

 private:
  static void merge_refs(std::vector<std::string>& dst, const std::vector<std::string>& src) {
    for (const auto& ref : src) {
      if (std::find(dst.begin(), dst.end(), ref) == dst.end()) dst.push_back(ref);
    }
  }

  /// Query embedding for a lookup that missed the exact-key shortcut.
  /// Canonical keys are rendered back to their natural text first, so
  /// "attr:hat|black" searches as "black hat".
  EmbeddingVector query_embedding(const std::string& query_text, TextEncoder& encoder) const {
    if (auto parsed = parse_key(query_text)) {
      return encoder.encode_text(key_text(parsed->kind, parsed->parts));
    }
    return encoder.encode_text(query_text);
  }

  RetrievedSet rank(const std::string& query_text, size_t k, TextEncoder& encoder,
                    bool use_index) const {
    if (entries_.empty()) throw EmptyStoreError("retrieve: knowledge base is empty");
    if (k == 0) throw InvalidInputError("retrieve: k must be positive");
    RetrievedSet out;
    out.query_key = query_text;

    if (const DatastoreEntry* exact = find(query_text)) {
      out.entries.push_back({exact->key, 1.0, exact});
      out.exact_match = true;
      return out;
    }

    const EmbeddingVector query = query_embedding(query_text, encoder);
    if (query.dim() != manifest_.dim) {
      throw InvalidInputError("retrieve: query embedding dim mismatch");
    }

    std::vector<RetrievalHit> hits;
    hits.reserve(entries_.size());
    if (use_index) {
      if (!frozen_) throw InvalidInputError("retrieve: store must be frozen first");
      const size_t d = static_cast<size_t>(manifest_.dim);
      for (size_t i = 0; i < order_.size(); ++i) {
        const double sim = dot(query.values.data(), matrix_.data() + i * d, d);
        hits.push_back({order_[i]->key, sim, order_[i]});
      }
    } else {
      for (const auto& [key, entry] : entries_) {
        const double sim = dot(query.values.data(), entry.key_embedding.values.data(),
                               entry.key_embedding.values.size());
        hits.push_back({key, sim, &entry});
      }
    }

    const size_t top = std::min(k, hits.size());
    auto better = [](const RetrievalHit& a, const RetrievalHit& b) {
      if (a.similarity != b.similarity) return a.similarity > b.similarity;
      return a.key < b.key;  // deterministic tie rule
    };
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(top), hits.end(),
                      better);
    hits.resize(top);
    out.entries = std::move(hits);
    return out;
  }

  void select_exemplars(RetrievedSet& out, size_t max_exemplars, bool from_crops) const {
    for (const auto& hit : out.entries) {
      const auto& refs = from_crops ? hit.entry->crop_refs : hit.entry->full_refs;
      for (const auto& ref : refs) {
        if (out.exemplar_refs.size() >= max_exemplars) return;
        out.exemplar_refs.push_back(ref);
      }
    }
  }

  void encode_exemplars(RetrievedSet& out, ImageEncoder& encoder) const {
    std::vector<std::string> kept;
    for (const auto& ref : out.exemplar_refs) {
      try {
        const Image img = read_ppm(resolve_ref(ref));
        out.exemplar_embeddings.push_back(encoder.encode_image(img));
        kept.push_back(ref);
      } catch (const std::exception& e) {
        out.warnings.push_back("exemplar " + ref + " skipped: " + e.what());
      }
    }
    out.exemplar_refs = std::move(kept);
    out.exemplars_encoded = true;
  }

  std::string serialize_embeddings() const {
    std::string buf;
    buf.append("VAKB0001");
    const uint32_t dim32 = static_cast<uint32_t>(manifest_.dim);
    const uint64_t count = entries_.size();
    buf.append(reinterpret_cast<const char*>(&dim32), sizeof(dim32));
    buf.append(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& [key, entry] : entries_) {
      buf.append(reinterpret_cast<const char*>(entry.key_embedding.values.data()),
                 entry.key_embedding.values.size() * sizeof(float));
    }
    return buf;
  }

  std::string serialize_keys() const {
    std::string buf;
    for (const auto& [key, entry] : entries_) {
      nlohmann::json j = {{"key", entry.key},
                          {"kind", key_kind_name(entry.kind)},
                          {"text", entry.text},
                          {"crops", entry.crop_refs},
                          {"fulls", entry.full_refs}};
      buf += j.dump();
      buf.push_back('\n');
    }
    return buf;
  }

  void deserialize(const std::string& emb, const std::string& keys) {
    constexpr size_t kHeader = 8 + sizeof(uint32_t) + sizeof(uint64_t);
    if (emb.size() < kHeader || emb.substr(0, 8) != "VAKB0001") {
      throw CorruptionError("KnowledgeBase::load: bad embedding file header");
    }
    uint32_t dim32 = 0;
    uint64_t count = 0;
    std::memcpy(&dim32, emb.data() + 8, sizeof(dim32));
    std::memcpy(&count, emb.data() + 8 + sizeof(dim32), sizeof(count));
    if (static_cast<int>(dim32) != manifest_.dim || count != manifest_.entry_count) {
      throw CorruptionError("KnowledgeBase::load: embedding header disagrees with manifest");
    }
    const size_t expected = kHeader + count * dim32 * sizeof(float);
    if (emb.size() != expected) {
      throw CorruptionError("KnowledgeBase::load: embedding file truncated");
    }

    std::istringstream key_stream(keys);
    std::string line;
    size_t row = 0;
    while (std::getline(key_stream, line)) {
      if (line.empty()) continue;
      if (row >= count) throw CorruptionError("KnowledgeBase::load: more keys than embeddings");
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const std::exception&) {
        throw CorruptionError("KnowledgeBase::load: bad key table line " + std::to_string(row + 1));
      }
      DatastoreEntry entry;
      entry.key = j.at("key").get<std::string>();
      const std::string kind = j.at("kind").get<std::string>();
      entry.kind = kind == "entity" ? KeyKind::entity
                   : kind == "attr" ? KeyKind::attribute_pair
                                    : KeyKind::relation;
      entry.text = j.at("text").get<std::string>();
      entry.crop_refs = j.at("crops").get<std::vector<std::string>>();
      entry.full_refs = j.at("fulls").get<std::vector<std::string>>();
      entry.key_embedding.values.resize(dim32);
      std::memcpy(entry.key_embedding.values.data(), emb.data() + kHeader + row * dim32 * sizeof(float),
                  dim32 * sizeof(float));
      entries_.emplace(entry.key, std::move(entry));
      ++row;
    }
    if (row != count) throw CorruptionError("KnowledgeBase::load: key table truncated");
    if (entries_.size() != count) {
      throw CorruptionError("KnowledgeBase::load: duplicate keys in key table");
    }
  }

  static void write_file(const std::filesystem::path& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("KnowledgeBase::save: cannot write " + path.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("KnowledgeBase::save: write failed for " + path.string());
  }

  static std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("KnowledgeBase::load: cannot open " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
  }

  std::map<std::string, DatastoreEntry> entries_;
  std::vector<const DatastoreEntry*> order_;  // key order, valid after freeze
  std::vector<float> matrix_;                 // row-major key embeddings
  Manifest manifest_;
  bool frozen_ = false;
  std::filesystem::path root_;
};

/// Builds a knowledge base from an annotation file: every record's regions
/// are cut out into out_dir and keyed entries added to a fresh store. The
/// caller saves; rebuilding from the same inputs reproduces the digest.
inline KnowledgeBase build_kb(const std::filesystem::path& annotations,
                              const std::filesystem::path& images_root, TextEncoder& encoder,
                              const std::filesystem::path& out_dir,
                              KbBuildSummary* summary = nullptr) {
  const auto records = load_annotations(annotations);
  CropStore sink(out_dir);
  KnowledgeBase kb(encoder.dim());
  KbBuildSummary local;
  for (const auto& record : records) {
    std::filesystem::path img_path(record.image_ref);
    if (img_path.is_relative() && !images_root.empty()) img_path = images_root / img_path;
    const Image image = read_ppm(img_path);
    for (auto& entry : cut_and_paste(record, image, encoder, sink, &local.stats)) {
      kb.add(std::move(entry));
    }
    ++local.records;
  }
  kb.set_build_param("annotation_records", std::to_string(local.records));
  kb.set_build_param("dim", std::to_string(encoder.dim()));
  kb.set_root(out_dir);
  kb.freeze();
  if (summary != nullptr) *summary = local;
  return kb;
}

}  // namespace capcheck
