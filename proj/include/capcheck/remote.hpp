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

#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "capcheck/backends.hpp"

namespace capcheck {

/// Pluggable byte-stream transport for the remote backend protocol. An
/// implementation sends one serialized request and returns the serialized
/// response; failures are reported by throwing.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string exchange(const std::string& request) = 0;
};

namespace wire {

inline std::string base64_encode(const uint8_t* data, size_t len) {
  static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 2 < len; i += 3) {
    const uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(tbl[(v >> 6) & 63]);
    out.push_back(tbl[v & 63]);
  }
  if (i + 1 == len) {
    const uint32_t v = data[i] << 16;
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.append("==");
  } else if (i + 2 == len) {
    const uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(tbl[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

inline std::vector<uint8_t> base64_decode(std::string_view text) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<uint8_t> out;
  uint32_t buf = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int v = val(c);
    if (v < 0) throw InvalidInputError("base64: invalid character");
    buf = (buf << 6) | static_cast<uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<uint8_t>((buf >> bits) & 0xff));
    }
  }
  return out;
}

inline nlohmann::json image_to_json(const Image& img) {
  return {{"width", img.width},
          {"height", img.height},
          {"pixels", base64_encode(img.data.data(), img.data.size())}};
}

inline Image image_from_json(const nlohmann::json& j) {
  Image img;
  img.width = j.at("width").get<int>();
  img.height = j.at("height").get<int>();
  img.data = base64_decode(j.at("pixels").get<std::string>());
  if (img.width < 1 || img.height < 1 ||
      img.data.size() != static_cast<size_t>(img.width) * img.height * 3) {
    throw InvalidInputError("image_from_json: inconsistent pixel payload");
  }
  return img;
}

}  // namespace wire

/// Client for attaching real encoders/VQA/detectors behind the pipeline's
/// backend interfaces. Requests and responses are single JSON records:
///
///   request:  {"op": "encode_text"|"encode_image"|"vqa"|"detect", ...payload}
///   response: {"vector": [...]} | {"score": s} | {"detections": [...]}
///             | {"error": "message"}
///
/// Responses are validated at this boundary: vectors are re-normalized and
/// dimension-checked, scores range-checked, detections re-sorted by
/// confidence.
///
/// Thread safety follows the transport: the client adds no shared mutable
/// state, so it is safe for concurrent calls exactly when
/// Transport::exchange is. Single-caller transports imply single-caller use.
class RemoteBackend : public TextEncoder, public ImageEncoder, public VqaModel, public ObjectDetector {
 public:
  RemoteBackend(std::shared_ptr<Transport> transport, int dim)
      : transport_(std::move(transport)), dim_(dim) {
    if (!transport_) throw InvalidInputError("RemoteBackend: null transport");
    if (dim_ < 1) throw InvalidInputError("RemoteBackend: dim must be positive");
  }

  EmbeddingVector encode_text(std::string_view text) override {
    if (detail::trim_copy(text).empty()) throw InvalidInputError("encode_text: empty text");
    nlohmann::json req = {{"op", "encode_text"}, {"text", std::string(text)}};
    return parse_vector(roundtrip(req));
  }

  EmbeddingVector encode_image(const Image& region) override {
    if (region.empty()) throw InvalidInputError("encode_image: zero-area region");
    nlohmann::json req = wire::image_to_json(region);
    req["op"] = "encode_image";
    return parse_vector(roundtrip(req));
  }

  double vqa_yes_score(const Image& image, std::string_view question) override {
    if (detail::trim_copy(question).empty()) throw InvalidInputError("vqa_yes_score: empty question");
    nlohmann::json req = wire::image_to_json(image);
    req["op"] = "vqa";
    req["question"] = std::string(question);
    const nlohmann::json resp = roundtrip(req);
    const double score = resp.at("score").get<double>();
    if (score < 0.0 || score > 1.0) {
      throw BackendUnavailableError("remote vqa returned score outside [0,1]");
    }
    return score;
  }

  std::vector<Detection> detect_objects(const Image& image, std::string_view phrase) override {
    if (detail::trim_copy(phrase).empty()) throw InvalidInputError("detect_objects: empty phrase");
    nlohmann::json req = wire::image_to_json(image);
    req["op"] = "detect";
    req["phrase"] = std::string(phrase);
    const nlohmann::json resp = roundtrip(req);
    std::vector<Detection> dets;
    for (const auto& d : resp.at("detections")) {
      Detection det;
      det.box = {d.at("x").get<int>(), d.at("y").get<int>(), d.at("w").get<int>(),
                 d.at("h").get<int>()};
      det.confidence = d.at("confidence").get<double>();
      det.phrase = d.value("phrase", std::string(phrase));
      if (det.confidence < 0.0 || det.confidence > 1.0) {
        throw BackendUnavailableError("remote detector returned confidence outside [0,1]");
      }
      auto clipped = clip_box(det.box, image.width, image.height);
      if (!clipped) continue;
      det.box = *clipped;
      dets.push_back(std::move(det));
    }
    detail::sort_by_confidence(dets);
    return dets;
  }

  int dim() const override { return dim_; }

 private:
  nlohmann::json roundtrip(const nlohmann::json& req) {
    std::string raw;
    try {
      raw = transport_->exchange(req.dump());
    } catch (const std::exception& e) {
      throw BackendUnavailableError(std::string("remote backend transport failed: ") + e.what());
    }
    nlohmann::json resp;
    try {
      resp = nlohmann::json::parse(raw);
    } catch (const std::exception& e) {
      throw BackendUnavailableError(std::string("remote backend sent malformed response: ") +
                                    e.what());
    }
    if (resp.contains("error")) {
      throw BackendUnavailableError("remote backend error: " +
                                    resp["error"].get<std::string>());
    }
    return resp;
  }

  EmbeddingVector parse_vector(const nlohmann::json& resp) {
    const auto& arr = resp.at("vector");
    if (static_cast<int>(arr.size()) != dim_) {
      throw BackendUnavailableError("remote encoder returned wrong dimension");
    }
    std::vector<double> raw;
    raw.reserve(arr.size());
    for (const auto& v : arr) raw.push_back(v.get<double>());
    return normalized(raw);  // unit norm enforced at the boundary
  }

  std::shared_ptr<Transport> transport_;
  int dim_;
};

/// Server-side dispatcher: maps one protocol request onto local backends and
/// serializes the response. Lets any process expose its backends over a
/// transport, and powers the loopback transport used in tests.
inline std::string serve_backend_request(const std::string& request, TextEncoder* text,
                                         ImageEncoder* image, VqaModel* vqa,
                                         ObjectDetector* detector) {
  nlohmann::json resp;
  try {
    const nlohmann::json req = nlohmann::json::parse(request);
    const std::string op = req.at("op").get<std::string>();
    if (op == "encode_text") {
      if (!text) throw BackendUnavailableError("no text encoder attached");
      resp["vector"] = text->encode_text(req.at("text").get<std::string>()).values;
    } else if (op == "encode_image") {
      if (!image) throw BackendUnavailableError("no image encoder attached");
      resp["vector"] = image->encode_image(wire::image_from_json(req)).values;
    } else if (op == "vqa") {
      if (!vqa) throw BackendUnavailableError("no vqa model attached");
      resp["score"] =
          vqa->vqa_yes_score(wire::image_from_json(req), req.at("question").get<std::string>());
    } else if (op == "detect") {
      if (!detector) throw BackendUnavailableError("no detector attached");
      nlohmann::json dets = nlohmann::json::array();
      for (const auto& d :
           detector->detect_objects(wire::image_from_json(req), req.at("phrase").get<std::string>())) {
        dets.push_back({{"x", d.box.x},
                        {"y", d.box.y},
                        {"w", d.box.w},
                        {"h", d.box.h},
                        {"confidence", d.confidence},
                        {"phrase", d.phrase}});
      }
      resp["detections"] = std::move(dets);
    } else {
      resp["error"] = "unknown op: " + op;
    }
  } catch (const std::exception& e) {
    resp = nlohmann::json{{"error", e.what()}};
  }
  return resp.dump();
}

/// In-process transport wired straight to local backends.
class LoopbackTransport : public Transport {
 public:
  LoopbackTransport(TextEncoder* text, ImageEncoder* image, VqaModel* vqa, ObjectDetector* detector)
      : text_(text), image_(image), vqa_(vqa), detector_(detector) {}

  std::string exchange(const std::string& request) override {
    return serve_backend_request(request, text_, image_, vqa_, detector_);
  }

 private:
  TextEncoder* text_;
  ImageEncoder* image_;
  VqaModel* vqa_;
  ObjectDetector* detector_;
};

}  // namespace capcheck
