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
#include <cctype>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "capcheck/errors.hpp"

namespace capcheck {

/// One (entity, attribute) pair from the E list. An entity carrying two
/// attributes appears as two mentions with the same name, so every pair is
/// an independently verifiable claim.
struct EntityMention {
  std::string name;
  std::optional<std::string> attribute;

  bool operator==(const EntityMention&) const = default;
  auto operator<=>(const EntityMention&) const = default;
};

/// One (subject, relation, object) triplet from the R list.
struct RelationTriplet {
  std::string subject;
  std::string relation;
  std::string object;

  bool operator==(const RelationTriplet&) const = default;
  auto operator<=>(const RelationTriplet&) const = default;
};

/// Parsed caption: the entity list E and relation list R. Every subject and
/// object in R also appears as an entity name in E.
struct SceneGraph {
  std::vector<EntityMention> entities;
  std::vector<RelationTriplet> relations;
  std::string source;
  std::vector<std::string> warnings;

  bool has_entity_name(std::string_view name) const {
    return std::any_of(entities.begin(), entities.end(),
                       [&](const EntityMention& e) { return e.name == name; });
  }

  nlohmann::json to_json() const {
    nlohmann::json ents = nlohmann::json::array();
    for (const auto& e : entities) {
      nlohmann::json je = {{"name", e.name}};
      if (e.attribute) je["attribute"] = *e.attribute;
      ents.push_back(std::move(je));
    }
    nlohmann::json rels = nlohmann::json::array();
    for (const auto& r : relations) {
      rels.push_back({{"subject", r.subject}, {"relation", r.relation}, {"object", r.object}});
    }
    nlohmann::json j = {{"entities", std::move(ents)},
                        {"relations", std::move(rels)},
                        {"source", source}};
    if (!warnings.empty()) j["warnings"] = warnings;
    return j;
  }

  static SceneGraph from_json(const nlohmann::json& j) {
    SceneGraph g;
    g.source = j.value("source", std::string());
    for (const auto& je : j.at("entities")) {
      EntityMention e;
      e.name = je.at("name").get<std::string>();
      if (je.contains("attribute")) e.attribute = je["attribute"].get<std::string>();
      g.entities.push_back(std::move(e));
    }
    for (const auto& jr : j.at("relations")) {
      g.relations.push_back({jr.at("subject").get<std::string>(),
                             jr.at("relation").get<std::string>(),
                             jr.at("object").get<std::string>()});
    }
    if (j.contains("warnings")) g.warnings = j["warnings"].get<std::vector<std::string>>();
    return g;
  }
};

/// Lowercases, strips punctuation, drops leading articles, collapses
/// whitespace. Idempotent. Empty output only for empty or article-only
/// input, which callers must reject.
inline std::string normalize_phrase(std::string_view text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      lowered.push_back(static_cast<char>(std::tolower(uc)));
    } else if (c == '\'') {
      // drop apostrophes entirely ("man's" -> "mans")
    } else {
      lowered.push_back(' ');
    }
  }
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : lowered) {
    if (c == ' ') {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  size_t start = 0;
  while (start < tokens.size() &&
         (tokens[start] == "the" || tokens[start] == "a" || tokens[start] == "an")) {
    ++start;
  }
  std::string out;
  for (size_t i = start; i < tokens.size(); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

/// Pluggable caption-to-scene-graph parser.
class SceneGraphParser {
 public:
  virtual ~SceneGraphParser() = default;
  virtual SceneGraph parse(std::string_view caption) = 0;
};

namespace grammar {

enum class Tag { Det, Num, Aux, Verb, Prep, Adj, Pron, Conj, StopNoun, Noun, There };

struct Lexicon {
  std::unordered_set<std::string> determiners = {
      "the", "a",   "an",  "this", "that",  "these", "those", "my",  "your",
      "his", "her", "its", "our",  "their", "some",  "any",   "each", "every"};
  std::unordered_set<std::string> numbers = {"one", "two",   "three", "four", "five",
                                             "six", "seven", "eight", "nine", "ten"};
  std::unordered_set<std::string> auxiliaries = {"is", "are", "was", "were", "am",
                                                 "be", "been", "being"};
  std::unordered_set<std::string> prepositions = {
      "in",      "on",      "at",    "under", "over",  "above",  "below",  "behind",
      "beside",  "near",    "inside", "outside", "around", "between", "against", "along",
      "across",  "atop",    "by",    "with",  "without", "of",   "onto",   "into",
      "beneath", "through", "to",    "from"};
  std::unordered_set<std::string> pronouns = {"he",  "she",  "it",   "they", "him", "them",
                                              "i",   "we",   "you",  "who",  "whom", "which",
                                              "someone", "something"};
  std::unordered_set<std::string> conjunctions = {"and", "or", "but", "while"};
  std::unordered_set<std::string> adjectives = {
      // colors
      "black", "white", "red", "blue", "green", "yellow", "brown", "gray", "grey", "orange",
      "purple", "pink", "golden", "silver", "beige", "tan", "dark", "bright", "colorful",
      // sizes and shapes
      "big", "small", "large", "little", "tiny", "huge", "giant", "tall", "short", "long",
      "wide", "narrow", "thin", "thick", "round", "square", "flat",
      // materials
      "wooden", "metal", "metallic", "plastic", "leather", "rubber", "concrete", "brick",
      "steel", "stone", "ceramic",
      // states and qualities
      "old", "new", "young", "dirty", "clean", "shiny", "rusty", "empty", "full", "wet",
      "dry", "open", "closed", "broken", "striped", "spotted", "fluffy", "furry", "cute",
      "beautiful", "happy", "sad", "fresh", "hot", "cold", "warm", "busy", "quiet"};
  std::unordered_set<std::string> verbs = {
      "wearing", "wears", "wear", "holding", "holds", "hold", "sitting", "sits", "sit",
      "standing", "stands", "stand", "riding", "rides", "ride", "eating", "eats", "eat",
      "drinking", "drinks", "drink", "playing", "plays", "play", "walking", "walks", "walk",
      "running", "runs", "run", "flying", "flies", "fly", "driving", "drives", "drive",
      "carrying", "carries", "carry", "hanging", "hangs", "hang", "lying", "lies", "lie",
      "jumping", "jumps", "jump", "sleeping", "sleeps", "sleep", "watching", "watches",
      "watch", "looking", "looks", "look", "reading", "reads", "read", "using", "uses",
      "use", "throwing", "throws", "throw", "catching", "catches", "catch", "kicking",
      "kicks", "kick", "pulling", "pulls", "pull", "pushing", "pushes", "push", "has",
      "have", "had", "contains", "contain", "containing", "covering", "covers", "cover",
      "touching", "touches", "touch", "facing", "faces", "face", "leaning", "leans", "lean",
      "surrounding", "surrounds", "parked"};
  // Nouns that refer to the picture itself rather than its content; they
  // never become entities and relations targeting them are dropped.
  std::unordered_set<std::string> stop_nouns = {"image",      "picture",    "photo",
                                                "photograph", "scene",      "frame",
                                                "background", "foreground", "view"};
  // Multi-word prepositions merged into one token, longest match first.
  std::vector<std::vector<std::string>> compound_prepositions = {
      {"to", "the", "left", "of"}, {"to", "the", "right", "of"}, {"in", "front", "of"},
      {"on", "top", "of"},         {"next", "to"},               {"close", "to"},
      {"far", "from"}};

  static const Lexicon& standard() {
    static const Lexicon lex;
    return lex;
  }
};

struct Token {
  std::string text;
  Tag tag = Tag::Noun;
};

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

inline bool is_number_token(const std::string& t, const Lexicon& lex) {
  if (lex.numbers.count(t)) return true;
  return !t.empty() && std::all_of(t.begin(), t.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c));
  });
}

inline Tag tag_word(const std::string& w, const Lexicon& lex) {
  if (w == "there") return Tag::There;
  if (lex.determiners.count(w)) return Tag::Det;
  if (is_number_token(w, lex)) return Tag::Num;
  if (lex.auxiliaries.count(w)) return Tag::Aux;
  if (lex.pronouns.count(w)) return Tag::Pron;
  if (lex.prepositions.count(w)) return Tag::Prep;
  if (lex.conjunctions.count(w)) return Tag::Conj;
  if (lex.adjectives.count(w)) return Tag::Adj;
  if (lex.verbs.count(w)) return Tag::Verb;
  if (ends_with(w, "ing") && w.size() > 4) return Tag::Verb;
  if (lex.stop_nouns.count(w)) return Tag::StopNoun;
  return Tag::Noun;
}

/// Naive English singularization: "dogs" -> "dog", "boxes" -> "box",
/// "babies" -> "baby". Words ending in "ss"/"us"/"is" are left alone.
inline std::string singularize(const std::string& w) {
  if (w.size() > 4 && ends_with(w, "ies")) return w.substr(0, w.size() - 3) + "y";
  if (w.size() > 3 && (ends_with(w, "ses") || ends_with(w, "shes") || ends_with(w, "ches") ||
                       ends_with(w, "xes") || ends_with(w, "zes") || ends_with(w, "oes"))) {
    return w.substr(0, w.size() - 2);
  }
  if (w.size() > 3 && ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") &&
      !ends_with(w, "is")) {
    return w.substr(0, w.size() - 1);
  }
  return w;
}

}  // namespace grammar

/// Deterministic rule-based parser: pattern rules over lexicon-tagged
/// tokens. Adjective+noun yields an attributed entity, noun-verb(-prep)-noun
/// yields a triplet, existential "there is/are X" yields a bare entity, and
/// copula+adjective ("the hat is black") attaches an attribute. Pronouns are
/// dropped; counted entities lose their count ("two dogs" -> "dog").
class RuleBasedParser : public SceneGraphParser {
 public:
  explicit RuleBasedParser(const grammar::Lexicon& lexicon = grammar::Lexicon::standard())
      : lex_(lexicon) {}

  SceneGraph parse(std::string_view caption) override {
    SceneGraph graph;
    graph.source = std::string(caption);
    for (const auto& sentence : split_sentences(caption)) {
      parse_sentence(sentence, graph);
    }
    dedup(graph);
    ensure_closure(graph);
    return graph;
  }

 private:
  struct NounPhrase {
    std::string head;
    std::vector<std::string> attributes;
    bool stop = false;
  };

  static std::vector<std::string> split_sentences(std::string_view caption) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : caption) {
      if (c == '.' || c == '!' || c == '?' || c == ';') {
        if (!cur.empty()) out.push_back(cur), cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
  }

  std::vector<grammar::Token> tokenize(std::string_view sentence) const {
    std::vector<grammar::Token> tokens;
    std::string cur;
    auto flush = [&]() {
      if (cur.empty()) return;
      grammar::Token t;
      t.text = cur;
      t.tag = grammar::tag_word(cur, lex_);
      tokens.push_back(std::move(t));
      cur.clear();
    };
    for (char c : sentence) {
      const auto uc = static_cast<unsigned char>(c);
      if (std::isalnum(uc)) {
        cur.push_back(static_cast<char>(std::tolower(uc)));
      } else if (c != '\'') {
        flush();
      }
    }
    flush();
    // Merge compound prepositions ("next to", "to the left of") into single
    // tokens so they survive as one relation phrase.
    for (size_t i = 0; i < tokens.size(); ++i) {
      for (const auto& compound : lex_.compound_prepositions) {
        if (i + compound.size() > tokens.size()) continue;
        bool match = true;
        for (size_t j = 0; j < compound.size(); ++j) {
          if (tokens[i + j].text != compound[j]) {
            match = false;
            break;
          }
        }
        if (!match) continue;
        std::string joined;
        for (const auto& w : compound) {
          if (!joined.empty()) joined.push_back(' ');
          joined += w;
        }
        tokens[i] = {joined, grammar::Tag::Prep};
        tokens.erase(tokens.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                     tokens.begin() + static_cast<std::ptrdiff_t>(i + compound.size()));
        break;  // longest-first order in the table; one merge per position
      }
    }
    return tokens;
  }

  void parse_sentence(const std::string& sentence, SceneGraph& graph) const {
    using grammar::Tag;
    auto tokens = tokenize(sentence);
    if (tokens.empty()) return;

    size_t pos = 0;
    // Existential prefix: "there is/are ...".
    if (tokens.size() >= 2 && tokens[0].tag == Tag::There && tokens[1].tag == Tag::Aux) {
      pos = 2;
    }

    std::vector<NounPhrase> phrases;
    std::vector<std::vector<grammar::Token>> connectors;  // between consecutive phrases
    std::vector<grammar::Token> pending;

    while (pos < tokens.size()) {
      const Tag tag = tokens[pos].tag;
      if (tag == Tag::Det || tag == Tag::Num || tag == Tag::There) {
        ++pos;
        continue;
      }
      if (tag == Tag::Pron) {
        // Pronouns are not resolved; they break any pending connector so no
        // triplet is fabricated across them.
        pending.clear();
        ++pos;
        continue;
      }
      const bool opens_phrase =
          tag == Tag::Noun || tag == Tag::StopNoun ||
          (tag == Tag::Adj && noun_follows(tokens, pos)) ||
          (tag == Tag::Verb && acts_as_modifier(tokens, pos) && noun_follows(tokens, pos));
      if (opens_phrase) {
        NounPhrase np = read_noun_phrase(tokens, pos);
        if (np.head.empty()) {
          ++pos;
          continue;
        }
        if (!phrases.empty()) connectors.push_back(pending);
        pending.clear();
        phrases.push_back(std::move(np));
        continue;
      }
      pending.push_back(tokens[pos]);
      ++pos;
    }

    // Trailing copula + adjectives: "the hat is black" attaches to the last
    // phrase instead of forming a relation.
    if (!pending.empty() && !phrases.empty()) {
      bool saw_aux = false;
      std::vector<std::string> trailing_adjs;
      for (const auto& t : pending) {
        if (t.tag == Tag::Aux) {
          saw_aux = true;
        } else if (t.tag == Tag::Adj && saw_aux) {
          trailing_adjs.push_back(t.text);
        }
      }
      for (const auto& adj : trailing_adjs) {
        phrases.back().attributes.push_back(adj);
      }
    }

    // Emit entities.
    for (const auto& np : phrases) {
      if (np.stop) continue;
      if (np.attributes.empty()) {
        graph.entities.push_back({np.head, std::nullopt});
      } else {
        for (const auto& a : np.attributes) graph.entities.push_back({np.head, a});
      }
    }

    // Emit relations from connectors between adjacent phrases.
    for (size_t i = 0; i + 1 < phrases.size() && i < connectors.size(); ++i) {
      const auto& subj = phrases[i];
      const auto& obj = phrases[i + 1];
      if (subj.stop || obj.stop) continue;
      const std::string rel = relation_phrase(connectors[i]);
      if (rel.empty()) continue;
      graph.relations.push_back({subj.head, rel, obj.head});
    }
  }

  /// True when a head noun is reachable from pos across modifier tokens
  /// only. Determiners terminate the scan, which keeps "wearing a hat"
  /// verbal while "smiling baby" stays adjectival.
  static bool noun_follows(const std::vector<grammar::Token>& tokens, size_t pos) {
    using grammar::Tag;
    for (size_t j = pos + 1; j < tokens.size(); ++j) {
      const Tag t = tokens[j].tag;
      if (t == Tag::Adj || t == Tag::Verb || t == Tag::Num) continue;
      return t == Tag::Noun || t == Tag::StopNoun;
    }
    return false;
  }

  /// A verb-tagged token acts as a prenominal modifier ("parked car") unless
  /// an auxiliary precedes it ("is wearing ..." stays verbal).
  static bool acts_as_modifier(const std::vector<grammar::Token>& tokens, size_t pos) {
    return pos == 0 || tokens[pos - 1].tag != grammar::Tag::Aux;
  }

  NounPhrase read_noun_phrase(const std::vector<grammar::Token>& tokens, size_t& pos) const {
    using grammar::Tag;
    NounPhrase np;
    std::vector<std::string> adjs;
    while (pos < tokens.size()) {
      const auto& tok = tokens[pos];
      if (tok.tag == Tag::Adj ||
          (tok.tag == Tag::Verb && acts_as_modifier(tokens, pos) && noun_follows(tokens, pos))) {
        adjs.push_back(tok.text);
        ++pos;
      } else if (tok.tag == Tag::Det || tok.tag == Tag::Num) {
        ++pos;
      } else {
        break;
      }
    }
    std::vector<std::string> nouns;
    bool stop = false;
    while (pos < tokens.size() &&
           (tokens[pos].tag == Tag::Noun || tokens[pos].tag == Tag::StopNoun)) {
      stop = stop || tokens[pos].tag == Tag::StopNoun;
      nouns.push_back(tokens[pos].text);
      ++pos;
    }
    if (nouns.empty()) return np;  // adjectives with no head noun
    nouns.back() = grammar::singularize(nouns.back());
    std::string head;
    for (const auto& n : nouns) {
      if (!head.empty()) head.push_back(' ');
      head += n;
    }
    np.head = normalize_phrase(head);
    np.stop = stop;
    for (const auto& a : adjs) {
      const std::string na = normalize_phrase(a);
      if (!na.empty()) np.attributes.push_back(na);
    }
    return np;
  }

  static std::string relation_phrase(const std::vector<grammar::Token>& connector) {
    using grammar::Tag;
    std::string verb;
    std::string prep;
    for (const auto& t : connector) {
      if (t.tag == Tag::Conj) return "";  // "a man and a dog" is not a relation
      if (t.tag == Tag::Verb && verb.empty()) verb = t.text;
      if (t.tag == Tag::Prep && prep.empty()) prep = t.text;
    }
    if (!verb.empty() && !prep.empty()) return verb + " " + prep;
    if (!verb.empty()) return verb;
    if (!prep.empty()) return prep;
    return "";  // bare auxiliaries ("a man is a doctor") carry no visual relation
  }

  static void dedup(SceneGraph& graph) {
    std::set<EntityMention> seen_e;
    std::vector<EntityMention> ents;
    for (auto& e : graph.entities) {
      if (e.name.empty()) continue;
      if (seen_e.insert(e).second) ents.push_back(std::move(e));
    }
    graph.entities = std::move(ents);
    std::set<RelationTriplet> seen_r;
    std::vector<RelationTriplet> rels;
    for (auto& r : graph.relations) {
      if (r.subject.empty() || r.relation.empty() || r.object.empty()) continue;
      if (seen_r.insert(r).second) rels.push_back(std::move(r));
    }
    graph.relations = std::move(rels);
  }

  static void ensure_closure(SceneGraph& graph) {
    for (const auto& r : graph.relations) {
      for (const auto& name : {r.subject, r.object}) {
        if (!graph.has_entity_name(name)) {
          graph.entities.push_back({name, std::nullopt});
        }
      }
    }
  }

  const grammar::Lexicon& lex_;
};

/// Parses a caption with the given backend; any backend failure falls back
/// to the rule-based parser and records a warning in the result provenance.
inline SceneGraph parse_caption(std::string_view caption, SceneGraphParser* backend = nullptr) {
  if (backend != nullptr) {
    try {
      return backend->parse(caption);
    } catch (const std::exception& e) {
      RuleBasedParser fallback;
      SceneGraph graph = fallback.parse(caption);
      graph.warnings.push_back(std::string("parser backend failed, used rule-based fallback: ") +
                               e.what());
      return graph;
    }
  }
  RuleBasedParser fallback;
  return fallback.parse(caption);
}

}  // namespace capcheck
