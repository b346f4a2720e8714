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

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "capcheck/errors.hpp"
#include "capcheck/scene_graph.hpp"

namespace capcheck {

enum class ClaimOrigin { question, caption };

/// Declarative sentence assuming the affirmative answer to a yes/no
/// question. Inputs that are already declarative pass through unchanged;
/// inputs no template matches take a generic rewrite and are flagged
/// low-confidence.
struct Claim {
  std::string text;
  ClaimOrigin origin = ClaimOrigin::question;
  std::string original;
  bool pass_through = false;
  bool low_confidence = false;
};

namespace detail {

inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::string lower_copy(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Strips trailing punctuation for tagging purposes only.
inline std::string strip_token(const std::string& w) {
  std::string out;
  for (char c : w) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

inline std::string join_words(const std::vector<std::string>& words, size_t begin, size_t end) {
  std::string out;
  for (size_t i = begin; i < end && i < words.size(); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += words[i];
  }
  return out;
}

/// Index one past the subject noun phrase starting at `begin`:
/// (Det|Num)* (Adj|prenominal Verb)* Noun+. Returns `begin` when no noun
/// phrase is found.
inline size_t subject_end(const std::vector<std::string>& words, size_t begin) {
  using grammar::Tag;
  const auto& lex = grammar::Lexicon::standard();
  size_t i = begin;
  auto tag_at = [&](size_t idx) { return grammar::tag_word(strip_token(words[idx]), lex); };
  while (i < words.size() && (tag_at(i) == Tag::Det || tag_at(i) == Tag::Num)) ++i;
  while (i < words.size()) {
    const Tag t = tag_at(i);
    if (t != Tag::Adj && t != Tag::Verb) break;
    // A modifier must still lead to a noun.
    bool noun_later = false;
    for (size_t j = i + 1; j < words.size(); ++j) {
      const Tag tj = tag_at(j);
      if (tj == Tag::Adj || tj == Tag::Verb || tj == Tag::Num) continue;
      noun_later = tj == Tag::Noun || tj == Tag::StopNoun;
      break;
    }
    if (!noun_later) break;
    ++i;
  }
  size_t nouns = 0;
  while (i < words.size() && (tag_at(i) == Tag::Noun || tag_at(i) == Tag::StopNoun)) {
    ++i;
    ++nouns;
  }
  return nouns > 0 ? i : begin;
}

inline std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

inline std::string with_period(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '?')) s.pop_back();
  if (s.empty() || s.back() != '.') s.push_back('.');
  return s;
}

}  // namespace detail

/// Converts a yes/no benchmark question into the claim that assumes the
/// answer is yes. Recognized forms:
///   "Is there a/an X ...?"  -> "There is a/an X ..."
///   "Are there X ...?"      -> "There are X ..."
///   "Is/Are the X <pred>?"  -> "The X is/are <pred>."
/// Anything else falls through to a generic rewrite (strip leading
/// auxiliary, reinsert it after the subject, terminal period) and is
/// flagged low-confidence. Declarative input passes through unchanged.
inline Claim question_to_claim(std::string_view question) {
  const std::string trimmed = [&] {
    size_t b = 0, e = question.size();
    while (b < e && std::isspace(static_cast<unsigned char>(question[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(question[e - 1]))) --e;
    return std::string(question.substr(b, e - b));
  }();
  if (trimmed.empty()) throw InvalidInputError("question_to_claim: empty question");

  Claim claim;
  claim.origin = ClaimOrigin::question;
  claim.original = trimmed;

  static const std::vector<std::string> kAux = {"is",  "are", "was",  "were", "does", "do",
                                                "did", "can", "could", "will", "would"};
  auto words = detail::split_words(trimmed);
  const std::string first = detail::strip_token(words[0]);
  const bool interrogative = trimmed.back() == '?' ||
                             std::find(kAux.begin(), kAux.end(), first) != kAux.end();
  if (!interrogative) {
    claim.text = trimmed;
    claim.pass_through = true;
    return claim;
  }

  // Work on the body without the trailing question mark.
  std::string body = trimmed;
  while (!body.empty() && (body.back() == '?' || body.back() == ' ')) body.pop_back();
  words = detail::split_words(body);
  if (words.empty()) throw InvalidInputError("question_to_claim: question has no content");

  const std::string aux = detail::strip_token(words[0]);
  const bool is_aux = std::find(kAux.begin(), kAux.end(), aux) != kAux.end();

  // "Is there ..." / "Are there ..." existential template.
  if (is_aux && words.size() >= 2 && detail::strip_token(words[1]) == "there" &&
      (aux == "is" || aux == "are" || aux == "was" || aux == "were")) {
    std::string rest = detail::join_words(words, 2, words.size());
    claim.text = detail::with_period("There " + aux + (rest.empty() ? "" : " " + rest));
    claim.text = detail::capitalize(claim.text);
    return claim;
  }

  // "Is the X <pred>" template (covers attribute and relation questions).
  if (is_aux && (aux == "is" || aux == "are" || aux == "was" || aux == "were")) {
    const size_t subj_end = detail::subject_end(words, 1);
    if (subj_end > 1 && subj_end < words.size()) {
      const std::string subject = detail::join_words(words, 1, subj_end);
      const std::string predicate = detail::join_words(words, subj_end, words.size());
      claim.text = detail::capitalize(detail::with_period(subject + " " + aux + " " + predicate));
      return claim;
    }
  }

  // Generic fallback: strip the leading auxiliary, reinsert after the
  // subject noun phrase when one exists.
  claim.low_confidence = true;
  if (is_aux) {
    const size_t subj_end = detail::subject_end(words, 1);
    if (subj_end > 1) {
      const std::string subject = detail::join_words(words, 1, subj_end);
      const std::string rest = detail::join_words(words, subj_end, words.size());
      claim.text = detail::capitalize(
          detail::with_period(subject + " " + aux + (rest.empty() ? "" : " " + rest)));
      return claim;
    }
    claim.text = detail::capitalize(detail::with_period(detail::join_words(words, 1, words.size())));
    return claim;
  }
  claim.text = detail::capitalize(detail::with_period(body));
  return claim;
}

}  // namespace capcheck
