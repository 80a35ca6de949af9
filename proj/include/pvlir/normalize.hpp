// Copyright 2026 The pvlir Authors.
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

// Text preprocessing for statements and captions: person-identifier
// standardization, caption sentence splitting and length filtering.

#ifndef PVLIR_NORMALIZE_HPP
#define PVLIR_NORMALIZE_HPP

#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "pvlir/common.hpp"

namespace pvlir {

enum class StatementKind { kPrecondition, kAction };

inline std::string_view to_string(StatementKind k) {
  return k == StatementKind::kPrecondition ? "precondition" : "action";
}

inline StatementKind parse_statement_kind(std::string_view s) {
  if (s == "precondition") return StatementKind::kPrecondition;
  if (s == "action") return StatementKind::kAction;
  throw LoadError("invalid statement kind '" + std::string(s) + "'");
}

struct Statement {
  std::string id;
  std::string text;
  StatementKind kind = StatementKind::kPrecondition;
  std::string source;
  std::size_t token_len = 0;
  // The PNLI pair this statement came from and that pair's label. Empty for
  // free-standing statements.
  std::string pair_id;
  std::optional<Label> label;
};

struct Caption {
  std::string id;
  std::string text;
  std::string image_ref;
  std::string source;
};

inline json to_json(const Statement& s) {
  json j{{"id", s.id},         {"text", s.text},           {"kind", to_string(s.kind)},
         {"source", s.source}, {"token_len", s.token_len}, {"pair_id", s.pair_id}};
  j["label"] = s.label ? json(to_string(*s.label)) : json(nullptr);
  return j;
}

inline Statement statement_from_json(const json& j) {
  Statement s;
  s.id = j.at("id").get<std::string>();
  s.text = j.at("text").get<std::string>();
  s.kind = parse_statement_kind(j.at("kind").get<std::string>());
  s.source = j.value("source", "");
  s.token_len = j.contains("token_len") ? j.at("token_len").get<std::size_t>() : count_tokens(s.text);
  s.pair_id = j.value("pair_id", "");
  if (j.contains("label") && !j.at("label").is_null())
    s.label = parse_label(j.at("label").get<std::string>());
  return s;
}

inline json to_json(const Caption& c) {
  return json{{"id", c.id}, {"text", c.text}, {"image_ref", c.image_ref}, {"source", c.source}};
}

inline Caption caption_from_json(const json& j) {
  Caption c;
  c.id = j.at("id").get<std::string>();
  c.text = j.at("text").get<std::string>();
  c.image_ref = j.at("image_ref").get<std::string>();
  c.source = j.value("source", "");
  if (c.image_ref.empty()) throw LoadError("caption " + c.id + " has empty image_ref");
  return c;
}

// ---------------------------------------------------------------------------
// Person detection

// Byte span [begin, end) of a person mention in the raw text.
struct PersonSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

class PersonDetector {
 public:
  virtual ~PersonDetector() = default;
  virtual std::vector<PersonSpan> detect(std::string_view text) const = 0;
};

// Fixed identifiers used by statement banks (Alice/Bob, PersonX/PersonY/...).
class FixedIdentifierDetector : public PersonDetector {
 public:
  FixedIdentifierDetector()
      : pattern_(R"(\b(PersonX|PersonY|PersonZ|personx|persony|personz|Alice|Bob)\b)") {}

  std::vector<PersonSpan> detect(std::string_view text) const override {
    std::vector<PersonSpan> spans;
    std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), pattern_); it != std::sregex_iterator();
         ++it) {
      auto pos = static_cast<std::size_t>(it->position(1));
      spans.push_back({pos, pos + static_cast<std::size_t>(it->length(1))});
    }
    return spans;
  }

 private:
  std::regex pattern_;
};

// Capitalized tokens found in a first-name list.
class GazetteerDetector : public PersonDetector {
 public:
  explicit GazetteerDetector(const std::vector<std::string>& names) {
    for (const auto& n : names) names_.insert(to_lower(n));
  }

  std::vector<PersonSpan> detect(std::string_view text) const override {
    std::vector<PersonSpan> spans;
    std::size_t i = 0;
    while (i < text.size()) {
      if (!std::isalpha(static_cast<unsigned char>(text[i]))) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
      if (std::isupper(static_cast<unsigned char>(text[i])) &&
          names_.count(to_lower(text.substr(i, j - i))))
        spans.push_back({i, j});
      i = j;
    }
    return spans;
  }

 private:
  std::unordered_set<std::string> names_;
};

// Union of several detectors; overlaps are resolved during normalization.
class CompositeDetector : public PersonDetector {
 public:
  void add(std::shared_ptr<const PersonDetector> d) { parts_.push_back(std::move(d)); }

  std::vector<PersonSpan> detect(std::string_view text) const override {
    std::vector<PersonSpan> spans;
    for (const auto& p : parts_) {
      auto s = p->detect(text);
      spans.insert(spans.end(), s.begin(), s.end());
    }
    return spans;
  }

 private:
  std::vector<std::shared_ptr<const PersonDetector>> parts_;
};

// Spans supplied by an external tagger, keyed by record id:
// {"id": ..., "spans": [[begin, end], ...]}
inline std::unordered_map<std::string, std::vector<PersonSpan>> load_span_sidecar(
    const std::string& path) {
  std::unordered_map<std::string, std::vector<PersonSpan>> out;
  for (const auto& j : read_jsonl(path)) {
    auto& v = out[j.at("id").get<std::string>()];
    for (const auto& s : j.at("spans")) v.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
  }
  return out;
}

// "the person", "another person", "a third person", ...
inline std::string person_phrase(std::size_t index) {
  static const char* kOrdinals[] = {"third", "fourth", "fifth",  "sixth",
                                    "seventh", "eighth", "ninth", "tenth"};
  if (index == 0) return "the person";
  if (index == 1) return "another person";
  if (index - 2 < std::size(kOrdinals)) return std::string("a ") + kOrdinals[index - 2] + " person";
  auto n = index + 1;
  const char* suffix = (n % 100 >= 11 && n % 100 <= 13) ? "th"
                       : n % 10 == 1                    ? "st"
                       : n % 10 == 2                    ? "nd"
                       : n % 10 == 3                    ? "rd"
                                                        : "th";
  return "a " + std::to_string(n) + suffix + " person";
}

// Replaces "the person's" with "their" at word boundaries.
inline std::string rewrite_possessive(std::string s) {
  static const std::regex kPossessive(R"(\bthe person's\b)");
  return std::regex_replace(s, kPossessive, "their");
}

// Lowercase, possessive rewrite, whitespace collapse. Applied to every
// statement and caption as the final cleanup.
inline std::string clean_text(std::string_view s) {
  return collapse_whitespace(rewrite_possessive(to_lower(s)));
}

using StatementOutcome = std::variant<Statement, Rejection>;

inline std::string replace_person_spans(std::string_view raw, std::vector<PersonSpan> spans) {
  std::sort(spans.begin(), spans.end(), [](const PersonSpan& a, const PersonSpan& b) {
    return a.begin != b.begin ? a.begin < b.begin : a.end > b.end;
  });
  std::string out;
  std::map<std::string, std::size_t> entity_index;
  std::size_t cursor = 0;
  for (const auto& span : spans) {
    if (span.begin < cursor || span.end > raw.size() || span.end <= span.begin) continue;
    auto key = to_lower(raw.substr(span.begin, span.end - span.begin));
    auto [it, inserted] = entity_index.try_emplace(key, entity_index.size());
    out.append(raw.substr(cursor, span.begin - cursor));
    out += person_phrase(it->second);
    cursor = span.end;
  }
  out.append(raw.substr(cursor));
  return out;
}

inline StatementOutcome normalize_statement(std::string_view raw, std::string id, std::string source,
                                            StatementKind kind,
                                            const std::vector<PersonSpan>& person_spans) {
  auto text = clean_text(replace_person_spans(raw, person_spans));
  if (text.empty()) return Rejection{std::move(id), "empty_after_normalization", std::string(raw)};
  Statement s;
  s.id = std::move(id);
  s.token_len = count_tokens(text);
  s.text = std::move(text);
  s.kind = kind;
  s.source = std::move(source);
  return s;
}

// Convenience overload running a detector over the raw text.
inline StatementOutcome normalize_statement(std::string_view raw, std::string id, std::string source,
                                            StatementKind kind, const PersonDetector& detector) {
  return normalize_statement(raw, std::move(id), std::move(source), kind, detector.detect(raw));
}

// A bank record {id, precondition, action, label, source} becomes two
// statements sharing pair_id, or a rejection.
struct PairOutcome {
  std::optional<std::pair<Statement, Statement>> statements;
  std::vector<Rejection> rejections;
};

inline PairOutcome normalize_pnli_record(const json& record, const PersonDetector& detector,
                                         const std::set<std::string>& source_registry) {
  PairOutcome out;
  auto id = record.at("id").get<std::string>();
  auto source = record.value("source", "");
  if (!source_registry.empty() && !source_registry.count(source)) {
    out.rejections.push_back({id, "unknown_source", source});
    return out;
  }
  auto label = parse_label(record.at("label").get<std::string>());
  auto pre = normalize_statement(record.at("precondition").get<std::string>(), id + "#p", source,
                                 StatementKind::kPrecondition, detector);
  auto act = normalize_statement(record.at("action").get<std::string>(), id + "#a", source,
                                 StatementKind::kAction, detector);
  if (auto* r = std::get_if<Rejection>(&pre)) out.rejections.push_back(*r);
  if (auto* r = std::get_if<Rejection>(&act)) out.rejections.push_back(*r);
  if (!out.rejections.empty()) return out;
  auto p = std::get<Statement>(std::move(pre));
  auto a = std::get<Statement>(std::move(act));
  p.pair_id = a.pair_id = id;
  p.label = a.label = label;
  out.statements.emplace(std::move(p), std::move(a));
  return out;
}

// ---------------------------------------------------------------------------
// Caption splitting

inline std::set<std::string> default_abbreviations() {
  return {"mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "mt.", "vs.", "etc.",
          "e.g.", "i.e.", "inc.", "ltd.", "co.", "no.", "approx.", "ft.", "ave."};
}

namespace detail {

inline bool ends_with_abbreviation(std::string_view text, std::size_t dot,
                                   const std::set<std::string>& abbreviations) {
  std::size_t b = dot;
  while (b > 0 && !is_space(text[b - 1])) --b;
  auto word = to_lower(text.substr(b, dot - b + 1));
  // Strip leading brackets or quotes.
  while (!word.empty() && !std::isalnum(static_cast<unsigned char>(word.front()))) word.erase(0, 1);
  if (abbreviations.count(word)) return true;
  // Single-letter initials such as "j."
  return word.size() == 2 && std::isalpha(static_cast<unsigned char>(word[0]));
}

}  // namespace detail

// Sentence splitter: a terminator (. ! ?) followed by whitespace and a letter
// ends a sentence unless the word ending in "." is a listed abbreviation.
inline std::vector<std::string> split_sentences(std::string_view line,
                                                const std::set<std::string>& abbreviations) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (c != '.' && c != '!' && c != '?') continue;
    std::size_t j = i + 1;
    while (j < line.size() && is_space(line[j])) ++j;
    if (j == i + 1 || j >= line.size() || !std::isalpha(static_cast<unsigned char>(line[j])))
      continue;
    if (c == '.' && detail::ends_with_abbreviation(line, i, abbreviations)) continue;
    out.push_back(collapse_whitespace(line.substr(start, i + 1 - start)));
    start = j;
    i = j - 1;
  }
  out.push_back(collapse_whitespace(line.substr(start)));
  out.erase(std::remove(out.begin(), out.end(), std::string{}), out.end());
  return out;
}

inline std::vector<std::string> split_caption(std::string_view raw,
                                              const std::set<std::string>& abbreviations) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= raw.size()) {
    std::size_t nl = raw.find_first_of("\r\n", start);
    if (nl == std::string_view::npos) nl = raw.size();
    std::string line(raw.substr(start, nl - start));
    replace_all(line, "<PERSON>", " the person ");
    for (auto& s : split_sentences(line, abbreviations)) out.push_back(std::move(s));
    start = nl + 1;
  }
  return out;
}

inline std::vector<std::string> split_caption(std::string_view raw) {
  return split_caption(raw, default_abbreviations());
}

// Splits a raw caption record into one normalized caption per sentence; the
// sentence index is appended to the id when there is more than one.
inline std::vector<Caption> normalize_caption_record(const Caption& raw,
                                                     const std::set<std::string>& abbreviations) {
  std::vector<Caption> out;
  auto sentences = split_caption(raw.text, abbreviations);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    auto text = clean_text(sentences[i]);
    if (text.empty()) continue;
    Caption c = raw;
    c.text = std::move(text);
    if (sentences.size() > 1) c.id = raw.id + "#" + std::to_string(i);
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Length filter

template <typename T>
struct LengthFilterResult {
  std::vector<T> retained;
  double mean = 0.0;
  double stddev = 0.0;
  long lower = 0;
  long upper = 0;
  std::size_t input_count = 0;
  // Length is counted in whitespace tokens.
  static constexpr std::string_view kTokenization = "whitespace";
};

// Retains items whose length lies in [round(mean - sd), round(mean + sd)],
// population standard deviation, bounds rounded half away from zero.
template <typename T, typename LengthFn>
LengthFilterResult<T> length_filter(const std::vector<T>& items, LengthFn length_of) {
  if (items.empty()) throw ContractError("length_filter: empty input");
  LengthFilterResult<T> r;
  r.input_count = items.size();
  double sum = 0.0;
  for (const auto& it : items) sum += static_cast<double>(length_of(it));
  r.mean = sum / static_cast<double>(items.size());
  double ss = 0.0;
  for (const auto& it : items) {
    double d = static_cast<double>(length_of(it)) - r.mean;
    ss += d * d;
  }
  r.stddev = std::sqrt(ss / static_cast<double>(items.size()));
  r.lower = round_half_away(r.mean - r.stddev);
  r.upper = round_half_away(r.mean + r.stddev);
  for (const auto& it : items) {
    auto len = static_cast<long>(length_of(it));
    if (len >= r.lower && len <= r.upper) r.retained.push_back(it);
  }
  return r;
}

inline LengthFilterResult<Statement> length_filter(const std::vector<Statement>& items) {
  return length_filter(items, [](const Statement& s) { return s.token_len; });
}

inline LengthFilterResult<Caption> length_filter(const std::vector<Caption>& items) {
  return length_filter(items, [](const Caption& c) { return count_tokens(c.text); });
}

template <typename T>
json report_json(const LengthFilterResult<T>& r) {
  return json{{"mean", r.mean},
              {"stddev", r.stddev},
              {"lower", r.lower},
              {"upper", r.upper},
              {"input", r.input_count},
              {"retained", r.retained.size()},
              {"tokenization", std::string(LengthFilterResult<T>::kTokenization)}};
}

}  // namespace pvlir

#endif  // PVLIR_NORMALIZE_HPP
