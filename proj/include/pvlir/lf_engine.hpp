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

// Labeling functions: a table of conjunction patterns, each with a label
// class and an annotated precision. Captions matching a pattern yield an
// (action, precondition) pair labeled allow (enables) or prevent (disables).

#ifndef PVLIR_LF_ENGINE_HPP
#define PVLIR_LF_ENGINE_HPP

#include <boost/regex.hpp>

#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pvlir/common.hpp"
#include "pvlir/normalize.hpp"

namespace pvlir {

enum class LabelClass { kEnables, kDisables };

inline std::string_view to_string(LabelClass c) {
  return c == LabelClass::kEnables ? "enables" : "disables";
}

inline Label label_for(LabelClass c) {
  return c == LabelClass::kEnables ? Label::kAllow : Label::kPrevent;
}

struct LabelingFunction {
  std::string name;
  LabelClass label_class = LabelClass::kEnables;
  std::string pattern;  // template text, as written in the table
  bool pos_check = false;
  std::optional<double> precision;
  bool min_sample_met = true;
  std::size_t index = 0;  // row position in the table

  // Compiled form.
  std::shared_ptr<const boost::regex> matcher;
  std::string action_placeholder;        // "A" or "E"
  std::string precondition_placeholder;  // "P" or "NP"
};

namespace detail {

inline constexpr const char* kActionGroup = "pvlir_action";
inline constexpr const char* kPreconditionGroup = "pvlir_precondition";

inline std::string format_precision(const LabelingFunction& lf) {
  if (!lf.precision) return "---";
  double p = *lf.precision;
  std::string s;
  if (std::abs(p * 1000.0 - std::round(p * 1000.0)) < 1e-9) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << p;
    s = os.str();
  } else {
    s = json(p).dump();
  }
  if (!lf.min_sample_met) s += "*";
  return s;
}

}  // namespace detail

// Turns the template into a regex with named captures. Exactly one of
// {P}/{NP} and exactly one of {A}/{E} must appear.
inline void compile_lf(LabelingFunction& lf) {
  auto fail = [&](const std::string& why) {
    throw ConfigError("labeling function row " + std::to_string(lf.index + 1) + " ('" + lf.name +
                      "'): " + why);
  };
  std::string regex;
  int actions = 0, preconditions = 0, seen = 0;
  const auto& t = lf.pattern;
  for (std::size_t i = 0; i < t.size();) {
    if (t[i] == '{') {
      auto close = t.find('}', i);
      if (close != std::string::npos) {
        auto name = t.substr(i + 1, close - i - 1);
        bool is_placeholder = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
          return std::isupper(static_cast<unsigned char>(c));
        });
        if (is_placeholder) {
          const char* group = nullptr;
          if (name == "A" || name == "E") {
            ++actions;
            lf.action_placeholder = name;
            group = detail::kActionGroup;
          } else if (name == "P" || name == "NP") {
            ++preconditions;
            lf.precondition_placeholder = name;
            group = detail::kPreconditionGroup;
          } else {
            fail("unknown placeholder {" + name + "}");
          }
          if (actions > 1 || preconditions > 1) fail("duplicate placeholder {" + name + "}");
          // The first capture is lazy so it stops at the first conjunction.
          regex += std::string("(?<") + group + (seen == 0 ? ">.+?)" : ">.+)");
          ++seen;
          i = close + 1;
          continue;
        }
      }
    }
    regex += t[i];
    ++i;
  }
  if (actions != 1) fail("template needs exactly one action placeholder ({A} or {E})");
  if (preconditions != 1) fail("template needs exactly one precondition placeholder ({P} or {NP})");
  try {
    lf.matcher = std::make_shared<boost::regex>(regex, boost::regex::perl | boost::regex::icase);
  } catch (const boost::regex_error& e) {
    fail(std::string("invalid pattern: ") + e.what());
  }
}

// Parses one table row "label_class | name | precision | template".
inline LabelingFunction parse_lf_row(const std::string& line, std::size_t index) {
  LabelingFunction lf;
  lf.index = index;
  std::vector<std::string> cols;
  std::size_t pos = 0;
  for (int c = 0; c < 3; ++c) {
    auto bar = line.find(" | ", pos);
    if (bar == std::string::npos)
      throw ConfigError("labeling function row " + std::to_string(index + 1) +
                        ": expected 4 columns separated by ' | '");
    cols.push_back(trim(line.substr(pos, bar - pos)));
    pos = bar + 3;
  }
  cols.push_back(trim(line.substr(pos)));

  if (cols[0] == "enables") lf.label_class = LabelClass::kEnables;
  else if (cols[0] == "disables") lf.label_class = LabelClass::kDisables;
  else
    throw ConfigError("labeling function row " + std::to_string(index + 1) +
                      ": unknown label class '" + cols[0] + "'");

  lf.name = cols[1];
  if (lf.name.size() > 4 && lf.name.starts_with("**") && lf.name.ends_with("**")) {
    lf.pos_check = true;
    lf.name = lf.name.substr(2, lf.name.size() - 4);
  }

  auto prec = cols[2];
  if (prec != "---") {
    if (!prec.empty() && prec.back() == '*') {
      lf.min_sample_met = false;
      prec.pop_back();
    }
    try {
      std::size_t used = 0;
      double p = std::stod(prec, &used);
      if (used != prec.size() || !(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(prec);
      lf.precision = p;
    } catch (const std::exception&) {
      throw ConfigError("labeling function row " + std::to_string(index + 1) +
                        ": invalid precision '" + cols[2] + "'");
    }
  }
  lf.pattern = cols[3];
  compile_lf(lf);
  return lf;
}

inline std::vector<LabelingFunction> parse_lf_table(std::istream& in) {
  std::vector<LabelingFunction> lfs;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    lfs.push_back(parse_lf_row(t, lfs.size()));
  }
  return lfs;
}

inline std::vector<LabelingFunction> compile_lf_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open labeling function table " + path);
  return parse_lf_table(in);
}

inline std::string format_lf_table(const std::vector<LabelingFunction>& lfs) {
  std::string out = "# label_class | name | precision | template\n";
  for (const auto& lf : lfs) {
    out += std::string(to_string(lf.label_class)) + " | ";
    out += lf.pos_check ? "**" + lf.name + "**" : lf.name;
    out += " | " + detail::format_precision(lf) + " | " + lf.pattern + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Part-of-speech confirmation

class PosHook {
 public:
  virtual ~PosHook() = default;
  // left/right are the untrimmed text on either side of the conjunction.
  virtual bool confirms(const Caption& caption, const LabelingFunction& lf, std::string_view left,
                        std::string_view conjunction, std::string_view right) const = 0;
};

// Closed-class heuristic: the conjunction is not directly preceded by a
// determiner and both sides contain a listed verb.
class HeuristicPosHook : public PosHook {
 public:
  explicit HeuristicPosHook(const std::vector<std::string>& verbs) {
    for (const auto& v : verbs) verbs_.insert(to_lower(v));
  }

  bool confirms(const Caption&, const LabelingFunction&, std::string_view left, std::string_view,
                std::string_view right) const override {
    static const std::unordered_set<std::string> kDeterminers = {
        "a",   "an",  "the", "this", "that", "these", "those", "my",    "your",
        "his", "her", "its", "our",  "their", "some", "any",  "every", "each"};
    auto lt = words(left);
    if (lt.empty() || kDeterminers.count(lt.back())) return false;
    return has_verb(lt) && has_verb(words(right));
  }

 private:
  static std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    for (auto& tok : split_tokens(s)) {
      std::string w;
      for (char c : tok)
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '\'') w += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (!w.empty()) out.push_back(std::move(w));
    }
    return out;
  }

  bool has_verb(const std::vector<std::string>& ws) const {
    return std::any_of(ws.begin(), ws.end(), [&](const std::string& w) { return verbs_.count(w) > 0; });
  }

  std::unordered_set<std::string> verbs_;
};

// Judgements from an external tagger, {"caption_id", "lf_name", "conjunction": bool};
// captions without a judgement fall back to another hook.
class SidecarPosHook : public PosHook {
 public:
  SidecarPosHook(const std::vector<json>& records, std::shared_ptr<const PosHook> fallback)
      : fallback_(std::move(fallback)) {
    for (const auto& r : records)
      judgements_[key(r.at("caption_id").get<std::string>(), r.at("lf_name").get<std::string>())] =
          r.at("conjunction").get<bool>();
  }

  bool confirms(const Caption& caption, const LabelingFunction& lf, std::string_view left,
                std::string_view conjunction, std::string_view right) const override {
    auto it = judgements_.find(key(caption.id, lf.name));
    if (it != judgements_.end()) return it->second;
    return fallback_ && fallback_->confirms(caption, lf, left, conjunction, right);
  }

 private:
  static std::string key(const std::string& caption_id, const std::string& lf) {
    return caption_id + '\x1f' + lf;
  }
  std::unordered_map<std::string, bool> judgements_;
  std::shared_ptr<const PosHook> fallback_;
};

// ---------------------------------------------------------------------------
// Extraction

struct ExtractedInstance {
  std::string caption_id;
  std::string image_ref;
  std::string caption_source;
  std::string action_text;
  std::string precondition_text;
  Label label = Label::kAllow;
  std::string lf_name;
  std::optional<double> lf_precision;
  std::size_t lf_index = 0;
};

inline json to_json(const ExtractedInstance& e) {
  json j{{"caption_id", e.caption_id},
         {"image_ref", e.image_ref},
         {"caption_source", e.caption_source},
         {"action_text", e.action_text},
         {"precondition_text", e.precondition_text},
         {"label", to_string(e.label)},
         {"lf_name", e.lf_name},
         {"lf_index", e.lf_index}};
  j["lf_precision"] = e.lf_precision ? json(*e.lf_precision) : json(nullptr);
  return j;
}

inline ExtractedInstance extracted_from_json(const json& j) {
  ExtractedInstance e;
  e.caption_id = j.at("caption_id").get<std::string>();
  e.image_ref = j.at("image_ref").get<std::string>();
  e.caption_source = j.value("caption_source", "");
  e.action_text = j.at("action_text").get<std::string>();
  e.precondition_text = j.at("precondition_text").get<std::string>();
  e.label = parse_label(j.at("label").get<std::string>());
  e.lf_name = j.at("lf_name").get<std::string>();
  e.lf_index = j.value("lf_index", std::size_t{0});
  if (j.contains("lf_precision") && !j.at("lf_precision").is_null())
    e.lf_precision = j.at("lf_precision").get<double>();
  return e;
}

// Strips leading/trailing punctuation and whitespace.
inline std::string trim_span(std::string_view s) {
  std::size_t b = 0, e = s.size();
  auto strip = [](char c) {
    return is_space(c) || std::ispunct(static_cast<unsigned char>(c)) != 0;
  };
  while (b < e && strip(s[b])) ++b;
  while (e > b && strip(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

inline constexpr std::size_t kMinSpanTokens = 2;

// Every labeling function that matches contributes one instance, in table
// order. Use resolve_matches() to keep one per caption.
inline std::vector<ExtractedInstance> extract(const Caption& caption,
                                              const std::vector<LabelingFunction>& lfs,
                                              const PosHook* pos_hook = nullptr) {
  std::vector<ExtractedInstance> out;
  const std::string& text = caption.text;
  for (const auto& lf : lfs) {
    boost::smatch m;
    if (!lf.matcher || !boost::regex_search(text, m, *lf.matcher)) continue;
    const auto& act = m[detail::kActionGroup];
    const auto& pre = m[detail::kPreconditionGroup];
    auto action = trim_span(act.str());
    auto precondition = trim_span(pre.str());
    if (count_tokens(action) < kMinSpanTokens || count_tokens(precondition) < kMinSpanTokens) continue;
    if (lf.pos_check) {
      auto first = act.first < pre.first ? act : pre;
      auto second = act.first < pre.first ? pre : act;
      std::string_view whole(text);
      auto off = [&](std::string::const_iterator it) {
        return static_cast<std::size_t>(it - text.begin());
      };
      auto left = whole.substr(off(first.first), off(first.second) - off(first.first));
      auto conj = whole.substr(off(first.second), off(second.first) - off(first.second));
      auto right = whole.substr(off(second.first), off(second.second) - off(second.first));
      if (!pos_hook || !pos_hook->confirms(caption, lf, left, conj, right)) continue;
    }
    ExtractedInstance e;
    e.caption_id = caption.id;
    e.image_ref = caption.image_ref;
    e.caption_source = caption.source;
    e.action_text = std::move(action);
    e.precondition_text = std::move(precondition);
    e.label = label_for(lf.label_class);
    e.lf_name = lf.name;
    e.lf_precision = lf.precision;
    e.lf_index = lf.index;
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<ExtractedInstance> extract_all(const std::vector<Caption>& captions,
                                                  const std::vector<LabelingFunction>& lfs,
                                                  const PosHook* pos_hook = nullptr) {
  std::vector<ExtractedInstance> out;
  for (const auto& c : captions) {
    auto found = extract(c, lfs, pos_hook);
    out.insert(out.end(), std::make_move_iterator(found.begin()), std::make_move_iterator(found.end()));
  }
  return out;
}

// True when a should be preferred over b for the same caption: higher
// precision, then longer precondition, then earlier table row.
inline bool better_match(const ExtractedInstance& a, const ExtractedInstance& b) {
  constexpr double kNone = -std::numeric_limits<double>::infinity();
  double pa = a.lf_precision.value_or(kNone), pb = b.lf_precision.value_or(kNone);
  if (pa != pb) return pa > pb;
  if (a.precondition_text.size() != b.precondition_text.size())
    return a.precondition_text.size() > b.precondition_text.size();
  return a.lf_index < b.lf_index;
}

// Keeps one instance per caption, preserving first-appearance order.
inline std::vector<ExtractedInstance> resolve_matches(const std::vector<ExtractedInstance>& raw) {
  std::vector<ExtractedInstance> out;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& e : raw) {
    auto [it, inserted] = slot.try_emplace(e.caption_id, out.size());
    if (inserted) out.push_back(e);
    else if (better_match(e, out[it->second])) out[it->second] = e;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationSample {
  std::string lf_name;
  std::size_t matched_count = 0;
  std::size_t n = 20;
  std::vector<ExtractedInstance> instances;
};

inline constexpr std::size_t kDefaultCalibrationSize = 20;

// Uniform sample (without replacement) of up to n matches of one LF.
inline CalibrationSample calibrate(const LabelingFunction& lf, const std::vector<Caption>& corpus,
                                   std::size_t n, std::uint64_t seed,
                                   const PosHook* pos_hook = nullptr) {
  std::vector<LabelingFunction> single{lf};
  auto matches = extract_all(corpus, single, pos_hook);
  CalibrationSample s;
  s.lf_name = lf.name;
  s.matched_count = matches.size();
  s.n = n;
  Rng rng(seed);
  auto picks = sample_without_replacement(matches.size(), std::min(n, matches.size()), rng);
  std::sort(picks.begin(), picks.end());
  for (auto i : picks) s.instances.push_back(matches[i]);
  return s;
}

inline std::vector<json> sample_to_json(const CalibrationSample& s) {
  std::vector<json> lines;
  json head{{"lf_name", s.lf_name}, {"matched_count", s.matched_count}, {"n", s.n}};
  if (s.instances.empty()) {
    head["instance"] = nullptr;
    lines.push_back(head);
  }
  for (const auto& e : s.instances) {
    json j = head;
    j["instance"] = to_json(e);
    j["score"] = nullptr;
    lines.push_back(j);
  }
  return lines;
}

struct CalibrationResult {
  std::string lf_name;
  std::optional<double> precision;
  std::size_t sample_size = 0;
  std::size_t matched_count = 0;
  bool min_sample_met = false;
};

inline json to_json(const CalibrationResult& r) {
  json j{{"lf_name", r.lf_name},
         {"sample_size", r.sample_size},
         {"matched_count", r.matched_count},
         {"min_sample_met", r.min_sample_met}};
  j["precision"] = r.precision ? json(*r.precision) : json(nullptr);
  return j;
}

// Precision is the mean of binary relevance scores.
inline CalibrationResult ingest_calibration(std::string lf_name, std::size_t matched_count,
                                            std::size_t n, const std::vector<int>& scores) {
  CalibrationResult r;
  r.lf_name = std::move(lf_name);
  r.matched_count = matched_count;
  r.sample_size = scores.size();
  r.min_sample_met = matched_count >= n;
  if (matched_count == 0) return r;
  if (scores.empty()) throw ContractError("calibration for '" + r.lf_name + "' has no annotations");
  long ones = 0;
  for (int s : scores) {
    if (s != 0 && s != 1) throw ContractError("calibration scores must be 0 or 1");
    ones += s;
  }
  r.precision = static_cast<double>(ones) / static_cast<double>(scores.size());
  return r;
}

// Reads annotated sample lines (as written by sample_to_json, with "score"
// filled in) and returns one result per LF.
inline std::vector<CalibrationResult> ingest_calibration(const std::vector<json>& annotated) {
  struct Acc {
    std::size_t matched = 0, n = kDefaultCalibrationSize;
    std::vector<int> scores;
  };
  std::map<std::string, Acc> by_lf;
  std::vector<std::string> order;
  for (const auto& j : annotated) {
    auto name = j.at("lf_name").get<std::string>();
    auto [it, inserted] = by_lf.try_emplace(name);
    if (inserted) order.push_back(name);
    it->second.matched = j.at("matched_count").get<std::size_t>();
    it->second.n = j.value("n", kDefaultCalibrationSize);
    if (j.contains("instance") && !j.at("instance").is_null()) {
      if (!j.contains("score") || j.at("score").is_null())
        throw ContractError("unannotated sample line for '" + name + "'");
      it->second.scores.push_back(j.at("score").get<int>());
    }
  }
  std::vector<CalibrationResult> out;
  for (const auto& name : order) {
    const auto& a = by_lf.at(name);
    out.push_back(ingest_calibration(name, a.matched, a.n, a.scores));
  }
  return out;
}

inline void apply_calibration(std::vector<LabelingFunction>& lfs,
                              const std::vector<CalibrationResult>& results) {
  for (const auto& r : results) {
    auto it = std::find_if(lfs.begin(), lfs.end(), [&](const auto& lf) { return lf.name == r.lf_name; });
    if (it == lfs.end()) throw ConfigError("calibration for unknown labeling function '" + r.lf_name + "'");
    it->precision = r.precision;
    it->min_sample_met = r.min_sample_met;
  }
}

// ---------------------------------------------------------------------------
// Thresholding

// Uncalibrated LFs pass only when whitelisted.
inline bool passes_threshold(const std::optional<double>& precision, const std::string& lf_name,
                             double t, const std::set<std::string>& whitelist = {}) {
  if (precision) return *precision >= t;
  return whitelist.count(lf_name) > 0;
}

inline std::vector<ExtractedInstance> threshold_filter(const std::vector<ExtractedInstance>& instances,
                                                       double t,
                                                       const std::set<std::string>& whitelist = {}) {
  std::vector<ExtractedInstance> out;
  for (const auto& e : instances)
    if (passes_threshold(e.lf_precision, e.lf_name, t, whitelist)) out.push_back(e);
  return out;
}

inline std::vector<LabelingFunction> threshold_filter(const std::vector<LabelingFunction>& lfs, double t,
                                                      const std::set<std::string>& whitelist = {}) {
  std::vector<LabelingFunction> out;
  for (const auto& lf : lfs)
    if (passes_threshold(lf.precision, lf.name, t, whitelist)) out.push_back(lf);
  return out;
}

struct CumulativePoint {
  double threshold = 0.0;
  std::size_t retained = 0;
  double fraction_retained = 0.0;
  // Share of allow labels among the retained instances.
  double fraction_allow = 0.0;
};

inline json to_json(const CumulativePoint& p) {
  return json{{"threshold", p.threshold},
              {"retained", p.retained},
              {"fraction_retained", p.fraction_retained},
              {"fraction_allow", p.fraction_allow}};
}

inline std::vector<CumulativePoint> cumulative_report(const std::vector<ExtractedInstance>& instances,
                                                      const std::vector<double>& thresholds,
                                                      const std::set<std::string>& whitelist = {}) {
  std::vector<CumulativePoint> out;
  for (double t : thresholds) {
    CumulativePoint p;
    p.threshold = t;
    std::size_t allow = 0;
    for (const auto& e : instances) {
      if (!passes_threshold(e.lf_precision, e.lf_name, t, whitelist)) continue;
      ++p.retained;
      if (e.label == Label::kAllow) ++allow;
    }
    if (!instances.empty())
      p.fraction_retained = static_cast<double>(p.retained) / static_cast<double>(instances.size());
    if (p.retained) p.fraction_allow = static_cast<double>(allow) / static_cast<double>(p.retained);
    out.push_back(p);
  }
  return out;
}

// "start:stop:step", inclusive of stop. Values are snapped to 1e-12 so that
// e.g. the 4th step of 0.05 compares equal to the literal 0.15.
inline std::vector<double> parse_thresholds(const std::string& spec) {
  auto a = spec.find(':');
  auto b = spec.find(':', a == std::string::npos ? a : a + 1);
  if (a == std::string::npos || b == std::string::npos)
    throw ConfigError("thresholds must be start:stop:step, got '" + spec + "'");
  double start = std::stod(spec.substr(0, a));
  double stop = std::stod(spec.substr(a + 1, b - a - 1));
  double step = std::stod(spec.substr(b + 1));
  if (!(step > 0) || stop < start) throw ConfigError("invalid threshold range '" + spec + "'");
  std::vector<double> out;
  auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9));
  for (long i = 0; i <= count; ++i)
    out.push_back(std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12);
  return out;
}

// Per caption-source share of instances coming from each LF.
struct LfDistribution {
  // source -> lf name -> count
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  std::map<std::string, std::size_t> totals;
};

inline LfDistribution lf_distribution(const std::vector<ExtractedInstance>& instances) {
  LfDistribution d;
  for (const auto& e : instances) {
    ++d.counts[e.caption_source][e.lf_name];
    ++d.totals[e.caption_source];
  }
  return d;
}

inline json to_json(const LfDistribution& d) {
  json out = json::object();
  for (const auto& [source, per_lf] : d.counts) {
    json rows = json::array();
    double total = static_cast<double>(d.totals.at(source));
    for (const auto& [lf, n] : per_lf) {
      double pct = 100.0 * static_cast<double>(n) / total;
      rows.push_back({{"lf_name", lf}, {"count", n}, {"percent", pct}, {"log10_percent", std::log10(pct)}});
    }
    out[source] = rows;
  }
  return out;
}

}  // namespace pvlir

#endif  // PVLIR_LF_ENGINE_HPP
