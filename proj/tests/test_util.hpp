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

// Shared fixtures and brute-force oracles for the test suites.

#ifndef PVLIR_TESTS_TEST_UTIL_HPP
#define PVLIR_TESTS_TEST_UTIL_HPP

#include <unistd.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pvlir/lf_engine.hpp"

namespace pvlir::testing_util {

inline std::string data_path(const std::string& name) { return std::string(PVLIR_DATA_DIR) + "/" + name; }

inline std::vector<LabelingFunction> shipped_table() { return compile_lf_table(data_path("lf_table.txt")); }

inline std::vector<std::string> verbs() { return read_list_file(data_path("verbs.txt")); }

struct ReferenceRow {
  std::string label_class;
  std::string name;
  std::optional<double> precision;
  bool min_sample_met;
  std::string pattern;
};

// The labeling-function table as published, typed in row by row.
inline const std::vector<ReferenceRow>& reference_lf_rows() {
  static const std::vector<ReferenceRow> rows = {
      {"enables", "so that", 0.689, true, "{P} so that {A}"},
      {"enables", "in order to", 0.650, true, "{P} in order to {A}"},
      {"enables", "because", 0.625, true, R"({A} because (?!of\b){P})"},
      {"enables", "due to", 0.550, true, "{A} due to {P}"},
      {"enables", "in case", 0.475, true, R"({A} in case (?!of\b){P})"},
      {"enables", "as if", 0.400, true, "{A} as if {P}"},
      {"enables", "as long as", 0.375, true, "{A} as long as {P}"},
      {"enables", "if", 0.150, true, R"({A}(?<!\bas) if (?!not\b){P})"},
      {"enables", "in the event", 0.100, true, "{A} in the event {P}"},
      {"enables", "on condition", 0.045, true, R"({A} on condition (?!of anonymity\b){P})"},
      {"enables", "supposing", 0.000, false, "{A} supposing {P}"},
      {"enables", "on the assumption", 0.000, false, "{A} on the assumption {P}"},
      {"enables", "in the case that", 0.000, false, "{A} in the case that {P}"},
      {"enables", "contingent upon", 0.000, false, "{A} contingent upon {P}"},
      {"enables", "with the proviso", std::nullopt, true, "{A} with the proviso {P}"},
      {"enables", "to understand event", std::nullopt, true,
       R"(to understand the event "{E}", it is important to know that {P}\.)"},
      {"enables", "statement is true", std::nullopt, true, R"(the statement "{E}" is true because {P}\.)"},
      {"enables", "only if", std::nullopt, true, "{A} only if {P}"},
      {"enables", "on these terms", std::nullopt, true, "{A} on these terms {P}"},
      {"enables", "makes possible", std::nullopt, true, R"({P} makes {A} possible\.)"},
      {"disables", "unless", 0.750, true, "{A} unless {P}"},
      {"disables", "even though", 0.550, true, "{A} even though {P}"},
      {"disables", "despite", 0.475, true, "{A} despite {P}"},
      {"disables", "if not", 0.300, true, R"({A}(?<!\bas) if not (?!(more|most|many|all)\b){P})"},
      {"disables", "without", 0.257, true, "{A} without {P}"},
      {"disables", "but", 0.175, true, "{A} but {NP}"},
      {"disables", "except", 0.075, true, "{A} except {P}"},
      {"disables", "lest", 0.045, false, "{A} lest {P}"},
      {"disables", "excepting that", std::nullopt, true, "{A} excepting that {P}"},
      {"disables", "except for", std::nullopt, true, "{A} except for {P}"},
  };
  return rows;
}

// Captions built from clause lists joined by simple conjunctions, mixed with
// plain descriptions. Deterministic for a seed.
inline std::vector<Caption> synthetic_captions(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> subjects = {
      "a young man", "the old dog", "two children", "a woman in red", "the small boat",
      "a busy chef", "the city bus", "a brown horse", "three friends", "the tall tree"};
  static const std::vector<std::string> predicates = {
      "walks along the beach", "sits near the window", "plays in the park",   "waits at the station",
      "rests under the bridge", "stands on the hill", "works in the kitchen", "rides down the road",
      "looks at the sky",       "holds a red umbrella"};
  static const std::vector<std::string> conditions = {
      "it is raining",        "the sun is out",          "the store is closed",
      "the water is cold",    "the road is icy",         "there is enough food",
      "the lights are off",   "the door is locked",      "the wind is strong",
      "the music is playing"};
  static const std::vector<std::string> conjunctions = {
      "unless", "so that", "in order to", "because", "in case", "as if", "as long as", "if",
      "even though", "despite", "without", "but", "except", "lest", "only if", "if not", "due to"};
  Rng rng(seed);
  auto pick = [&](const std::vector<std::string>& v) -> const std::string& {
    return v[uniform_below(rng, v.size())];
  };
  std::vector<Caption> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string text;
    auto kind = uniform_below(rng, 3);
    auto clause = pick(subjects) + " " + pick(predicates);
    if (kind == 0) {
      text = clause;
    } else {
      const auto& conj = pick(conjunctions);
      text = clause + " " + conj + " " + pick(conditions);
    }
    static const std::vector<std::string> sources = {"cc12m", "cc3m", "coco", "vizwiz"};
    out.push_back(Caption{"syn" + std::to_string(i), text, "img://syn" + std::to_string(i), pick(sources)});
  }
  return out;
}

// |{i : precision(lf(i)) >= t}| / |all| and the allow share among those.
inline std::pair<double, double> brute_force_fraction(const std::vector<ExtractedInstance>& instances,
                                                      double t) {
  std::size_t kept = 0, allow = 0;
  for (const auto& e : instances) {
    if (!e.lf_precision.has_value() || !(*e.lf_precision >= t)) continue;
    ++kept;
    allow += e.label == Label::kAllow ? 1 : 0;
  }
  double frac = instances.empty() ? 0.0 : static_cast<double>(kept) / static_cast<double>(instances.size());
  double allow_frac = kept ? static_cast<double>(allow) / static_cast<double>(kept) : 0.0;
  return {frac, allow_frac};
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("pvlir_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace pvlir::testing_util

#endif  // PVLIR_TESTS_TEST_UTIL_HPP
