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

// End-to-end run over in-memory inputs, plus a small synthetic corpus that
// exercises every stage offline.

#ifndef PVLIR_PIPELINE_HPP
#define PVLIR_PIPELINE_HPP

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pvlir/assembly.hpp"
#include "pvlir/embed_index.hpp"
#include "pvlir/image_query.hpp"
#include "pvlir/lf_engine.hpp"
#include "pvlir/normalize.hpp"
#include "pvlir/rank_fusion.hpp"

namespace pvlir {

struct PipelineConfig {
  std::uint64_t seed = 7;
  double threshold = 0.6;
  std::set<std::string> threshold_whitelist;
  std::size_t k = 50;
  double persistence = kDefaultPersistence;
  IqOptions iq;
  std::size_t n_tuning = 30;
  std::size_t n_noisy = 10;
  std::set<std::string> source_registry;  // empty accepts any source
};

struct PipelineInputs {
  std::vector<Caption> raw_captions;
  std::vector<json> pnli_records;
  std::vector<LabelingFunction> lfs;
  std::vector<std::string> verbs;  // for the conjunction check
};

struct PipelineResult {
  std::vector<Statement> statements;
  std::vector<Caption> captions;
  std::vector<Rejection> rejections;
  std::vector<ExtractedInstance> extracted;  // after threshold
  std::vector<FusionResult> fusions;
  std::vector<ImageResult> image_results;
  MergeResult merged;
  SplitReport split;
  json report;
};

inline PipelineResult run_pipeline(const PipelineInputs& in, const PipelineConfig& cfg,
                                   const ImageProvider& provider) {
  PipelineResult out;

  // Normalization.
  FixedIdentifierDetector detector;
  for (const auto& rec : in.pnli_records) {
    auto pair = normalize_pnli_record(rec, detector, cfg.source_registry);
    out.rejections.insert(out.rejections.end(), pair.rejections.begin(), pair.rejections.end());
    if (pair.statements) {
      out.statements.push_back(pair.statements->first);
      out.statements.push_back(pair.statements->second);
    }
  }
  auto abbrevs = default_abbreviations();
  for (const auto& raw : in.raw_captions)
    for (auto& c : normalize_caption_record(raw, abbrevs)) out.captions.push_back(std::move(c));

  // Extraction from captions.
  HeuristicPosHook hook(in.verbs);
  auto matched = resolve_matches(extract_all(out.captions, in.lfs, &hook));
  out.extracted = threshold_filter(matched, cfg.threshold, cfg.threshold_whitelist);

  // Caption querying over length-filtered statements and captions.
  auto stmt_filter = length_filter(out.statements);
  auto cap_filter = length_filter(out.captions);
  const auto pairs = index_pairs(out.statements);
  std::map<std::string, const Caption*> caption_by_id;
  for (const auto& c : cap_filter.retained) caption_by_id[c.id] = &c;

  const auto spaces = default_hashing_spaces();
  std::vector<VectorIndex> indexes;
  {
    std::vector<std::vector<VectorRecord>> recs(spaces.size());
    for (const auto& c : cap_filter.retained) {
      std::vector<std::vector<float>> vs;
      for (const auto& e : spaces) vs.push_back(e.embed(c.text));
      if (std::any_of(vs.begin(), vs.end(), [](const auto& v) {
            return std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; });
          })) {
        out.rejections.push_back({c.id, "zero_embedding", c.text});
        continue;
      }
      for (std::size_t s = 0; s < spaces.size(); ++s) recs[s].push_back({c.id, std::move(vs[s])});
    }
    for (std::size_t s = 0; s < spaces.size(); ++s) indexes.emplace_back(spaces[s].space(), recs[s]);
  }

  std::vector<PvliInstance> instances;
  for (const auto& e : out.extracted) instances.push_back(from_extraction(e));

  for (const auto& s : stmt_filter.retained) {
    auto pit = pairs.find(s.pair_id);
    if (pit == pairs.end()) continue;
    std::vector<Ranking> rankings;
    for (std::size_t m = 0; m < spaces.size(); ++m) {
      auto q = spaces[m].embed(s.text);
      if (std::all_of(q.begin(), q.end(), [](float x) { return x == 0.0f; })) break;
      rankings.push_back(indexes[m].query(s.id, q, cfg.k));
    }
    if (rankings.size() != spaces.size()) {
      out.rejections.push_back({s.id, "zero_embedding", s.text});
      continue;
    }
    FusionResult f;
    try {
      f = copeland_select(rankings, cfg.persistence);
    } catch (const NoCandidates&) {
      out.rejections.push_back({s.id, "no_candidates", ""});
      continue;
    }
    instances.push_back(from_caption_query(pit->second, s.kind, f, *caption_by_id.at(f.chosen)));
    out.fusions.push_back(std::move(f));
  }

  // Image querying over the same filtered statements.
  std::vector<Statement> iq_statements;
  for (const auto& s : stmt_filter.retained)
    if (pairs.count(s.pair_id)) iq_statements.push_back(s);
  auto iq = run_image_queries(iq_statements, provider, cfg.iq);
  out.rejections.insert(out.rejections.end(), iq.skipped.begin(), iq.skipped.end());
  std::map<std::string, const Statement*> stmt_by_id;
  for (const auto& s : iq_statements) stmt_by_id[s.id] = &s;
  for (const auto& r : iq.results) {
    const auto* s = stmt_by_id.at(r.statement_id);
    instances.push_back(from_image_result(pairs.at(s->pair_id), s->kind, r));
  }
  out.image_results = std::move(iq.results);

  out.merged = merge_dedupe(instances);
  out.split = split_sample(out.merged.dataset, cfg.n_tuning, cfg.n_noisy, cfg.seed);

  out.report = json{{"statements", out.statements.size()},
                    {"captions", out.captions.size()},
                    {"rejections", out.rejections.size()},
                    {"extracted_raw", matched.size()},
                    {"extracted_kept", out.extracted.size()},
                    {"threshold", cfg.threshold},
                    {"statement_length_filter", report_json(stmt_filter)},
                    {"caption_length_filter", report_json(cap_filter)},
                    {"fusions", out.fusions.size()},
                    {"image_results", out.image_results.size()},
                    {"merge", to_json(out.merged)},
                    {"split", to_json(out.split)}};
  if (!out.image_results.empty()) out.report["sites"] = to_json(site_stats(out.image_results));
  return out;
}

// File names written by write_pipeline_outputs, relative to the output dir.
inline constexpr const char* kDatasetFile = "dataset.jsonl";

inline void write_pipeline_outputs(const PipelineResult& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_jsonl(dir + "/statements.jsonl", to_json_lines(r.statements));
  write_jsonl(dir + "/captions.jsonl", to_json_lines(r.captions));
  write_jsonl(dir + "/rejections.jsonl", to_json_lines(r.rejections));
  write_jsonl(dir + "/extracted.jsonl", to_json_lines(r.extracted));
  write_jsonl(dir + "/fusion.jsonl", to_json_lines(r.fusions));
  write_jsonl(dir + "/iq_results.jsonl", to_json_lines(r.image_results));
  write_jsonl(dir + "/" + kDatasetFile, to_json_lines(r.merged.dataset));
  write_text(dir + "/report.json", r.report.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Synthetic fixture corpus

struct FixtureCorpus {
  std::vector<Caption> captions;    // raw caption records
  std::vector<json> pnli_records;   // {id, precondition, action, label, source}
  std::vector<json> image_fixture;  // {query, urls}
};

inline const std::set<std::string>& fixture_sources() {
  static const std::set<std::string> s{"anion", "paco", "winoventi", "abstract"};
  return s;
}

// n_pairs bank records give 2 * n_pairs statements. Image fixture entries are
// keyed by the query each normalized statement will produce.
inline FixtureCorpus make_fixture(std::uint64_t seed = 7, std::size_t n_captions = 200, std::size_t n_pairs = 25) {
  static const std::vector<std::string> people = {"a young man", "an old woman", "two children", "a chef",
                                                  "a cyclist",   "a farmer",     "three friends", "a nurse"};
  static const std::vector<std::string> actions = {
      "rides a bike to work",  "swims in the lake",   "plants seeds in the field", "cooks dinner outside",
      "walks the dog",         "reads on the porch",  "drives across the bridge",  "paints the fence",
      "plays football",        "climbs the hill"};
  static const std::vector<std::string> conditions = {
      "it is raining heavily", "the sun is shining",  "the road is covered in ice", "the lake is frozen",
      "the gate is locked",    "the lights are off",  "the ground is dry",          "there is a storm",
      "the bridge is closed",  "the paint is fresh"};
  static const std::vector<std::string> conjunctions = {"unless", "so that", "in order to", "because", "if",
                                                        "even though", "despite", "without", "but", "as if",
                                                        "in case", "due to"};
  static const std::vector<std::string> caption_sources = {"cc12m", "cc3m", "coco", "vizwiz"};
  static const std::vector<std::string> sites = {"quotefancy.com",      "thumbs.dreamstime.com", "i0.wp.com",
                                                 "i.pinimg.com",        "www.wikihow.com",       "c8.alamy.com",
                                                 "media.istockphoto.com", "upload.wikimedia.org"};
  static const std::vector<std::string> bank_sources = {"anion", "paco", "winoventi", "abstract"};

  Rng rng(seed);
  auto pick = [&](const std::vector<std::string>& v) -> const std::string& { return v[uniform_below(rng, v.size())]; };
  FixtureCorpus f;

  for (std::size_t i = 0; i < n_captions; ++i) {
    std::string text = pick(people) + " " + pick(actions);
    switch (uniform_below(rng, 4)) {
      case 0: break;
      case 1: text += " while " + pick(conditions); break;
      case 2: text += ".\r\n" + pick(people) + " waits nearby."; break;
      default: text += " " + pick(conjunctions) + " " + pick(conditions); break;
    }
    char id[32];
    std::snprintf(id, sizeof id, "cap%04zu", i);
    f.captions.push_back({id, text, "img://fixture/" + std::string(id) + ".jpg", pick(caption_sources)});
  }

  static const std::vector<std::string> persons = {"PersonX", "PersonY"};
  for (std::size_t i = 0; i < n_pairs; ++i) {
    bool allow = uniform_below(rng, 2) == 0;
    std::string cond = pick(conditions);
    std::string action = pick(persons) + " " + pick(actions);
    if (uniform_below(rng, 5) == 0) action += ", carefully";
    char id[32];
    std::snprintf(id, sizeof id, "pair%03zu", i);
    f.pnli_records.push_back({{"id", id},
                              {"precondition", cond},
                              {"action", action},
                              {"label", allow ? "allow" : "prevent"},
                              {"source", pick(bank_sources)}});
  }

  // One fixture entry per distinct query, urls derived from a hash of the
  // query so that the fixture does not depend on iteration order.
  FixedIdentifierDetector detector;
  std::set<std::string> queries;
  for (const auto& rec : f.pnli_records) {
    auto pair = normalize_pnli_record(rec, detector, {});
    if (!pair.statements) continue;
    queries.insert(build_query(pair.statements->first.text));
    queries.insert(build_query(pair.statements->second.text));
  }
  for (const auto& q : queries) {
    Rng qr(fnv1a64(q, seed));
    std::size_t n = qr() % 4 == 0 ? 4 : 12;
    std::vector<std::string> urls;
    for (std::size_t r = 0; r < n; ++r) {
      const auto& site = sites[uniform_below(qr, sites.size())];
      urls.push_back("https://" + site + "/i/" + std::to_string(uniform_below(qr, 40)) + ".jpg");
    }
    if (n == 12) urls[5] = "not a url";
    f.image_fixture.push_back({{"query", q}, {"urls", urls}});
  }
  return f;
}

// Settings matching the fixture: its sources, the abstract bank kept out of
// image search, no real sleeping between retries.
inline PipelineConfig fixture_config(std::uint64_t seed = 7) {
  PipelineConfig cfg;
  cfg.seed = seed;
  cfg.source_registry = fixture_sources();
  cfg.iq.excluded_sources = {"abstract"};
  cfg.iq.sleep = [](std::chrono::milliseconds) {};
  return cfg;
}

inline void write_fixture(const FixtureCorpus& f, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_jsonl(dir + "/captions.jsonl", to_json_lines(f.captions));
  write_jsonl(dir + "/pnli.jsonl", f.pnli_records);
  write_jsonl(dir + "/images.jsonl", f.image_fixture);
}

}  // namespace pvlir

#endif  // PVLIR_PIPELINE_HPP
