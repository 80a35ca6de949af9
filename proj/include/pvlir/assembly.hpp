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

#ifndef PVLIR_ASSEMBLY_HPP
#define PVLIR_ASSEMBLY_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "pvlir/common.hpp"
#include "pvlir/image_query.hpp"
#include "pvlir/lf_engine.hpp"
#include "pvlir/normalize.hpp"
#include "pvlir/rank_fusion.hpp"

namespace pvlir {

enum class Strategy { kEC, kCQ, kIQ };  // declaration order is merge priority

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kEC: return "EC";
    case Strategy::kCQ: return "CQ";
    case Strategy::kIQ: return "IQ";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "EC") return Strategy::kEC;
  if (s == "CQ") return Strategy::kCQ;
  if (s == "IQ") return Strategy::kIQ;
  throw LoadError("invalid strategy '" + std::string(s) + "'");
}

enum class Split { kUnassigned, kTuning, kNoisyTest, kCleanTest };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::kUnassigned: return "unassigned";
    case Split::kTuning: return "tuning";
    case Split::kNoisyTest: return "noisy_test";
    case Split::kCleanTest: return "clean_test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "unassigned") return Split::kUnassigned;
  if (s == "tuning") return Split::kTuning;
  if (s == "noisy_test") return Split::kNoisyTest;
  if (s == "clean_test") return Split::kCleanTest;
  throw LoadError("invalid split '" + std::string(s) + "'");
}

struct Provenance {
  Strategy strategy = Strategy::kEC;
  std::string source;          // statement dataset for CQ/IQ, caption corpus for EC
  std::string caption_source;  // EC, CQ
  std::string caption_id;      // EC, CQ
  std::string statement_id;    // CQ, IQ: the statement used as the query
  std::optional<StatementKind> query_kind;
  std::string lf_name;  // EC
  std::optional<double> lf_precision;
  std::optional<double> perplexity;  // CQ
  std::optional<double> model_agreement;
  std::optional<std::size_t> search_rank;  // IQ
  std::string site;
};

struct PvliInstance {
  std::string id;
  std::string hypothesis_text;
  std::string premise_image_ref;
  Label label = Label::kAllow;
  std::string rationale;
  Provenance provenance;
  Split split = Split::kUnassigned;
  bool conflict = false;
};

inline json to_json(const Provenance& p) {
  json j{{"strategy", to_string(p.strategy)}, {"source", p.source}};
  auto put = [&j](const char* k, const std::string& v) {
    if (!v.empty()) j[k] = v;
  };
  put("caption_source", p.caption_source);
  put("caption_id", p.caption_id);
  put("statement_id", p.statement_id);
  if (p.query_kind) j["query_kind"] = to_string(*p.query_kind);
  put("lf_name", p.lf_name);
  if (p.lf_precision) j["lf_precision"] = *p.lf_precision;
  if (p.perplexity) j["perplexity"] = *p.perplexity;
  if (p.model_agreement) j["model_agreement"] = *p.model_agreement;
  if (p.search_rank) j["search_rank"] = *p.search_rank;
  put("site", p.site);
  return j;
}

inline Provenance provenance_from_json(const json& j) {
  Provenance p;
  p.strategy = parse_strategy(j.at("strategy").get<std::string>());
  p.source = j.value("source", "");
  p.caption_source = j.value("caption_source", "");
  p.caption_id = j.value("caption_id", "");
  p.statement_id = j.value("statement_id", "");
  if (j.contains("query_kind")) p.query_kind = parse_statement_kind(j.at("query_kind").get<std::string>());
  p.lf_name = j.value("lf_name", "");
  if (j.contains("lf_precision")) p.lf_precision = j.at("lf_precision").get<double>();
  if (j.contains("perplexity")) p.perplexity = j.at("perplexity").get<double>();
  if (j.contains("model_agreement")) p.model_agreement = j.at("model_agreement").get<double>();
  if (j.contains("search_rank")) p.search_rank = j.at("search_rank").get<std::size_t>();
  p.site = j.value("site", "");
  return p;
}

inline json to_json(const PvliInstance& x) {
  json j{{"id", x.id},
         {"hypothesis_text", x.hypothesis_text},
         {"premise_image_ref", x.premise_image_ref},
         {"label", to_string(x.label)},
         {"rationale", x.rationale},
         {"provenance", to_json(x.provenance)},
         {"split", to_string(x.split)}};
  if (x.conflict) j["conflict"] = true;
  return j;
}

inline PvliInstance instance_from_json(const json& j) {
  PvliInstance x;
  x.id = j.at("id").get<std::string>();
  x.hypothesis_text = j.at("hypothesis_text").get<std::string>();
  x.premise_image_ref = j.at("premise_image_ref").get<std::string>();
  x.label = parse_label(j.at("label").get<std::string>());
  x.rationale = j.value("rationale", "");
  x.provenance = provenance_from_json(j.at("provenance"));
  x.split = parse_split(j.value("split", "unassigned"));
  x.conflict = j.value("conflict", false);
  return x;
}

inline std::vector<PvliInstance> read_dataset(const std::string& path) {
  std::vector<PvliInstance> out;
  for (const auto& j : read_jsonl(path)) out.push_back(instance_from_json(j));
  return out;
}

// ---------------------------------------------------------------------------
// Building instances from each strategy's output. The hypothesis is always
// the action; EC and CQ carry the precondition as rationale, IQ the
// statement that was searched for.

inline PvliInstance from_extraction(const ExtractedInstance& e) {
  PvliInstance x;
  x.id = "EC/" + e.caption_id;
  x.hypothesis_text = e.action_text;
  x.premise_image_ref = e.image_ref;
  x.label = e.label;
  x.rationale = e.precondition_text;
  x.provenance.strategy = Strategy::kEC;
  x.provenance.source = e.caption_source;
  x.provenance.caption_source = e.caption_source;
  x.provenance.caption_id = e.caption_id;
  x.provenance.lf_name = e.lf_name;
  x.provenance.lf_precision = e.lf_precision;
  return x;
}

struct StatementPair {
  const Statement* precondition = nullptr;
  const Statement* action = nullptr;
};

// pair_id -> both halves, for statements that still have their partner.
inline std::map<std::string, StatementPair> index_pairs(const std::vector<Statement>& statements) {
  std::map<std::string, StatementPair> pairs;
  for (const auto& s : statements) {
    if (s.pair_id.empty()) continue;
    auto& p = pairs[s.pair_id];
    (s.kind == StatementKind::kPrecondition ? p.precondition : p.action) = &s;
  }
  for (auto it = pairs.begin(); it != pairs.end();)
    it = (it->second.precondition && it->second.action) ? std::next(it) : pairs.erase(it);
  return pairs;
}

inline Label pair_label(const StatementPair& p) {
  const auto& l = p.precondition->label ? p.precondition->label : p.action->label;
  if (!l) throw ContractError("statement pair '" + p.precondition->pair_id + "' has no label");
  return *l;
}

inline PvliInstance from_caption_query(const StatementPair& pair, StatementKind query_kind, const FusionResult& f,
                                       const Caption& chosen) {
  const Statement& query = query_kind == StatementKind::kPrecondition ? *pair.precondition : *pair.action;
  PvliInstance x;
  x.id = "CQ/" + query.id;
  x.hypothesis_text = pair.action->text;
  x.premise_image_ref = chosen.image_ref;
  x.label = pair_label(pair);
  x.rationale = pair.precondition->text;
  x.provenance.strategy = Strategy::kCQ;
  x.provenance.source = query.source;
  x.provenance.caption_source = chosen.source;
  x.provenance.caption_id = chosen.id;
  x.provenance.statement_id = query.id;
  x.provenance.query_kind = query_kind;
  x.provenance.perplexity = f.perplexity;
  x.provenance.model_agreement = f.model_agreement;
  return x;
}

inline PvliInstance from_image_result(const StatementPair& pair, StatementKind query_kind, const ImageResult& r) {
  const Statement& query = query_kind == StatementKind::kPrecondition ? *pair.precondition : *pair.action;
  PvliInstance x;
  x.id = "IQ/" + r.statement_id + "/" + std::to_string(r.rank);
  x.hypothesis_text = pair.action->text;
  x.premise_image_ref = r.image_url;
  x.label = pair_label(pair);
  x.rationale = query.text;
  x.provenance.strategy = Strategy::kIQ;
  x.provenance.source = query.source;
  x.provenance.statement_id = query.id;
  x.provenance.query_kind = query_kind;
  x.provenance.search_rank = r.rank;
  x.provenance.site = r.site;
  return x;
}

// ---------------------------------------------------------------------------
// Merge

struct MergeResult {
  std::vector<PvliInstance> dataset;
  std::map<std::string, std::size_t> per_strategy;  // kept records
  std::size_t duplicates_removed = 0;
  std::size_t conflicts = 0;  // flagged records
};

inline json to_json(const MergeResult& m) {
  return json{{"records", m.dataset.size()},
              {"per_strategy", m.per_strategy},
              {"duplicates_removed", m.duplicates_removed},
              {"conflicts", m.conflicts}};
}

// Collapses identical (hypothesis, image, label) triples keeping the
// higher-priority strategy (EC, then CQ, then IQ; first seen within one).
// Records sharing (hypothesis, image) with different labels are kept and
// flagged. Output is ordered by strategy, then input order.
inline MergeResult merge_dedupe(const std::vector<PvliInstance>& input) {
  std::vector<std::size_t> order(input.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return input[a].provenance.strategy < input[b].provenance.strategy;
  });

  MergeResult m;
  std::set<std::tuple<std::string, std::string, Label>> seen;
  std::map<std::pair<std::string, std::string>, std::set<Label>> labels;
  std::set<std::string> ids;
  for (auto i : order) {
    const auto& x = input[i];
    if (!seen.emplace(x.hypothesis_text, x.premise_image_ref, x.label).second) {
      ++m.duplicates_removed;
      continue;
    }
    if (!ids.insert(x.id).second) throw ContractError("merge_dedupe: duplicate id '" + x.id + "'");
    labels[{x.hypothesis_text, x.premise_image_ref}].insert(x.label);
    m.dataset.push_back(x);
    m.dataset.back().conflict = false;
  }
  for (auto& x : m.dataset) {
    if (labels[{x.hypothesis_text, x.premise_image_ref}].size() > 1) {
      x.conflict = true;
      ++m.conflicts;
    }
    ++m.per_strategy[std::string(to_string(x.provenance.strategy))];
  }
  return m;
}

// ---------------------------------------------------------------------------
// Splits

inline constexpr std::size_t kDefaultTuningSize = 16000;
inline constexpr std::size_t kDefaultNoisyTestSize = 6000;

struct SplitReport {
  std::size_t tuning = 0;
  std::size_t noisy_test = 0;
  std::size_t unassigned = 0;
  std::uint64_t seed = 0;
  std::string dataset_hash;  // fnv1a64 of the id sequence, hex
};

inline json to_json(const SplitReport& r) {
  return json{{"tuning", r.tuning},          {"noisy_test", r.noisy_test}, {"unassigned", r.unassigned},
              {"seed", r.seed},              {"dataset_hash", r.dataset_hash},
              {"sampling", "uniform without replacement"}};
}

inline std::string dataset_hash(const std::vector<PvliInstance>& d) {
  std::uint64_t h = 0;
  for (const auto& x : d) h = fnv1a64(x.id + "\n", h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Uniform sample without replacement over every record not in the clean
// test split. Previous tuning/noisy assignments are discarded.
inline SplitReport split_sample(std::vector<PvliInstance>& dataset, std::size_t n_tuning, std::size_t n_noisy,
                                std::uint64_t seed) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].split == Split::kCleanTest) continue;
    dataset[i].split = Split::kUnassigned;
    pool.push_back(i);
  }
  if (n_tuning + n_noisy > pool.size())
    throw ContractError("split_sample: requested " + std::to_string(n_tuning) + " tuning + " +
                        std::to_string(n_noisy) + " noisy_test but only " + std::to_string(pool.size()) +
                        " records are available");
  Rng rng(seed);
  auto picks = sample_without_replacement(pool.size(), n_tuning + n_noisy, rng);
  for (std::size_t k = 0; k < picks.size(); ++k)
    dataset[pool[picks[k]]].split = k < n_tuning ? Split::kTuning : Split::kNoisyTest;
  return SplitReport{n_tuning, n_noisy, pool.size() - n_tuning - n_noisy, seed, dataset_hash(dataset)};
}

// ---------------------------------------------------------------------------
// Distribution report: observed share of each (query source, caption source)
// cell against the share expected from corpus sizes alone.

struct DistributionCell {
  std::string query_source;
  std::string caption_source;
  std::size_t count = 0;
  double observed_pct = 0.0;
  std::optional<double> expected_pct;
  std::optional<double> ratio;
};

struct DistributionReport {
  std::vector<DistributionCell> cells;
  std::size_t total = 0;
  std::vector<std::string> warnings;
  LfDistribution lf;  // EC records only
};

inline std::map<std::string, double> read_sizes(const std::string& path) {
  std::map<std::string, double> sizes;
  for (const auto& line : read_list_file(path)) {
    auto parts = split_tokens(line);
    if (parts.size() != 2) throw ConfigError("sizes file " + path + ": expected 'source size', got '" + line + "'");
    try {
      sizes[parts[0]] = std::stod(parts[1]);
    } catch (const std::exception&) {
      throw ConfigError("sizes file " + path + ": bad size '" + parts[1] + "'");
    }
    if (!(sizes[parts[0]] > 0)) throw ConfigError("sizes file " + path + ": size must be positive");
  }
  return sizes;
}

// Expected share of cell (q, c) = observed share of row q times c's share of
// the total size of the caption sources with a configured size.
inline DistributionReport distribution_report(const std::vector<PvliInstance>& dataset,
                                              const std::map<std::string, double>& caption_sizes,
                                              std::optional<Strategy> strategy = Strategy::kCQ,
                                              std::optional<StatementKind> kind = std::nullopt) {
  DistributionReport r;
  std::map<std::pair<std::string, std::string>, std::size_t> counts;
  std::map<std::string, std::size_t> row_totals;
  std::set<std::string> columns;
  for (const auto& [name, size] : caption_sizes) columns.insert(name);
  for (const auto& x : dataset) {
    const auto& p = x.provenance;
    if (p.strategy == Strategy::kEC) {
      ++r.lf.counts[p.caption_source][p.lf_name];
      ++r.lf.totals[p.caption_source];
    }
    if (strategy && p.strategy != *strategy) continue;
    if (kind && p.query_kind != kind) continue;
    if (p.caption_source.empty()) continue;
    std::string row = p.strategy == Strategy::kEC ? "" : p.source;
    ++counts[{row, p.caption_source}];
    ++row_totals[row];
    columns.insert(p.caption_source);
    ++r.total;
  }
  if (r.total == 0) throw ContractError("distribution_report: no records in scope");

  double known = 0.0;
  for (const auto& [name, size] : caption_sizes) known += size;
  for (const auto& c : columns)
    if (!caption_sizes.count(c)) r.warnings.push_back("no size configured for caption source '" + c + "'; ratio omitted");

  const double total = static_cast<double>(r.total);
  for (const auto& [row, row_n] : row_totals) {
    for (const auto& col : columns) {
      DistributionCell cell{row, col, 0, 0.0, std::nullopt, std::nullopt};
      if (auto it = counts.find({row, col}); it != counts.end()) cell.count = it->second;
      cell.observed_pct = 100.0 * static_cast<double>(cell.count) / total;
      if (auto s = caption_sizes.find(col); s != caption_sizes.end()) {
        cell.expected_pct = 100.0 * (static_cast<double>(row_n) / total) * (s->second / known);
        cell.ratio = cell.observed_pct / *cell.expected_pct;
      }
      r.cells.push_back(cell);
    }
  }
  return r;
}

inline json to_json(const DistributionReport& r) {
  json cells = json::array();
  for (const auto& c : r.cells) {
    json j{{"query_source", c.query_source},
           {"caption_source", c.caption_source},
           {"count", c.count},
           {"observed_pct", c.observed_pct}};
    j["expected_pct"] = c.expected_pct ? json(*c.expected_pct) : json(nullptr);
    j["ratio"] = c.ratio ? json(*c.ratio) : json(nullptr);
    cells.push_back(j);
  }
  return json{{"total", r.total}, {"cells", cells}, {"warnings", r.warnings}, {"lf_distribution", to_json(r.lf)}};
}

// ---------------------------------------------------------------------------
// Counterfactual variants

enum class VariantKind { kTextTokenMask, kImageRegionMask, kTextBlind, kImageBlind };

inline std::string_view to_string(VariantKind k) {
  switch (k) {
    case VariantKind::kTextTokenMask: return "text_token_mask";
    case VariantKind::kImageRegionMask: return "image_region_mask";
    case VariantKind::kTextBlind: return "text_blind";
    case VariantKind::kImageBlind: return "image_blind";
  }
  return "?";
}

inline VariantKind parse_variant_kind(std::string_view s) {
  for (auto k : {VariantKind::kTextTokenMask, VariantKind::kImageRegionMask, VariantKind::kTextBlind,
                 VariantKind::kImageBlind})
    if (to_string(k) == s) return k;
  throw ConfigError("invalid counterfactual kind '" + std::string(s) + "'");
}

inline constexpr const char* kMaskToken = "[MASK]";
inline constexpr std::size_t kDefaultGridRows = 4;
inline constexpr std::size_t kDefaultGridCols = 4;

// round(0.67 n) and round(0.5 n), half away from zero, in integers.
inline std::size_t text_mask_count(std::size_t n) { return (67 * n + 50) / 100; }
inline std::size_t image_mask_count(std::size_t cells) { return (cells + 1) / 2; }

struct CounterfactualVariant {
  std::string base_id;
  VariantKind kind = VariantKind::kTextTokenMask;
  std::uint64_t seed = 0;
  std::optional<std::string> masked_text;
  std::size_t grid_rows = 0, grid_cols = 0;
  std::vector<bool> mask;  // row-major, true = masked
};

inline json to_json(const CounterfactualVariant& v) {
  json j{{"base_id", v.base_id}, {"variant_kind", to_string(v.kind)}, {"seed", v.seed}};
  if (v.masked_text) j["masked_text"] = *v.masked_text;
  if (!v.mask.empty()) {
    json grid = json::array();
    for (std::size_t r = 0; r < v.grid_rows; ++r) {
      json row = json::array();
      for (std::size_t c = 0; c < v.grid_cols; ++c) row.push_back(v.mask[r * v.grid_cols + c] ? 1 : 0);
      grid.push_back(row);
    }
    j["mask_grid"] = grid;
  }
  return j;
}

struct CounterfactualOutput {
  std::vector<CounterfactualVariant> variants;
  std::vector<Rejection> skipped;
};

inline CounterfactualOutput make_counterfactuals(const PvliInstance& x, const std::vector<VariantKind>& kinds,
                                                 std::uint64_t seed, std::size_t rows = kDefaultGridRows,
                                                 std::size_t cols = kDefaultGridCols) {
  if (rows == 0 || cols == 0) throw ConfigError("counterfactual grid must be at least 1x1");
  CounterfactualOutput out;
  const auto tokens = split_tokens(x.hypothesis_text);
  for (auto kind : kinds) {
    // Each (record, kind) draws from its own stream so adding kinds does not
    // shift the others.
    Rng rng(seed ^ fnv1a64(x.id + "/" + std::string(to_string(kind))));
    CounterfactualVariant v{x.id, kind, seed, std::nullopt, 0, 0, {}};
    switch (kind) {
      case VariantKind::kTextTokenMask:
      case VariantKind::kTextBlind: {
        if (tokens.empty()) {
          out.skipped.push_back({x.id, "empty_hypothesis", std::string(to_string(kind))});
          continue;
        }
        auto masked = tokens;
        std::size_t k = kind == VariantKind::kTextBlind ? tokens.size() : text_mask_count(tokens.size());
        for (auto i : sample_without_replacement(tokens.size(), k, rng)) masked[i] = kMaskToken;
        v.masked_text = join(masked, " ");
        break;
      }
      case VariantKind::kImageRegionMask:
      case VariantKind::kImageBlind: {
        v.grid_rows = rows;
        v.grid_cols = cols;
        v.mask.assign(rows * cols, kind == VariantKind::kImageBlind);
        if (kind == VariantKind::kImageRegionMask)
          for (auto i : sample_without_replacement(rows * cols, image_mask_count(rows * cols), rng)) v.mask[i] = true;
        break;
      }
    }
    out.variants.push_back(std::move(v));
  }
  return out;
}

// Interleaved 8-bit pixels.
struct ImageBuffer {
  std::size_t width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> bytes;
};

// Cell (r, c) covers pixel rows [r*h/R, (r+1)*h/R) and columns likewise.
inline void apply_mask(ImageBuffer& img, const CounterfactualVariant& v, std::uint8_t fill = 0) {
  if (img.bytes.size() != img.width * img.height * img.channels)
    throw ContractError("apply_mask: buffer size does not match width*height*channels");
  if (v.mask.size() != v.grid_rows * v.grid_cols || v.mask.empty())
    throw ContractError("apply_mask: variant carries no image mask");
  for (std::size_t r = 0; r < v.grid_rows; ++r)
    for (std::size_t c = 0; c < v.grid_cols; ++c) {
      if (!v.mask[r * v.grid_cols + c]) continue;
      for (std::size_t y = r * img.height / v.grid_rows; y < (r + 1) * img.height / v.grid_rows; ++y)
        for (std::size_t xx = c * img.width / v.grid_cols; xx < (c + 1) * img.width / v.grid_cols; ++xx)
          std::fill_n(img.bytes.begin() + static_cast<long>((y * img.width + xx) * img.channels), img.channels, fill);
    }
}

// ---------------------------------------------------------------------------
// Scoring

struct ScoringError : ContractError {
  using ContractError::ContractError;
};

struct Score {
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  // confusion[gold][predicted]
  std::map<std::string, std::map<std::string, std::size_t>> confusion;
  std::string majority_label;
  double majority_baseline = 0.0;
  double random_baseline = 0.0;  // accuracy of seeded uniform guesses
  std::uint64_t random_seed = 0;
};

inline json to_json(const Score& s) {
  return json{{"total", s.total},
              {"correct", s.correct},
              {"accuracy", s.accuracy},
              {"confusion", s.confusion},
              {"majority_label", s.majority_label},
              {"majority_baseline", s.majority_baseline},
              {"random_baseline", s.random_baseline},
              {"random_seed", s.random_seed}};
}

inline std::vector<PvliInstance> select_split(const std::vector<PvliInstance>& d, Split s) {
  std::vector<PvliInstance> out;
  std::copy_if(d.begin(), d.end(), std::back_inserter(out), [s](const PvliInstance& x) { return x.split == s; });
  return out;
}

// Predictions are {"id", "label"} records covering every gold id once.
inline Score score_predictions(const std::vector<PvliInstance>& gold, const std::vector<json>& predictions,
                               std::uint64_t seed = 0) {
  if (gold.empty()) throw ScoringError("score_predictions: empty gold set");
  std::map<std::string, Label> pred;
  std::vector<std::string> duplicate, unknown, missing, invalid;
  std::set<std::string> gold_ids;
  for (const auto& g : gold) gold_ids.insert(g.id);
  for (const auto& p : predictions) {
    auto id = p.at("id").get<std::string>();
    Label l;
    try {
      l = parse_label(p.at("label").get<std::string>());
    } catch (const Error&) {
      invalid.push_back(id);
      continue;
    }
    if (!gold_ids.count(id)) unknown.push_back(id);
    if (!pred.emplace(id, l).second) duplicate.push_back(id);
  }
  for (const auto& id : gold_ids)
    if (!pred.count(id)) missing.push_back(id);
  if (!duplicate.empty() || !unknown.empty() || !missing.empty() || !invalid.empty()) {
    std::string msg = "score_predictions:";
    auto list = [&msg](const char* what, const std::vector<std::string>& ids) {
      if (!ids.empty()) msg += std::string(" ") + what + " ids [" + join(ids, ", ") + "]";
    };
    list("missing", missing);
    list("duplicate", duplicate);
    list("unknown", unknown);
    list("invalid-label", invalid);
    throw ScoringError(msg);
  }

  Score s;
  s.total = gold.size();
  s.random_seed = seed;
  Rng rng(seed);
  std::size_t allow = 0, random_correct = 0;
  for (const auto& g : gold) {
    Label p = pred.at(g.id);
    if (p == g.label) ++s.correct;
    ++s.confusion[std::string(to_string(g.label))][std::string(to_string(p))];
    if (g.label == Label::kAllow) ++allow;
    Label guess = uniform_below(rng, 2) == 0 ? Label::kAllow : Label::kPrevent;
    if (guess == g.label) ++random_correct;
  }
  const double n = static_cast<double>(s.total);
  s.accuracy = static_cast<double>(s.correct) / n;
  std::size_t prevent = s.total - allow;
  s.majority_label = allow >= prevent ? "allow" : "prevent";
  s.majority_baseline = static_cast<double>(std::max(allow, prevent)) / n;
  s.random_baseline = static_cast<double>(random_correct) / n;
  return s;
}

}  // namespace pvlir

#endif  // PVLIR_ASSEMBLY_HPP
