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

// Fusing per-encoder rankings into one caption choice: Copeland voting,
// perplexity, model agreement by extrapolated rank-biased overlap, and
// quantile binning of those diagnostics.

#ifndef PVLIR_RANK_FUSION_HPP
#define PVLIR_RANK_FUSION_HPP

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pvlir/common.hpp"
#include "pvlir/embed_index.hpp"

namespace pvlir {

inline constexpr double kDefaultPersistence = 0.9;

// ---------------------------------------------------------------------------
// Perplexity

// Mean over rankings of the chosen caption's distance, using the ranking's
// last entry when the caption is absent from it.
inline double perplexity(const std::string& chosen, const std::vector<Ranking>& rankings) {
  if (rankings.empty()) throw ContractError("perplexity: no rankings");
  double sum = 0.0;
  bool seen = false;
  for (const auto& r : rankings) {
    auto it = std::find_if(r.entries.begin(), r.entries.end(),
                           [&](const RankEntry& e) { return e.caption_id == chosen; });
    if (it != r.entries.end()) {
      sum += it->distance;
      seen = true;
    } else if (!r.entries.empty()) {
      sum += r.entries.back().distance;
    }
  }
  if (!seen) throw ContractError("perplexity: '" + chosen + "' appears in no ranking");
  return sum / static_cast<double>(rankings.size());
}

// ---------------------------------------------------------------------------
// Rank-biased overlap, extrapolated, evaluated to depth min(|S|, |T|).

template <typename Id>
double rbo_ext(const std::vector<Id>& s, const std::vector<Id>& t, double p = kDefaultPersistence) {
  if (!(p > 0.0 && p < 1.0)) throw ContractError("rbo_ext: p must lie in (0, 1)");
  if (s.empty() && t.empty()) return 1.0;
  const std::size_t k = std::min(s.size(), t.size());
  if (k == 0) return 0.0;
  std::unordered_set<Id> seen_s, seen_t;
  std::size_t overlap = 0;
  double sum = 0.0;
  double weight = 1.0;  // p^d
  for (std::size_t d = 1; d <= k; ++d) {
    const Id& a = s[d - 1];
    const Id& b = t[d - 1];
    if (a == b) {
      ++overlap;
    } else {
      if (seen_t.count(a)) ++overlap;
      if (seen_s.count(b)) ++overlap;
    }
    seen_s.insert(a);
    seen_t.insert(b);
    weight *= p;
    sum += static_cast<double>(overlap) / static_cast<double>(d) * weight;
  }
  double agreement_k = static_cast<double>(overlap) / static_cast<double>(k);
  return agreement_k * weight + (1.0 - p) / p * sum;
}

inline std::vector<std::string> ids_of(const Ranking& r) {
  std::vector<std::string> ids;
  ids.reserve(r.entries.size());
  for (const auto& e : r.entries) ids.push_back(e.caption_id);
  return ids;
}

// Mean rbo_ext over unordered pairs of rankings; 1 with fewer than two.
inline double model_agreement(const std::vector<Ranking>& rankings, double p = kDefaultPersistence) {
  if (rankings.size() < 2) return 1.0;
  std::vector<std::vector<std::string>> ids;
  for (const auto& r : rankings) ids.push_back(ids_of(r));
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      sum += rbo_ext(ids[i], ids[j], p);
      ++pairs;
    }
  return sum / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Copeland

struct FusionResult {
  std::string query_id;
  std::string chosen;
  std::map<std::string, int> copeland_scores;
  double perplexity = 0.0;
  double model_agreement = 0.0;
  double p = kDefaultPersistence;
  // 1-based position of the chosen caption per ranking, 0 when absent.
  std::vector<std::size_t> chosen_ranks;
};

inline json to_json(const FusionResult& f) {
  return json{{"query_id", f.query_id},         {"chosen", f.chosen},
              {"perplexity", f.perplexity},     {"model_agreement", f.model_agreement},
              {"p", f.p},                       {"chosen_ranks", f.chosen_ranks},
              {"copeland_scores", f.copeland_scores}};
}

inline FusionResult fusion_from_json(const json& j) {
  FusionResult f;
  f.query_id = j.at("query_id").get<std::string>();
  f.chosen = j.at("chosen").get<std::string>();
  f.perplexity = j.at("perplexity").get<double>();
  f.model_agreement = j.at("model_agreement").get<double>();
  f.p = j.value("p", kDefaultPersistence);
  f.chosen_ranks = j.value("chosen_ranks", std::vector<std::size_t>{});
  f.copeland_scores = j.value("copeland_scores", std::map<std::string, int>{});
  return f;
}

// Pairwise-majority scores (wins minus losses). A candidate missing from a
// ranking sits below every listed candidate and level with other missing
// ones; x beats y when a strict majority of rankings put x above y.
inline std::map<std::string, int> copeland_scores(const std::vector<Ranking>& rankings) {
  std::vector<std::string> candidates;
  {
    std::set<std::string> all;
    for (const auto& r : rankings)
      for (const auto& e : r.entries) all.insert(e.caption_id);
    candidates.assign(all.begin(), all.end());
  }
  const std::size_t n = candidates.size();
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index[candidates[i]] = i;

  // above[x * n + y]: rankings placing x strictly above y.
  std::vector<int> above(n * n, 0);
  std::vector<std::size_t> position(n);
  for (const auto& r : rankings) {
    const std::size_t absent = r.entries.size();
    std::fill(position.begin(), position.end(), absent);
    for (std::size_t pos = 0; pos < r.entries.size(); ++pos) position[index.at(r.entries[pos].caption_id)] = pos;
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t y = 0; y < n; ++y)
        if (position[x] < position[y]) ++above[x * n + y];
  }
  std::map<std::string, int> scores;
  const auto m = static_cast<int>(rankings.size());
  for (std::size_t x = 0; x < n; ++x) {
    int score = 0;
    for (std::size_t y = 0; y < n; ++y) {
      if (x == y) continue;
      if (2 * above[x * n + y] > m) ++score;
      if (2 * above[y * n + x] > m) --score;
    }
    scores[candidates[x]] = score;
  }
  return scores;
}

struct NoCandidates : Error {
  using Error::Error;
};

// Winner: highest Copeland score, then lower perplexity, then smaller id.
inline FusionResult copeland_select(const std::vector<Ranking>& rankings, double p = kDefaultPersistence) {
  if (rankings.empty()) throw NoCandidates("copeland_select: no rankings");
  FusionResult f;
  f.query_id = rankings.front().query_id;
  f.copeland_scores = copeland_scores(rankings);
  if (f.copeland_scores.empty()) throw NoCandidates("copeland_select: no candidates for '" + f.query_id + "'");

  int best = std::numeric_limits<int>::min();
  for (const auto& [id, s] : f.copeland_scores) best = std::max(best, s);
  std::optional<double> best_perplexity;
  for (const auto& [id, s] : f.copeland_scores) {  // ascending id
    if (s != best) continue;
    double px = perplexity(id, rankings);
    if (!best_perplexity || px < *best_perplexity) {
      best_perplexity = px;
      f.chosen = id;
    }
  }
  f.perplexity = *best_perplexity;
  f.p = p;
  f.model_agreement = model_agreement(rankings, p);
  for (const auto& r : rankings) {
    std::size_t rank = 0;
    for (std::size_t i = 0; i < r.entries.size(); ++i)
      if (r.entries[i].caption_id == f.chosen) rank = i + 1;
    f.chosen_ranks.push_back(rank);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Quantile bins

struct QuantileBins {
  std::vector<double> edges;        // q + 1 edges: min, interior quantiles, max
  std::vector<std::size_t> bin_of;  // per input value, in [0, q)
};

// Sample quantile with linear interpolation between order statistics.
inline double quantile_sorted(const std::vector<double>& sorted, double prob) {
  double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  auto lo = static_cast<std::size_t>(std::floor(h));
  auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Bins are half-open [e_i, e_{i+1}); the last bin is closed.
inline QuantileBins quantile_bins(const std::vector<double>& values, std::size_t q) {
  if (q < 2) throw ContractError("quantile_bins: q must be at least 2");
  if (values.empty()) throw ContractError("quantile_bins: no values");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  QuantileBins b;
  for (std::size_t i = 0; i <= q; ++i)
    b.edges.push_back(quantile_sorted(sorted, static_cast<double>(i) / static_cast<double>(q)));
  for (double v : values) {
    auto interior_begin = b.edges.begin() + 1;
    auto interior_end = b.edges.end() - 1;
    auto bin = static_cast<std::size_t>(std::upper_bound(interior_begin, interior_end, v) - interior_begin);
    b.bin_of.push_back(std::min(bin, q - 1));
  }
  return b;
}

// Cross-tabulates two binned diagnostics against a rating: mean rating and
// count per (row bin, column bin) cell.
struct Heatmap {
  QuantileBins rows;
  QuantileBins cols;
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<std::size_t>> count;
};

inline Heatmap heatmap(const std::vector<double>& row_values, const std::vector<double>& col_values,
                       const std::vector<double>& ratings, std::size_t q) {
  if (row_values.size() != col_values.size() || row_values.size() != ratings.size())
    throw ContractError("heatmap: input lengths differ");
  Heatmap h{quantile_bins(row_values, q), quantile_bins(col_values, q), {}, {}};
  h.mean.assign(q, std::vector<double>(q, 0.0));
  h.count.assign(q, std::vector<std::size_t>(q, 0));
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    auto r = h.rows.bin_of[i], c = h.cols.bin_of[i];
    h.mean[r][c] += ratings[i];
    ++h.count[r][c];
  }
  for (std::size_t r = 0; r < q; ++r)
    for (std::size_t c = 0; c < q; ++c)
      if (h.count[r][c]) h.mean[r][c] /= static_cast<double>(h.count[r][c]);
  return h;
}

inline json to_json(const Heatmap& h) {
  return json{{"row_edges", h.rows.edges}, {"col_edges", h.cols.edges}, {"mean", h.mean}, {"count", h.count}};
}

}  // namespace pvlir

#endif  // PVLIR_RANK_FUSION_HPP
