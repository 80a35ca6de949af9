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

// Brute-force references for rank fusion, written without reusing any of
// the library's fusion code.

#ifndef PVLIR_TESTS_FUSION_ORACLE_HPP
#define PVLIR_TESTS_FUSION_ORACLE_HPP

#include <algorithm>
#include <climits>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pvlir/rank_fusion.hpp"

namespace pvlir::testing_util {

inline Ranking make_ranking(const std::vector<std::string>& ids, std::vector<double> distances = {}) {
  Ranking r{"q", "m", {}};
  for (std::size_t i = 0; i < ids.size(); ++i)
    r.entries.push_back({ids[i], i < distances.size() ? distances[i] : 0.1 * static_cast<double>(i + 1)});
  return r;
}

inline std::size_t candidate_count(const std::vector<Ranking>& rs) {
  std::set<std::string> all;
  for (const auto& r : rs)
    for (const auto& e : r.entries) all.insert(e.caption_id);
  return all.size();
}

// Random rankings over a universe of ids "c0".."c{universe-1}".
inline std::vector<Ranking> random_rankings(Rng& rng, std::size_t universe, std::size_t count) {
  std::vector<Ranking> out;
  for (std::size_t r = 0; r < count; ++r) {
    auto len = uniform_below(rng, universe + 1);
    auto picks = sample_without_replacement(universe, len, rng);
    std::vector<std::string> ids;
    std::vector<double> d;
    double acc = 0.0;
    for (auto p : picks) {
      ids.push_back("c" + std::to_string(p));
      acc += 0.05 + 0.1 * uniform_unit(rng);
      d.push_back(acc);
    }
    out.push_back(make_ranking(ids, d));
  }
  return out;
}

// Extrapolated RBO by direct evaluation: X_d recomputed from scratch as a
// set intersection at every depth.
inline double rbo_formula(const std::vector<std::string>& s, const std::vector<std::string>& t, double p) {
  std::size_t k = std::min(s.size(), t.size());
  double sum = 0.0;
  double xk = 0.0;
  for (std::size_t d = 1; d <= k; ++d) {
    std::set<std::string> a(s.begin(), s.begin() + static_cast<long>(d));
    std::set<std::string> b(t.begin(), t.begin() + static_cast<long>(d));
    std::vector<std::string> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    double x = static_cast<double>(common.size());
    sum += x / static_cast<double>(d) * std::pow(p, static_cast<double>(d));
    xk = x;
  }
  return xk / static_cast<double>(k) * std::pow(p, static_cast<double>(k)) + (1.0 - p) / p * sum;
}

struct OracleOutcome {
  std::string winner;
  std::map<std::string, int> scores;
};

// Pairwise-majority tally over rank numbers, absent = INT_MAX.
inline OracleOutcome brute_force_copeland(const std::vector<Ranking>& rs) {
  std::set<std::string> cands;
  for (const auto& r : rs)
    for (const auto& e : r.entries) cands.insert(e.caption_id);
  auto rank_in = [](const Ranking& r, const std::string& id) {
    for (std::size_t i = 0; i < r.entries.size(); ++i)
      if (r.entries[i].caption_id == id) return static_cast<int>(i);
    return INT_MAX;
  };
  auto distance_in = [](const Ranking& r, const std::string& id) {
    for (const auto& e : r.entries)
      if (e.caption_id == id) return e.distance;
    return r.entries.empty() ? 0.0 : r.entries.back().distance;
  };
  OracleOutcome out;
  for (const auto& x : cands) {
    int score = 0;
    for (const auto& y : cands) {
      if (x == y) continue;
      int x_over_y = 0, y_over_x = 0;
      for (const auto& r : rs) {
        int rx = rank_in(r, x), ry = rank_in(r, y);
        if (rx < ry) ++x_over_y;
        if (ry < rx) ++y_over_x;
      }
      double half = static_cast<double>(rs.size()) / 2.0;
      if (x_over_y > half) score += 1;
      if (y_over_x > half) score -= 1;
    }
    out.scores[x] = score;
  }
  std::vector<std::tuple<int, double, std::string>> order;
  for (const auto& [id, score] : out.scores) {
    double px = 0.0;
    for (const auto& r : rs) px += distance_in(r, id);
    order.emplace_back(-score, px / static_cast<double>(rs.size()), id);
  }
  std::sort(order.begin(), order.end());
  if (!order.empty()) out.winner = std::get<2>(order.front());
  return out;
}

struct EnumerationStats {
  std::size_t compared = 0;
  std::size_t mismatches = 0;
};

// Every multiset-ordered list of 1..max_rankings rankings, each ranking an
// ordered subset (possibly empty) of max_candidates ids.
inline EnumerationStats enumerate_and_compare(
    std::size_t max_candidates, std::size_t max_rankings,
    const std::function<FusionResult(const std::vector<Ranking>&)>& select) {
  std::vector<std::string> universe;
  for (std::size_t i = 0; i < max_candidates; ++i) universe.push_back(std::string(1, static_cast<char>('a' + i)));
  std::vector<std::vector<std::string>> orders{{}};
  for (std::size_t mask = 1; mask < (1u << max_candidates); ++mask) {
    std::vector<std::string> subset;
    for (std::size_t i = 0; i < max_candidates; ++i)
      if (mask & (1u << i)) subset.push_back(universe[i]);
    do {
      orders.push_back(subset);
    } while (std::next_permutation(subset.begin(), subset.end()));
  }
  EnumerationStats stats;
  std::vector<std::size_t> pick;
  std::function<void(std::size_t)> rec = [&](std::size_t depth) {
    if (depth > 0) {
      std::vector<Ranking> rs;
      for (std::size_t j = 0; j < pick.size(); ++j) {
        std::vector<double> d;
        for (std::size_t i = 0; i < orders[pick[j]].size(); ++i)
          d.push_back(0.1 * static_cast<double>(i + 1) + 0.01 * static_cast<double>(j));
        rs.push_back(make_ranking(orders[pick[j]], d));
      }
      auto expect = brute_force_copeland(rs);
      ++stats.compared;
      if (expect.scores.empty()) {
        bool threw = false;
        try {
          select(rs);
        } catch (const NoCandidates&) {
          threw = true;
        }
        if (!threw) ++stats.mismatches;
      } else {
        auto got = select(rs);
        if (got.chosen != expect.winner || got.copeland_scores != expect.scores) ++stats.mismatches;
      }
    }
    if (depth == max_rankings) return;
    for (std::size_t o = 0; o < orders.size(); ++o) {
      pick.push_back(o);
      rec(depth + 1);
      pick.pop_back();
    }
  };
  rec(0);
  return stats;
}

}  // namespace pvlir::testing_util

#endif  // PVLIR_TESTS_FUSION_ORACLE_HPP
