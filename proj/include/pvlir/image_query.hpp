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

// Grounding statements by web image search: query construction, a provider
// boundary (offline fixture or live HTTP), retries, rate limiting and
// per-site statistics over the harvested urls.

#ifndef PVLIR_IMAGE_QUERY_HPP
#define PVLIR_IMAGE_QUERY_HPP

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "httplib.h"
#include "pvlir/common.hpp"
#include "pvlir/normalize.hpp"

namespace pvlir {

// The statement with commas removed and whitespace re-collapsed.
inline std::string build_query(std::string_view statement) {
  std::string s(statement);
  s.erase(std::remove(s.begin(), s.end(), ','), s.end());
  return collapse_whitespace(s);
}

// Host part of an http(s) url, lowercased; nullopt when malformed.
inline std::optional<std::string> parse_site(std::string_view url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) return std::nullopt;
  auto scheme = to_lower(url.substr(0, scheme_end));
  if (scheme != "http" && scheme != "https") return std::nullopt;
  auto rest = url.substr(scheme_end + 3);
  auto authority = rest.substr(0, rest.find_first_of("/?#"));
  if (auto at = authority.rfind('@'); at != std::string_view::npos) authority = authority.substr(at + 1);
  std::string_view host;
  if (!authority.empty() && authority.front() == '[') {
    auto close = authority.find(']');
    if (close == std::string_view::npos) return std::nullopt;
    host = authority.substr(0, close + 1);
    authority = authority.substr(close + 1);
    if (!authority.empty() && authority.front() != ':') return std::nullopt;
  } else {
    auto colon = authority.find(':');
    host = authority.substr(0, colon);
    authority = colon == std::string_view::npos ? std::string_view{} : authority.substr(colon);
    if (host.empty()) return std::nullopt;
    for (char c : host)
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-') return std::nullopt;
    if (host.front() == '.' || host.back() == '.' || host.find("..") != std::string_view::npos)
      return std::nullopt;
  }
  if (!authority.empty()) {  // ":port"
    auto port = authority.substr(1);
    if (port.empty() || !std::all_of(port.begin(), port.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      return std::nullopt;
  }
  return to_lower(host);
}

struct ImageResult {
  std::string statement_id;
  std::string source;
  std::size_t rank = 0;  // 1-based
  std::string query;
  std::string image_url;
  std::string site;
};

inline json to_json(const ImageResult& r) {
  return json{{"statement_id", r.statement_id}, {"source", r.source}, {"rank", r.rank},
              {"query", r.query},               {"image_url", r.image_url}, {"site", r.site}};
}

inline ImageResult image_result_from_json(const json& j) {
  return ImageResult{j.at("statement_id").get<std::string>(), j.value("source", ""),
                     j.at("rank").get<std::size_t>(),         j.value("query", ""),
                     j.at("image_url").get<std::string>(),    j.at("site").get<std::string>()};
}

// ---------------------------------------------------------------------------
// Providers

struct TransportError : Error {
  using Error::Error;
};

class ImageProvider {
 public:
  virtual ~ImageProvider() = default;
  // Urls in provider order, at most n. Must be safe to call concurrently.
  virtual std::vector<std::string> search(const std::string& query, std::size_t n) const = 0;
};

// Deterministic query -> urls map, loaded from lines {"query", "urls": [...]}.
class FixtureProvider : public ImageProvider {
 public:
  explicit FixtureProvider(const std::vector<json>& records) {
    for (const auto& r : records) table_[r.at("query").get<std::string>()] = r.at("urls").get<std::vector<std::string>>();
  }

  static FixtureProvider from_file(const std::string& path) { return FixtureProvider(read_jsonl(path)); }

  std::vector<std::string> search(const std::string& query, std::size_t n) const override {
    auto it = table_.find(query);
    if (it == table_.end()) return {};
    std::vector<std::string> out(it->second.begin(), it->second.begin() + static_cast<long>(std::min(n, it->second.size())));
    return out;
  }

 private:
  std::unordered_map<std::string, std::vector<std::string>> table_;
};

// Token bucket with capacity one: successive acquire() calls are spaced at
// least 1/rate seconds apart.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second) : interval_(std::chrono::duration<double>(1.0 / per_second)) {}

  void acquire() {
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard lock(mu_);
      auto now = std::chrono::steady_clock::now();
      slot = std::max(now, next_);
      next_ = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(interval_);
    }
    std::this_thread::sleep_until(slot);
  }

 private:
  std::chrono::duration<double> interval_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

// HTTP GET {base}{path}?q=<query>&n=<n>; the body is either a JSON array of
// urls or an object with a "urls" array. Adapters for specific search
// services sit behind this boundary.
class LiveProvider : public ImageProvider {
 public:
  LiveProvider(std::string base_url, std::string path = "/search", double queries_per_second = 1.0)
      : base_url_(std::move(base_url)), path_(std::move(path)), limiter_(queries_per_second) {}

  std::vector<std::string> search(const std::string& query, std::size_t n) const override {
    limiter_.acquire();
    httplib::Client client(base_url_);
    client.set_connection_timeout(5);
    client.set_read_timeout(15);
    httplib::Params params{{"q", query}, {"n", std::to_string(n)}};
    auto res = client.Get(path_, params, httplib::Headers{});
    if (!res) throw TransportError("image search request failed: " + httplib::to_string(res.error()));
    if (res->status >= 500 || res->status == 429)
      throw TransportError("image search returned HTTP " + std::to_string(res->status));
    if (res->status != 200) return {};
    json body;
    try {
      body = json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw TransportError(std::string("image search returned malformed JSON: ") + e.what());
    }
    const json& arr = body.is_object() ? body.value("urls", json::array()) : body;
    std::vector<std::string> urls;
    for (const auto& u : arr) {
      if (urls.size() == n) break;
      if (u.is_string()) urls.push_back(u.get<std::string>());
    }
    return urls;
  }

 private:
  std::string base_url_;
  std::string path_;
  mutable RateLimiter limiter_;
};

// ---------------------------------------------------------------------------
// Running queries

struct IqOptions {
  std::size_t n = 10;
  std::size_t max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::set<std::string> excluded_sources;
  std::set<std::string> blocked_sites;
  std::size_t in_flight = 1;
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };
};

struct IqRun {
  std::vector<ImageResult> results;
  std::vector<Rejection> skipped;
};

// Retries transport failures with exponential backoff.
inline std::vector<std::string> search_with_retry(const ImageProvider& provider, const std::string& query,
                                                  const IqOptions& opt) {
  auto backoff = opt.initial_backoff;
  for (std::size_t attempt = 1;; ++attempt) {
    try {
      return provider.search(query, opt.n);
    } catch (const TransportError&) {
      if (attempt >= opt.max_attempts) throw;
      opt.sleep(backoff);
      backoff *= 2;
    }
  }
}

// Results come back in statement order, ranks 1..n per statement.
inline IqRun run_image_queries(const std::vector<Statement>& statements, const ImageProvider& provider,
                               const IqOptions& opt) {
  struct Slot {
    std::vector<ImageResult> results;
    std::optional<Rejection> skipped;
  };
  std::vector<Slot> slots(statements.size());
  auto work = [&](std::size_t i) {
    const auto& s = statements[i];
    auto& slot = slots[i];
    if (opt.excluded_sources.count(s.source)) {
      slot.skipped = Rejection{s.id, "excluded_source", s.source};
      return;
    }
    auto query = build_query(s.text);
    if (query.empty()) {
      slot.skipped = Rejection{s.id, "empty_query", s.text};
      return;
    }
    std::vector<std::string> urls;
    try {
      urls = search_with_retry(provider, query, opt);
    } catch (const TransportError& e) {
      slot.skipped = Rejection{s.id, "transport_failure", e.what()};
      return;
    }
    std::size_t rank = 0;
    for (const auto& url : urls) {
      ++rank;  // provider rank, kept even when a result is dropped
      auto site = parse_site(url);
      if (!site || opt.blocked_sites.count(*site)) continue;
      slot.results.push_back(ImageResult{s.id, s.source, rank, query, url, *site});
    }
  };

  std::size_t workers = std::max<std::size_t>(1, std::min(opt.in_flight, statements.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < statements.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < statements.size();) work(i);
      });
    for (auto& t : pool) t.join();
  }

  IqRun run;
  for (auto& slot : slots) {
    if (slot.skipped) run.skipped.push_back(std::move(*slot.skipped));
    for (auto& r : slot.results) run.results.push_back(std::move(r));
  }
  return run;
}

// ---------------------------------------------------------------------------
// Site statistics

struct SiteCount {
  std::string site;
  std::size_t images = 0;
  bool operator==(const SiteCount&) const = default;
};

struct SiteTable {
  std::map<std::string, std::vector<SiteCount>> top;  // per group
  std::size_t unique_sites = 0;
  std::size_t unique_images = 0;
  std::size_t examples = 0;
};

// Distinct images per site within each group (by source dataset), top m per
// group by count then site name.
inline SiteTable site_stats(const std::vector<ImageResult>& results, std::size_t m = 10) {
  std::map<std::string, std::map<std::string, std::set<std::string>>> images;  // group -> site -> urls
  std::set<std::string> all_sites, all_images;
  for (const auto& r : results) {
    images[r.source][r.site].insert(r.image_url);
    all_sites.insert(r.site);
    all_images.insert(r.image_url);
  }
  SiteTable t;
  t.unique_sites = all_sites.size();
  t.unique_images = all_images.size();
  t.examples = results.size();
  for (const auto& [group, per_site] : images) {
    std::vector<SiteCount> rows;
    for (const auto& [site, urls] : per_site) rows.push_back({site, urls.size()});
    std::sort(rows.begin(), rows.end(), [](const SiteCount& a, const SiteCount& b) {
      return a.images != b.images ? a.images > b.images : a.site < b.site;
    });
    if (rows.size() > m) rows.resize(m);
    t.top[group] = std::move(rows);
  }
  return t;
}

inline json to_json(const SiteTable& t) {
  json groups = json::object();
  for (const auto& [g, rows] : t.top) {
    json arr = json::array();
    for (const auto& r : rows) arr.push_back({{"site", r.site}, {"images", r.images}});
    groups[g] = arr;
  }
  return json{{"groups", groups},
              {"unique_sites", t.unique_sites},
              {"unique_images", t.unique_images},
              {"examples", t.examples}};
}

// "site (count)" cells, one column per group, as in a printed table.
inline std::string format_site_table(const SiteTable& t) {
  std::string out;
  std::size_t rows = 0;
  for (const auto& [g, r] : t.top) {
    out += (out.empty() ? "" : "\t") + g;
    rows = std::max(rows, r.size());
  }
  out += "\n";
  for (std::size_t i = 0; i < rows; ++i) {
    bool first = true;
    for (const auto& [g, r] : t.top) {
      if (!first) out += "\t";
      first = false;
      if (i < r.size()) out += r[i].site + " (" + std::to_string(r[i].images) + ")";
    }
    out += "\n";
  }
  return out;
}

}  // namespace pvlir

#endif  // PVLIR_IMAGE_QUERY_HPP
