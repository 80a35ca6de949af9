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

#include "pvlir/image_query.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace pvlir {
namespace {

Statement stmt(const std::string& id, const std::string& text, const std::string& source = "anion") {
  Statement s;
  s.id = id;
  s.text = text;
  s.source = source;
  s.kind = StatementKind::kPrecondition;
  return s;
}

std::vector<std::string> urls(const std::string& host, std::size_t n, std::size_t offset = 0) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("https://" + host + "/img/" + std::to_string(offset + i) + ".jpg");
  return out;
}

class CountingProvider : public ImageProvider {
 public:
  explicit CountingProvider(const ImageProvider& inner) : inner_(inner) {}
  std::vector<std::string> search(const std::string& q, std::size_t n) const override {
    ++calls_;
    return inner_.search(q, n);
  }
  std::size_t calls() const { return calls_; }

 private:
  const ImageProvider& inner_;
  mutable std::atomic<std::size_t> calls_{0};
};

// Fails the first `failures` calls with a transport error.
class FlakyProvider : public ImageProvider {
 public:
  explicit FlakyProvider(std::size_t failures) : failures_(failures) {}
  std::vector<std::string> search(const std::string&, std::size_t) const override {
    if (calls_++ < failures_) throw TransportError("connection reset");
    return {"https://x.com/1.jpg"};
  }
  std::size_t calls() const { return calls_; }

 private:
  std::size_t failures_;
  mutable std::atomic<std::size_t> calls_{0};
};

IqOptions quiet() {
  IqOptions o;
  o.sleep = [](std::chrono::milliseconds) {};
  return o;
}

TEST(BuildQuery, Examples) {
  EXPECT_EQ(build_query("you are in a desert"), "you are in a desert");
  EXPECT_EQ(build_query("a, b,, c"), "a b c");
  EXPECT_EQ(build_query(",,, ,"), "");
}

TEST(BuildQuery, IdempotentAndNeverLonger) {
  Rng rng(3);
  const std::string alphabet = "ab ,,  c";
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    for (std::size_t i = uniform_below(rng, 30); i > 0; --i) s += alphabet[uniform_below(rng, alphabet.size())];
    auto q = build_query(s);
    EXPECT_EQ(build_query(q), q);
    EXPECT_LE(q.size(), s.size());
    EXPECT_EQ(q.find(','), std::string::npos);
  }
}

TEST(ParseSite, Authorities) {
  EXPECT_EQ(parse_site("https://QuoteFancy.com/path?x=1"), "quotefancy.com");
  EXPECT_EQ(parse_site("http://user:pw@i0.wp.com:8080/a.png"), "i0.wp.com");
  EXPECT_EQ(parse_site("https://c8.alamy.com"), "c8.alamy.com");
  EXPECT_EQ(parse_site("https://host.example#frag"), "host.example");
  EXPECT_EQ(parse_site("http://[::1]:80/x"), "[::1]");
  EXPECT_FALSE(parse_site("not a url"));
  EXPECT_FALSE(parse_site("ftp://host/x"));
  EXPECT_FALSE(parse_site("https:///nohost"));
  EXPECT_FALSE(parse_site("https://bad host/x"));
  EXPECT_FALSE(parse_site("https://host:port/x"));
  EXPECT_FALSE(parse_site("https://a..b/x"));
}

TEST(Search, FixtureTenAndShort) {
  FixtureProvider p(std::vector<json>{{{"query", "you are in a desert"}, {"urls", urls("a.com", 12)}},
                     {{"query", "it is raining"}, {"urls", urls("b.com", 4)}}});
  auto run = run_image_queries({stmt("s1", "you are in a desert"), stmt("s2", "it is raining")}, p, quiet());
  ASSERT_EQ(run.results.size(), 14u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(run.results[i].statement_id, "s1");
    EXPECT_EQ(run.results[i].rank, i + 1);
  }
  for (std::size_t i = 10; i < 14; ++i) EXPECT_EQ(run.results[i].rank, i - 9);
  EXPECT_TRUE(run.skipped.empty());
}

TEST(Search, SkipsAndDrops) {
  FixtureProvider p(std::vector<json>{{{"query", "the person is tired"},
                      {"urls", {"https://ok.com/1.jpg", "garbage", "https://spam.com/2.jpg", "https://ok.com/3.jpg"}}}});
  CountingProvider counter(p);
  auto opt = quiet();
  opt.excluded_sources = {"abstract"};
  opt.blocked_sites = {"spam.com"};
  auto run = run_image_queries(
      {stmt("s1", "the person, is tired"), stmt("s2", ",,,"), stmt("s3", "the person is tired", "abstract")}, counter,
      opt);
  ASSERT_EQ(run.results.size(), 2u);
  EXPECT_EQ(run.results[0].rank, 1u);
  EXPECT_EQ(run.results[1].rank, 4u);
  EXPECT_EQ(run.results[0].query, "the person is tired");
  ASSERT_EQ(run.skipped.size(), 2u);
  EXPECT_EQ(run.skipped[0].reason, "empty_query");
  EXPECT_EQ(run.skipped[1].reason, "excluded_source");
  EXPECT_EQ(counter.calls(), 1u);  // the excluded statement never reached the provider
}

TEST(Search, RetriesWithExponentialBackoff) {
  std::vector<std::chrono::milliseconds> waits;
  auto opt = quiet();
  opt.sleep = [&](std::chrono::milliseconds d) { waits.push_back(d); };

  FlakyProvider twice(2);
  auto run = run_image_queries({stmt("s", "q")}, twice, opt);
  EXPECT_EQ(run.results.size(), 1u);
  EXPECT_EQ(twice.calls(), 3u);
  EXPECT_EQ(waits, (std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(500), std::chrono::milliseconds(1000)}));

  waits.clear();
  FlakyProvider always(100);
  run = run_image_queries({stmt("s", "q"), stmt("t", "q")}, always, opt);
  EXPECT_TRUE(run.results.empty());
  ASSERT_EQ(run.skipped.size(), 2u);
  EXPECT_EQ(run.skipped[0].reason, "transport_failure");
  EXPECT_EQ(always.calls(), 6u);
}

TEST(Search, FixtureDeterministicAcrossWorkerCounts) {
  std::vector<json> table;
  std::vector<Statement> ss;
  for (int i = 0; i < 40; ++i) {
    auto text = "statement number " + std::to_string(i);
    table.push_back({{"query", text}, {"urls", urls("h" + std::to_string(i % 7) + ".com", i % 13, i)}});
    ss.push_back(stmt("s" + std::to_string(i), text, i % 2 ? "paco" : "anion"));
  }
  FixtureProvider p(table);
  auto serial = run_image_queries(ss, p, quiet());
  auto opt = quiet();
  opt.in_flight = 4;
  auto parallel = run_image_queries(ss, p, opt);
  EXPECT_EQ(to_json_lines(serial.results), to_json_lines(parallel.results));
  EXPECT_EQ(to_json_lines(serial.results), to_json_lines(run_image_queries(ss, p, quiet()).results));
}

TEST(LiveProvider, HttpRoundTripAndRateLimit) {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Get("/search", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    if (req.get_param_value("q") == "boom") {
      res.status = 503;
      return;
    }
    json body = {{"urls", urls("live.com", std::stoul(req.get_param_value("n")) + 2)}};
    body["urls"][0] = "echo:" + req.get_param_value("q");
    res.set_content(body.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  LiveProvider live("http://127.0.0.1:" + std::to_string(port), "/search", 20.0);
  auto start = std::chrono::steady_clock::now();
  auto got = live.search("a dog, on grass", 3);
  ASSERT_EQ(got.size(), 3u);
  EXPECT_EQ(got[0], "echo:a dog, on grass");
  live.search("x", 1);
  live.search("y", 1);
  EXPECT_GE(std::chrono::steady_clock::now() - start, std::chrono::milliseconds(95));  // 3 calls at 20/s
  EXPECT_THROW(live.search("boom", 1), TransportError);

  auto opt = quiet();
  int before = hits;
  auto run = run_image_queries({stmt("s", "boom")}, live, opt);
  EXPECT_EQ(hits - before, 3);
  EXPECT_EQ(run.skipped.at(0).reason, "transport_failure");

  server.stop();
  t.join();
  LiveProvider dead("http://127.0.0.1:" + std::to_string(port), "/search", 1000.0);
  EXPECT_THROW(dead.search("q", 1), TransportError);
}

TEST(SiteStats, SmallTallies) {
  std::vector<ImageResult> rs;
  for (int i = 0; i < 3; ++i) rs.push_back({"s", "g", std::size_t(i + 1), "q", "https://one.com/" + std::to_string(i), "one.com"});
  rs.push_back({"s2", "g", 1, "q", "https://b.com/1", "b.com"});
  rs.push_back({"s2", "g", 2, "q", "https://a.com/1", "a.com"});
  rs.push_back({"s3", "g", 1, "q", "https://a.com/1", "a.com"});  // same image again
  auto t = site_stats(rs);
  ASSERT_EQ(t.top.at("g").size(), 3u);
  EXPECT_EQ(t.top.at("g")[0], (SiteCount{"one.com", 3}));
  EXPECT_EQ(t.top.at("g")[1], (SiteCount{"a.com", 1}));
  EXPECT_EQ(t.top.at("g")[2], (SiteCount{"b.com", 1}));
  EXPECT_EQ(t.unique_sites, 3u);
  EXPECT_EQ(t.unique_images, 5u);
  EXPECT_EQ(t.examples, 6u);
}

// The published precondition column for the third dataset, rebuilt from a
// synthetic result set. Counts are hand-entered; the fixture adds repeated
// urls and a long tail of small sites that must not disturb the top ten.
TEST(SiteStats, ReproducesPublishedColumn) {
  const std::vector<std::pair<std::string, std::size_t>> column{
      {"quotefancy.com", 4721},       {"thumbs.dreamstime.com", 2668}, {"i0.wp.com", 2074},
      {"i.pinimg.com", 1662},         {"www.wikihow.com", 1597},       {"www.verywellmind.com", 1546},
      {"media.istockphoto.com", 1251}, {"miro.medium.com", 997},       {"www.incimages.com", 967},
      {"previews.123rf.com", 900}};
  std::vector<ImageResult> rs;
  std::size_t examples = 0;
  for (const auto& [host, count] : column) {
    for (const auto& u : urls(host, count)) {
      rs.push_back({"s" + std::to_string(examples % 977), "anion", 1 + examples % 10, "q", u, host});
      ++examples;
    }
    for (const auto& u : urls(host, 25)) {  // repeats of already-counted images
      rs.push_back({"r" + std::to_string(examples), "anion", 1, "q", u, host});
      ++examples;
    }
  }
  for (int tail = 0; tail < 50; ++tail)
    for (const auto& u : urls("tail" + std::to_string(tail) + ".net", 100)) rs.push_back({"t", "anion", 1, "q", u, "tail" + std::to_string(tail) + ".net"});
  for (const auto& u : urls("quotefancy.com", 102)) rs.push_back({"p", "paco", 1, "q", u, "quotefancy.com"});

  auto t = site_stats(rs, 10);
  const auto& anion = t.top.at("anion");
  ASSERT_EQ(anion.size(), 10u);
  for (std::size_t i = 0; i < column.size(); ++i) EXPECT_EQ(anion[i], (SiteCount{column[i].first, column[i].second}));
  EXPECT_EQ(t.top.at("paco")[0], (SiteCount{"quotefancy.com", 102}));
  auto table = format_site_table(t);
  EXPECT_NE(table.find("quotefancy.com (4721)\tquotefancy.com (102)"), std::string::npos) << table;

  std::size_t sum = 0;
  for (const auto& [g, rows] : site_stats(rs, 1000).top)
    for (const auto& r : rows) sum += r.images;
  EXPECT_LE(sum, rs.size());
  EXPECT_EQ(t.examples, rs.size());
}

}  // namespace
}  // namespace pvlir
