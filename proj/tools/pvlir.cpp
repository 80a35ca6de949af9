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

// Command-line front end. Every stage reads and writes JSON-lines files so
// stages can be run one at a time or chained by `pipeline run`.

#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "pvlir/assembly.hpp"
#include "pvlir/embed_index.hpp"
#include "pvlir/image_query.hpp"
#include "pvlir/lf_engine.hpp"
#include "pvlir/normalize.hpp"
#include "pvlir/pipeline.hpp"
#include "pvlir/rank_fusion.hpp"
#include "pvlir/verification.hpp"

namespace {

using namespace pvlir;

std::string data_file(const std::string& name) { return std::string(PVLIR_DATA_DIR) + "/" + name; }

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

void emit(const std::string& out, const std::vector<json>& lines) {
  if (out.empty() || out == "-") std::cout << dump_jsonl(lines);
  else write_jsonl(out, lines);
}

void emit(const std::string& out, const json& doc) {
  if (out.empty() || out == "-") std::cout << doc.dump(2) << "\n";
  else write_text(out, doc.dump(2) + "\n");
}

template <typename T, typename F>
std::vector<T> read_records(const std::string& path, F from_json) {
  std::vector<T> out;
  for (const auto& j : read_jsonl(path)) out.push_back(from_json(j));
  return out;
}

std::unique_ptr<PosHook> make_pos_hook(const std::string& verbs_path, const std::string& sidecar) {
  auto heuristic = std::make_shared<HeuristicPosHook>(read_list_file(verbs_path));
  if (sidecar.empty()) return std::make_unique<HeuristicPosHook>(*heuristic);
  return std::make_unique<SidecarPosHook>(read_jsonl(sidecar), heuristic);
}

// ---------------------------------------------------------------------------

void add_normalize(CLI::App& app) {
  auto* norm = app.add_subcommand("normalize", "Normalize statement banks or caption corpora");
  norm->require_subcommand(1);

  struct StatementOpts {
    std::string in, out, rejections, names, filtered, report;
    std::vector<std::string> sources;
  };
  auto so = std::make_shared<StatementOpts>();
  auto* st = norm->add_subcommand("statements", "Bank records {id, precondition, action, label, source}");
  st->add_option("--in", so->in, "Bank records (JSONL)")->required();
  st->add_option("--out", so->out, "Normalized statements (JSONL)")->required();
  st->add_option("--rejections", so->rejections, "Rejected records (JSONL)");
  st->add_option("--sources", so->sources, "Accepted source tags (default: any)")->delimiter(',');
  st->add_option("--names", so->names, "First-name list for person detection");
  st->add_option("--length-filtered", so->filtered, "Also write the length-filtered statements here");
  st->add_option("--report", so->report, "Length-filter report (JSON)");
  st->callback([so] {
    CompositeDetector detector;
    detector.add(std::make_shared<FixedIdentifierDetector>());
    if (!so->names.empty()) detector.add(std::make_shared<GazetteerDetector>(read_list_file(so->names)));
    std::vector<Statement> statements;
    std::vector<Rejection> rejected;
    auto registry = as_set(so->sources);
    for (const auto& rec : read_jsonl(so->in)) {
      auto r = normalize_pnli_record(rec, detector, registry);
      rejected.insert(rejected.end(), r.rejections.begin(), r.rejections.end());
      if (r.statements) {
        statements.push_back(r.statements->first);
        statements.push_back(r.statements->second);
      }
    }
    write_jsonl(so->out, to_json_lines(statements));
    if (!so->rejections.empty()) write_jsonl(so->rejections, to_json_lines(rejected));
    if (!so->filtered.empty() || !so->report.empty()) {
      auto f = length_filter(statements);
      if (!so->filtered.empty()) write_jsonl(so->filtered, to_json_lines(f.retained));
      if (!so->report.empty()) emit(so->report, report_json(f));
    }
    std::cerr << statements.size() << " statements, " << rejected.size() << " rejected\n";
  });

  struct CaptionOpts {
    std::string in, out, abbreviations, filtered, report;
  };
  auto co = std::make_shared<CaptionOpts>();
  auto* cap = norm->add_subcommand("captions", "Caption records {id, text, image_ref, source}");
  cap->add_option("--in", co->in, "Raw captions (JSONL)")->required();
  cap->add_option("--out", co->out, "One caption per sentence (JSONL)")->required();
  cap->add_option("--abbreviations", co->abbreviations, "Abbreviation list")->default_val(data_file("abbreviations.txt"));
  cap->add_option("--length-filtered", co->filtered, "Also write the length-filtered captions here");
  cap->add_option("--report", co->report, "Length-filter report (JSON)");
  cap->callback([co] {
    auto abbrevs = as_set(read_list_file(co->abbreviations));
    std::vector<Caption> captions;
    for (const auto& j : read_jsonl(co->in))
      for (auto& c : normalize_caption_record(caption_from_json(j), abbrevs)) captions.push_back(std::move(c));
    write_jsonl(co->out, to_json_lines(captions));
    if (!co->filtered.empty() || !co->report.empty()) {
      auto f = length_filter(captions);
      if (!co->filtered.empty()) write_jsonl(co->filtered, to_json_lines(f.retained));
      if (!co->report.empty()) emit(co->report, report_json(f));
    }
    std::cerr << captions.size() << " captions\n";
  });
}

void add_extract(CLI::App& app) {
  struct Opts {
    std::string captions, table = data_file("lf_table.txt"), verbs = data_file("verbs.txt"), sidecar, out;
    std::optional<double> threshold;
    std::vector<std::string> whitelist;
    bool all = false;
  };
  auto o = std::make_shared<Opts>();
  auto* c = app.add_subcommand("extract", "Apply the labeling functions to normalized captions");
  c->add_option("--captions", o->captions, "Normalized captions (JSONL)")->required();
  c->add_option("--lf-table", o->table, "Labeling-function table")->capture_default_str();
  c->add_option("--verbs", o->verbs, "Verb list for the conjunction check")->capture_default_str();
  c->add_option("--pos-sidecar", o->sidecar, "Precomputed conjunction judgements (JSONL)");
  c->add_option("--threshold", o->threshold, "Keep only LFs with precision at or above this");
  c->add_option("--whitelist", o->whitelist, "Uncalibrated LFs to keep anyway")->delimiter(',');
  c->add_flag("--all-matches", o->all, "Emit every matching LF instead of one per caption");
  c->add_option("--out", o->out, "Extracted instances (JSONL)")->required();
  c->callback([o] {
    auto lfs = compile_lf_table(o->table);
    auto hook = make_pos_hook(o->verbs, o->sidecar);
    auto captions = read_records<Caption>(o->captions, caption_from_json);
    auto found = extract_all(captions, lfs, hook.get());
    if (!o->all) found = resolve_matches(found);
    if (o->threshold) found = threshold_filter(found, *o->threshold, as_set(o->whitelist));
    write_jsonl(o->out, to_json_lines(found));
    std::cerr << found.size() << " instances\n";
  });
}

void add_calibrate(CLI::App& app) {
  auto* cal = app.add_subcommand("calibrate", "Precision calibration of labeling functions");
  cal->require_subcommand(1);

  struct SampleOpts {
    std::string captions, table = data_file("lf_table.txt"), verbs = data_file("verbs.txt"), out;
    std::vector<std::string> lfs;
    std::size_t n = kDefaultCalibrationSize;
    std::uint64_t seed = 0;
  };
  auto so = std::make_shared<SampleOpts>();
  auto* s = cal->add_subcommand("sample", "Draw annotation samples per LF");
  s->add_option("--captions", so->captions, "Normalized captions (JSONL)")->required();
  s->add_option("--lf-table", so->table, "Labeling-function table")->capture_default_str();
  s->add_option("--verbs", so->verbs, "Verb list")->capture_default_str();
  s->add_option("--lf", so->lfs, "LF names (default: all)")->delimiter(',');
  s->add_option("--n", so->n, "Sample size per LF")->capture_default_str();
  s->add_option("--seed", so->seed, "Sampling seed")->capture_default_str();
  s->add_option("--out", so->out, "Sample lines to annotate (JSONL)")->required();
  s->callback([so] {
    auto lfs = compile_lf_table(so->table);
    HeuristicPosHook hook(read_list_file(so->verbs));
    auto captions = read_records<Caption>(so->captions, caption_from_json);
    auto wanted = as_set(so->lfs);
    std::vector<json> lines;
    for (const auto& lf : lfs) {
      if (!wanted.empty() && !wanted.count(lf.name)) continue;
      auto part = sample_to_json(calibrate(lf, captions, so->n, so->seed ^ fnv1a64(lf.name), &hook));
      lines.insert(lines.end(), part.begin(), part.end());
    }
    write_jsonl(so->out, lines);
  });

  struct IngestOpts {
    std::string in, table = data_file("lf_table.txt"), out_table, out;
  };
  auto io = std::make_shared<IngestOpts>();
  auto* i = cal->add_subcommand("ingest", "Turn annotated samples into precisions");
  i->add_option("--in", io->in, "Annotated sample lines (JSONL, score 0 or 1)")->required();
  i->add_option("--lf-table", io->table, "Table to update")->capture_default_str();
  i->add_option("--out-table", io->out_table, "Write the calibrated table here");
  i->add_option("--out", io->out, "Per-LF results (JSONL, default stdout)");
  i->callback([io] {
    auto results = ingest_calibration(read_jsonl(io->in));
    emit(io->out, to_json_lines(results));
    if (!io->out_table.empty()) {
      auto lfs = compile_lf_table(io->table);
      apply_calibration(lfs, results);
      write_text(io->out_table, format_lf_table(lfs));
    }
  });
}

void add_report(CLI::App& app) {
  auto* rep = app.add_subcommand("report", "Dataset statistics");
  rep->require_subcommand(1);

  struct CumOpts {
    std::string in, thresholds = "0.0:1.0:0.05", out;
  };
  auto co = std::make_shared<CumOpts>();
  auto* cum = rep->add_subcommand("cumulative", "Retained fraction and allow share per precision threshold");
  cum->add_option("--in", co->in, "Extracted instances (JSONL)")->required();
  cum->add_option("--thresholds", co->thresholds, "start:stop:step")->capture_default_str();
  cum->add_option("--out", co->out, "Output (JSONL, default stdout)");
  cum->callback([co] {
    auto instances = read_records<ExtractedInstance>(co->in, extracted_from_json);
    emit(co->out, to_json_lines(cumulative_report(instances, parse_thresholds(co->thresholds))));
  });

  struct DistOpts {
    std::string dataset, sizes, strategy = "CQ", kind, out;
  };
  auto d = std::make_shared<DistOpts>();
  auto* dist = rep->add_subcommand("dist", "Observed vs expected shares by source, LF distribution");
  dist->add_option("--dataset", d->dataset, "Dataset (JSONL)")->required();
  dist->add_option("--sizes", d->sizes, "Caption corpus sizes, one 'source size' per line")->required();
  dist->add_option("--strategy", d->strategy, "EC, CQ, IQ or all")->capture_default_str();
  dist->add_option("--kind", d->kind, "precondition or action (default: both)");
  dist->add_option("--out", d->out, "Report (JSON, default stdout)");
  dist->callback([d] {
    std::optional<Strategy> strategy;
    if (d->strategy != "all") strategy = parse_strategy(d->strategy);
    std::optional<StatementKind> kind;
    if (!d->kind.empty()) kind = parse_statement_kind(d->kind);
    auto r = distribution_report(read_dataset(d->dataset), read_sizes(d->sizes), strategy, kind);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    emit(d->out, to_json(r));
  });

  struct HeatOpts {
    std::string fusion, ratings, out;
    std::size_t q = 6;
  };
  auto h = std::make_shared<HeatOpts>();
  auto* heat = rep->add_subcommand("heatmap", "Mean rating by perplexity and agreement quantile bins");
  heat->add_option("--fusion", h->fusion, "Fusion results (JSONL)")->required();
  heat->add_option("--ratings", h->ratings, "Ratings {query_id, rating} (JSONL)")->required();
  heat->add_option("--q", h->q, "Number of quantile bins")->capture_default_str();
  heat->add_option("--out", h->out, "Report (JSON, default stdout)");
  heat->callback([h] {
    std::map<std::string, double> rating;
    for (const auto& j : read_jsonl(h->ratings)) rating[j.at("query_id").get<std::string>()] = j.at("rating").get<double>();
    std::vector<double> px, ag, rt;
    for (const auto& j : read_jsonl(h->fusion)) {
      auto f = fusion_from_json(j);
      auto it = rating.find(f.query_id);
      if (it == rating.end()) continue;
      px.push_back(f.perplexity);
      ag.push_back(f.model_agreement);
      rt.push_back(it->second);
    }
    emit(h->out, to_json(heatmap(px, ag, rt, h->q)));
  });

  struct SiteOpts {
    std::string in, format = "json", out;
    std::size_t m = 10;
  };
  auto so = std::make_shared<SiteOpts>();
  auto* sites = rep->add_subcommand("sites", "Top websites per source dataset");
  sites->add_option("--in", so->in, "Image results (JSONL)")->required();
  sites->add_option("--m", so->m, "Rows per group")->capture_default_str();
  sites->add_option("--format", so->format, "json or table")->check(CLI::IsMember({"json", "table"}))->capture_default_str();
  sites->add_option("--out", so->out, "Output (default stdout)");
  sites->callback([so] {
    auto t = site_stats(read_records<ImageResult>(so->in, image_result_from_json), so->m);
    if (so->format == "json") return emit(so->out, to_json(t));
    auto text = format_site_table(t);
    if (so->out.empty()) std::cout << text;
    else write_text(so->out, text);
  });
}

void add_embed_index(CLI::App& app) {
  struct EmbedOpts {
    std::string in, out_dir;
    std::vector<std::string> models;
  };
  auto eo = std::make_shared<EmbedOpts>();
  auto* emb = app.add_subcommand("embed", "Hashing embeddings for statements or captions");
  emb->add_option("--in", eo->in, "Records with id and text (JSONL)")->required();
  emb->add_option("--out-dir", eo->out_dir, "One <model_id>.vec file per space")->required();
  emb->add_option("--models", eo->models, "Subset of hash-word12, hash-char3, hash-char45")->delimiter(',');
  emb->callback([eo] {
    std::filesystem::create_directories(eo->out_dir);
    auto records = read_jsonl(eo->in);
    auto wanted = as_set(eo->models);
    for (const auto& e : default_hashing_spaces()) {
      if (!wanted.empty() && !wanted.count(e.model_id)) continue;
      std::vector<VectorRecord> vecs;
      std::size_t zero = 0;
      for (const auto& j : records) {
        auto v = e.embed(j.at("text").get<std::string>());
        if (std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; })) {
          ++zero;
          continue;
        }
        vecs.push_back({j.at("id").get<std::string>(), std::move(v)});
      }
      write_text(eo->out_dir + "/" + e.model_id + ".vec", format_vector_file(e.space(), vecs));
      std::cerr << e.model_id << ": " << vecs.size() << " vectors";
      if (zero) std::cerr << " (" << zero << " without features skipped)";
      std::cerr << "\n";
    }
  });

  auto* idx = app.add_subcommand("index", "Exact nearest-neighbour index over a vector file");
  idx->require_subcommand(1);
  auto build_in = std::make_shared<std::string>();
  auto* build = idx->add_subcommand("build", "Validate a vector file and report its space");
  build->add_option("--vectors", *build_in, "Vector file")->required();
  build->callback([build_in] {
    auto f = read_vector_file(*build_in);
    VectorIndex index(f.space, f.records);
    std::cout << json{{"model_id", f.space.model_id},
                      {"dim", f.space.dim},
                      {"metric", to_string(f.space.metric)},
                      {"count", index.size()}}
                     .dump()
              << "\n";
  });

  struct QueryOpts {
    std::string index, queries, out;
    std::size_t k = 50;
  };
  auto qo = std::make_shared<QueryOpts>();
  auto* query = idx->add_subcommand("query", "Top-k captions for every query vector");
  query->add_option("--index", qo->index, "Caption vector file")->required();
  query->add_option("--queries", qo->queries, "Query vector file from the same space")->required();
  query->add_option("--k", qo->k, "Neighbours per query")->capture_default_str();
  query->add_option("--out", qo->out, "Rankings (JSONL)")->required();
  query->callback([qo] {
    auto cf = read_vector_file(qo->index);
    auto qf = read_vector_file(qo->queries);
    if (qf.space.model_id != cf.space.model_id || qf.space.dim != cf.space.dim)
      throw ConfigError("query vectors (" + qf.space.model_id + ") and index (" + cf.space.model_id +
                        ") come from different spaces");
    VectorIndex index(cf.space, cf.records);
    std::vector<json> lines;
    for (const auto& q : qf.records) lines.push_back(to_json(index.query(q.id, q.values, qo->k)));
    write_jsonl(qo->out, lines);
  });
}

void add_fuse(CLI::App& app) {
  struct Opts {
    std::vector<std::string> rankings;
    std::string out;
    double p = kDefaultPersistence;
    std::size_t k = 50;
  };
  auto o = std::make_shared<Opts>();
  auto* c = app.add_subcommand("fuse", "Copeland fusion of per-model rankings");
  c->add_option("--rankings", o->rankings, "Ranking files, one per model")->required()->expected(1, -1);
  c->add_option("--p", o->p, "RBO persistence")->capture_default_str();
  c->add_option("--k", o->k, "Truncate each ranking to k")->capture_default_str();
  c->add_option("--out", o->out, "Fusion results (JSONL)")->required();
  c->callback([o] {
    std::map<std::string, std::vector<Ranking>> by_query;
    for (const auto& path : o->rankings)
      for (const auto& j : read_jsonl(path)) {
        auto r = ranking_from_json(j);
        if (r.entries.size() > o->k) r.entries.resize(o->k);
        by_query[r.query_id].push_back(std::move(r));
      }
    std::vector<json> lines;
    for (const auto& [q, rs] : by_query) {
      if (rs.size() != o->rankings.size())
        std::cerr << "warning: query '" << q << "' has " << rs.size() << " of " << o->rankings.size() << " rankings\n";
      try {
        lines.push_back(to_json(copeland_select(rs, o->p)));
      } catch (const NoCandidates& e) {
        std::cerr << "skipped: " << e.what() << "\n";
      }
    }
    write_jsonl(o->out, lines);
  });
}

void add_iq(CLI::App& app) {
  auto* iq = app.add_subcommand("iq", "Image querying");
  iq->require_subcommand(1);
  struct Opts {
    std::string statements, provider = "fixture", fixture, endpoint, path = "/search", blocklist, out, skipped;
    std::vector<std::string> exclude;
    std::size_t n = 10, in_flight = 1;
    double qps = 1.0;
  };
  auto o = std::make_shared<Opts>();
  auto* run = iq->add_subcommand("run", "Search images for each statement");
  run->add_option("--statements", o->statements, "Statements (JSONL)")->required();
  run->add_option("--provider", o->provider, "fixture or live")->check(CLI::IsMember({"fixture", "live"}))->capture_default_str();
  run->add_option("--fixture", o->fixture, "Fixture file {query, urls} (JSONL)");
  run->add_option("--endpoint", o->endpoint, "Live provider base url, e.g. http://localhost:8080");
  run->add_option("--path", o->path, "Live provider search path")->capture_default_str();
  run->add_option("--qps", o->qps, "Live provider queries per second")->capture_default_str();
  run->add_option("--in-flight", o->in_flight, "Concurrent queries")->capture_default_str();
  run->add_option("--n", o->n, "Images per query")->capture_default_str();
  run->add_option("--exclude-sources", o->exclude, "Source datasets never queried")->delimiter(',');
  run->add_option("--blocklist", o->blocklist, "Sites to drop, one per line");
  run->add_option("--out", o->out, "Image results (JSONL)")->required();
  run->add_option("--skipped", o->skipped, "Skipped statements (JSONL)");
  run->callback([o] {
    std::unique_ptr<ImageProvider> provider;
    if (o->provider == "fixture") {
      if (o->fixture.empty()) throw ConfigError("--fixture is required with --provider fixture");
      provider = std::make_unique<FixtureProvider>(FixtureProvider::from_file(o->fixture));
    } else {
      if (o->endpoint.empty()) throw ConfigError("--endpoint is required with --provider live");
      provider = std::make_unique<LiveProvider>(o->endpoint, o->path, o->qps);
    }
    IqOptions opt;
    opt.n = o->n;
    opt.in_flight = o->in_flight;
    opt.excluded_sources = as_set(o->exclude);
    if (!o->blocklist.empty()) opt.blocked_sites = as_set(read_list_file(o->blocklist));
    auto r = run_image_queries(read_records<Statement>(o->statements, statement_from_json), *provider, opt);
    write_jsonl(o->out, to_json_lines(r.results));
    if (!o->skipped.empty()) write_jsonl(o->skipped, to_json_lines(r.skipped));
    std::cerr << r.results.size() << " results, " << r.skipped.size() << " statements skipped\n";
  });
}

void add_assembly(CLI::App& app) {
  struct AsmOpts {
    std::string ec, fusion, iq, statements, captions, out, report;
  };
  auto a = std::make_shared<AsmOpts>();
  auto* as = app.add_subcommand("assemble", "Merge the three strategies into one dataset");
  as->add_option("--ec", a->ec, "Extracted instances (JSONL)");
  as->add_option("--fusion", a->fusion, "Caption-query fusion results (JSONL)");
  as->add_option("--iq", a->iq, "Image results (JSONL)");
  as->add_option("--statements", a->statements, "Normalized statements, needed with --fusion/--iq");
  as->add_option("--captions", a->captions, "Normalized captions, needed with --fusion");
  as->add_option("--out", a->out, "Dataset (JSONL)")->required();
  as->add_option("--report", a->report, "Merge counts (JSON, default stderr)");
  as->callback([a] {
    std::vector<PvliInstance> instances;
    if (!a->ec.empty())
      for (const auto& j : read_jsonl(a->ec)) instances.push_back(from_extraction(extracted_from_json(j)));
    std::vector<Statement> statements;
    if (!a->statements.empty()) statements = read_records<Statement>(a->statements, statement_from_json);
    auto pairs = index_pairs(statements);
    std::map<std::string, const Statement*> by_id;
    for (const auto& s : statements) by_id[s.id] = &s;
    std::set<std::string> unpaired;
    auto pair_of = [&](const std::string& id) -> std::pair<const StatementPair*, const Statement*> {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw LoadError("statement '" + id + "' not found in --statements");
      auto p = pairs.find(it->second->pair_id);
      if (p == pairs.end()) {
        unpaired.insert(id);
        return {nullptr, it->second};
      }
      return {&p->second, it->second};
    };
    if (!a->fusion.empty()) {
      if (a->captions.empty()) throw ConfigError("--fusion needs --captions");
      std::map<std::string, Caption> captions;
      for (const auto& j : read_jsonl(a->captions)) {
        auto c = caption_from_json(j);
        captions.emplace(c.id, c);
      }
      for (const auto& j : read_jsonl(a->fusion)) {
        auto f = fusion_from_json(j);
        auto [pair, s] = pair_of(f.query_id);
        if (!pair) continue;
        auto c = captions.find(f.chosen);
        if (c == captions.end()) throw LoadError("caption '" + f.chosen + "' not found in --captions");
        instances.push_back(from_caption_query(*pair, s->kind, f, c->second));
      }
    }
    if (!a->iq.empty())
      for (const auto& j : read_jsonl(a->iq)) {
        auto r = image_result_from_json(j);
        auto [pair, s] = pair_of(r.statement_id);
        if (!pair) continue;
        instances.push_back(from_image_result(*pair, s->kind, r));
      }
    if (!unpaired.empty())
      std::cerr << "warning: skipped records of " << unpaired.size() << " statements whose pair is incomplete\n";
    auto m = merge_dedupe(instances);
    write_jsonl(a->out, to_json_lines(m.dataset));
    if (a->report.empty()) std::cerr << to_json(m).dump() << "\n";
    else emit(a->report, to_json(m));
  });

  struct SplitOpts {
    std::string dataset, out;
    std::size_t tuning = kDefaultTuningSize, noisy = kDefaultNoisyTestSize;
    std::uint64_t seed = 7;
  };
  auto s = std::make_shared<SplitOpts>();
  auto* sp = app.add_subcommand("split", "Sample tuning and noisy-test splits");
  sp->add_option("--dataset", s->dataset, "Dataset (JSONL)")->required();
  sp->add_option("--tuning", s->tuning, "Tuning size")->capture_default_str();
  sp->add_option("--noisy", s->noisy, "Noisy-test size")->capture_default_str();
  sp->add_option("--seed", s->seed, "Sampling seed")->capture_default_str();
  sp->add_option("--out", s->out, "Dataset with splits (JSONL)")->required();
  sp->callback([s] {
    auto d = read_dataset(s->dataset);
    auto r = split_sample(d, s->tuning, s->noisy, s->seed);
    write_jsonl(s->out, to_json_lines(d));
    std::cerr << to_json(r).dump() << "\n";
  });

  auto* cf = app.add_subcommand("cf", "Counterfactual variants");
  cf->require_subcommand(1);
  struct CfOpts {
    std::string dataset, split, out;
    std::vector<std::string> kinds{"text_token_mask", "image_region_mask", "text_blind", "image_blind"};
    std::uint64_t seed = 0;
    std::size_t rows = kDefaultGridRows, cols = kDefaultGridCols;
  };
  auto c = std::make_shared<CfOpts>();
  auto* make = cf->add_subcommand("make", "Masked text and image-grid variants");
  make->add_option("--dataset", c->dataset, "Dataset (JSONL)")->required();
  make->add_option("--split", c->split, "Only records in this split");
  make->add_option("--kinds", c->kinds, "Variant kinds")->delimiter(',')->capture_default_str();
  make->add_option("--seed", c->seed, "Masking seed")->capture_default_str();
  make->add_option("--rows", c->rows, "Grid rows")->capture_default_str();
  make->add_option("--cols", c->cols, "Grid columns")->capture_default_str();
  make->add_option("--out", c->out, "Variants (JSONL)")->required();
  make->callback([c] {
    std::vector<VariantKind> kinds;
    for (const auto& k : c->kinds) kinds.push_back(parse_variant_kind(k));
    auto d = read_dataset(c->dataset);
    if (!c->split.empty()) d = select_split(d, parse_split(c->split));
    std::vector<json> lines;
    std::size_t skipped = 0;
    for (const auto& x : d) {
      auto r = make_counterfactuals(x, kinds, c->seed, c->rows, c->cols);
      for (const auto& v : r.variants) lines.push_back(to_json(v));
      for (const auto& s : r.skipped) {
        std::cerr << "skipped " << s.id << ": " << s.reason << "\n";
        ++skipped;
      }
    }
    write_jsonl(c->out, lines);
  });

  struct ScoreOpts {
    std::string dataset, split = "clean_test", predictions, out;
    std::uint64_t seed = 0;
  };
  auto so = std::make_shared<ScoreOpts>();
  auto* sc = app.add_subcommand("score", "Accuracy of a predictions file against a split");
  sc->add_option("--dataset", so->dataset, "Dataset (JSONL)")->required();
  sc->add_option("--split", so->split, "Gold split")->capture_default_str();
  sc->add_option("--predictions", so->predictions, "Predictions {id, label} (JSONL)")->required();
  sc->add_option("--seed", so->seed, "Seed of the uniform-random baseline")->capture_default_str();
  sc->add_option("--out", so->out, "Scores (JSON, default stdout)");
  sc->callback([so] {
    auto gold = select_split(read_dataset(so->dataset), parse_split(so->split));
    emit(so->out, to_json(score_predictions(gold, read_jsonl(so->predictions), so->seed)));
  });
}

VerificationServer* g_server = nullptr;

void add_verification(CLI::App& app) {
  struct ServeOpts {
    std::string dataset, sample, log = "votes.log", allowlist, static_dir, host = "127.0.0.1";
    int port = 8080;
  };
  auto o = std::make_shared<ServeOpts>();
  auto* serve = app.add_subcommand("serve", "Run the annotation server");
  serve->add_option("--dataset", o->dataset, "Dataset used for clean-test export (JSONL)")->required();
  serve->add_option("--sample", o->sample, "Records to annotate (JSONL, default: whole dataset)");
  serve->add_option("--log", o->log, "Append-only vote log")->capture_default_str();
  serve->add_option("--allowlist", o->allowlist, "Annotator ids allowed to vote, one per line");
  serve->add_option("--static", o->static_dir, "Directory served at /");
  serve->add_option("--host", o->host, "Bind address")->capture_default_str();
  serve->add_option("--port", o->port, "Port (0 picks a free one)")->capture_default_str();
  serve->callback([o] {
    auto dataset = read_dataset(o->dataset);
    auto sample = o->sample.empty() ? dataset : read_dataset(o->sample);
    std::optional<std::set<std::string>> allow;
    if (!o->allowlist.empty()) allow = as_set(read_list_file(o->allowlist));
    VerificationStore store(make_units(sample), o->log, allow);
    std::optional<std::string> dir;
    if (!o->static_dir.empty()) dir = o->static_dir;
    VerificationServer server(store, dataset, dir);
    int port = server.bind(o->host, o->port);
    if (port < 0) throw Error("cannot bind " + o->host + ":" + std::to_string(o->port));
    std::cerr << "listening on http://" << o->host << ":" << port << " (" << sample.size() << " units)\n";
    g_server = &server;
    std::signal(SIGINT, [](int) { g_server->stop(); });
    std::signal(SIGTERM, [](int) { g_server->stop(); });
    server.listen_after_bind();
    g_server = nullptr;
  });

  auto* verify = app.add_subcommand("verify", "Offline analysis of collected votes");
  verify->require_subcommand(1);
  struct SelectOpts {
    std::string dataset, votes, sample, out, summary;
  };
  auto s = std::make_shared<SelectOpts>();
  auto* sel = verify->add_subcommand("select", "Clean test set: at least 2 of 3 votes agree with the label");
  sel->add_option("--dataset", s->dataset, "Dataset (JSONL)")->required();
  sel->add_option("--votes", s->votes, "Vote log")->required();
  sel->add_option("--sample", s->sample, "Annotated records (default: those with votes)");
  sel->add_option("--out", s->out, "Clean-test records (JSONL)")->required();
  sel->add_option("--summary", s->summary, "Summary (JSON, default stderr)");
  sel->callback([s] {
    std::optional<std::set<std::string>> units;
    if (!s->sample.empty()) {
      units.emplace();
      for (const auto& x : read_dataset(s->sample)) units->insert(x.id);
    }
    auto r = select_clean_test(read_dataset(s->dataset), read_votes(s->votes), units);
    write_jsonl(s->out, to_json_lines(r.clean));
    if (s->summary.empty()) std::cerr << summary_json(r).dump() << "\n";
    else emit(s->summary, summary_json(r));
  });

  auto kv = std::make_shared<std::string>();
  auto* kappa = verify->add_subcommand("kappa", "Fleiss' kappa over complete units");
  kappa->add_option("--votes", *kv, "Vote log")->required();
  kappa->callback([kv] {
    auto votes = read_votes(*kv);
    std::map<std::string, std::size_t> per_unit;
    for (const auto& v : votes) ++per_unit[v.unit_id];
    std::vector<Vote> complete;
    for (const auto& v : votes)
      if (per_unit[v.unit_id] == kRequiredVotes) complete.push_back(v);
    std::cout << json{{"kappa", fleiss_kappa(complete)}, {"units", complete.size() / kRequiredVotes}}.dump() << "\n";
  });
}

void add_pipeline(CLI::App& app) {
  auto* pipe = app.add_subcommand("pipeline", "End-to-end run");
  pipe->require_subcommand(1);
  struct Opts {
    std::string fixture_dir, captions, pnli, images, out, table = data_file("lf_table.txt"),
                                                         verbs = data_file("verbs.txt");
    std::uint64_t seed = 7;
    std::size_t tuning = 30, noisy = 10;
    std::vector<std::string> exclude{"abstract"};
  };
  auto o = std::make_shared<Opts>();
  auto* run = pipe->add_subcommand("run", "Normalize, extract, query captions and images, merge, split");
  run->add_option("--fixture-dir", o->fixture_dir, "Directory written by `fixture make`");
  run->add_option("--captions", o->captions, "Raw captions (JSONL)");
  run->add_option("--pnli", o->pnli, "Bank records (JSONL)");
  run->add_option("--images", o->images, "Image fixture (JSONL)");
  run->add_option("--lf-table", o->table, "Labeling-function table")->capture_default_str();
  run->add_option("--verbs", o->verbs, "Verb list")->capture_default_str();
  run->add_option("--seed", o->seed, "Split seed")->capture_default_str();
  run->add_option("--tuning", o->tuning, "Tuning size")->capture_default_str();
  run->add_option("--noisy", o->noisy, "Noisy-test size")->capture_default_str();
  run->add_option("--exclude-sources", o->exclude, "Sources kept out of image search")->delimiter(',');
  run->add_option("--out", o->out, "Output directory")->required();
  run->callback([o] {
    if (!o->fixture_dir.empty()) {
      if (o->captions.empty()) o->captions = o->fixture_dir + "/captions.jsonl";
      if (o->pnli.empty()) o->pnli = o->fixture_dir + "/pnli.jsonl";
      if (o->images.empty()) o->images = o->fixture_dir + "/images.jsonl";
    }
    if (o->captions.empty() || o->pnli.empty() || o->images.empty())
      throw ConfigError("give --fixture-dir or all of --captions, --pnli, --images");
    PipelineInputs in{read_records<Caption>(o->captions, caption_from_json), read_jsonl(o->pnli),
                      compile_lf_table(o->table), read_list_file(o->verbs)};
    auto provider = FixtureProvider::from_file(o->images);
    PipelineConfig cfg;
    cfg.seed = o->seed;
    cfg.n_tuning = o->tuning;
    cfg.n_noisy = o->noisy;
    cfg.iq.excluded_sources = as_set(o->exclude);
    auto r = run_pipeline(in, cfg, provider);
    write_pipeline_outputs(r, o->out);
    std::cerr << to_json(r.merged).dump() << "\n";
  });

  auto* fixture = app.add_subcommand("fixture", "Synthetic inputs");
  fixture->require_subcommand(1);
  auto fo = std::make_shared<std::pair<std::string, std::uint64_t>>("", 7);
  auto* make = fixture->add_subcommand("make", "200 captions, 25 statement pairs, image fixture");
  make->add_option("--out", fo->first, "Output directory")->required();
  make->add_option("--seed", fo->second, "Generator seed")->capture_default_str();
  make->callback([fo] { write_fixture(make_fixture(fo->second), fo->first); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preconditioned visual inference dataset builder"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  add_normalize(app);
  add_extract(app);
  add_calibrate(app);
  add_report(app);
  add_embed_index(app);
  add_fuse(app);
  add_iq(app);
  add_assembly(app);
  add_verification(app);
  add_pipeline(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const pvlir::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const pvlir::LoadError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
