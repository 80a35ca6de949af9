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

// Human verification: question units, a vote store backed by an append-only
// log, clean-test selection, Fleiss' kappa and the annotator HTTP API.

#ifndef PVLIR_VERIFICATION_HPP
#define PVLIR_VERIFICATION_HPP

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "httplib.h"
#include "pvlir/assembly.hpp"
#include "pvlir/common.hpp"

namespace pvlir {

inline constexpr std::size_t kRequiredVotes = 3;

enum class Choice { kTrue, kFalse, kNotSure };

inline std::string_view to_string(Choice c) {
  switch (c) {
    case Choice::kTrue: return "true";
    case Choice::kFalse: return "false";
    case Choice::kNotSure: return "not_sure";
  }
  return "?";
}

inline Choice parse_choice(std::string_view s) {
  if (s == "true") return Choice::kTrue;
  if (s == "false") return Choice::kFalse;
  if (s == "not_sure") return Choice::kNotSure;
  throw LoadError("invalid choice '" + std::string(s) + "'");
}

struct QuestionUnit {
  std::string unit_id;
  std::string prompt;
  std::string image_ref;
  Label label = Label::kAllow;  // weak label; never sent to annotators
};

inline json to_public_json(const QuestionUnit& u) {
  return json{{"unit_id", u.unit_id}, {"prompt", u.prompt}, {"image_ref", u.image_ref}};
}

inline std::string prompt_for(const PvliInstance& x) {
  return "Given what the image shows, is the following plausible: \"" + x.hypothesis_text + "\"?";
}

inline std::vector<QuestionUnit> make_units(const std::vector<PvliInstance>& sample) {
  std::vector<QuestionUnit> units;
  std::set<std::string> ids;
  for (const auto& x : sample) {
    if (!ids.insert(x.id).second) throw ContractError("make_units: duplicate instance id '" + x.id + "'");
    units.push_back({x.id, prompt_for(x), x.premise_image_ref, x.label});
  }
  return units;
}

struct Vote {
  std::string unit_id;
  std::string annotator_id;
  Choice choice = Choice::kNotSure;
  bool invalid_flag = false;
  std::int64_t timestamp = 0;  // ms since epoch
};

inline json to_json(const Vote& v) {
  return json{{"unit_id", v.unit_id},
              {"annotator_id", v.annotator_id},
              {"choice", to_string(v.choice)},
              {"invalid_flag", v.invalid_flag},
              {"timestamp", v.timestamp}};
}

// A flagged vote may omit the choice; it is then recorded as not_sure.
inline Vote vote_from_json(const json& j) {
  Vote v;
  v.unit_id = j.at("unit_id").get<std::string>();
  v.annotator_id = j.at("annotator_id").get<std::string>();
  v.invalid_flag = j.value("invalid_flag", false);
  if (j.contains("choice") && !j.at("choice").is_null())
    v.choice = parse_choice(j.at("choice").get<std::string>());
  else if (!v.invalid_flag)
    throw LoadError("vote without a choice must set invalid_flag");
  v.timestamp = j.value("timestamp", std::int64_t{0});
  if (v.unit_id.empty() || v.annotator_id.empty()) throw LoadError("vote needs unit_id and annotator_id");
  return v;
}

// ---------------------------------------------------------------------------
// Durable log

class VoteLog {
 public:
  // Replays complete lines and drops a torn final line, truncating the file
  // so later appends start on a fresh line.
  explicit VoteLog(std::string path) : path_(std::move(path)) {
    fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("cannot open vote log " + path_);
    std::string bytes = read_text(path_);
    auto end = bytes.rfind('\n');
    std::size_t keep = end == std::string::npos ? 0 : end + 1;
    if (keep != bytes.size() && ::ftruncate(fd_, static_cast<off_t>(keep)) != 0)
      throw Error("cannot truncate torn tail of " + path_);
    std::size_t lineno = 0, pos = 0;
    while (pos < keep) {
      auto nl = bytes.find('\n', pos);
      auto line = bytes.substr(pos, nl - pos);
      pos = nl + 1;
      ++lineno;
      if (trim(line).empty()) continue;
      try {
        replayed_.push_back(vote_from_json(json::parse(line)));
      } catch (const std::exception& e) {
        throw LoadError(path_ + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }
  VoteLog(const VoteLog&) = delete;
  VoteLog& operator=(const VoteLog&) = delete;
  ~VoteLog() {
    if (fd_ >= 0) ::close(fd_);
  }

  const std::vector<Vote>& replayed() const { return replayed_; }

  void append(const Vote& v) {
    std::string line = to_json(v).dump() + "\n";
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
      auto n = ::write(fd_, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error("vote log write failed: " + path_);
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) throw Error("vote log fsync failed: " + path_);
  }

 private:
  std::string path_;
  int fd_ = -1;
  std::vector<Vote> replayed_;
};

// Read-only view of a log: complete lines only.
inline std::vector<Vote> read_votes(const std::string& path) {
  std::string bytes = read_text(path);
  auto end = bytes.rfind('\n');
  bytes.resize(end == std::string::npos ? 0 : end + 1);
  std::vector<Vote> votes;
  std::istringstream in(bytes);
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      votes.push_back(vote_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw LoadError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return votes;
}

// ---------------------------------------------------------------------------
// Store

enum class VoteStatus { kAccepted, kDuplicate, kUnitClosed, kUnknownUnit, kUnknownAnnotator };

inline std::string_view to_string(VoteStatus s) {
  switch (s) {
    case VoteStatus::kAccepted: return "accepted";
    case VoteStatus::kDuplicate: return "duplicate";
    case VoteStatus::kUnitClosed: return "unit_closed";
    case VoteStatus::kUnknownUnit: return "unknown_unit";
    case VoteStatus::kUnknownAnnotator: return "unknown_annotator";
  }
  return "?";
}

struct Progress {
  std::size_t units = 0, complete = 0, votes = 0;
};

inline json to_json(const Progress& p) {
  return json{{"units", p.units},
              {"complete", p.complete},
              {"open", p.units - p.complete},
              {"votes", p.votes},
              {"required_votes", kRequiredVotes}};
}

struct NextResult {
  std::optional<QuestionUnit> unit;
  bool unknown_annotator = false;
};

// All mutation goes through one mutex. Persistent state is the vote list;
// leases are in-memory reservations that keep more than three annotators
// from holding one unit, and expire.
class VerificationStore {
 public:
  using Clock = std::chrono::steady_clock;

  VerificationStore(std::vector<QuestionUnit> units, std::optional<std::string> log_path = std::nullopt,
                    std::optional<std::set<std::string>> allowlist = std::nullopt,
                    Clock::duration lease = std::chrono::minutes(10))
      : units_(std::move(units)), allowlist_(std::move(allowlist)), lease_(lease) {
    for (std::size_t i = 0; i < units_.size(); ++i) {
      if (!index_.emplace(units_[i].unit_id, i).second)
        throw ContractError("duplicate unit id '" + units_[i].unit_id + "'");
    }
    votes_.resize(units_.size());
    if (log_path) {
      log_ = std::make_unique<VoteLog>(*log_path);
      for (const auto& v : log_->replayed()) apply(v);
    }
  }

  bool allowed(const std::string& annotator) const {
    return !annotator.empty() && (!allowlist_ || allowlist_->count(annotator));
  }

  // An open unit the annotator has not voted on, preferring the most votes,
  // then unit order. A unit with an unexpired lease held by the annotator is
  // returned again.
  NextResult next_unit(const std::string& annotator, Clock::time_point now = Clock::now()) {
    std::lock_guard lock(mu_);
    if (!allowed(annotator)) return {std::nullopt, true};
    expire(now);
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < units_.size(); ++i) {
      const auto& held = leases_[i];
      if (held.count(annotator)) return {units_[i], false};
      if (votes_[i].size() >= kRequiredVotes || has_voted(i, annotator)) continue;
      if (votes_[i].size() + held.size() >= kRequiredVotes) continue;
      if (!best || votes_[i].size() > votes_[*best].size()) best = i;
    }
    if (!best) return {};
    leases_[*best][annotator] = now + lease_;
    return {units_[*best], false};
  }

  // The vote reaches the log before memory, so an acknowledged vote always
  // survives a restart.
  VoteStatus record_vote(Vote v) {
    std::lock_guard lock(mu_);
    auto status = check(v);
    if (status != VoteStatus::kAccepted) return status;
    if (log_) log_->append(v);
    apply(v);
    return status;
  }

  Progress progress() const {
    std::lock_guard lock(mu_);
    Progress p{units_.size(), 0, 0};
    for (const auto& vs : votes_) {
      p.votes += vs.size();
      if (vs.size() >= kRequiredVotes) ++p.complete;
    }
    return p;
  }

  std::vector<Vote> votes() const {
    std::lock_guard lock(mu_);
    std::vector<Vote> all;
    for (const auto& vs : votes_) all.insert(all.end(), vs.begin(), vs.end());
    return all;
  }

  const std::vector<QuestionUnit>& units() const { return units_; }

  // Persistent state, for comparing a replayed store with a live one.
  json state_json() const {
    std::lock_guard lock(mu_);
    json j = json::object();
    for (std::size_t i = 0; i < units_.size(); ++i) {
      json vs = json::array();
      for (const auto& v : votes_[i]) vs.push_back(to_json(v));
      j[units_[i].unit_id] = vs;
    }
    return j;
  }

 private:
  bool has_voted(std::size_t i, const std::string& annotator) const {
    return std::any_of(votes_[i].begin(), votes_[i].end(),
                       [&](const Vote& v) { return v.annotator_id == annotator; });
  }

  VoteStatus check(const Vote& v, bool enforce_allowlist = true) const {
    auto it = index_.find(v.unit_id);
    if (it == index_.end()) return VoteStatus::kUnknownUnit;
    if (enforce_allowlist && !allowed(v.annotator_id)) return VoteStatus::kUnknownAnnotator;
    if (has_voted(it->second, v.annotator_id)) return VoteStatus::kDuplicate;
    if (votes_[it->second].size() >= kRequiredVotes) return VoteStatus::kUnitClosed;
    return VoteStatus::kAccepted;
  }

  void apply(Vote v) {
    // Replay applies the same rules, except that a later allowlist change
    // does not erase votes already on record.
    if (check(v, false) != VoteStatus::kAccepted) return;
    auto i = index_.at(v.unit_id);
    leases_[i].erase(v.annotator_id);
    votes_[i].push_back(std::move(v));
  }

  void expire(Clock::time_point now) {
    for (auto& [i, held] : leases_)
      for (auto it = held.begin(); it != held.end();) it = it->second <= now ? held.erase(it) : std::next(it);
  }

  std::vector<QuestionUnit> units_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<Vote>> votes_;
  std::map<std::size_t, std::map<std::string, Clock::time_point>> leases_;
  std::optional<std::set<std::string>> allowlist_;
  Clock::duration lease_;
  std::unique_ptr<VoteLog> log_;
  mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Clean test selection

inline bool vote_is_correct(const Vote& v, Label label) {
  if (v.invalid_flag) return false;
  return (label == Label::kAllow && v.choice == Choice::kTrue) ||
         (label == Label::kPrevent && v.choice == Choice::kFalse);
}

struct CleanTestResult {
  std::vector<PvliInstance> clean;  // split = clean_test
  std::vector<std::string> incomplete;
  std::size_t allow = 0;
};

inline json summary_json(const CleanTestResult& r) {
  return json{{"size", r.clean.size()}, {"allow", r.allow}, {"incomplete", r.incomplete}};
}

// Instances are considered when they appear in `units` (or, without units,
// when they received at least one vote). Fewer than three votes means the
// unit is incomplete: excluded and listed.
inline CleanTestResult select_clean_test(const std::vector<PvliInstance>& dataset, const std::vector<Vote>& votes,
                                         const std::optional<std::set<std::string>>& units = std::nullopt) {
  std::map<std::string, std::vector<const Vote*>> by_unit;
  for (const auto& v : votes) by_unit[v.unit_id].push_back(&v);
  std::set<std::string> known;
  for (const auto& x : dataset) known.insert(x.id);
  for (const auto& [id, vs] : by_unit)
    if (!known.count(id)) throw ContractError("select_clean_test: votes reference unknown instance '" + id + "'");

  CleanTestResult r;
  for (const auto& x : dataset) {
    bool in_scope = units ? units->count(x.id) > 0 : by_unit.count(x.id) > 0;
    if (!in_scope) continue;
    auto it = by_unit.find(x.id);
    std::size_t n = it == by_unit.end() ? 0 : it->second.size();
    if (n < kRequiredVotes) {
      r.incomplete.push_back(x.id);
      continue;
    }
    std::size_t correct = 0;
    for (const auto* v : it->second) correct += vote_is_correct(*v, x.label);
    if (correct < 2) continue;
    r.clean.push_back(x);
    r.clean.back().split = Split::kCleanTest;
    if (x.label == Label::kAllow) ++r.allow;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Fleiss' kappa over {true, false, not_sure}; a flagged vote counts as
// not_sure.

inline std::size_t kappa_category(const Vote& v) {
  return v.invalid_flag ? 2 : static_cast<std::size_t>(v.choice);
}

// counts[i][j]: raters putting item i in category j; every row sums to n.
inline double fleiss_kappa(const std::vector<std::vector<std::size_t>>& counts) {
  if (counts.empty()) throw ContractError("fleiss_kappa: no units");
  const std::size_t k = counts[0].size();
  std::size_t n = 0;
  for (auto c : counts[0]) n += c;
  if (n < 2) throw ContractError("fleiss_kappa: need at least two raters per unit");
  std::vector<double> p(k, 0.0);
  double p_bar = 0.0;
  for (const auto& row : counts) {
    if (row.size() != k) throw ContractError("fleiss_kappa: ragged category counts");
    std::size_t sum = 0, sq = 0;
    for (std::size_t j = 0; j < k; ++j) {
      sum += row[j];
      sq += row[j] * row[j];
      p[j] += static_cast<double>(row[j]);
    }
    if (sum != n) throw ContractError("fleiss_kappa: every unit needs the same number of votes");
    p_bar += static_cast<double>(sq - n) / static_cast<double>(n * (n - 1));
  }
  const double items = static_cast<double>(counts.size());
  p_bar /= items;
  double pe = 0.0;
  for (auto& pj : p) {
    pj /= items * static_cast<double>(n);
    pe += pj * pj;
  }
  if (pe >= 1.0 - 1e-15) return 1.0;  // a single category overall: P̄ is 1 too
  return (p_bar - pe) / (1.0 - pe);
}

inline double fleiss_kappa(const std::vector<Vote>& votes) {
  std::map<std::string, std::vector<std::size_t>> rows;
  for (const auto& v : votes) {
    auto& row = rows[v.unit_id];
    row.resize(3, 0);
    ++row[kappa_category(v)];
  }
  std::vector<std::vector<std::size_t>> counts;
  for (auto& [id, row] : rows) {
    std::size_t n = row[0] + row[1] + row[2];
    if (n != kRequiredVotes)
      throw ContractError("fleiss_kappa: unit '" + id + "' has " + std::to_string(n) + " votes, expected 3");
    counts.push_back(row);
  }
  return fleiss_kappa(counts);
}

// ---------------------------------------------------------------------------
// HTTP API

class VerificationServer {
 public:
  VerificationServer(VerificationStore& store, std::vector<PvliInstance> dataset,
                     std::optional<std::string> static_dir = std::nullopt)
      : store_(store), dataset_(std::move(dataset)) {
    server_.Get("/api/next", [this](const httplib::Request& req, httplib::Response& res) {
      auto annotator = req.get_param_value("annotator");
      if (annotator.empty()) return error(res, 400, "missing annotator");
      auto next = store_.next_unit(annotator);
      if (next.unknown_annotator) return error(res, 403, "unknown annotator");
      if (!next.unit) {
        res.status = 204;
        return;
      }
      res.set_content(to_public_json(*next.unit).dump(), "application/json");
    });
    server_.Post("/api/vote", [this](const httplib::Request& req, httplib::Response& res) {
      Vote v;
      try {
        v = vote_from_json(json::parse(req.body));
      } catch (const std::exception& e) {
        return error(res, 400, e.what());
      }
      if (v.timestamp == 0)
        v.timestamp = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::system_clock::now().time_since_epoch())
                          .count();
      auto status = store_.record_vote(v);
      switch (status) {
        case VoteStatus::kAccepted: break;
        case VoteStatus::kDuplicate:
        case VoteStatus::kUnitClosed: return error(res, 409, std::string(to_string(status)));
        case VoteStatus::kUnknownUnit: return error(res, 404, "unknown unit");
        case VoteStatus::kUnknownAnnotator: return error(res, 403, "unknown annotator");
      }
      res.set_content(json{{"status", "recorded"}}.dump(), "application/json");
    });
    server_.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(to_json(store_.progress()).dump(), "application/json");
    });
    server_.Get("/api/export/clean-test", [this](const httplib::Request&, httplib::Response& res) {
      std::set<std::string> ids;
      for (const auto& u : store_.units()) ids.insert(u.unit_id);
      auto r = select_clean_test(dataset_, store_.votes(), ids);
      res.set_content(dump_jsonl(to_json_lines(r.clean)), "application/x-ndjson");
    });
    if (static_dir && !server_.set_mount_point("/", *static_dir))
      throw ConfigError("static directory not found: " + *static_dir);
  }

  httplib::Server& http() { return server_; }

  int bind(const std::string& host, int port) {
    if (port == 0) return server_.bind_to_any_port(host);
    return server_.bind_to_port(host, port) ? port : -1;
  }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  static void error(httplib::Response& res, int status, const std::string& message) {
    res.status = status;
    res.set_content(json{{"error", message}}.dump(), "application/json");
  }

  VerificationStore& store_;
  std::vector<PvliInstance> dataset_;
  httplib::Server server_;
};

}  // namespace pvlir

#endif  // PVLIR_VERIFICATION_HPP
