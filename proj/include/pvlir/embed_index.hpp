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

// Exact nearest-neighbour search over precomputed embeddings, one index per
// encoder space, plus a feature-hashing embedder for offline use.

#ifndef PVLIR_EMBED_INDEX_HPP
#define PVLIR_EMBED_INDEX_HPP

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "pvlir/common.hpp"

namespace pvlir {

enum class Metric { kCosineDistance, kNegativeDot };

inline std::string_view to_string(Metric m) {
  return m == Metric::kCosineDistance ? "cosine-distance" : "negative-dot";
}

inline Metric parse_metric(std::string_view s) {
  if (s == "cosine-distance") return Metric::kCosineDistance;
  if (s == "negative-dot") return Metric::kNegativeDot;
  throw ConfigError("unknown metric '" + std::string(s) + "'");
}

struct EncoderSpace {
  std::string model_id;
  std::size_t dim = 0;
  Metric metric = Metric::kCosineDistance;
};

struct VectorRecord {
  std::string id;
  std::vector<float> values;
};

struct RankEntry {
  std::string caption_id;
  double distance = 0.0;
  bool operator==(const RankEntry&) const = default;
};

// Closest-first; equal distances ordered by ascending id.
struct Ranking {
  std::string query_id;
  std::string model_id;
  std::vector<RankEntry> entries;
};

inline json to_json(const Ranking& r) {
  json entries = json::array();
  for (const auto& e : r.entries) entries.push_back({e.caption_id, e.distance});
  return json{{"query_id", r.query_id}, {"model_id", r.model_id}, {"entries", entries}};
}

inline Ranking ranking_from_json(const json& j) {
  Ranking r;
  r.query_id = j.at("query_id").get<std::string>();
  r.model_id = j.at("model_id").get<std::string>();
  for (const auto& e : j.at("entries")) r.entries.push_back({e.at(0).get<std::string>(), e.at(1).get<double>()});
  return r;
}

// ---------------------------------------------------------------------------
// Vector file: a header line "model_id<TAB>dim<TAB>metric", then one line per
// vector "id<TAB>base64(little-endian float32[dim])".

namespace detail {

inline std::string base64_encode(const std::string& bytes) {
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<std::string::const_iterator, 6, 8>>;
  std::string out(It(bytes.begin()), It(bytes.end()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

inline std::string base64_decode(std::string text) {
  using namespace boost::archive::iterators;
  using It = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
  std::size_t pad = 0;
  while (!text.empty() && text.back() == '=') {
    text.pop_back();
    ++pad;
  }
  if (pad > 2) throw LoadError("invalid base64 padding");
  for (char c : text)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '+' && c != '/')
      throw LoadError("invalid base64 character");
  std::string out(It(text.begin()), It(text.end()));
  // Trailing partial byte produced by the 6-to-8 regrouping.
  out.resize(text.size() * 6 / 8);
  return out;
}

inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big)
    v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  return v;
}

}  // namespace detail

inline std::string encode_vector(std::span<const float> values) {
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto v = detail::to_little_endian(std::bit_cast<std::uint32_t>(values[i]));
    std::memcpy(bytes.data() + 4 * i, &v, 4);
  }
  return detail::base64_encode(bytes);
}

inline std::vector<float> decode_vector(const std::string& text) {
  auto bytes = detail::base64_decode(text);
  if (bytes.size() % 4) throw LoadError("vector payload is not a whole number of float32 values");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + 4 * i, 4);
    out[i] = std::bit_cast<float>(detail::to_little_endian(v));
  }
  return out;
}

inline std::string format_vector_file(const EncoderSpace& space, const std::vector<VectorRecord>& records) {
  std::string out = space.model_id + "\t" + std::to_string(space.dim) + "\t" + std::string(to_string(space.metric)) + "\n";
  for (const auto& r : records) out += r.id + "\t" + encode_vector(r.values) + "\n";
  return out;
}

inline void validate_record(const EncoderSpace& space, const VectorRecord& r) {
  if (r.values.size() != space.dim)
    throw LoadError("vector '" + r.id + "' has " + std::to_string(r.values.size()) + " components, expected " +
                    std::to_string(space.dim));
  for (float v : r.values)
    if (!std::isfinite(v)) throw LoadError("vector '" + r.id + "' has a non-finite component");
}

struct VectorFile {
  EncoderSpace space;
  std::vector<VectorRecord> records;
};

inline VectorFile parse_vector_file(std::istream& in) {
  VectorFile f;
  std::string line;
  if (!std::getline(in, line)) throw LoadError("vector file is empty");
  auto header = split_tokens(line);
  if (header.size() != 3) throw LoadError("vector file header must be: model_id dim metric");
  f.space.model_id = header[0];
  try {
    f.space.dim = std::stoul(header[1]);
  } catch (const std::exception&) {
    throw LoadError("invalid dimension '" + header[1] + "'");
  }
  if (f.space.dim == 0) throw LoadError("dimension must be positive");
  f.space.metric = parse_metric(header[2]);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw LoadError("malformed vector line: " + line.substr(0, 40));
    VectorRecord r{line.substr(0, tab), {}};
    try {
      r.values = decode_vector(trim(line.substr(tab + 1)));
    } catch (const LoadError& e) {
      throw LoadError("vector '" + r.id + "': " + e.what());
    }
    validate_record(f.space, r);
    f.records.push_back(std::move(r));
  }
  return f;
}

inline VectorFile read_vector_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path);
  return parse_vector_file(in);
}

// ---------------------------------------------------------------------------
// Index

class VectorIndex {
 public:
  VectorIndex(EncoderSpace space, const std::vector<VectorRecord>& records) : space_(std::move(space)) {
    if (space_.dim == 0) throw LoadError("dimension must be positive");
    ids_.reserve(records.size());
    data_.reserve(records.size() * space_.dim);
    for (const auto& r : records) {
      validate_record(space_, r);
      std::vector<double> v(r.values.begin(), r.values.end());
      if (space_.metric == Metric::kCosineDistance && !normalize(v))
        throw LoadError("vector '" + r.id + "' has zero norm in a cosine space");
      ids_.push_back(r.id);
      data_.insert(data_.end(), v.begin(), v.end());
    }
  }

  const EncoderSpace& space() const { return space_; }
  std::size_t size() const { return ids_.size(); }

  // Exact top-k under the space metric.
  Ranking query(std::string query_id, std::span<const float> q, std::size_t k) const {
    if (k == 0) throw ContractError("query: k must be at least 1");
    if (q.size() != space_.dim)
      throw ContractError("query '" + query_id + "' has dimension " + std::to_string(q.size()) + ", expected " +
                          std::to_string(space_.dim));
    std::vector<double> qv(q.begin(), q.end());
    if (space_.metric == Metric::kCosineDistance && !normalize(qv))
      throw ContractError("query '" + query_id + "' has zero norm");

    std::vector<RankEntry> all(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      const double* row = data_.data() + i * space_.dim;
      double dot = 0.0;
      for (std::size_t d = 0; d < space_.dim; ++d) dot += row[d] * qv[d];
      double dist = space_.metric == Metric::kCosineDistance ? std::clamp(1.0 - dot, 0.0, 2.0) : -dot;
      all[i] = {ids_[i], dist};
    }
    auto n = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), closer);
    all.resize(n);
    return Ranking{std::move(query_id), space_.model_id, std::move(all)};
  }

  static bool closer(const RankEntry& a, const RankEntry& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.caption_id < b.caption_id;
  }

 private:
  static bool normalize(std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return false;
    for (double& x : v) x /= norm;
    return true;
  }

  EncoderSpace space_;
  std::vector<std::string> ids_;
  std::vector<double> data_;  // row-major, unit rows in cosine spaces
};

inline VectorIndex build_space(const VectorFile& file) { return VectorIndex(file.space, file.records); }

// ---------------------------------------------------------------------------
// Feature hashing: word or character n-grams hashed into dim signed buckets,
// then l2-normalized.

struct HashingEmbedder {
  enum class Features { kWords, kChars };

  std::string model_id;
  std::size_t dim = 256;
  Features features = Features::kWords;
  std::size_t min_n = 1;
  std::size_t max_n = 2;
  std::uint64_t seed = 0;

  EncoderSpace space() const { return {model_id, dim, Metric::kCosineDistance}; }

  std::vector<float> embed(std::string_view text) const {
    std::vector<double> acc(dim, 0.0);
    auto add = [&](std::string_view feature) {
      auto h = fnv1a64(feature, seed);
      double sign = (h >> 63) ? -1.0 : 1.0;
      acc[h % dim] += sign;
    };
    auto lower = to_lower(text);
    if (features == Features::kWords) {
      std::vector<std::string> words;
      std::string cur;
      for (char c : lower) {
        if (std::isalnum(static_cast<unsigned char>(c))) cur += c;
        else if (!cur.empty()) words.push_back(std::exchange(cur, {}));
      }
      if (!cur.empty()) words.push_back(cur);
      for (std::size_t n = min_n; n <= max_n; ++n)
        for (std::size_t i = 0; i + n <= words.size(); ++i) {
          std::string f = words[i];
          for (std::size_t j = 1; j < n; ++j) f += ' ' + words[i + j];
          add(f);
        }
    } else {
      auto padded = " " + collapse_whitespace(lower) + " ";
      for (std::size_t n = min_n; n <= max_n; ++n)
        for (std::size_t i = 0; i + n <= padded.size(); ++i) add(std::string_view(padded).substr(i, n));
    }
    double norm = 0.0;
    for (double x : acc) norm += x * x;
    norm = std::sqrt(norm);
    std::vector<float> out(dim, 0.0f);
    if (norm > 0)
      for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(acc[i] / norm);
    return out;
  }
};

// Three spaces used by the offline pipeline in place of sentence encoders.
inline std::vector<HashingEmbedder> default_hashing_spaces() {
  using F = HashingEmbedder::Features;
  return {
      {"hash-word12", 256, F::kWords, 1, 2, 11},
      {"hash-char3", 256, F::kChars, 3, 3, 23},
      {"hash-char45", 256, F::kChars, 4, 5, 37},
  };
}

}  // namespace pvlir

#endif  // PVLIR_EMBED_INDEX_HPP
