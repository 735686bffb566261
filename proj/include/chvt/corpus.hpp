// SPDX-License-Identifier: Apache-2.0
//
// Dialogue corpus ingestion: multi-turn dialogues become adjacent
// (context, response) pairs, which are deduplicated, split, and tokenised
// against a vocabulary built from the training split alone.
#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "chvt/errors.hpp"

namespace chvt::corpus {

using TokenId = int;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kBos = 2;
inline constexpr TokenId kEos = 3;
inline constexpr TokenId kSep = 4;
inline constexpr int kReserved = 5;

using Dialogue = std::vector<std::string>;

struct TextPair {
  std::string context;
  std::string response;
  bool operator==(const TextPair&) const = default;
};

struct DialoguePair {
  std::vector<TokenId> context_ids;
  std::vector<TokenId> response_ids;
  std::string raw_context;
  std::string raw_response;
};

/// Lowercases, splits on whitespace, and makes every ASCII punctuation
/// character its own token.
inline std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (unsigned char ch : text) {
    if (std::isspace(ch)) {
      flush();
    } else if (ch < 128 && std::ispunct(ch)) {
      flush();
      out.emplace_back(1, static_cast<char>(ch));
    } else {
      cur.push_back(ch < 128 ? static_cast<char>(std::tolower(ch)) : static_cast<char>(ch));
    }
  }
  flush();
  return out;
}

inline std::string join(const std::vector<std::string>& toks) {
  std::string s;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) s.push_back(' ');
    s += toks[i];
  }
  return s;
}

/// Canonical text form: tokens joined by single spaces.
inline std::string normalize(const std::string& text) { return join(split_tokens(text)); }

class Vocab {
 public:
  Vocab() {
    for (const char* t : {"<pad>", "<unk>", "<s>", "</s>", "<sep>"}) push(t, 0);
  }

  /// Most frequent `max_size` tokens of the given texts; ties broken
  /// lexicographically so the order is reproducible.
  static Vocab build(const std::vector<TextPair>& train, int max_size) {
    require(max_size >= 0, "build_vocab: max_size must be >= 0");
    std::unordered_map<std::string, std::int64_t> counts;
    for (const auto& p : train) {
      for (const auto& t : split_tokens(p.context)) ++counts[t];
      for (const auto& t : split_tokens(p.response)) ++counts[t];
    }
    std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (static_cast<int>(ranked.size()) > max_size) ranked.resize(static_cast<std::size_t>(max_size));
    Vocab v;
    for (auto& [tok, c] : ranked) v.push(tok, c);
    return v;
  }

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(TokenId id) const {
    require(id >= 0 && id < size(), "Vocab: id out of range");
    return tokens_[static_cast<std::size_t>(id)];
  }
  std::int64_t count(TokenId id) const { return counts_.at(static_cast<std::size_t>(id)); }
  TokenId id(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(const std::string& tok) const { return index_.count(tok) != 0; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<TokenId> tokenize(const std::string& text) const {
    const auto toks = split_tokens(text);
    require(!toks.empty(), "tokenize: empty text");
    std::vector<TokenId> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(id(t));
    return ids;
  }

  /// Space-joined tokens; pad/begin/end are dropped.
  std::string detokenize(const std::vector<TokenId>& ids) const {
    std::vector<std::string> toks;
    for (TokenId i : ids) {
      if (i == kPad || i == kBos || i == kEos) continue;
      toks.push_back(token(i));
    }
    return join(toks);
  }

  /// One `token<TAB>count` line per non-reserved entry, in id order.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write vocabulary '" + path + "'");
    for (std::size_t i = kReserved; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << counts_[i] << '\n';
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read vocabulary '" + path + "'");
    Vocab v;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw std::runtime_error("malformed vocabulary line: " + line);
      v.push(line.substr(0, tab), std::stoll(line.substr(tab + 1)));
    }
    return v;
  }

  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    for (std::size_t i = kReserved; i < tokens.size(); ++i) v.push(tokens[i], 0);
    return v;
  }

 private:
  void push(std::string tok, std::int64_t count) {
    require(index_.count(tok) == 0, "Vocab: duplicate token '" + tok + "'");
    index_.emplace(tok, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(std::move(tok));
    counts_.push_back(count);
  }

  std::vector<std::string> tokens_;
  std::vector<std::int64_t> counts_;
  std::unordered_map<std::string, TokenId> index_;
};

struct ExtractStats {
  std::size_t dialogues = 0;
  std::size_t skipped = 0;
};

/// (u1, u2, ..., uT) -> [(u1, u2), (u2, u3), ..., (u_{T-1}, u_T)].
inline std::vector<TextPair> extract_pairs(const std::vector<Dialogue>& dialogues, ExtractStats* stats = nullptr) {
  std::vector<TextPair> out;
  ExtractStats st;
  for (const auto& d : dialogues) {
    ++st.dialogues;
    if (d.size() < 2) {
      ++st.skipped;
      continue;
    }
    for (std::size_t t = 0; t + 1 < d.size(); ++t) out.push_back({d[t], d[t + 1]});
  }
  if (stats) *stats = st;
  return out;
}

struct Splits {
  std::vector<TextPair> train, valid, test;
};

/// Normalises both sides, drops exact duplicates (first occurrence wins),
/// shuffles with `seed`, and cuts train/valid/test by the given ratios.
/// Pairs whose normalised side is empty are dropped too.
inline Splits dedupe_split(const std::vector<TextPair>& pairs, double train_ratio, double valid_ratio,
                           double test_ratio, std::uint64_t seed) {
  require(train_ratio >= 0 && valid_ratio >= 0 && test_ratio >= 0, "dedupe_split: ratios must be nonnegative");
  require(std::abs(train_ratio + valid_ratio + test_ratio - 1.0) <= 1e-9, "dedupe_split: ratios must sum to 1");
  std::vector<TextPair> unique;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : pairs) {
    TextPair n{normalize(p.context), normalize(p.response)};
    if (n.context.empty() || n.response.empty()) continue;
    if (seen.emplace(n.context, n.response).second) unique.push_back(std::move(n));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(unique.begin(), unique.end(), rng);
  const std::size_t n = unique.size();
  const auto n_train = static_cast<std::size_t>(std::floor(train_ratio * static_cast<double>(n)));
  const auto n_valid = std::min(n - n_train, static_cast<std::size_t>(std::floor(valid_ratio * static_cast<double>(n))));
  Splits s;
  s.train.assign(unique.begin(), unique.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.valid.assign(unique.begin() + static_cast<std::ptrdiff_t>(n_train),
                 unique.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  s.test.assign(unique.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), unique.end());
  return s;
}

struct EncodeStats {
  std::size_t truncated_contexts = 0;
  std::size_t truncated_responses = 0;
};

/// Tokenises pairs. Contexts longer than `max_len` keep their last
/// `max_len` tokens; responses keep their first `max_len`.
inline std::vector<DialoguePair> encode_pairs(const std::vector<TextPair>& pairs, const Vocab& vocab, int max_len,
                                              EncodeStats* stats = nullptr) {
  require(max_len >= 1, "encode_pairs: max_len must be >= 1");
  std::vector<DialoguePair> out;
  EncodeStats st;
  const auto lim = static_cast<std::size_t>(max_len);
  for (const auto& p : pairs) {
    DialoguePair d{vocab.tokenize(p.context), vocab.tokenize(p.response), p.context, p.response};
    if (d.context_ids.size() > lim) {
      d.context_ids.erase(d.context_ids.begin(), d.context_ids.end() - static_cast<std::ptrdiff_t>(lim));
      ++st.truncated_contexts;
    }
    if (d.response_ids.size() > lim) {
      d.response_ids.resize(lim);
      ++st.truncated_responses;
    }
    out.push_back(std::move(d));
  }
  if (stats) *stats = st;
  return out;
}

namespace detail {
inline Dialogue dialogue_from_json(const nlohmann::json& j) {
  const nlohmann::json* arr = &j;
  if (j.is_object()) {
    for (const char* key : {"utterances", "dialogue", "turns"}) {
      if (j.contains(key)) {
        arr = &j.at(key);
        break;
      }
    }
  }
  if (!arr->is_array()) throw std::runtime_error("dialogue record must be a list of utterance strings");
  Dialogue d;
  for (const auto& u : *arr) d.push_back(u.get<std::string>());
  return d;
}
}  // namespace detail

/// Reads one dialogue per line. A line starting with '[' or '{' is a JSON
/// record (a list of utterances, or an object holding one under
/// "utterances"); any other line is tab-separated utterances.
inline std::vector<Dialogue> read_dialogues(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dialogues from '" + path + "'");
  std::vector<Dialogue> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == '[' || line[first] == '{') {
      out.push_back(detail::dialogue_from_json(nlohmann::json::parse(line)));
    } else {
      Dialogue d;
      std::string u;
      std::istringstream ls(line);
      while (std::getline(ls, u, '\t')) d.push_back(u);
      out.push_back(std::move(d));
    }
  }
  return out;
}

inline void write_pairs(const std::string& path, const std::vector<TextPair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (const auto& p : pairs) out << p.context << '\t' << p.response << '\n';
}

/// Reads `context<TAB>response` lines.
inline std::vector<TextPair> read_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read pairs from '" + path + "'");
  std::vector<TextPair> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error("pair line without a tab: " + line);
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

}  // namespace chvt::corpus
