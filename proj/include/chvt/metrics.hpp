// SPDX-License-Identifier: Apache-2.0
//
// Automatic response metrics: perplexity, Distinct-n, corpus BLEU-n, mean
// length, embedding-average relevance (EA) and coherence (Cohe).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "chvt/corpus.hpp"
#include "chvt/errors.hpp"
#include "chvt/inference.hpp"
#include "chvt/model.hpp"

namespace chvt::metrics {

using Sentence = std::vector<std::string>;

/// exp(total NLL / total target tokens), counting the end token. z_s is the
/// posterior mean and each pair is scored on its best branch.
inline double perplexity(const ChvtModel& model, const std::vector<corpus::DialoguePair>& pairs) {
  require(!pairs.empty(), "perplexity: empty evaluation set");
  double nll = 0.0;
  std::int64_t tokens = 0;
  for (const auto& p : pairs) {
    const auto losses = branch_nll_at_posterior_mean(model, p);
    nll += *std::min_element(losses.begin(), losses.end());
    tokens += static_cast<std::int64_t>(std::min<std::size_t>(p.response_ids.size(),
                                                              static_cast<std::size_t>(model.config().max_len))) +
              1;
  }
  return std::exp(nll / static_cast<double>(tokens));
}

/// Unique n-grams over total n-grams across all responses; 0 with no n-grams.
inline double distinct_n(const std::vector<Sentence>& responses, int n) {
  require(n >= 1, "distinct_n: n must be >= 1");
  std::set<std::vector<std::string>> unique;
  std::int64_t total = 0;
  for (const auto& r : responses) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= r.size(); ++i) {
      unique.emplace(r.begin() + static_cast<std::ptrdiff_t>(i), r.begin() + static_cast<std::ptrdiff_t>(i) + n);
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(total);
}

struct BleuStats {
  std::vector<std::int64_t> matches;  // clipped, per order
  std::vector<std::int64_t> totals;   // hypothesis n-grams, per order
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;
};

inline BleuStats bleu_stats(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs, int max_n) {
  require(hyps.size() == refs.size(), "bleu: one reference per hypothesis required");
  require(max_n >= 1, "bleu: n must be >= 1");
  BleuStats s;
  s.matches.assign(static_cast<std::size_t>(max_n), 0);
  s.totals.assign(static_cast<std::size_t>(max_n), 0);
  for (std::size_t k = 0; k < hyps.size(); ++k) {
    const auto& h = hyps[k];
    const auto& r = refs[k];
    s.hyp_len += static_cast<std::int64_t>(h.size());
    s.ref_len += static_cast<std::int64_t>(r.size());
    for (int n = 1; n <= max_n; ++n) {
      std::map<std::vector<std::string>, int> ref_counts, hyp_counts;
      for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= r.size(); ++i) {
        ++ref_counts[{r.begin() + static_cast<std::ptrdiff_t>(i), r.begin() + static_cast<std::ptrdiff_t>(i) + n}];
      }
      for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= h.size(); ++i) {
        ++hyp_counts[{h.begin() + static_cast<std::ptrdiff_t>(i), h.begin() + static_cast<std::ptrdiff_t>(i) + n}];
      }
      for (const auto& [gram, c] : hyp_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) s.matches[static_cast<std::size_t>(n - 1)] += std::min(c, it->second);
        s.totals[static_cast<std::size_t>(n - 1)] += c;
      }
    }
  }
  return s;
}

/// Corpus BLEU-n: brevity penalty times the geometric mean of modified
/// precisions for orders 1..n. Orders >= 2 use add-one smoothing.
inline double bleu_n(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs, int n) {
  const BleuStats s = bleu_stats(hyps, refs, n);
  if (s.hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    const double smooth = k == 0 ? 0.0 : 1.0;
    const double num = static_cast<double>(s.matches[static_cast<std::size_t>(k)]) + smooth;
    const double den = static_cast<double>(s.totals[static_cast<std::size_t>(k)]) + smooth;
    if (num <= 0.0 || den <= 0.0) return 0.0;
    log_sum += std::log(num / den);
  }
  const double bp = s.hyp_len >= s.ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(s.ref_len) / static_cast<double>(s.hyp_len));
  return bp * std::exp(log_sum / static_cast<double>(n));
}

/// Token -> vector lookup for embedding-average metrics.
class EmbeddingSource {
 public:
  using Lookup = std::function<std::optional<Vector>(const std::string&)>;

  explicit EmbeddingSource(Lookup lookup) : lookup_(std::move(lookup)) {}

  /// Rows of the model's encoder token-embedding table; unknown tokens are
  /// skipped.
  static EmbeddingSource from_model(const ChvtModel& model, const corpus::Vocab& vocab) {
    const Matrix* table = &model.token_embeddings();
    const corpus::Vocab* v = &vocab;
    return EmbeddingSource([table, v](const std::string& tok) -> std::optional<Vector> {
      if (!v->contains(tok)) return std::nullopt;
      return table->row(v->id(tok)).transpose();
    });
  }

  static EmbeddingSource from_map(std::unordered_map<std::string, Vector> vectors) {
    auto shared = std::make_shared<std::unordered_map<std::string, Vector>>(std::move(vectors));
    return EmbeddingSource([shared](const std::string& tok) -> std::optional<Vector> {
      auto it = shared->find(tok);
      if (it == shared->end()) return std::nullopt;
      return it->second;
    });
  }

  /// Whitespace-separated text vectors: `token v1 v2 ... vd` per line.
  static EmbeddingSource from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read embedding vectors '" + path + "'");
    std::unordered_map<std::string, Vector> vectors;
    std::string line;
    Eigen::Index dim = -1;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::string tok;
      if (!(ls >> tok)) continue;
      std::vector<double> vals;
      for (double x; ls >> x;) vals.push_back(x);
      if (dim < 0) dim = static_cast<Eigen::Index>(vals.size());
      if (static_cast<Eigen::Index>(vals.size()) != dim || dim == 0) {
        throw std::runtime_error("embedding file: inconsistent dimension at token '" + tok + "'");
      }
      vectors[tok] = Eigen::Map<Vector>(vals.data(), dim);
    }
    return from_map(std::move(vectors));
  }

  std::optional<Vector> operator()(const std::string& tok) const { return lookup_(tok); }

  /// Mean of the known token vectors; nullopt when none are known.
  std::optional<Vector> average(const Sentence& s) const {
    std::optional<Vector> acc;
    int n = 0;
    for (const auto& t : s) {
      auto v = lookup_(t);
      if (!v) continue;
      if (!acc) acc = Vector::Zero(v->size());
      *acc += *v;
      ++n;
    }
    if (acc) *acc /= static_cast<double>(n);
    return acc;
  }

 private:
  Lookup lookup_;
};

inline std::optional<double> cosine(const Vector& a, const Vector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return a.dot(b) / (na * nb);
}

struct EaCohe {
  double ea = 0.0;
  double cohe = 0.0;
  std::int64_t excluded_ea = 0;
  std::int64_t excluded_cohe = 0;
};

/// EA: mean cosine(embed-avg(response), embed-avg(reference)).
/// Cohe: mean cosine(embed-avg(response), embed-avg(context)).
/// Sentences with no known token (or a zero average) are excluded and
/// counted.
inline EaCohe ea_cohe(const std::vector<Sentence>& contexts, const std::vector<Sentence>& responses,
                      const std::vector<Sentence>& references, const EmbeddingSource& source) {
  require(contexts.size() == responses.size() && references.size() == responses.size(),
          "ea_cohe: contexts, responses and references must align");
  EaCohe out;
  double ea_sum = 0.0, cohe_sum = 0.0;
  std::int64_t ea_n = 0, cohe_n = 0;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const auto r = source.average(responses[i]);
    const auto ref = source.average(references[i]);
    const auto ctx = source.average(contexts[i]);
    std::optional<double> e = (r && ref) ? cosine(*r, *ref) : std::nullopt;
    std::optional<double> c = (r && ctx) ? cosine(*r, *ctx) : std::nullopt;
    if (e) {
      ea_sum += *e;
      ++ea_n;
    } else {
      ++out.excluded_ea;
    }
    if (c) {
      cohe_sum += *c;
      ++cohe_n;
    } else {
      ++out.excluded_cohe;
    }
  }
  out.ea = ea_n ? ea_sum / static_cast<double>(ea_n) : 0.0;
  out.cohe = cohe_n ? cohe_sum / static_cast<double>(cohe_n) : 0.0;
  return out;
}

inline double mean_length(const std::vector<Sentence>& responses) {
  if (responses.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : responses) total += static_cast<double>(r.size());
  return total / static_cast<double>(responses.size());
}

struct MetricReport {
  std::optional<double> ppl;
  double distinct[3] = {0, 0, 0};
  double bleu[4] = {0, 0, 0, 0};
  double mean_len = 0.0;
  double ea = 0.0;
  double cohe = 0.0;
  std::int64_t examples = 0;
  std::int64_t excluded = 0;

  void validate() const {
    for (double d : distinct) require(d >= 0.0 && d <= 1.0, "MetricReport: distinct outside [0, 1]");
    for (double b : bleu) require(b >= 0.0 && b <= 1.0 + 1e-12, "MetricReport: BLEU outside [0, 1]");
    require(!ppl || *ppl >= 1.0 - 1e-12, "MetricReport: perplexity below 1");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["ppl"] = ppl ? nlohmann::json(*ppl) : nlohmann::json(nullptr);
    j["distinct"] = {distinct[0], distinct[1], distinct[2]};
    j["bleu"] = {bleu[0], bleu[1], bleu[2], bleu[3]};
    j["mean_len"] = mean_len;
    j["ea"] = ea;
    j["cohe"] = cohe;
    j["examples"] = examples;
    j["excluded"] = excluded;
    return j;
  }

  static MetricReport from_json(const nlohmann::json& j) {
    MetricReport r;
    if (!j.at("ppl").is_null()) r.ppl = j.at("ppl").get<double>();
    for (int i = 0; i < 3; ++i) r.distinct[i] = j.at("distinct").at(static_cast<std::size_t>(i)).get<double>();
    for (int i = 0; i < 4; ++i) r.bleu[i] = j.at("bleu").at(static_cast<std::size_t>(i)).get<double>();
    r.mean_len = j.at("mean_len").get<double>();
    r.ea = j.at("ea").get<double>();
    r.cohe = j.at("cohe").get<double>();
    r.examples = j.value("examples", 0);
    r.excluded = j.value("excluded", 0);
    return r;
  }

  std::string table() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    os << "PPL      Dist-1  Dist-2  Dist-3  Len     BLEU-1  BLEU-2  BLEU-3  BLEU-4  EA      Cohe\n";
    if (ppl) {
      os.width(8);
      os << std::left << *ppl << " ";
    } else {
      os << "-        ";
    }
    for (double d : distinct) os << d << "  ";
    os << mean_len << "  ";
    for (double b : bleu) os << b << "  ";
    os << ea << "  " << cohe << "\n";
    return os.str();
  }
};

/// Text-level metrics of generated responses against references and
/// contexts.
inline MetricReport text_metrics(const std::vector<Sentence>& contexts, const std::vector<Sentence>& responses,
                                 const std::vector<Sentence>& references, const EmbeddingSource& source) {
  MetricReport r;
  for (int n = 1; n <= 3; ++n) r.distinct[n - 1] = distinct_n(responses, n);
  for (int n = 1; n <= 4; ++n) r.bleu[n - 1] = bleu_n(responses, references, n);
  r.mean_len = mean_length(responses);
  const EaCohe ec = ea_cohe(contexts, responses, references, source);
  r.ea = ec.ea;
  r.cohe = ec.cohe;
  r.examples = static_cast<std::int64_t>(responses.size());
  r.excluded = std::max(ec.excluded_ea, ec.excluded_cohe);
  return r;
}

}  // namespace chvt::metrics
