#pragma once

// Offline phase: count tokens per class and turn the counts into smoothed
// one-vs-rest log-odds and their z-scores.
//
// For class r against the pooled rest ¬r, with pooled Dirichlet prior
//   α_v = α · max(1, c_r(v) + c_¬r(v)),   α_0 = Σ_u α_u,
// the score is
//   s_r(v) = log[(c_r+α_v) / ((N_r+α_0) − (c_r+α_v))]
//          − log[(c_¬r+α_v) / ((N_¬r+α_0) − (c_¬r+α_v))]
// and z_r(v) = s_r(v) / sqrt(1/(c_r+α_v) + 1/(c_¬r+α_v)).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "zsteer/error.hpp"
#include "zsteer/score_table.hpp"
#include "zsteer/tokenizer.hpp"

namespace zsteer {

struct Record {
  std::string text;
  std::string label;
};

struct JsonlOptions {
  bool skip_malformed = false;
};

/// Reads `{"text": ..., "label": ...}` objects, one per line. Blank lines are
/// ignored. Malformed lines abort with their line number unless skipped, in
/// which case they are appended to `skipped` as "line N: reason".
inline std::vector<Record> read_jsonl(std::istream& in, const JsonlOptions& opts = {},
                                      std::vector<std::string>* skipped = nullptr) {
  std::vector<Record> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string reason;
    try {
      auto j = nlohmann::json::parse(line);
      if (!j.is_object()) {
        reason = "not a JSON object";
      } else if (!j.contains("text") || !j["text"].is_string()) {
        reason = "missing string field \"text\"";
      } else if (!j.contains("label") || !j["label"].is_string()) {
        reason = "missing string field \"label\"";
      } else {
        out.push_back({j["text"].get<std::string>(), j["label"].get<std::string>()});
        continue;
      }
    } catch (const nlohmann::json::exception& e) {
      reason = std::string("invalid JSON (") + e.what() + ")";
    }
    const std::string msg = "line " + std::to_string(line_no) + ": " + reason;
    if (!opts.skip_malformed) {
      throw data_error("malformed JSONL at " + msg);
    }
    if (skipped) skipped->push_back(msg);
  }
  return out;
}

/// Per-class term frequencies over a fixed vocabulary.
///
/// Complement counts c_¬r(v) are always derived on demand from the stored
/// per-class rows, so they can never disagree with them.
class CorpusCounts {
public:
  CorpusCounts(Vocabulary vocab, std::vector<std::string> classes,
               std::vector<std::vector<std::uint64_t>> count,
               std::vector<std::uint64_t> doc_count, std::uint64_t skipped_tokens = 0)
      : vocab_(std::move(vocab)), classes_(std::move(classes)), count_(std::move(count)),
        doc_count_(std::move(doc_count)), skipped_tokens_(skipped_tokens) {
    if (classes_.size() < 2) {
      throw data_error("need >=2 classes for one-vs-rest");
    }
    if (count_.size() != classes_.size() || doc_count_.size() != classes_.size()) {
      throw data_error("class count mismatch in corpus counts");
    }
    total_.assign(classes_.size(), 0);
    pooled_.assign(vocab_.size(), 0);
    for (std::size_t r = 0; r < classes_.size(); ++r) {
      if (count_[r].size() != vocab_.size()) {
        throw data_error("count row for class \"" + classes_[r] + "\" has wrong length");
      }
      for (std::size_t v = 0; v < vocab_.size(); ++v) {
        total_[r] += count_[r][v];
        pooled_[v] += count_[r][v];
      }
    }
  }

  /// All-zero counts over a given vocabulary and class list.
  static CorpusCounts zero(Vocabulary vocab, std::vector<std::string> classes) {
    const auto k = classes.size();
    const auto n = vocab.size();
    return CorpusCounts(std::move(vocab), std::move(classes),
                        std::vector<std::vector<std::uint64_t>>(k, std::vector<std::uint64_t>(n, 0)),
                        std::vector<std::uint64_t>(k, 0));
  }

  const Vocabulary& vocab() const noexcept { return vocab_; }
  const std::vector<std::string>& classes() const noexcept { return classes_; }
  std::size_t num_classes() const noexcept { return classes_.size(); }
  std::size_t vocab_size() const noexcept { return vocab_.size(); }

  std::size_t class_index(std::string_view label) const {
    auto it = std::find(classes_.begin(), classes_.end(), label);
    if (it == classes_.end()) {
      throw usage_error("class not in counts: \"" + std::string(label) + "\"");
    }
    return static_cast<std::size_t>(it - classes_.begin());
  }

  std::uint64_t count(std::size_t r, TokenId v) const { return count_.at(r).at(v); }
  std::span<const std::uint64_t> row(std::size_t r) const { return count_.at(r); }
  std::uint64_t total(std::size_t r) const { return total_.at(r); }
  std::uint64_t doc_count(std::size_t r) const { return doc_count_.at(r); }
  std::uint64_t pooled(TokenId v) const { return pooled_.at(v); }
  std::uint64_t skipped_tokens() const noexcept { return skipped_tokens_; }

  std::uint64_t complement_count(std::size_t r, TokenId v) const {
    std::uint64_t sum = 0;
    for (std::size_t q = 0; q < classes_.size(); ++q) {
      if (q != r) sum += count_[q].at(v);
    }
    return sum;
  }

  std::uint64_t complement_total(std::size_t r) const {
    std::uint64_t sum = 0;
    for (std::size_t q = 0; q < classes_.size(); ++q) {
      if (q != r) sum += total_[q];
    }
    return sum;
  }

  std::vector<std::uint64_t> class_totals() const { return total_; }
  const std::vector<std::uint64_t>& doc_counts() const noexcept { return doc_count_; }

  friend bool operator==(const CorpusCounts& a, const CorpusCounts& b) {
    return a.vocab_ == b.vocab_ && a.classes_ == b.classes_ && a.count_ == b.count_ &&
           a.doc_count_ == b.doc_count_ && a.skipped_tokens_ == b.skipped_tokens_;
  }

private:
  Vocabulary vocab_;
  std::vector<std::string> classes_;
  std::vector<std::vector<std::uint64_t>> count_;
  std::vector<std::uint64_t> doc_count_;
  std::uint64_t skipped_tokens_ = 0;
  std::vector<std::uint64_t> total_;
  std::vector<std::uint64_t> pooled_;
};

/// Counts records into a fixed vocabulary and class list (used for sharded
/// ingestion). Pieces outside the vocabulary are tallied in skipped_tokens().
inline CorpusCounts ingest_into(std::span<const Record> records, const Tokenizer& tokenizer,
                                const Vocabulary& vocab, const std::vector<std::string>& classes) {
  auto counts = CorpusCounts::zero(vocab, classes);
  std::vector<std::vector<std::uint64_t>> c(classes.size(), std::vector<std::uint64_t>(vocab.size(), 0));
  std::vector<std::uint64_t> docs(classes.size(), 0);
  std::uint64_t skipped = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (rec.label.empty()) {
      throw data_error("record " + std::to_string(i + 1) + " has an empty label");
    }
    const auto r = counts.class_index(rec.label);
    ++docs[r];
    for (const auto& p : tokenizer.pieces(rec.text)) {
      if (auto id = vocab.find(p)) {
        ++c[r][*id];
      } else {
        ++skipped;
      }
    }
  }
  return CorpusCounts(vocab, classes, std::move(c), std::move(docs), skipped);
}

/// Builds the vocabulary and class list from the data, then counts.
///
/// Classes and (for whitespace/byte tokenizers) vocabulary entries are sorted
/// lexicographically, so the result depends only on the multiset of records.
/// The external-vocab-map tokenizer keeps its map's ids instead.
inline CorpusCounts ingest_corpus(std::span<const Record> records, const Tokenizer& tokenizer) {
  if (records.empty()) {
    throw data_error("no data");
  }
  std::set<std::string> labels;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].label.empty()) {
      throw data_error("record " + std::to_string(i + 1) + " has an empty label");
    }
    labels.insert(records[i].label);
    if (!tokenizer.fixed_vocabulary()) {
      for (auto& p : tokenizer.pieces(records[i].text)) seen.insert(std::move(p));
    }
  }
  if (labels.size() < 2) {
    throw data_error("need >=2 classes for one-vs-rest");
  }
  Vocabulary vocab = tokenizer.fixed_vocabulary()
                         ? *tokenizer.fixed_vocabulary()
                         : Vocabulary(std::vector<std::string>(seen.begin(), seen.end()));
  if (vocab.size() < 2) {
    throw data_error("degenerate corpus (vocabulary too small)");
  }
  return ingest_into(records, tokenizer, vocab,
                     std::vector<std::string>(labels.begin(), labels.end()));
}

inline CorpusCounts ingest_corpus(std::span<const Record> records, const TokenizerSpec& spec) {
  return ingest_corpus(records, Tokenizer(spec));
}

/// Elementwise sum; associative and commutative.
inline CorpusCounts merge_counts(const CorpusCounts& a, const CorpusCounts& b) {
  if (!(a.vocab() == b.vocab()) || a.classes() != b.classes()) {
    throw data_error("incompatible counts");
  }
  std::vector<std::vector<std::uint64_t>> c(a.num_classes());
  std::vector<std::uint64_t> docs(a.num_classes());
  for (std::size_t r = 0; r < a.num_classes(); ++r) {
    auto ra = a.row(r), rb = b.row(r);
    c[r].resize(ra.size());
    for (std::size_t v = 0; v < ra.size(); ++v) c[r][v] = ra[v] + rb[v];
    docs[r] = a.doc_count(r) + b.doc_count(r);
  }
  return CorpusCounts(a.vocab(), a.classes(), std::move(c), std::move(docs),
                      a.skipped_tokens() + b.skipped_tokens());
}

struct PriorMass {
  double alpha = 0.01;
  std::vector<double> alpha_v;
  double alpha_0 = 0.0;
  std::vector<std::uint64_t> pooled;
};

/// Pooled Dirichlet prior α_v = α·max(1, c_r(v)+c_¬r(v)).
///
/// The pooled count is the same for every r; the class argument only
/// validates membership.
inline PriorMass pooled_prior(const CorpusCounts& counts, std::string_view label, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw usage_error("invalid smoothing scale");
  }
  const auto r = counts.class_index(label);
  PriorMass p;
  p.alpha = alpha;
  p.pooled.resize(counts.vocab_size());
  p.alpha_v.resize(counts.vocab_size());
  for (TokenId v = 0; v < counts.vocab_size(); ++v) {
    p.pooled[v] = counts.count(r, v) + counts.complement_count(r, v);
    p.alpha_v[v] = alpha * static_cast<double>(std::max<std::uint64_t>(1, p.pooled[v]));
  }
  // Ascending-id summation order so α_0 is reproducible bit-for-bit.
  for (double a : p.alpha_v) p.alpha_0 += a;
  return p;
}

namespace detail {

// log[(c+a) / ((n+a0) − (c+a))], shared by the class and complement terms so
// that swapping the two (binary case) negates s exactly.
inline double log_odds_term(double c, double n, double a, double a0) {
  const double num = c + a;
  const double den = (n + a0) - num;
  if (!(den > 0.0)) {
    throw data_error("degenerate corpus (vocabulary too small)");
  }
  return std::log(num / den);
}

}  // namespace detail

inline std::vector<double> log_odds(const CorpusCounts& counts, const PriorMass& prior,
                                    std::string_view label) {
  const auto r = counts.class_index(label);
  if (prior.alpha_v.size() != counts.vocab_size()) {
    throw usage_error("prior does not match counts");
  }
  const double n_r = static_cast<double>(counts.total(r));
  const double n_not = static_cast<double>(counts.complement_total(r));
  std::vector<double> s(counts.vocab_size());
  for (TokenId v = 0; v < s.size(); ++v) {
    const double a = prior.alpha_v[v];
    const double in_class = detail::log_odds_term(static_cast<double>(counts.count(r, v)), n_r, a, prior.alpha_0);
    const double rest = detail::log_odds_term(static_cast<double>(counts.complement_count(r, v)), n_not, a, prior.alpha_0);
    s[v] = in_class - rest;
  }
  return s;
}

/// σ²(s_r(v)) = 1/(c_r(v)+α_v) + 1/(c_¬r(v)+α_v).
inline double log_odds_variance(double c_r, double c_not, double alpha_v) {
  return 1.0 / (c_r + alpha_v) + 1.0 / (c_not + alpha_v);
}

inline std::vector<double> z_scores(std::span<const double> s, const CorpusCounts& counts,
                                    const PriorMass& prior, std::string_view label) {
  const auto r = counts.class_index(label);
  if (s.size() != counts.vocab_size() || prior.alpha_v.size() != counts.vocab_size()) {
    throw usage_error("log-odds vector does not match counts");
  }
  std::vector<double> z(s.size());
  for (TokenId v = 0; v < z.size(); ++v) {
    const double var = log_odds_variance(static_cast<double>(counts.count(r, v)),
                                         static_cast<double>(counts.complement_count(r, v)),
                                         prior.alpha_v[v]);
    z[v] = s[v] / std::sqrt(var);
  }
  return z;
}

inline ScoreTable build_table(const CorpusCounts& counts, const TokenizerSpec& spec, double alpha) {
  std::vector<std::vector<double>> z;
  z.reserve(counts.num_classes());
  for (const auto& label : counts.classes()) {
    const auto prior = pooled_prior(counts, label, alpha);
    const auto s = log_odds(counts, prior, label);
    z.push_back(z_scores(s, counts, prior, label));
  }
  TableMeta meta;
  meta.alpha = alpha;
  meta.tokenizer = spec;
  meta.class_totals = counts.class_totals();
  meta.doc_counts = counts.doc_counts();
  return ScoreTable(counts.vocab(), counts.classes(), std::move(z), std::move(meta));
}

inline ScoreTable build_table(std::span<const Record> records, const TokenizerSpec& spec,
                              double alpha = 0.01) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw usage_error("invalid smoothing scale");
  }
  return build_table(ingest_corpus(records, Tokenizer(spec)), spec, alpha);
}

}  // namespace zsteer
