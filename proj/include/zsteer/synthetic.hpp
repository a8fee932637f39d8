#pragma once

// Synthetic "dialect" corpora for end-to-end control experiments.
//
// Every class shares one set of function words and owns a disjoint set of
// content words. Sentences follow a two-state chain: a function word is always
// followed by a content word, and a content word by a function word with
// probability 2/3, which puts 60% of the token mass on content words. Content
// words are Zipf-distributed within their class, and half of the time a
// content word is drawn from a small fixed successor list of the previous one,
// so each dialect also carries its own local word order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "zsteer/corpus_stats.hpp"
#include "zsteer/rng.hpp"

namespace zsteer {

struct SyntheticDialectConfig {
  std::vector<std::string> classes = {"alpha", "beta"};
  std::size_t function_words = 20;
  std::size_t content_words_per_class = 40;
  std::size_t sentences_per_class = 2000;
  std::size_t min_length = 12;
  std::size_t max_length = 24;
  double function_after_content = 2.0 / 3.0;
  double successor_rate = 0.5;
  std::size_t successors = 3;
  std::uint64_t seed = 20240601;
};

class SyntheticDialects {
public:
  explicit SyntheticDialects(SyntheticDialectConfig cfg) : cfg_(std::move(cfg)) {
    static const char* kFunction[] = {"the", "of",  "and", "to",   "a",  "in",  "is", "that", "it",  "was",
                                      "for", "on",  "with", "as",  "at", "by",  "from", "but", "or",  "so",
                                      "an",  "be",  "this", "not", "are", "his", "her", "they", "we", "you"};
    const std::size_t n_fn = std::min<std::size_t>(cfg_.function_words, std::size(kFunction));
    function_.assign(kFunction, kFunction + n_fn);

    SplitMix64 rng(cfg_.seed);
    std::set<std::string> used(function_.begin(), function_.end());
    static const char* kOnset[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
                                   "br", "dr", "gl", "kr", "pl", "st", "tr", "sk", "sn", "vl"};
    static const char* kVowel[] = {"a", "e", "i", "o", "u", "ai", "ou", "ei"};
    static const char* kCoda[] = {"n", "r", "l", "sk", "th", "m", "x", "nd", "rt", "s"};
    content_.resize(cfg_.classes.size());
    successor_.resize(cfg_.classes.size());
    for (auto& words : content_) {
      while (words.size() < cfg_.content_words_per_class) {
        std::string w;
        const auto syllables = 2 + rng.next_below(2);
        for (std::uint64_t s = 0; s < syllables; ++s) {
          w += kOnset[rng.next_below(std::size(kOnset))];
          w += kVowel[rng.next_below(std::size(kVowel))];
        }
        w += kCoda[rng.next_below(std::size(kCoda))];
        if (used.insert(w).second) words.push_back(w);
      }
    }
    for (std::size_t c = 0; c < content_.size(); ++c) {
      successor_[c].resize(content_[c].size());
      for (auto& succ : successor_[c]) {
        for (std::size_t j = 0; j < cfg_.successors; ++j) succ.push_back(rng.next_below(content_[c].size()));
      }
    }
    zipf_content_ = zipf_cdf(cfg_.content_words_per_class);
    zipf_function_ = zipf_cdf(function_.size());
  }

  const SyntheticDialectConfig& config() const noexcept { return cfg_; }
  const std::vector<std::string>& function_words() const noexcept { return function_; }
  const std::vector<std::string>& content_words(std::size_t class_idx) const { return content_.at(class_idx); }

  /// One sentence of class `class_idx`, as space-separated words.
  std::string sentence(std::size_t class_idx, SplitMix64& rng) const {
    const auto span = cfg_.max_length - cfg_.min_length + 1;
    const auto len = cfg_.min_length + rng.next_below(span);
    std::string out;
    bool content = rng.next_double() < 0.6;
    std::optional<std::size_t> prev_content;
    for (std::size_t i = 0; i < len; ++i) {
      if (i) out.push_back(' ');
      if (content) {
        std::size_t w;
        if (prev_content && rng.next_double() < cfg_.successor_rate) {
          const auto& succ = successor_[class_idx][*prev_content];
          w = succ[rng.next_below(succ.size())];
        } else {
          w = draw(zipf_content_, rng);
        }
        out += content_[class_idx][w];
        prev_content = w;
        content = !(rng.next_double() < cfg_.function_after_content);
      } else {
        out += function_[draw(zipf_function_, rng)];
        content = true;
      }
    }
    return out;
  }

  /// sentences_per_class records per class, classes interleaved.
  std::vector<Record> corpus() const {
    std::vector<Record> out;
    SplitMix64 rng(derive_seed(cfg_.seed, 1));
    for (std::size_t i = 0; i < cfg_.sentences_per_class; ++i) {
      for (std::size_t c = 0; c < cfg_.classes.size(); ++c) {
        out.push_back({sentence(c, rng), cfg_.classes[c]});
      }
    }
    return out;
  }

private:
  static std::vector<double> zipf_cdf(std::size_t n) {
    std::vector<double> cdf(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += 1.0 / static_cast<double>(i + 1);
      cdf[i] = acc;
    }
    for (auto& x : cdf) x /= acc;
    return cdf;
  }

  static std::size_t draw(const std::vector<double>& cdf, SplitMix64& rng) {
    const double u = rng.next_double();
    for (std::size_t i = 0; i < cdf.size(); ++i) {
      if (u < cdf[i]) return i;
    }
    return cdf.size() - 1;
  }

  SyntheticDialectConfig cfg_;
  std::vector<std::string> function_;
  std::vector<std::vector<std::string>> content_;
  std::vector<std::vector<std::vector<std::size_t>>> successor_;
  std::vector<double> zipf_content_;
  std::vector<double> zipf_function_;
};

}  // namespace zsteer
