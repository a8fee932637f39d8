#pragma once

// Back-off n-gram model with interpolated absolute discounting, used as a
// self-contained logit source.
//
//   P_0(w)     = 1/|V|
//   P_k(w | h) = max(c(h,w) − D, 0)/c(h) + D·N1+(h·)/c(h) · P_{k−1}(w | h')
//
// where h is the last k tokens of the history (left-padded with a reserved
// begin-of-sequence symbol), h' drops its oldest token, and a context never
// seen in training inherits P_{k−1} unchanged. Logits are log(max(P, 1e−10)).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "zsteer/binary_io.hpp"
#include "zsteer/error.hpp"
#include "zsteer/tokenizer.hpp"

namespace zsteer {

inline constexpr std::string_view kModelMagic = "SWLM";
inline constexpr std::uint32_t kModelVersion = 1;

class NGramModel {
public:
  static constexpr double kProbabilityFloor = 1e-10;
  static constexpr double kDefaultDiscount = 0.4;

  struct ContextStats {
    std::uint64_t total = 0;
    std::vector<std::pair<TokenId, std::uint64_t>> next;  // sorted by id
  };
  using Level = std::map<std::vector<TokenId>, ContextStats>;

  static NGramModel train(std::span<const std::vector<TokenId>> corpus, Vocabulary vocab, std::size_t order,
                          double discount = kDefaultDiscount) {
    if (order < 1) throw usage_error("n-gram order must be >= 1");
    if (!(discount >= 0.0 && discount < 1.0)) throw usage_error("discount must lie in [0, 1)");
    if (vocab.empty()) throw data_error("no data");
    const auto bos = static_cast<TokenId>(vocab.size());
    std::vector<std::map<std::vector<TokenId>, std::map<TokenId, std::uint64_t>>> raw(order);
    std::size_t n_tokens = 0;
    for (const auto& seq : corpus) {
      std::vector<TokenId> padded(order - 1, bos);
      for (TokenId id : seq) {
        if (id >= vocab.size()) throw data_error("token id " + std::to_string(id) + " outside vocabulary");
        padded.push_back(id);
      }
      for (std::size_t i = order - 1; i < padded.size(); ++i) {
        for (std::size_t k = 0; k < order; ++k) {
          std::vector<TokenId> ctx(padded.begin() + static_cast<std::ptrdiff_t>(i - k),
                                   padded.begin() + static_cast<std::ptrdiff_t>(i));
          ++raw[k][ctx][padded[i]];
        }
      }
      n_tokens += seq.size();
    }
    if (n_tokens == 0) throw data_error("no data");

    std::vector<Level> levels(order);
    for (std::size_t k = 0; k < order; ++k) {
      for (auto& [ctx, nexts] : raw[k]) {
        ContextStats st;
        for (auto [w, c] : nexts) {
          st.next.emplace_back(w, c);
          st.total += c;
        }
        levels[k].emplace(ctx, std::move(st));
      }
    }
    return NGramModel(std::move(vocab), order, discount, std::move(levels));
  }

  const Vocabulary& vocab() const noexcept { return vocab_; }
  std::size_t vocab_size() const noexcept { return vocab_.size(); }
  std::size_t order() const noexcept { return order_; }
  double discount() const noexcept { return discount_; }
  const std::vector<Level>& levels() const noexcept { return levels_; }

  /// Smoothed next-token distribution after `prefix`; sums to 1.
  std::vector<double> probabilities(std::span<const TokenId> prefix) const {
    const std::size_t v = vocab_.size();
    std::vector<double> p(v, 1.0 / static_cast<double>(v));
    const auto ctx_full = context_of(prefix);
    for (std::size_t k = 0; k < order_; ++k) {
      std::vector<TokenId> ctx(ctx_full.end() - static_cast<std::ptrdiff_t>(k), ctx_full.end());
      auto it = levels_[k].find(ctx);
      if (it == levels_[k].end() || it->second.total == 0) continue;
      const auto& st = it->second;
      const double total = static_cast<double>(st.total);
      const double backoff = discount_ * static_cast<double>(st.next.size()) / total;
      for (auto& x : p) x *= backoff;
      for (auto [w, c] : st.next) {
        p[w] += std::max(static_cast<double>(c) - discount_, 0.0) / total;
      }
    }
    return p;
  }

  std::vector<double> logits(std::span<const TokenId> prefix) const {
    auto p = probabilities(prefix);
    for (auto& x : p) x = std::log(std::max(x, kProbabilityFloor));
    return p;
  }

  /// exp of the mean negative log-probability of `text`, each token
  /// conditioned on the ones before it.
  double perplexity(std::span<const TokenId> text) const {
    if (text.empty()) throw usage_error("perplexity needs non-empty text");
    double nll = 0.0;
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (text[i] >= vocab_.size()) throw data_error("token id outside vocabulary");
      const auto p = probabilities(text.first(i));
      nll -= std::log(std::max(p[text[i]], kProbabilityFloor));
    }
    return std::exp(nll / static_cast<double>(text.size()));
  }

  std::string serialize() const {
    nlohmann::json header = {
        {"format_version", kModelVersion},
        {"order", order_},
        {"discount", discount_},
        {"probability_floor", kProbabilityFloor},
        {"vocab_size", vocab_.size()},
        {"vocab", vocab_.tokens()},
    };
    std::vector<std::size_t> sizes;
    for (const auto& lvl : levels_) sizes.push_back(lvl.size());
    header["contexts_per_level"] = sizes;
    io::ByteWriter w;
    for (std::size_t k = 0; k < order_; ++k) {
      for (const auto& [ctx, st] : levels_[k]) {
        for (TokenId id : ctx) w.put_u32(id);
        w.put_u32(static_cast<std::uint32_t>(st.next.size()));
        for (auto [id, c] : st.next) {
          w.put_u32(id);
          w.put_u64(c);
        }
      }
    }
    return io::encode_container(kModelMagic, kModelVersion, header, w.bytes());
  }

  static NGramModel deserialize(std::string_view data) {
    auto c = io::decode_container(data, kModelMagic, kModelVersion, "model");
    std::size_t order = 0;
    double discount = 0.0;
    std::vector<std::string> tokens;
    std::vector<std::size_t> sizes;
    try {
      order = c.header.at("order").get<std::size_t>();
      discount = c.header.at("discount").get<double>();
      tokens = c.header.at("vocab").get<std::vector<std::string>>();
      sizes = c.header.at("contexts_per_level").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
      throw data_error("parse error at byte offset " + std::to_string(c.payload_offset) +
                       ": bad model header (" + e.what() + ")");
    }
    if (order < 1 || sizes.size() != order) {
      throw data_error("parse error at byte offset " + std::to_string(c.payload_offset) + ": bad level layout");
    }
    const auto limit = static_cast<TokenId>(tokens.size());  // bos is allowed in contexts
    io::ByteReader r(c.payload, c.payload_offset);
    std::vector<Level> levels(order);
    for (std::size_t k = 0; k < order; ++k) {
      for (std::size_t i = 0; i < sizes[k]; ++i) {
        std::vector<TokenId> ctx(k);
        for (auto& id : ctx) {
          id = r.u32();
          if (id > limit) r.fail("context id out of range");
        }
        ContextStats st;
        const auto n = r.u32();
        if (n > r.remaining() / 12) r.fail("entry count exceeds file size");
        st.next.reserve(n);
        for (std::uint32_t j = 0; j < n; ++j) {
          const TokenId id = r.u32();
          const std::uint64_t cnt = r.u64();
          if (id >= limit) r.fail("token id out of range");
          st.next.emplace_back(id, cnt);
          st.total += cnt;
        }
        levels[k].emplace(std::move(ctx), std::move(st));
      }
    }
    if (!r.done()) r.fail(std::to_string(r.remaining()) + " trailing bytes after payload");
    return NGramModel(Vocabulary(std::move(tokens)), order, discount, std::move(levels));
  }

  void save(const std::filesystem::path& path) const { io::write_file_atomic(path, serialize()); }
  static NGramModel load(const std::filesystem::path& path) { return deserialize(io::read_file(path)); }

  friend bool operator==(const NGramModel& a, const NGramModel& b) {
    if (!(a.vocab_ == b.vocab_) || a.order_ != b.order_ || a.discount_ != b.discount_) return false;
    for (std::size_t k = 0; k < a.order_; ++k) {
      if (a.levels_[k].size() != b.levels_[k].size()) return false;
      auto ib = b.levels_[k].begin();
      for (const auto& [ctx, st] : a.levels_[k]) {
        if (ctx != ib->first || st.total != ib->second.total || st.next != ib->second.next) return false;
        ++ib;
      }
    }
    return true;
  }

private:
  NGramModel(Vocabulary vocab, std::size_t order, double discount, std::vector<Level> levels)
      : vocab_(std::move(vocab)), order_(order), discount_(discount), levels_(std::move(levels)) {}

  std::vector<TokenId> context_of(std::span<const TokenId> prefix) const {
    const auto bos = static_cast<TokenId>(vocab_.size());
    const std::size_t k = order_ - 1;
    std::vector<TokenId> ctx(k, bos);
    const std::size_t take = std::min(k, prefix.size());
    std::copy(prefix.end() - static_cast<std::ptrdiff_t>(take), prefix.end(),
              ctx.end() - static_cast<std::ptrdiff_t>(take));
    return ctx;
  }

  Vocabulary vocab_;
  std::size_t order_ = 1;
  double discount_ = kDefaultDiscount;
  std::vector<Level> levels_;
};

}  // namespace zsteer
