#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "zsteer/binary_io.hpp"
#include "zsteer/error.hpp"
#include "zsteer/tokenizer.hpp"

namespace zsteer {

inline constexpr std::string_view kTableMagic = "SWTB";
inline constexpr std::uint32_t kTableVersion = 1;

struct TableMeta {
  double alpha = 0.01;
  TokenizerSpec tokenizer;
  std::vector<std::uint64_t> class_totals;  // N_r, in class order
  std::vector<std::uint64_t> doc_counts;
  std::string build_timestamp;              // empty unless the caller stamps it
  std::uint32_t format_version = kTableVersion;

  friend bool operator==(const TableMeta&, const TableMeta&) = default;
};

/// Per-class token z-scores with constant-time lookup.
///
/// Immutable once constructed; lookups are safe from any number of threads.
/// The only mutable state is a relaxed counter of out-of-vocabulary lookups.
class ScoreTable {
public:
  ScoreTable(Vocabulary vocab, std::vector<std::string> classes,
             std::vector<std::vector<double>> z, TableMeta meta)
      : vocab_(std::move(vocab)), classes_(std::move(classes)), z_(std::move(z)),
        meta_(std::move(meta)) {
    if (classes_.size() < 2) {
      throw data_error("score table needs at least 2 classes");
    }
    if (z_.size() != classes_.size()) {
      throw data_error("score table has " + std::to_string(z_.size()) + " z rows for " +
                       std::to_string(classes_.size()) + " classes");
    }
    for (std::size_t r = 0; r < z_.size(); ++r) {
      if (z_[r].size() != vocab_.size()) {
        throw data_error("z row for class \"" + classes_[r] + "\" has wrong length");
      }
      for (double v : z_[r]) {
        if (!std::isfinite(v)) {
          throw data_error("non-finite z-score for class \"" + classes_[r] + "\"");
        }
      }
    }
  }

  ScoreTable(const ScoreTable& o)
      : vocab_(o.vocab_), classes_(o.classes_), z_(o.z_), meta_(o.meta_),
        unknown_lookups_(o.unknown_lookups()) {}
  ScoreTable& operator=(const ScoreTable& o) {
    if (this != &o) {
      vocab_ = o.vocab_;
      classes_ = o.classes_;
      z_ = o.z_;
      meta_ = o.meta_;
      unknown_lookups_.store(o.unknown_lookups(), std::memory_order_relaxed);
    }
    return *this;
  }
  ScoreTable(ScoreTable&& o) noexcept
      : vocab_(std::move(o.vocab_)), classes_(std::move(o.classes_)), z_(std::move(o.z_)),
        meta_(std::move(o.meta_)), unknown_lookups_(o.unknown_lookups()) {}
  ScoreTable& operator=(ScoreTable&& o) noexcept {
    vocab_ = std::move(o.vocab_);
    classes_ = std::move(o.classes_);
    z_ = std::move(o.z_);
    meta_ = std::move(o.meta_);
    unknown_lookups_.store(o.unknown_lookups(), std::memory_order_relaxed);
    return *this;
  }

  const Vocabulary& vocab() const noexcept { return vocab_; }
  const std::vector<std::string>& classes() const noexcept { return classes_; }
  const TableMeta& meta() const noexcept { return meta_; }
  std::size_t vocab_size() const noexcept { return vocab_.size(); }

  std::size_t class_index(std::string_view label) const {
    auto it = std::find(classes_.begin(), classes_.end(), label);
    if (it == classes_.end()) {
      throw usage_error("class not in table: \"" + std::string(label) + "\"");
    }
    return static_cast<std::size_t>(it - classes_.begin());
  }

  std::span<const double> row(std::size_t class_idx) const { return z_.at(class_idx); }
  std::span<const double> row(std::string_view label) const { return z_[class_index(label)]; }

  /// z_r(v); 0.0 for ids outside the table (and the miss is counted).
  double lookup(std::size_t class_idx, TokenId id) const {
    const auto& zr = z_.at(class_idx);
    if (id >= zr.size()) {
      unknown_lookups_.fetch_add(1, std::memory_order_relaxed);
      return 0.0;
    }
    return zr[id];
  }

  double lookup(std::string_view label, TokenId id) const { return lookup(class_index(label), id); }

  double lookup(std::string_view label, std::string_view token) const {
    const auto r = class_index(label);
    if (auto id = vocab_.find(token)) return z_[r][*id];
    unknown_lookups_.fetch_add(1, std::memory_order_relaxed);
    return 0.0;
  }

  std::uint64_t unknown_lookups() const noexcept {
    return unknown_lookups_.load(std::memory_order_relaxed);
  }

  /// The n highest-z tokens of a class, ties by ascending id.
  std::vector<std::pair<std::string, double>> top_tokens(std::string_view label, std::size_t n) const {
    if (n < 1) {
      throw usage_error("top_tokens needs n >= 1");
    }
    const auto& zr = z_[class_index(label)];
    std::vector<TokenId> ids(zr.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<TokenId>(i);
    n = std::min(n, ids.size());
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n), ids.end(),
                      [&](TokenId a, TokenId b) { return zr[a] != zr[b] ? zr[a] > zr[b] : a < b; });
    std::vector<std::pair<std::string, double>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(vocab_.token(ids[i]), zr[ids[i]]);
    return out;
  }

  /// Field-by-field equality (ignores the lookup counter).
  friend bool operator==(const ScoreTable& a, const ScoreTable& b) {
    return a.vocab_ == b.vocab_ && a.classes_ == b.classes_ && a.meta_ == b.meta_ &&
           bitwise_equal(a.z_, b.z_);
  }

  std::string serialize() const {
    nlohmann::json header = {
        {"format_version", meta_.format_version},
        {"alpha", meta_.alpha},
        {"classes", classes_},
        {"tokenizer", to_json(meta_.tokenizer)},
        {"class_totals", meta_.class_totals},
        {"doc_counts", meta_.doc_counts},
        {"build_timestamp", meta_.build_timestamp},
        {"vocab_size", vocab_.size()},
        {"vocab", vocab_.tokens()},
    };
    io::ByteWriter payload;
    for (const auto& zr : z_) {
      for (double v : zr) payload.put_f64(v);
    }
    return io::encode_container(kTableMagic, kTableVersion, header, payload.bytes());
  }

  static ScoreTable deserialize(std::string_view data) {
    auto c = io::decode_container(data, kTableMagic, kTableVersion, "table");
    const auto& h = c.header;
    std::vector<std::string> classes;
    std::vector<std::string> tokens;
    TableMeta meta;
    std::size_t vocab_size = 0;
    try {
      classes = h.at("classes").get<std::vector<std::string>>();
      tokens = h.at("vocab").get<std::vector<std::string>>();
      vocab_size = h.at("vocab_size").get<std::size_t>();
      meta.format_version = h.at("format_version").get<std::uint32_t>();
      meta.alpha = h.at("alpha").get<double>();
      meta.tokenizer = tokenizer_spec_from_json(h.at("tokenizer"));
      meta.class_totals = h.at("class_totals").get<std::vector<std::uint64_t>>();
      meta.doc_counts = h.at("doc_counts").get<std::vector<std::uint64_t>>();
      meta.build_timestamp = h.at("build_timestamp").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw data_error("parse error at byte offset " + std::to_string(c.payload_offset) +
                       ": bad table header (" + e.what() + ")");
    }
    if (meta.format_version != kTableVersion) {
      throw data_error("unsupported table version " + std::to_string(meta.format_version));
    }
    if (tokens.size() != vocab_size) {
      throw data_error("parse error at byte offset " + std::to_string(c.payload_offset) +
                       ": vocab_size disagrees with vocab list");
    }
    io::ByteReader r(c.payload, c.payload_offset);
    std::vector<std::vector<double>> z(classes.size(), std::vector<double>(vocab_size));
    for (auto& zr : z) {
      for (auto& v : zr) {
        v = r.f64();
        if (!std::isfinite(v)) r.fail("non-finite z-score");
      }
    }
    if (!r.done()) {
      r.fail(std::to_string(r.remaining()) + " trailing bytes after payload");
    }
    return ScoreTable(Vocabulary(std::move(tokens)), std::move(classes), std::move(z), std::move(meta));
  }

  void save(const std::filesystem::path& path) const { io::write_file_atomic(path, serialize()); }

  static ScoreTable load(const std::filesystem::path& path) { return deserialize(io::read_file(path)); }

private:
  static bool bitwise_equal(const std::vector<std::vector<double>>& a,
                            const std::vector<std::vector<double>>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t r = 0; r < a.size(); ++r) {
      if (a[r].size() != b[r].size()) return false;
      for (std::size_t i = 0; i < a[r].size(); ++i) {
        if (std::bit_cast<std::uint64_t>(a[r][i]) != std::bit_cast<std::uint64_t>(b[r][i])) return false;
      }
    }
    return true;
  }

  Vocabulary vocab_;
  std::vector<std::string> classes_;
  std::vector<std::vector<double>> z_;
  TableMeta meta_;
  mutable std::atomic<std::uint64_t> unknown_lookups_{0};
};

}  // namespace zsteer
