#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "zsteer/error.hpp"

namespace zsteer {

using TokenId = std::uint32_t;

/// Dense, gap-free mapping between token strings and ids 0..size()-1.
class Vocabulary {
public:
  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
      if (!inserted) {
        throw data_error("duplicate token in vocabulary: \"" + tokens_[i] + "\"");
      }
    }
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  bool empty() const noexcept { return tokens_.empty(); }

  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::optional<TokenId> find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(std::string_view token) const { return find(token).has_value(); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

enum class TokenizerKind { whitespace, byte, external_vocab_map };

inline std::string to_string(TokenizerKind kind) {
  switch (kind) {
    case TokenizerKind::whitespace: return "whitespace";
    case TokenizerKind::byte: return "byte";
    case TokenizerKind::external_vocab_map: return "external-vocab-map";
  }
  return "unknown";
}

inline TokenizerKind parse_tokenizer_kind(std::string_view name) {
  if (name == "whitespace") return TokenizerKind::whitespace;
  if (name == "byte") return TokenizerKind::byte;
  if (name == "external-vocab-map") return TokenizerKind::external_vocab_map;
  throw usage_error("unknown tokenizer kind \"" + std::string(name) + "\"");
}

struct TokenizerSpec {
  TokenizerKind kind = TokenizerKind::whitespace;
  bool casefold = false;
  /// One token per line, line number = token id. Only for external-vocab-map.
  std::string vocab_map_path;

  friend bool operator==(const TokenizerSpec&, const TokenizerSpec&) = default;
};

inline nlohmann::json to_json(const TokenizerSpec& spec) {
  nlohmann::json j = {{"kind", to_string(spec.kind)}, {"casefold", spec.casefold}};
  if (spec.kind == TokenizerKind::external_vocab_map) {
    j["vocab_map_path"] = spec.vocab_map_path;
  }
  return j;
}

inline TokenizerSpec tokenizer_spec_from_json(const nlohmann::json& j) {
  TokenizerSpec spec;
  spec.kind = parse_tokenizer_kind(j.at("kind").get<std::string>());
  spec.casefold = j.value("casefold", false);
  spec.vocab_map_path = j.value("vocab_map_path", std::string{});
  return spec;
}

/// Reads an external vocabulary map: one token string per line, id = line index.
inline Vocabulary load_vocab_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw data_error("cannot open vocab map " + path.string());
  }
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

/// Splits text into token strings according to a TokenizerSpec.
///
/// * whitespace: maximal runs of non-space bytes (ASCII space, \t, \n, \v, \f, \r).
/// * byte: one token per byte, spelled "<0xHH>" so token strings stay valid UTF-8.
/// * external-vocab-map: text is already tokenized by the host model's
///   tokenizer, pieces separated by whitespace; the vocabulary is the map file.
///
/// Casefolding lowercases ASCII letters only.
class Tokenizer {
public:
  Tokenizer() = default;

  explicit Tokenizer(TokenizerSpec spec) : spec_(std::move(spec)) {
    if (spec_.kind == TokenizerKind::external_vocab_map) {
      if (spec_.vocab_map_path.empty()) {
        throw usage_error("external-vocab-map tokenizer needs a vocab map path");
      }
      external_ = load_vocab_map(spec_.vocab_map_path);
    }
  }

  const TokenizerSpec& spec() const noexcept { return spec_; }

  /// The fixed vocabulary for external-vocab-map mode; nullopt otherwise.
  const std::optional<Vocabulary>& fixed_vocabulary() const noexcept { return external_; }

  std::vector<std::string> pieces(std::string_view text) const {
    std::vector<std::string> out;
    if (spec_.kind == TokenizerKind::byte) {
      out.reserve(text.size());
      for (char c : text) {
        out.push_back(byte_token(static_cast<unsigned char>(spec_.casefold ? fold(c) : c)));
      }
      return out;
    }
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && is_space(text[i])) ++i;
      std::size_t j = i;
      while (j < text.size() && !is_space(text[j])) ++j;
      if (j > i) {
        std::string piece(text.substr(i, j - i));
        if (spec_.casefold) {
          for (char& c : piece) c = fold(c);
        }
        out.push_back(std::move(piece));
      }
      i = j;
    }
    return out;
  }

  /// Inverse of pieces() up to whitespace normalization.
  std::string join(std::span<const std::string> pieces) const {
    std::string out;
    if (spec_.kind == TokenizerKind::byte) {
      for (const auto& p : pieces) {
        if (auto b = parse_byte_token(p)) {
          out.push_back(static_cast<char>(*b));
        } else {
          out += p;
        }
      }
      return out;
    }
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      if (i) out.push_back(' ');
      out += pieces[i];
    }
    return out;
  }

  /// Maps text onto ids of `vocab`; pieces outside it are dropped and counted.
  std::vector<TokenId> encode(std::string_view text, const Vocabulary& vocab,
                              std::size_t* unknown = nullptr) const {
    std::vector<TokenId> ids;
    for (const auto& p : pieces(text)) {
      if (auto id = vocab.find(p)) {
        ids.push_back(*id);
      } else if (unknown) {
        ++*unknown;
      }
    }
    return ids;
  }

  std::string decode(std::span<const TokenId> ids, const Vocabulary& vocab) const {
    std::vector<std::string> parts;
    parts.reserve(ids.size());
    for (TokenId id : ids) parts.push_back(vocab.token(id));
    return join(parts);
  }

  static std::string byte_token(unsigned char b) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "<0x%02X>", b);
    return buf;
  }

  static std::optional<unsigned char> parse_byte_token(std::string_view s) {
    if (s.size() != 6 || s.substr(0, 3) != "<0x" || s[5] != '>') return std::nullopt;
    auto hex = [](char c) -> int {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'A' && c <= 'F') return c - 'A' + 10;
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      return -1;
    };
    int hi = hex(s[3]), lo = hex(s[4]);
    if (hi < 0 || lo < 0) return std::nullopt;
    return static_cast<unsigned char>(hi * 16 + lo);
  }

private:
  static bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\v' || c == '\f' || c == '\r';
  }
  static char fold(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

  TokenizerSpec spec_;
  std::optional<Vocabulary> external_;
};

}  // namespace zsteer
