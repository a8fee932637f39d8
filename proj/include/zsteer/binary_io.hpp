#pragma once

// Versioned binary container shared by score tables (SWTB) and n-gram models
// (SWLM):
//
//   magic[4] | u32 version | u64 header_len | header (UTF-8 JSON) | payload
//
// All integers and floats are little-endian.

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "zsteer/error.hpp"

namespace zsteer::io {

class ByteWriter {
public:
  void put_bytes(std::string_view bytes) { buf_.append(bytes); }

  void put_u32(std::uint32_t v) { put_le(v, 4); }
  void put_u64(std::uint64_t v) { put_le(v, 8); }
  void put_f64(double v) { put_le(std::bit_cast<std::uint64_t>(v), 8); }

  const std::string& bytes() const noexcept { return buf_; }
  std::string release() noexcept { return std::move(buf_); }

private:
  void put_le(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) {
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
  }

  std::string buf_;
};

/// Bounds-checked cursor; every failure reports the absolute byte offset.
class ByteReader {
public:
  ByteReader(std::string_view data, std::size_t base_offset = 0)
      : data_(data), base_(base_offset) {}

  std::size_t offset() const noexcept { return base_ + pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  bool done() const noexcept { return pos_ == data_.size(); }

  std::string_view take(std::size_t n) {
    require(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64() { return get_le(8); }
  double f64() { return std::bit_cast<double>(get_le(8)); }

  [[noreturn]] void fail(const std::string& what) const {
    throw data_error("parse error at byte offset " + std::to_string(offset()) + ": " + what);
  }

private:
  void require(std::size_t n) const {
    if (remaining() < n) {
      fail("unexpected end of file (need " + std::to_string(n) + " bytes, have " +
           std::to_string(remaining()) + ")");
    }
  }

  std::uint64_t get_le(int width) {
    require(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::string_view data_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

inline std::string encode_container(std::string_view magic, std::uint32_t version,
                                    const nlohmann::json& header, std::string_view payload) {
  const std::string header_text = header.dump();
  ByteWriter w;
  w.put_bytes(magic);
  w.put_u32(version);
  w.put_u64(header_text.size());
  w.put_bytes(header_text);
  w.put_bytes(payload);
  return w.release();
}

struct Container {
  std::uint32_t version = 0;
  nlohmann::json header;
  std::string_view payload;
  std::size_t payload_offset = 0;
};

/// Parses the framing; `data` must outlive the returned payload view.
inline Container decode_container(std::string_view data, std::string_view magic,
                                  std::uint32_t supported_version, std::string_view what) {
  if (data.substr(0, magic.size()) != magic) {
    throw data_error("parse error at byte offset 0: bad magic (not a " + std::string(what) + " file)");
  }
  ByteReader r(data);
  r.take(magic.size());
  Container c;
  c.version = r.u32();
  if (c.version != supported_version) {
    throw data_error("unsupported " + std::string(what) + " version " + std::to_string(c.version) +
                     " (expected " + std::to_string(supported_version) + ")");
  }
  const std::uint64_t header_len = r.u64();
  if (header_len > r.remaining()) {
    r.fail("header length " + std::to_string(header_len) + " exceeds file size");
  }
  const std::size_t header_offset = r.offset();
  const auto header_text = r.take(static_cast<std::size_t>(header_len));
  try {
    c.header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw data_error("parse error at byte offset " + std::to_string(header_offset + e.byte) +
                     ": malformed JSON header");
  }
  if (!c.header.is_object()) {
    throw data_error("parse error at byte offset " + std::to_string(header_offset) +
                     ": header is not a JSON object");
  }
  c.payload_offset = r.offset();
  c.payload = data.substr(c.payload_offset);
  return c;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw data_error("cannot open " + path.string());
  }
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Writes to a sibling temporary and renames over `path`, so readers never see
/// a partially written file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw usage_error("cannot write " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw usage_error("short write to " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw usage_error("cannot rename into " + path.string());
  }
}

}  // namespace zsteer::io
