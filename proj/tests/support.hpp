#pragma once

#include <gtest/gtest.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "zsteer/corpus_stats.hpp"
#include "zsteer/error.hpp"
#include "zsteer/rng.hpp"

namespace zsteer::testing {

/// Passes when `f` throws zsteer::Error of `kind` whose message contains `needle`.
template <class F>
::testing::AssertionResult throws_error(F&& f, ErrorKind kind, std::string_view needle) {
  try {
    f();
  } catch (const Error& e) {
    if (e.kind() != kind) {
      return ::testing::AssertionFailure() << "wrong error kind for: " << e.what();
    }
    if (std::string_view(e.what()).find(needle) == std::string_view::npos) {
      return ::testing::AssertionFailure() << "message \"" << e.what() << "\" lacks \"" << needle << "\"";
    }
    return ::testing::AssertionSuccess();
  } catch (const std::exception& e) {
    return ::testing::AssertionFailure() << "unexpected exception: " << e.what();
  }
  return ::testing::AssertionFailure() << "nothing thrown";
}

class TempDir {
public:
  TempDir() {
    static int counter = 0;
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("zsteer_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

/// Counts given directly as a [class][token] matrix over tokens "t0".."tN".
inline CorpusCounts counts_from(const std::vector<std::vector<std::uint64_t>>& m,
                                std::vector<std::string> classes = {}) {
  std::vector<std::string> tokens;
  for (std::size_t v = 0; v < m.at(0).size(); ++v) tokens.push_back("t" + std::to_string(v));
  if (classes.empty()) {
    for (std::size_t r = 0; r < m.size(); ++r) classes.push_back(std::string(1, static_cast<char>('A' + r)));
  }
  std::vector<std::uint64_t> docs(m.size(), 1);
  return CorpusCounts(Vocabulary(std::move(tokens)), std::move(classes), m, std::move(docs));
}

/// Random count matrix with every pooled count >= 1 when `cover` is set.
inline std::vector<std::vector<std::uint64_t>> random_counts(SplitMix64& rng, std::size_t classes,
                                                             std::size_t vocab, std::uint64_t max_count,
                                                             bool cover = true) {
  std::vector<std::vector<std::uint64_t>> m(classes, std::vector<std::uint64_t>(vocab));
  for (auto& row : m) {
    for (auto& c : row) c = rng.next_below(max_count + 1);
  }
  if (cover) {
    for (std::size_t v = 0; v < vocab; ++v) {
      std::uint64_t pooled = 0;
      for (auto& row : m) pooled += row[v];
      if (pooled == 0) m[rng.next_below(classes)][v] = 1;
    }
  }
  return m;
}

}  // namespace zsteer::testing
