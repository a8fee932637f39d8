#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "support.hpp"
#include "zsteer/corpus_stats.hpp"
#include "zsteer/tokenizer.hpp"

using namespace zsteer;
using zsteer::testing::TempDir;
using zsteer::testing::throws_error;

TEST(Tokenizer, WhitespaceSplitsOnAnyAsciiSpace) {
  Tokenizer tok;
  EXPECT_EQ(tok.pieces("  a\tbb\n c  "), (std::vector<std::string>{"a", "bb", "c"}));
  EXPECT_TRUE(tok.pieces(" \t ").empty());
}

TEST(Tokenizer, CasefoldLowersAsciiOnly) {
  Tokenizer tok(TokenizerSpec{TokenizerKind::whitespace, true, {}});
  EXPECT_EQ(tok.pieces("The CAT Ünï"), (std::vector<std::string>{"the", "cat", "Ünï"}));
}

TEST(Tokenizer, ByteTokensRoundTrip) {
  Tokenizer tok(TokenizerSpec{TokenizerKind::byte, false, {}});
  const std::string text = "Hi \xc3\xa9!";
  const auto p = tok.pieces(text);
  ASSERT_EQ(p.size(), text.size());
  EXPECT_EQ(p[0], "<0x48>");
  EXPECT_EQ(tok.join(p), text);
}

TEST(Tokenizer, EncodingTwiceGivesIdenticalIds) {
  Tokenizer tok;
  Vocabulary vocab({"a", "b", "c"});
  std::size_t unknown = 0;
  const auto first = tok.encode("a b z c a", vocab, &unknown);
  const auto second = tok.encode("a b z c a", vocab);
  EXPECT_EQ(first, second);
  EXPECT_EQ(first, (std::vector<TokenId>{0, 1, 2, 0}));
  EXPECT_EQ(unknown, 1u);
  EXPECT_EQ(tok.decode(first, vocab), "a b c a");
}

TEST(Tokenizer, SpecJsonRoundTrip) {
  TokenizerSpec spec{TokenizerKind::external_vocab_map, true, "map.txt"};
  const auto back = tokenizer_spec_from_json(to_json(spec));
  EXPECT_EQ(back.kind, spec.kind);
  EXPECT_EQ(back.casefold, spec.casefold);
  EXPECT_EQ(back.vocab_map_path, spec.vocab_map_path);
  EXPECT_TRUE(throws_error([] { parse_tokenizer_kind("sentencepiece"); }, ErrorKind::usage, "unknown tokenizer"));
}

TEST(Tokenizer, ExternalMapFixesVocabularyAndIds) {
  TempDir dir;
  {
    std::ofstream out(dir / "map.txt");
    out << "zeta\nalpha\nmid\n";
  }
  TokenizerSpec spec{TokenizerKind::external_vocab_map, false, (dir / "map.txt").string()};
  Tokenizer tok(spec);
  ASSERT_TRUE(tok.fixed_vocabulary());
  EXPECT_EQ(tok.fixed_vocabulary()->tokens(), (std::vector<std::string>{"zeta", "alpha", "mid"}));

  std::vector<Record> recs = {{"zeta zeta alpha", "X"}, {"mid other", "Y"}};
  const auto counts = ingest_corpus(recs, tok);
  EXPECT_EQ(counts.vocab(), *tok.fixed_vocabulary());
  EXPECT_EQ(counts.count(0, 0), 2u);
  EXPECT_EQ(counts.count(1, 2), 1u);
  EXPECT_EQ(counts.skipped_tokens(), 1u);
}

TEST(Tokenizer, DuplicateVocabularyEntryIsAnError) {
  EXPECT_TRUE(throws_error([] { Vocabulary({"a", "b", "a"}); }, ErrorKind::data, "duplicate token"));
}

TEST(Jsonl, ReadsRecordsAndReportsMalformedLines) {
  std::istringstream good("{\"text\":\"a b\",\"label\":\"X\"}\n\n{\"text\":\"c\",\"label\":\"Y\"}\n");
  const auto recs = read_jsonl(good);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[1].text, "c");

  std::istringstream bad("{\"text\":\"a\",\"label\":\"X\"}\n{oops\n{\"text\":\"b\"}\n");
  EXPECT_TRUE(throws_error([&] { read_jsonl(bad); }, ErrorKind::data, "malformed JSONL at line 2"));

  std::istringstream again("{\"text\":\"a\",\"label\":\"X\"}\n{oops\n{\"text\":\"b\"}\n");
  std::vector<std::string> skipped;
  const auto kept = read_jsonl(again, JsonlOptions{true}, &skipped);
  EXPECT_EQ(kept.size(), 1u);
  ASSERT_EQ(skipped.size(), 2u);
  EXPECT_NE(skipped[1].find("line 3"), std::string::npos);
}
