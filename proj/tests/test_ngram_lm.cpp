#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "support.hpp"
#include "zsteer/corpus_stats.hpp"
#include "zsteer/ngram_lm.hpp"
#include "zsteer/synthetic.hpp"

using namespace zsteer;
using zsteer::testing::TempDir;
using zsteer::testing::throws_error;

namespace {

std::vector<double> softmax(const std::vector<double>& l) {
  const double hi = *std::max_element(l.begin(), l.end());
  std::vector<double> p(l.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) sum += p[i] = std::exp(l[i] - hi);
  for (auto& x : p) x /= sum;
  return p;
}

}  // namespace

TEST(NGram, UnigramCountsWithoutDiscount) {
  const std::vector<std::vector<TokenId>> corpus = {{0, 0, 0, 1}};
  const auto m = NGramModel::train(corpus, Vocabulary({"a", "b"}), 1, 0.0);
  const auto p = m.probabilities({});
  EXPECT_DOUBLE_EQ(p[0], 0.75);
  EXPECT_DOUBLE_EQ(p[1], 0.25);
  // With a discount, mass moves toward the uniform base only.
  const auto d = NGramModel::train(corpus, Vocabulary({"a", "b"}), 1, 0.4).probabilities({});
  EXPECT_NEAR(d[0], (3 - 0.4) / 4 + 0.4 * 2 / 4 * 0.5, 1e-15);
  EXPECT_NEAR(d[0] + d[1], 1.0, 1e-15);
}

TEST(NGram, BigramHandCount) {
  const std::vector<std::vector<TokenId>> corpus = {{0, 1, 0, 1}};
  const auto m = NGramModel::train(corpus, Vocabulary({"a", "b"}), 2, 0.0);
  const std::vector<TokenId> prefix = {0};
  const auto p = m.probabilities(prefix);
  EXPECT_DOUBLE_EQ(p[1], 1.0);
  const auto l = m.logits(prefix);
  EXPECT_EQ(std::max_element(l.begin(), l.end()) - l.begin(), 1);
}

TEST(NGram, LogitsRecoverDistribution) {
  SyntheticDialectConfig sc;
  sc.sentences_per_class = 100;
  const auto corpus = SyntheticDialects(sc).corpus();
  const auto table = build_table(corpus, TokenizerSpec{});
  Tokenizer tok;
  std::vector<std::vector<TokenId>> seqs;
  for (const auto& r : corpus) seqs.push_back(tok.encode(r.text, table.vocab()));
  const auto m = NGramModel::train(seqs, table.vocab(), 3);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& s = seqs[i];
    const std::span<const TokenId> prefix(s.data(), std::min<std::size_t>(i % 5, s.size()));
    const auto p = m.probabilities(prefix);
    const auto q = softmax(m.logits(prefix));
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
    for (std::size_t v = 0; v < p.size(); ++v) {
      EXPECT_GT(p[v], 0.0);
      EXPECT_NEAR(q[v], p[v], 1e-9);
    }
  }
}

TEST(NGram, UnseenContextsBackOffToUnigram) {
  const std::vector<std::vector<TokenId>> corpus = {{0, 1, 1, 2}, {2, 2}};
  const Vocabulary vocab({"a", "b", "c", "d"});
  const auto bi = NGramModel::train(corpus, vocab, 2);
  const auto uni = NGramModel::train(corpus, vocab, 1);
  const std::vector<TokenId> unseen = {3};
  EXPECT_EQ(bi.probabilities(unseen), uni.probabilities({}));
  const auto p = uni.probabilities({});
  EXPECT_GT(p[3], 0.0);
  EXPECT_NEAR(p[2], (3 - 0.4) / 6 + 0.4 * 3 / 6 / 4, 1e-15);
}

TEST(NGram, PerplexityEdgeCases) {
  const std::vector<std::vector<TokenId>> uniform = {{0, 1, 2, 3}};
  const auto m = NGramModel::train(uniform, Vocabulary({"a", "b", "c", "d"}), 1, 0.4);
  const std::vector<TokenId> text = {3, 1, 0, 2, 2};
  EXPECT_NEAR(m.perplexity(text), 4.0, 1e-12);

  const std::vector<std::vector<TokenId>> one = {{0, 0, 0}};
  const auto single = NGramModel::train(one, Vocabulary({"x"}), 2, 0.4);
  EXPECT_NEAR(single.perplexity(std::vector<TokenId>{0, 0, 0, 0}), 1.0, 1e-12);
  EXPECT_TRUE(throws_error([&] { single.perplexity({}); }, ErrorKind::usage, "non-empty"));
}

TEST(NGram, TrainingTextIsLessPerplexingThanHeldOut) {
  SyntheticDialectConfig sc;
  sc.sentences_per_class = 400;
  const auto corpus = SyntheticDialects(sc).corpus();
  const auto table = build_table(corpus, TokenizerSpec{});
  Tokenizer tok;
  std::vector<std::vector<TokenId>> train, held;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    (i % 5 == 0 ? held : train).push_back(tok.encode(corpus[i].text, table.vocab()));
  }
  const auto m = NGramModel::train(train, table.vocab(), 3);
  double pp_train = 0.0, pp_held = 0.0;
  for (std::size_t i = 0; i < held.size(); ++i) {
    pp_train += m.perplexity(train[i]);
    pp_held += m.perplexity(held[i]);
  }
  EXPECT_LT(pp_train / static_cast<double>(held.size()), pp_held / static_cast<double>(held.size()));
}

TEST(NGram, ValidatesArguments) {
  const std::vector<std::vector<TokenId>> empty = {{}, {}};
  EXPECT_TRUE(throws_error([&] { NGramModel::train(empty, Vocabulary({"a"}), 2); }, ErrorKind::data, "no data"));
  const std::vector<std::vector<TokenId>> c = {{0}};
  EXPECT_TRUE(throws_error([&] { NGramModel::train(c, Vocabulary({"a"}), 0); }, ErrorKind::usage, "order"));
  EXPECT_TRUE(throws_error([&] { NGramModel::train(c, Vocabulary({"a"}), 2, 1.0); }, ErrorKind::usage, "discount"));
  const std::vector<std::vector<TokenId>> bad = {{5}};
  EXPECT_TRUE(throws_error([&] { NGramModel::train(bad, Vocabulary({"a"}), 2); }, ErrorKind::data,
                           "outside vocabulary"));
}

TEST(NGram, RetrainAndRoundTripAreIdentical) {
  TempDir dir;
  const std::vector<std::vector<TokenId>> corpus = {{0, 1, 2, 1, 0}, {2, 2, 1}};
  const auto a = NGramModel::train(corpus, Vocabulary({"a", "b", "c"}), 3);
  const auto b = NGramModel::train(corpus, Vocabulary({"a", "b", "c"}), 3);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.serialize(), b.serialize());
  a.save(dir / "m.swlm");
  const auto back = NGramModel::load(dir / "m.swlm");
  EXPECT_EQ(back, a);
  const std::vector<TokenId> prefix = {2, 1};
  EXPECT_EQ(back.logits(prefix), a.logits(prefix));

  auto bytes = a.serialize();
  EXPECT_TRUE(throws_error([&] { NGramModel::deserialize(bytes.substr(0, bytes.size() - 3)); }, ErrorKind::data,
                           "parse error at byte offset"));
  bytes[4] = 9;
  EXPECT_TRUE(throws_error([&] { NGramModel::deserialize(bytes); }, ErrorKind::data, "unsupported model version"));
}
