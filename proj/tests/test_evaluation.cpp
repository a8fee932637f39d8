#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "support.hpp"
#include "zsteer/evaluation.hpp"
#include "zsteer/synthetic.hpp"

using namespace zsteer;
using zsteer::testing::throws_error;

namespace {

std::vector<std::string> random_labels(SplitMix64& rng, std::size_t n, const std::vector<std::string>& classes) {
  std::vector<std::string> out(n);
  for (auto& l : out) l = classes[rng.next_below(classes.size())];
  return out;
}

ScoreTable two_class_table() {
  return ScoreTable(Vocabulary({"good", "bad", "meh"}), {"A", "B"}, {{1.5, -2.0, 0.0}, {-1.5, 2.0, 0.0}}, TableMeta{});
}

}  // namespace

TEST(Classify, SignDominanceAndTieRule) {
  const auto t = two_class_table();
  EXPECT_EQ(classify("good good meh", t).label, "A");
  EXPECT_EQ(classify("bad", t).label, "B");
  const auto tie = classify("meh meh", t);
  EXPECT_EQ(tie.label, "A");
  EXPECT_DOUBLE_EQ(tie.confidence, 0.5);
  ScoreTable zero(Vocabulary({"x", "y"}), {"p", "q", "r"}, std::vector<std::vector<double>>(3, {0.0, 0.0}),
                  TableMeta{});
  const auto j = classify("x y", zero);
  EXPECT_EQ(j.label, "p");
  EXPECT_DOUBLE_EQ(j.confidence, 1.0 / 3.0);
}

TEST(Classify, EmptyTextIsAnError) {
  const auto t = two_class_table();
  EXPECT_TRUE(throws_error([&] { classify("   ", t); }, ErrorKind::data, "nothing to judge"));
}

TEST(Classify, UnknownTokensCountTowardLength) {
  const auto t = two_class_table();
  const auto with = classify("good zzz zzz zzz", t);
  const auto without = classify("good", t);
  EXPECT_EQ(with.label, "A");
  EXPECT_LT(with.confidence, without.confidence);
}

TEST(Classify, SyntheticTextsMatchPerTokenSummation) {
  SyntheticDialectConfig sc;
  sc.sentences_per_class = 300;
  const SyntheticDialects gen(sc);
  const auto table = build_table(gen.corpus(), TokenizerSpec{});
  SplitMix64 rng(77);
  for (int i = 0; i < 20; ++i) {
    // Mixed texts so both labels occur.
    std::string text = gen.sentence(static_cast<std::size_t>(i % 2), rng) + " " + gen.sentence(1 - i % 2, rng);
    text = text.substr(0, text.size() / 2 + static_cast<std::size_t>(i));
    std::istringstream words(text);
    double a = 0.0, b = 0.0;
    std::size_t n = 0;
    for (std::string w; words >> w; ++n) {
      a += table.lookup("alpha", w);
      b += table.lookup("beta", w);
    }
    EXPECT_EQ(classify(text, table).label, b > a ? "beta" : "alpha") << text;
  }
}

TEST(Classify, PositiveRescalingKeepsLabels) {
  SyntheticDialectConfig sc;
  sc.sentences_per_class = 200;
  const SyntheticDialects gen(sc);
  const auto table = build_table(gen.corpus(), TokenizerSpec{});
  std::vector<std::vector<double>> z;
  for (std::size_t r = 0; r < 2; ++r) {
    z.emplace_back(table.row(r).begin(), table.row(r).end());
    for (auto& x : z.back()) x *= 0.137;
  }
  const ScoreTable scaled(table.vocab(), table.classes(), z, table.meta());
  SplitMix64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto text = gen.sentence(rng.next_below(2), rng);
    EXPECT_EQ(classify(text, table).label, classify(text, scaled).label);
  }
}

TEST(Metrics, PerfectBinaryPredictions) {
  const std::vector<std::string> g = {"x", "y", "x", "y"};
  const std::vector<double> c(4, 1.0);
  const auto r = metrics(g, g, c);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.kappa, 1.0);
  EXPECT_EQ(r.mcc, 1.0);
  EXPECT_EQ(r.macro_f1, 1.0);
}

TEST(Metrics, SingleClassPredictionsAreDegenerate) {
  const std::vector<std::string> g = {"x", "y", "x", "y"};
  const std::vector<std::string> p(4, "x");
  const auto r = metrics(p, g, std::vector<double>(4, 0.5));
  EXPECT_EQ(r.accuracy, 0.5);
  EXPECT_EQ(r.kappa, 0.0);
  EXPECT_EQ(r.mcc, 0.0);
  EXPECT_TRUE(r.mcc_degenerate);
  EXPECT_FALSE(r.kappa_degenerate);

  const auto all_same = metrics(p, p, std::vector<double>(4, 0.5));
  EXPECT_EQ(all_same.kappa, 0.0);
  EXPECT_EQ(all_same.mcc, 0.0);
  EXPECT_TRUE(all_same.kappa_degenerate);
  EXPECT_TRUE(all_same.mcc_degenerate);
}

TEST(Metrics, RandomPairsMatchFromScratchOracle) {
  SplitMix64 rng(123);
  const std::vector<std::string> classes = {"E", "I", "A"};
  for (int trial = 0; trial < 20; ++trial) {
    const auto gold = random_labels(rng, 200, classes);
    auto pred = random_labels(rng, 200, classes);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (rng.next_double() < 0.4) pred[i] = gold[i];  // some signal
    }
    const auto r = metrics(pred, gold, std::vector<double>(200, 0.9), classes);
    const auto o = oracle::metrics(pred, gold, classes);
    EXPECT_NEAR(r.accuracy, o.accuracy, 1e-12);
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_NEAR(r.per_class[c].precision, o.precision[c], 1e-12);
      EXPECT_NEAR(r.per_class[c].recall, o.recall[c], 1e-12);
      EXPECT_NEAR(r.per_class[c].f1, o.f1[c], 1e-12);
    }
    EXPECT_NEAR(r.macro_f1, o.macro_f1, 1e-12);
    EXPECT_NEAR(r.kappa, o.kappa, 1e-12);
    EXPECT_NEAR(r.mcc, o.mcc, 1e-12);
  }
}

TEST(Metrics, ConfusionMarginalsAndBounds) {
  SplitMix64 rng(9);
  const std::vector<std::string> classes = {"P", "N", "I"};
  const auto gold = random_labels(rng, 300, classes);
  const auto pred = random_labels(rng, 300, classes);
  std::vector<double> conf(300);
  for (auto& c : conf) c = rng.next_double();
  const auto r = metrics(pred, gold, conf, classes);
  std::uint64_t total = 0;
  for (std::size_t g = 0; g < 3; ++g) {
    std::uint64_t row = 0;
    for (std::size_t p = 0; p < 3; ++p) row += r.confusion[g][p];
    EXPECT_EQ(row, static_cast<std::uint64_t>(std::count(gold.begin(), gold.end(), classes[g])));
    total += row;
  }
  EXPECT_EQ(total, 300u);
  EXPECT_GE(r.kappa, -1.0);
  EXPECT_LE(r.kappa, 1.0);
  EXPECT_GE(r.mcc, -1.0);
  EXPECT_LE(r.mcc, 1.0);
}

TEST(Metrics, BinaryMccEqualsTwoByTwoFormula) {
  SplitMix64 rng(10);
  const std::vector<std::string> classes = {"pos", "neg"};
  const auto gold = random_labels(rng, 101, classes);
  const auto pred = random_labels(rng, 101, classes);
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < 101; ++i) {
    const bool p = pred[i] == "pos", g = gold[i] == "pos";
    tp += p && g;
    tn += !p && !g;
    fp += p && !g;
    fn += !p && g;
  }
  const double expected = (tp * tn - fp * fn) / std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
  EXPECT_NEAR(metrics(pred, gold, std::vector<double>(101, 1.0), classes).mcc, expected, 1e-12);
}

TEST(Metrics, InputValidation) {
  const std::vector<std::string> a = {"x", "y"}, b = {"x"};
  EXPECT_TRUE(throws_error([&] { metrics(a, b, std::vector<double>(2, 1.0)); }, ErrorKind::data, "misaligned inputs"));
  EXPECT_TRUE(throws_error([&] { metrics(a, a, std::vector<double>(2, 1.0), {"x", "z"}); }, ErrorKind::data,
                           "label-set mismatch; unknown labels: \"y\""));
  EXPECT_TRUE(throws_error([&] { metrics(a, a, std::vector<double>{1.0, 1.5}); }, ErrorKind::data, "confidence"));
}

TEST(Metrics, ReportLayoutHasEveryClassAndTotal) {
  const std::vector<std::string> g = {"E", "I", "A", "A", "E"};
  const std::vector<std::string> p = {"E", "A", "A", "I", "E"};
  const std::vector<double> c = {0.9, 0.8, 0.7, 0.6, 0.5};
  const auto r = metrics(p, g, c, {"E", "I", "A"});
  std::ostringstream csv;
  write_csv(csv, r);
  std::istringstream lines(csv.str());
  std::vector<std::string> first_cells;
  for (std::string line; std::getline(lines, line);) first_cells.push_back(line.substr(0, line.find(',')));
  EXPECT_EQ(first_cells, (std::vector<std::string>{"class", "E", "I", "A", "Total"}));
  EXPECT_NEAR(r.per_class[0].confidence, 0.7, 1e-15);  // mean over gold E
  EXPECT_NEAR(r.mean_confidence, 0.7, 1e-15);

  const auto j = to_json(r);
  EXPECT_EQ(j["per_class"].size(), 3u);
  EXPECT_TRUE(j.contains("total"));
  EXPECT_EQ(j["n"], 5);
}

TEST(Persistence, IdentityUniformAndHandTabulated) {
  const std::vector<std::string> src = {"P", "N", "I", "P", "N", "I"};
  const auto id = persistence_matrix(src, src, {"P", "N", "I"});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(id.rows[i][j], i == j ? 1.0 : 0.0);
  }
  EXPECT_EQ(id.diagonal_mean(), 1.0);

  const std::vector<std::string> s9 = {"P", "P", "P", "N", "N", "N", "I", "I", "I"};
  const std::vector<std::string> u9 = {"P", "N", "I", "P", "N", "I", "P", "N", "I"};
  const auto uni = persistence_matrix(s9, u9, {"P", "N", "I"});
  for (const auto& row : uni.rows) {
    for (double x : row) EXPECT_DOUBLE_EQ(x, 1.0 / 3.0);
  }

  // Source P: judged P,P,N,I -> 1/2,1/4,1/4. Source N: N,I -> 0,1/2,1/2. Source I: P -> 1,0,0.
  const std::vector<std::string> s = {"P", "P", "P", "P", "N", "N", "I"};
  const std::vector<std::string> j = {"P", "P", "N", "I", "N", "I", "P"};
  const auto m = persistence_matrix(s, j, {"P", "N", "I"});
  const std::vector<std::vector<double>> expected = {{0.5, 0.25, 0.25}, {0.0, 0.5, 0.5}, {1.0, 0.0, 0.0}};
  EXPECT_EQ(m.rows, expected);
  EXPECT_EQ(m.row_counts, (std::vector<std::uint64_t>{4, 2, 1}));
}

TEST(Persistence, EmptyRowStaysZeroWithWarning) {
  const std::vector<std::string> s = {"a", "a"}, j = {"a", "b"};
  const auto m = persistence_matrix(s, j, {"a", "b"});
  EXPECT_EQ(m.rows[1], (std::vector<double>{0.0, 0.0}));
  ASSERT_EQ(m.warnings.size(), 1u);
  EXPECT_NE(m.warnings[0].find("\"b\""), std::string::npos);
  std::ostringstream csv;
  write_csv(csv, m);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "source,a,b,n");
}
