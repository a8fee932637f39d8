#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "zsteer/error.hpp"
#include "zsteer/score_table.hpp"
#include "zsteer/tokenizer.hpp"

namespace zsteer {

struct Judgment {
  std::string label;
  double confidence = 0.0;
  std::vector<std::string> reasons;
  std::vector<std::string> quotes;
};

/// Statistical judge over token ids of the table's vocabulary.
///
/// score(r) = Σ z_r(v) / max(1, n); the label is the argmax (ties go to the
/// earlier class) and the confidence is softmax(score) at the argmax. This
/// "statistical confidence" is not a calibrated probability.
inline Judgment classify_ids(std::span<const TokenId> ids, std::size_t n_tokens, const ScoreTable& table) {
  if (n_tokens == 0) throw data_error("nothing to judge");
  const auto k = table.classes().size();
  std::vector<double> score(k, 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    for (TokenId id : ids) score[r] += table.lookup(r, id);
    score[r] /= static_cast<double>(std::max<std::size_t>(1, n_tokens));
  }
  std::size_t best = 0;
  for (std::size_t r = 1; r < k; ++r) {
    if (score[r] > score[best]) best = r;
  }
  double denom = 0.0;
  for (double s : score) denom += std::exp(s - score[best]);
  return Judgment{table.classes()[best], 1.0 / denom, {}, {}};
}

inline Judgment classify_ids(std::span<const TokenId> ids, const ScoreTable& table) {
  return classify_ids(ids, ids.size(), table);
}

/// Tokenizes `text` with the table's own tokenizer settings. Pieces missing
/// from the table count toward the length with z = 0.
inline Judgment classify(std::string_view text, const ScoreTable& table, const Tokenizer& tokenizer) {
  std::size_t unknown = 0;
  const auto ids = tokenizer.encode(text, table.vocab(), &unknown);
  return classify_ids(ids, ids.size() + unknown, table);
}

inline Judgment classify(std::string_view text, const ScoreTable& table) {
  auto spec = table.meta().tokenizer;
  if (spec.kind == TokenizerKind::external_vocab_map) {
    // The table already carries the vocabulary; only the splitting rule matters.
    spec.kind = TokenizerKind::whitespace;
  }
  return classify(text, table, Tokenizer(spec));
}

struct ClassMetrics {
  std::string label;
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::uint64_t support = 0;  // gold count
  double accuracy = 0.0;      // one-vs-rest (TP+TN)/N
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double confidence = 0.0;    // mean over samples whose gold label is this class
};

struct EvalReport {
  std::vector<std::string> classes;
  std::vector<std::vector<std::uint64_t>> confusion;  // [gold][pred]
  std::vector<ClassMetrics> per_class;
  std::size_t n = 0;
  double accuracy = 0.0;  // micro
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  double kappa = 0.0;
  double mcc = 0.0;
  double mean_confidence = 0.0;
  bool kappa_degenerate = false;
  bool mcc_degenerate = false;
  std::string confidence_kind = "judge";
};

namespace detail {
inline double ratio_or_zero(double num, double den) { return den > 0.0 ? num / den : 0.0; }
}  // namespace detail

/// Confusion matrix and the metric suite.
///
/// * Per-class precision/recall/F1 are one-vs-rest; zero denominators give 0.
/// * Total accuracy is micro; Total P/R/F1 are macro (weighted also reported).
/// * κ = (p_o − p_e)/(1 − p_e) with p_e from the marginal products.
/// * MCC is the multiclass form
///     (c·s − Σ_k p_k t_k) / sqrt((s² − Σ p_k²)(s² − Σ t_k²)),
///   c = correct, s = N, p_k/t_k = predicted/true counts of class k, which
///   equals the binary TP/TN/FP/FN formula for two classes.
/// * κ and MCC are 0 when their denominators vanish (flagged in the report).
///
/// `classes` fixes the row order; when empty the sorted union of labels is used.
inline EvalReport metrics(std::span<const std::string> pred, std::span<const std::string> gold,
                          std::span<const double> conf, std::vector<std::string> classes = {}) {
  if (pred.size() != gold.size() || pred.size() != conf.size()) {
    throw data_error("misaligned inputs");
  }
  if (pred.empty()) throw data_error("no samples to evaluate");
  if (classes.empty()) {
    std::set<std::string> all(gold.begin(), gold.end());
    all.insert(pred.begin(), pred.end());
    classes.assign(all.begin(), all.end());
  } else {
    std::set<std::string> offending;
    std::set<std::string> known(classes.begin(), classes.end());
    for (auto lists : {pred, gold}) {
      for (const auto& l : lists) {
        if (!known.count(l)) offending.insert(l);
      }
    }
    if (!offending.empty()) {
      std::string msg = "label-set mismatch; unknown labels:";
      for (const auto& l : offending) msg += " \"" + l + "\"";
      throw data_error(msg);
    }
  }
  const auto k = classes.size();
  auto index = [&](const std::string& l) {
    return static_cast<std::size_t>(std::find(classes.begin(), classes.end(), l) - classes.begin());
  };

  EvalReport rep;
  rep.classes = classes;
  rep.n = pred.size();
  rep.confusion.assign(k, std::vector<std::uint64_t>(k, 0));
  std::vector<double> conf_sum(k, 0.0);
  double conf_total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!(conf[i] >= 0.0 && conf[i] <= 1.0)) throw data_error("confidence outside [0, 1] at sample " + std::to_string(i));
    const auto g = index(gold[i]);
    ++rep.confusion[g][index(pred[i])];
    conf_sum[g] += conf[i];
    conf_total += conf[i];
  }
  const double n = static_cast<double>(rep.n);

  std::vector<std::uint64_t> row(k, 0), col(k, 0);
  std::uint64_t correct = 0;
  for (std::size_t g = 0; g < k; ++g) {
    for (std::size_t p = 0; p < k; ++p) {
      row[g] += rep.confusion[g][p];
      col[p] += rep.confusion[g][p];
    }
    correct += rep.confusion[g][g];
  }

  for (std::size_t c = 0; c < k; ++c) {
    ClassMetrics m;
    m.label = classes[c];
    m.tp = rep.confusion[c][c];
    m.fp = col[c] - m.tp;
    m.fn = row[c] - m.tp;
    m.tn = rep.n - m.tp - m.fp - m.fn;
    m.support = row[c];
    m.accuracy = static_cast<double>(m.tp + m.tn) / n;
    m.precision = detail::ratio_or_zero(static_cast<double>(m.tp), static_cast<double>(m.tp + m.fp));
    m.recall = detail::ratio_or_zero(static_cast<double>(m.tp), static_cast<double>(m.tp + m.fn));
    m.f1 = detail::ratio_or_zero(2.0 * m.precision * m.recall, m.precision + m.recall);
    m.confidence = detail::ratio_or_zero(conf_sum[c], static_cast<double>(row[c]));
    rep.macro_precision += m.precision;
    rep.macro_recall += m.recall;
    rep.macro_f1 += m.f1;
    rep.weighted_precision += m.precision * static_cast<double>(m.support);
    rep.weighted_recall += m.recall * static_cast<double>(m.support);
    rep.weighted_f1 += m.f1 * static_cast<double>(m.support);
    rep.per_class.push_back(m);
  }
  rep.macro_precision /= static_cast<double>(k);
  rep.macro_recall /= static_cast<double>(k);
  rep.macro_f1 /= static_cast<double>(k);
  rep.weighted_precision /= n;
  rep.weighted_recall /= n;
  rep.weighted_f1 /= n;
  rep.accuracy = static_cast<double>(correct) / n;
  rep.mean_confidence = conf_total / n;

  double p_e = 0.0;
  for (std::size_t c = 0; c < k; ++c) p_e += (static_cast<double>(row[c]) / n) * (static_cast<double>(col[c]) / n);
  if (1.0 - p_e > 0.0) {
    rep.kappa = (rep.accuracy - p_e) / (1.0 - p_e);
  } else {
    rep.kappa_degenerate = true;
  }

  double pt = 0.0, pp = 0.0, tt = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    pt += static_cast<double>(col[c]) * static_cast<double>(row[c]);
    pp += static_cast<double>(col[c]) * static_cast<double>(col[c]);
    tt += static_cast<double>(row[c]) * static_cast<double>(row[c]);
  }
  const double cov_pred = n * n - pp;
  const double cov_gold = n * n - tt;
  if (cov_pred > 0.0 && cov_gold > 0.0) {
    rep.mcc = (static_cast<double>(correct) * n - pt) / std::sqrt(cov_pred * cov_gold);
  } else {
    rep.mcc_degenerate = true;
  }
  return rep;
}

inline nlohmann::json to_json(const EvalReport& rep) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& m : rep.per_class) {
    per_class.push_back({{"class", m.label},
                         {"accuracy", m.accuracy},
                         {"precision", m.precision},
                         {"recall", m.recall},
                         {"f1", m.f1},
                         {"confidence", m.confidence},
                         {"support", m.support},
                         {"tp", m.tp},
                         {"fp", m.fp},
                         {"fn", m.fn},
                         {"tn", m.tn}});
  }
  return {
      {"classes", rep.classes},
      {"confusion", rep.confusion},
      {"n", rep.n},
      {"per_class", per_class},
      {"total",
       {{"accuracy", rep.accuracy},
        {"precision", rep.macro_precision},
        {"recall", rep.macro_recall},
        {"f1", rep.macro_f1},
        {"confidence", rep.mean_confidence},
        {"kappa", rep.kappa},
        {"mcc", rep.mcc}}},
      {"macro_f1", rep.macro_f1},
      {"weighted", {{"precision", rep.weighted_precision}, {"recall", rep.weighted_recall}, {"f1", rep.weighted_f1}}},
      {"kappa_degenerate", rep.kappa_degenerate},
      {"mcc_degenerate", rep.mcc_degenerate},
      {"confidence_kind", rep.confidence_kind},
  };
}

namespace detail {
inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}
}  // namespace detail

/// One row per class plus a Total row; κ and MCC only on Total.
inline void write_csv(std::ostream& out, const EvalReport& rep) {
  using detail::fmt;
  out << "class,accuracy,f1,precision,recall,confidence,kappa,mcc,support\n";
  for (const auto& m : rep.per_class) {
    out << detail::csv_field(m.label) << ',' << fmt(m.accuracy) << ',' << fmt(m.f1) << ',' << fmt(m.precision)
        << ',' << fmt(m.recall) << ',' << fmt(m.confidence) << ",,," << m.support << '\n';
  }
  out << "Total," << fmt(rep.accuracy) << ',' << fmt(rep.macro_f1) << ',' << fmt(rep.macro_precision) << ','
      << fmt(rep.macro_recall) << ',' << fmt(rep.mean_confidence) << ',' << fmt(rep.kappa) << ',' << fmt(rep.mcc)
      << ',' << rep.n << '\n';
}

struct PersistenceMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<double>> rows;  // [source][judged], each row sums to 1 or is all-zero
  std::vector<std::uint64_t> row_counts;
  std::vector<std::string> warnings;

  double diagonal_mean() const {
    double s = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) s += rows[i][i];
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
  }
};

/// Fraction of samples with source label i judged as j.
inline PersistenceMatrix persistence_matrix(std::span<const std::string> source, std::span<const std::string> judged,
                                            std::vector<std::string> classes = {}) {
  if (source.size() != judged.size()) throw data_error("misaligned inputs");
  if (source.empty()) throw data_error("no samples for persistence matrix");
  if (classes.empty()) {
    std::set<std::string> all(source.begin(), source.end());
    all.insert(judged.begin(), judged.end());
    classes.assign(all.begin(), all.end());
  }
  const auto k = classes.size();
  auto index = [&](const std::string& l) {
    auto it = std::find(classes.begin(), classes.end(), l);
    if (it == classes.end()) throw data_error("label-set mismatch; unknown label \"" + l + "\"");
    return static_cast<std::size_t>(it - classes.begin());
  };
  PersistenceMatrix pm;
  pm.classes = classes;
  pm.rows.assign(k, std::vector<double>(k, 0.0));
  pm.row_counts.assign(k, 0);
  std::vector<std::vector<std::uint64_t>> counts(k, std::vector<std::uint64_t>(k, 0));
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto s = index(source[i]);
    ++counts[s][index(judged[i])];
    ++pm.row_counts[s];
  }
  for (std::size_t s = 0; s < k; ++s) {
    if (pm.row_counts[s] == 0) {
      pm.warnings.push_back("no samples with source label \"" + classes[s] + "\"; row left at zero");
      continue;
    }
    for (std::size_t j = 0; j < k; ++j) {
      pm.rows[s][j] = static_cast<double>(counts[s][j]) / static_cast<double>(pm.row_counts[s]);
    }
  }
  return pm;
}

inline void write_csv(std::ostream& out, const PersistenceMatrix& pm) {
  out << "source";
  for (const auto& c : pm.classes) out << ',' << detail::csv_field(c);
  out << ",n\n";
  for (std::size_t s = 0; s < pm.classes.size(); ++s) {
    out << detail::csv_field(pm.classes[s]);
    for (double v : pm.rows[s]) out << ',' << detail::fmt(v);
    out << ',' << pm.row_counts[s] << '\n';
  }
}

inline nlohmann::json to_json(const PersistenceMatrix& pm) {
  return {{"classes", pm.classes},
          {"rows", pm.rows},
          {"row_counts", pm.row_counts},
          {"diagonal_mean", pm.diagonal_mean()},
          {"warnings", pm.warnings}};
}

}  // namespace zsteer
