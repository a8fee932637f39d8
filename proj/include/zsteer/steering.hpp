#pragma once

// Decoding-time logit steering.
//
// Each step runs a fixed pipeline over the source model's logits:
//
//   n-gram ban -> top-K candidates C_t -> favored set F_t (top ⌈ρ|C_t|⌉ of C_t
//   by z_r) -> +δ on F_t -> divide by T -> softmax over C_t -> top-p nucleus,
//   renormalized -> sample
//
// The bias is applied before nucleus truncation so favored tokens can enter
// the nucleus. Sampling normalizes over the nucleus rather than over all of V;
// traces record this as normalization = "nucleus".

#include <algorithm>
#include <cctype>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "zsteer/error.hpp"
#include "zsteer/rng.hpp"
#include "zsteer/score_table.hpp"
#include "zsteer/tokenizer.hpp"

namespace zsteer {

inline constexpr double kBanned = -std::numeric_limits<double>::infinity();

struct SteeringConfig {
  std::size_t top_k = 100;
  double rho = 0.5;
  double delta = 1.5;
  double temperature = 0.8;
  double top_p = 0.95;
  std::size_t no_repeat_ngram = 3;  // 0 disables
  std::size_t max_tokens = 50;
  std::uint64_t seed = 0;
  std::string target_class;
  std::optional<TokenId> eos;  // stop after emitting this token

  void validate() const {
    if (top_k < 1) throw usage_error("top_k must be >= 1");
    if (!(rho >= 0.0 && rho <= 1.0)) throw usage_error("rho must lie in [0, 1]");
    if (!std::isfinite(delta)) throw usage_error("delta must be finite");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw usage_error("temperature must be > 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw usage_error("top_p must lie in (0, 1]");
  }

  nlohmann::json to_json() const {
    nlohmann::json j = {
        {"top_k", top_k},           {"rho", rho},
        {"delta", delta},           {"temperature", temperature},
        {"top_p", top_p},           {"no_repeat_ngram", no_repeat_ngram},
        {"max_tokens", max_tokens}, {"seed", seed},
        {"target_class", target_class},
    };
    j["eos"] = eos ? nlohmann::json(*eos) : nlohmann::json(nullptr);
    return j;
  }
};

/// Generation length caps per target class: 650/800/1000 for the three
/// reading levels, 50 for anything else. Matching is case-insensitive and
/// also accepts the single-letter codes E/I/A.
struct MaxLengthPolicy {
  std::map<std::string, std::size_t> per_class = {
      {"elementary", 650}, {"intermediate", 800}, {"advanced", 1000},
      {"e", 650},          {"i", 800},            {"a", 1000},
  };
  std::size_t fallback = 50;

  std::size_t for_class(std::string_view label) const {
    std::string key(label);
    for (char& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    auto it = per_class.find(key);
    return it == per_class.end() ? fallback : it->second;
  }
};

/// Everything a single step did, stage by stage. Arrays are indexed like
/// `candidates` (rank order by original logit) except the nucleus arrays,
/// which are in nucleus order.
struct StepTrace {
  std::size_t step = 0;
  double temperature = 0.0;
  double top_p = 0.0;
  std::size_t banned = 0;
  std::vector<TokenId> candidates;
  std::vector<double> candidate_logits;  // pre-bias
  std::vector<TokenId> favored;
  std::vector<double> biased_logits;
  std::vector<double> probs;             // softmax over C_t after bias and temperature
  std::vector<TokenId> nucleus;
  std::vector<double> nucleus_probs;     // P'_t, renormalized over the nucleus
  double draw = 0.0;
  TokenId token = 0;

  nlohmann::json to_json() const {
    return {
        {"step", step},
        {"temperature", temperature},
        {"top_p", top_p},
        {"banned", banned},
        {"candidates", candidates},
        {"candidate_logits", candidate_logits},
        {"favored", favored},
        {"biased_logits", biased_logits},
        {"probs", probs},
        {"nucleus", nucleus},
        {"nucleus_probs", nucleus_probs},
        {"normalization", "nucleus"},
        {"draw", draw},
        {"token", token},
    };
  }
};

/// Ids that would complete an n-gram already present in `history`.
inline std::vector<TokenId> no_repeat_ngram_ban(std::span<const TokenId> history, std::size_t n) {
  std::vector<TokenId> banned;
  if (n == 0 || history.size() + 1 < n) return banned;
  const std::size_t k = n - 1;  // length of the completing prefix
  const auto tail = history.subspan(history.size() - k);
  for (std::size_t i = 0; i + n <= history.size(); ++i) {
    if (std::equal(tail.begin(), tail.end(), history.begin() + static_cast<std::ptrdiff_t>(i))) {
      banned.push_back(history[i + k]);
    }
  }
  std::sort(banned.begin(), banned.end());
  banned.erase(std::unique(banned.begin(), banned.end()), banned.end());
  return banned;
}

/// The K highest-logit ids, in rank order (ties by ascending id). Entries
/// equal to kBanned are skipped.
inline std::vector<TokenId> candidate_set(std::span<const double> logits, std::size_t k) {
  if (k < 1) throw usage_error("top_k must be >= 1");
  std::vector<TokenId> ids;
  ids.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i];
    if (x == kBanned) continue;
    if (!std::isfinite(x)) {
      throw data_error("non-finite logit at id " + std::to_string(i));
    }
    ids.push_back(static_cast<TokenId>(i));
  }
  if (ids.empty()) {
    throw data_error("no candidates");
  }
  const auto keep = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(),
                    [&](TokenId a, TokenId b) { return logits[a] != logits[b] ? logits[a] > logits[b] : a < b; });
  ids.resize(keep);
  return ids;
}

/// m = ⌈ρ·n⌉. A relative slack of 1e-12 keeps products such as 0.3·10 from
/// rounding up past an exact integer.
inline std::size_t favored_count(double rho, std::size_t n) {
  if (rho <= 0.0 || n == 0) return 0;
  const double x = rho * static_cast<double>(n);
  const auto m = static_cast<std::size_t>(std::ceil(x - 1e-12 * std::max(1.0, x)));
  return std::min(std::max<std::size_t>(m, 1), n);
}

/// F_t: the ⌈ρ|C_t|⌉ candidates with the highest z (ties by ascending id).
/// `z` is one class row of a score table; ids beyond it rank with z = 0.
/// Returned in descending-z order.
inline std::vector<TokenId> favored_set(std::span<const TokenId> candidates, std::span<const double> z, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw usage_error("rho must lie in [0, 1]");
  const auto m = favored_count(rho, candidates.size());
  std::vector<TokenId> ids(candidates.begin(), candidates.end());
  auto score = [&](TokenId id) { return id < z.size() ? z[id] : 0.0; };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(m), ids.end(),
                    [&](TokenId a, TokenId b) {
                      const double za = score(a), zb = score(b);
                      return za != zb ? za > zb : a < b;
                    });
  ids.resize(m);
  return ids;
}

inline std::vector<TokenId> favored_set(std::span<const TokenId> candidates, const ScoreTable& table,
                                        std::string_view label, double rho) {
  return favored_set(candidates, table.row(label), rho);
}

/// z'_t: logits + δ on the favored ids; the input is left untouched.
inline std::vector<double> apply_bias(std::span<const double> logits, std::span<const TokenId> favored,
                                      double delta) {
  std::vector<double> out(logits.begin(), logits.end());
  for (TokenId id : favored) {
    if (id >= out.size()) throw usage_error("favored id out of range");
    out[id] += delta;
  }
  return out;
}

struct StepResult {
  TokenId token = 0;
  StepTrace trace;
};

namespace detail {

// Temperature -> softmax over the candidates -> nucleus -> draw. Shared by the
// steered and unsteered paths so that δ = 0 reproduces the unsteered token.
inline void finish_step(std::span<const double> logits, StepTrace& t, double temperature, double top_p,
                        double u) {
  const auto n = t.candidates.size();
  t.biased_logits.resize(n);
  std::vector<double> scaled(n);
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    t.biased_logits[i] = logits[t.candidates[i]];
    scaled[i] = t.biased_logits[i] / temperature;
    hi = std::max(hi, scaled[i]);
  }
  double sum = 0.0;
  t.probs.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    t.probs[i] = std::exp(scaled[i] - hi);
    sum += t.probs[i];
  }
  for (auto& p : t.probs) p /= sum;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return t.probs[a] != t.probs[b] ? t.probs[a] > t.probs[b] : t.candidates[a] < t.candidates[b];
  });
  double cum = 0.0;
  std::size_t keep = 0;
  while (keep < n) {
    cum += t.probs[order[keep]];
    ++keep;
    if (cum >= top_p) break;
  }
  t.nucleus.resize(keep);
  t.nucleus_probs.resize(keep);
  double mass = 0.0;
  for (std::size_t i = 0; i < keep; ++i) mass += t.probs[order[i]];
  for (std::size_t i = 0; i < keep; ++i) {
    t.nucleus[i] = t.candidates[order[i]];
    t.nucleus_probs[i] = t.probs[order[i]] / mass;
  }

  t.temperature = temperature;
  t.top_p = top_p;
  t.draw = u;
  t.token = t.nucleus.back();
  double acc = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    acc += t.nucleus_probs[i];
    if (u < acc) {
      t.token = t.nucleus[i];
      break;
    }
  }
}

inline std::vector<double> banned_logits(std::span<const double> logits, std::span<const TokenId> history,
                                         std::size_t ngram, std::size_t& n_banned) {
  std::vector<double> work(logits.begin(), logits.end());
  const auto banned = no_repeat_ngram_ban(history, ngram);
  n_banned = 0;
  for (TokenId id : banned) {
    if (id < work.size() && work[id] != kBanned) {
      work[id] = kBanned;
      ++n_banned;
    }
  }
  return work;
}

}  // namespace detail

/// One steered decoding step. `z` is the target class row of the table.
/// The draw depends only on (cfg.seed, step).
inline StepResult steer_step(std::span<const double> logits, std::span<const double> z, const SteeringConfig& cfg,
                             std::span<const TokenId> history, std::size_t step) {
  StepResult res;
  auto& t = res.trace;
  t.step = step;
  auto work = detail::banned_logits(logits, history, cfg.no_repeat_ngram, t.banned);
  t.candidates = candidate_set(work, cfg.top_k);
  t.candidate_logits.reserve(t.candidates.size());
  for (TokenId id : t.candidates) t.candidate_logits.push_back(work[id]);
  t.favored = favored_set(t.candidates, z, cfg.rho);
  const auto biased = apply_bias(work, t.favored, cfg.delta);
  detail::finish_step(biased, t, cfg.temperature, cfg.top_p, step_uniform(cfg.seed, step));
  res.token = t.token;
  return res;
}

inline StepResult steer_step(std::span<const double> logits, const ScoreTable& table, std::string_view label,
                             const SteeringConfig& cfg, std::span<const TokenId> history, std::size_t step) {
  return steer_step(logits, table.row(label), cfg, history, step);
}

/// The same sampling stack without steering (no favored set, no bias).
inline StepResult sample_step(std::span<const double> logits, const SteeringConfig& cfg,
                              std::span<const TokenId> history, std::size_t step) {
  StepResult res;
  auto& t = res.trace;
  t.step = step;
  auto work = detail::banned_logits(logits, history, cfg.no_repeat_ngram, t.banned);
  t.candidates = candidate_set(work, cfg.top_k);
  t.candidate_logits.reserve(t.candidates.size());
  for (TokenId id : t.candidates) t.candidate_logits.push_back(work[id]);
  detail::finish_step(work, t, cfg.temperature, cfg.top_p, step_uniform(cfg.seed, step));
  res.token = t.token;
  return res;
}

/// A next-token logit provider.
///
/// `logits(prefix)` returns |V| real values for the token after `prefix`.
/// Implementations are called from one thread per generation session;
/// sharing one source across concurrent sessions requires `logits` to be
/// const-safe, which holds for every source in this library.
template <class S>
concept LogitSource = requires(const S& s, std::span<const TokenId> prefix) {
  { s.vocab_size() } -> std::convertible_to<std::size_t>;
  { s.logits(prefix) } -> std::convertible_to<std::vector<double>>;
};

struct Generation {
  std::vector<TokenId> tokens;  // continuation only
  std::vector<StepTrace> traces;
};

namespace detail {

template <LogitSource S, class Step>
Generation generate_with(const S& source, std::span<const TokenId> prompt, const SteeringConfig& cfg,
                         bool keep_traces, Step&& step_fn) {
  cfg.validate();
  Generation out;
  std::vector<TokenId> history(prompt.begin(), prompt.end());
  for (std::size_t t = 0; t < cfg.max_tokens; ++t) {
    std::vector<double> logits;
    try {
      logits = source.logits(history);
    } catch (const std::exception& e) {
      throw external_error("logit source error at step " + std::to_string(t) + ": " + e.what());
    }
    if (logits.size() != source.vocab_size()) {
      throw external_error("logit source error at step " + std::to_string(t) + ": returned " +
                           std::to_string(logits.size()) + " logits for vocabulary of " +
                           std::to_string(source.vocab_size()));
    }
    auto res = step_fn(std::span<const double>(logits), std::span<const TokenId>(history), t);
    history.push_back(res.token);
    out.tokens.push_back(res.token);
    if (keep_traces) out.traces.push_back(std::move(res.trace));
    if (cfg.eos && res.token == *cfg.eos) break;
  }
  return out;
}

}  // namespace detail

/// Autoregressive steered generation toward cfg.target_class.
template <LogitSource S>
Generation generate(const S& source, std::span<const TokenId> prompt, const ScoreTable& table,
                    const SteeringConfig& cfg, bool keep_traces = false) {
  if (table.vocab_size() != source.vocab_size()) {
    throw data_error("vocab mismatch: table has " + std::to_string(table.vocab_size()) +
                     " tokens, source has " + std::to_string(source.vocab_size()));
  }
  const auto z = table.row(cfg.target_class);
  return detail::generate_with(source, prompt, cfg, keep_traces,
                               [&](std::span<const double> logits, std::span<const TokenId> hist, std::size_t t) {
                                 return steer_step(logits, z, cfg, hist, t);
                               });
}

/// The same loop with steering switched off.
template <LogitSource S>
Generation generate_unsteered(const S& source, std::span<const TokenId> prompt, const SteeringConfig& cfg,
                              bool keep_traces = false) {
  return detail::generate_with(source, prompt, cfg, keep_traces,
                               [&](std::span<const double> logits, std::span<const TokenId> hist, std::size_t t) {
                                 return sample_step(logits, cfg, hist, t);
                               });
}

inline void write_trace_jsonl(std::ostream& out, std::span<const StepTrace> traces) {
  for (const auto& t : traces) out << t.to_json().dump() << '\n';
}

}  // namespace zsteer
