#pragma once

// Hyperparameter grid over (δ, ρ, K): each grid point generates a balanced
// batch of continuations, one target class per sample in turn, and scores
// them with the statistical judge.

#include <algorithm>
#include <atomic>
#include <exception>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "zsteer/evaluation.hpp"
#include "zsteer/rng.hpp"
#include "zsteer/score_table.hpp"
#include "zsteer/steering.hpp"

namespace zsteer {

struct SweepGrid {
  std::vector<double> deltas;
  std::vector<double> rhos;
  std::vector<std::size_t> top_ks;

  std::size_t size() const noexcept { return deltas.size() * rhos.size() * top_ks.size(); }
};

struct SweepRow {
  std::size_t index = 0;
  double delta = 0.0;
  double rho = 0.0;
  std::size_t top_k = 0;
  EvalReport report;
};

/// Seed of the stream owned by grid point `index`.
inline std::uint64_t grid_seed(std::uint64_t seed, std::size_t index) { return derive_seed(seed, index); }

/// Seed of sample `i` inside a grid point's stream.
inline std::uint64_t sample_seed(std::uint64_t stream, std::size_t i) { return derive_seed(stream, i); }

/// Generates and judges `samples` continuations for one configuration.
/// Sample i targets class i mod |classes| and uses prompts[i mod |prompts|]
/// (an empty prompt when none are given).
template <LogitSource S>
EvalReport evaluate_config(const S& source, const ScoreTable& table, SteeringConfig cfg, std::uint64_t stream,
                           std::size_t samples, std::span<const std::vector<TokenId>> prompts = {}) {
  std::vector<std::string> pred, gold;
  std::vector<double> conf;
  const auto& classes = table.classes();
  for (std::size_t i = 0; i < samples; ++i) {
    cfg.target_class = classes[i % classes.size()];
    cfg.seed = sample_seed(stream, i);
    const std::span<const TokenId> prompt =
        prompts.empty() ? std::span<const TokenId>{} : std::span<const TokenId>(prompts[i % prompts.size()]);
    const auto gen = generate(source, prompt, table, cfg);
    if (gen.tokens.empty()) throw usage_error("sweep needs max_tokens >= 1");
    const auto j = classify_ids(gen.tokens, table);
    pred.push_back(j.label);
    gold.push_back(cfg.target_class);
    conf.push_back(j.confidence);
  }
  auto rep = metrics(pred, gold, conf, classes);
  rep.confidence_kind = "statistical";
  return rep;
}

/// Evaluates every grid point, up to `workers` at a time. Rows come back in
/// grid order (δ outermost, then ρ, then K) whatever the scheduling.
template <LogitSource S>
std::vector<SweepRow> run_sweep(const S& source, const ScoreTable& table, const SteeringConfig& base,
                                const SweepGrid& grid, std::size_t samples, std::size_t workers = 1,
                                std::span<const std::vector<TokenId>> prompts = {}) {
  if (grid.size() == 0) throw usage_error("sweep grid is empty");
  if (samples == 0) throw usage_error("sweep needs at least one sample per grid point");
  std::vector<SweepRow> rows;
  for (double d : grid.deltas) {
    for (double r : grid.rhos) {
      for (std::size_t k : grid.top_ks) {
        SweepRow row;
        row.index = rows.size();
        row.delta = d;
        row.rho = r;
        row.top_k = k;
        rows.push_back(row);
      }
    }
  }
  std::vector<std::exception_ptr> errors(rows.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < rows.size();) {
      try {
        auto cfg = base;
        cfg.delta = rows[i].delta;
        cfg.rho = rows[i].rho;
        cfg.top_k = rows[i].top_k;
        cfg.validate();
        rows[i].report = evaluate_config(source, table, cfg, grid_seed(base.seed, i), samples, prompts);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, rows.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  using detail::fmt;
  out << "delta,rho,top_k,samples,accuracy,macro_f1,kappa,mcc,mean_confidence\n";
  for (const auto& r : rows) {
    out << fmt(r.delta) << ',' << fmt(r.rho) << ',' << r.top_k << ',' << r.report.n << ','
        << fmt(r.report.accuracy) << ',' << fmt(r.report.macro_f1) << ',' << fmt(r.report.kappa) << ','
        << fmt(r.report.mcc) << ',' << fmt(r.report.mean_confidence) << '\n';
  }
}

}  // namespace zsteer
