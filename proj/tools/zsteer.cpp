// zsteer: build score tables, train the reference LM, steer generation,
// evaluate judgments and sweep hyperparameters.
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 external-service error.

#include <CLI11.hpp>

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "zsteer/remote_judge.hpp"
#include "zsteer/sweep.hpp"
#include "zsteer/zsteer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace zsteer;

namespace {

void echo_config(const std::string& command, const json& effective) {
  std::cerr << "# zsteer " << command << ' ' << effective.dump() << '\n';
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw usage_error(std::string("missing ") + what);
  if (!fs::is_regular_file(path)) throw usage_error(std::string(what) + " not found: " + path);
}

void require_parent(const std::string& path) {
  if (path.empty()) throw usage_error("missing output path");
  auto parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) throw usage_error("output directory does not exist: " + parent.string());
}

std::vector<Record> read_records(const std::string& path, bool skip_malformed) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path);
  std::vector<std::string> skipped;
  auto recs = read_jsonl(in, JsonlOptions{skip_malformed}, &skipped);
  for (const auto& s : skipped) std::cerr << "warning: skipped malformed " << s << '\n';
  return recs;
}

std::string utc_now() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

struct SteeringFlags {
  SteeringConfig cfg;
  CLI::Option* max_tokens = nullptr;

  void add(CLI::App* app) {
    app->add_option("--top-k", cfg.top_k, "Candidate set size K")->capture_default_str();
    app->add_option("--rho", cfg.rho, "Favored fraction of the candidate set")->capture_default_str();
    app->add_option("--delta", cfg.delta, "Logit bias added to favored tokens")->capture_default_str();
    app->add_option("--temperature", cfg.temperature)->capture_default_str();
    app->add_option("--top-p", cfg.top_p)->capture_default_str();
    app->add_option("--no-repeat-ngram", cfg.no_repeat_ngram, "Ban repeated n-grams of this order (0 = off)")
        ->capture_default_str();
    max_tokens = app->add_option("--max-tokens", cfg.max_tokens,
                                 "Continuation length cap (default: per-class policy)");
    app->add_option("--seed", cfg.seed)->capture_default_str();
  }

  /// Applies the per-class length policy when --max-tokens was not given.
  SteeringConfig resolved(const std::string& target) const {
    auto c = cfg;
    c.target_class = target;
    if (max_tokens->count() == 0) c.max_tokens = MaxLengthPolicy{}.for_class(target);
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string out;
  std::size_t sentences = 2000;
  std::uint64_t seed = SyntheticDialectConfig{}.seed;
};

int cmd_synth(const SynthArgs& a) {
  require_parent(a.out);
  SyntheticDialectConfig sc;
  sc.sentences_per_class = a.sentences;
  sc.seed = a.seed;
  echo_config("synth", {{"out", a.out}, {"sentences_per_class", a.sentences}, {"seed", a.seed}});
  std::ostringstream os;
  for (const auto& r : SyntheticDialects(sc).corpus()) {
    os << json{{"text", r.text}, {"label", r.label}}.dump() << '\n';
  }
  io::write_file_atomic(a.out, os.str());
  return 0;
}

// ---------------------------------------------------------------- build-table

struct BuildArgs {
  std::string input, out, tokenizer = "whitespace", vocab_map;
  double alpha = 0.01;
  bool casefold = false, skip_malformed = false, stamp = false;
};

int cmd_build_table(const BuildArgs& a) {
  require_file(a.input, "input corpus");
  require_parent(a.out);
  TokenizerSpec spec;
  spec.kind = parse_tokenizer_kind(a.tokenizer);
  spec.casefold = a.casefold;
  spec.vocab_map_path = a.vocab_map;
  echo_config("build-table", {{"input", a.input}, {"out", a.out}, {"alpha", a.alpha}, {"tokenizer", to_json(spec)},
                              {"skip_malformed", a.skip_malformed}});
  const auto recs = read_records(a.input, a.skip_malformed);
  const auto counts = ingest_corpus(recs, Tokenizer(spec));
  if (counts.skipped_tokens()) {
    std::cerr << "warning: " << counts.skipped_tokens() << " tokens outside the vocabulary were skipped\n";
  }
  auto table = build_table(counts, spec, a.alpha);
  if (a.stamp) {
    auto meta = table.meta();
    meta.build_timestamp = utc_now();
    table = ScoreTable(table.vocab(), table.classes(),
                       [&] {
                         std::vector<std::vector<double>> z;
                         for (std::size_t r = 0; r < table.classes().size(); ++r) {
                           auto row = table.row(r);
                           z.emplace_back(row.begin(), row.end());
                         }
                         return z;
                       }(),
                       meta);
  }
  table.save(a.out);
  std::cerr << "table: " << table.classes().size() << " classes, " << table.vocab_size() << " tokens\n";
  return 0;
}

// ---------------------------------------------------------------- train-lm

struct TrainArgs {
  std::string input, table, out;
  std::size_t order = 3;
  double discount = NGramModel::kDefaultDiscount;
  bool skip_malformed = false;
};

int cmd_train_lm(const TrainArgs& a) {
  require_file(a.input, "input corpus");
  require_file(a.table, "table");
  require_parent(a.out);
  echo_config("train-lm", {{"input", a.input}, {"table", a.table}, {"out", a.out}, {"order", a.order},
                           {"discount", a.discount}});
  const auto table = ScoreTable::load(a.table);
  const auto recs = read_records(a.input, a.skip_malformed);
  Tokenizer tok(table.meta().tokenizer);
  std::vector<std::vector<TokenId>> seqs;
  std::size_t unknown = 0;
  for (const auto& r : recs) seqs.push_back(tok.encode(r.text, table.vocab(), &unknown));
  if (unknown) std::cerr << "warning: " << unknown << " tokens outside the table vocabulary were dropped\n";
  const auto model = NGramModel::train(seqs, table.vocab(), a.order, a.discount);
  model.save(a.out);
  return 0;
}

// ---------------------------------------------------------------- inspect

struct InspectArgs {
  std::string table, klass, format = "csv";
  std::size_t n = 10;
};

int cmd_inspect(const InspectArgs& a) {
  require_file(a.table, "table");
  const auto table = ScoreTable::load(a.table);
  std::vector<std::string> classes = a.klass.empty() ? table.classes() : std::vector<std::string>{a.klass};
  if (a.format == "json") {
    json out = json::object();
    for (const auto& c : classes) {
      json rows = json::array();
      for (const auto& [tok, z] : table.top_tokens(c, a.n)) rows.push_back({{"token", tok}, {"z", z}});
      out[c] = rows;
    }
    std::cout << out.dump(2) << '\n';
  } else {
    std::cout << "class,rank,token,z\n";
    for (const auto& c : classes) {
      std::size_t rank = 1;
      for (const auto& [tok, z] : table.top_tokens(c, a.n)) {
        std::cout << c << ',' << rank++ << ',' << tok << ',' << detail::fmt(z) << '\n';
      }
    }
  }
  return 0;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string table, model, prompt, prompts, out, trace, eos;
  std::vector<std::string> classes;
  SteeringFlags steer;
};

struct Loaded {
  ScoreTable table;
  NGramModel model;
};

Loaded load_pair(const std::string& table_path, const std::string& model_path) {
  require_file(table_path, "table");
  require_file(model_path, "model");
  auto table = ScoreTable::load(table_path);
  auto model = NGramModel::load(model_path);
  if (!(table.vocab() == model.vocab())) {
    throw data_error("vocab mismatch between table (" + std::to_string(table.vocab_size()) + " tokens) and model (" +
                     std::to_string(model.vocab_size()) + " tokens)");
  }
  return {std::move(table), std::move(model)};
}

int cmd_generate(GenerateArgs& a) {
  if (a.classes.empty()) throw usage_error("missing --class");
  if (!a.prompt.empty() && !a.prompts.empty()) throw usage_error("--prompt and --prompts are exclusive");
  if (!a.prompts.empty()) require_file(a.prompts, "prompts file");
  if (!a.out.empty()) require_parent(a.out);
  if (!a.trace.empty()) require_parent(a.trace);
  auto [table, model] = load_pair(a.table, a.model);
  for (const auto& c : a.classes) table.class_index(c);
  Tokenizer tok(table.meta().tokenizer.kind == TokenizerKind::external_vocab_map
                    ? TokenizerSpec{TokenizerKind::whitespace, table.meta().tokenizer.casefold, {}}
                    : table.meta().tokenizer);

  std::vector<Record> prompts;
  if (!a.prompts.empty()) {
    prompts = read_records(a.prompts, false);
  } else {
    prompts.push_back({a.prompt, ""});
  }
  std::optional<TokenId> eos;
  if (!a.eos.empty()) {
    eos = table.vocab().find(a.eos);
    if (!eos) throw usage_error("--eos token not in vocabulary: " + a.eos);
  }

  json effective = {{"table", a.table}, {"model", a.model}, {"classes", a.classes}, {"prompt", a.prompt},
                    {"prompts", a.prompts}};
  effective["steering"] = a.steer.resolved(a.classes.front()).to_json();
  echo_config("generate", effective);

  std::ostringstream out, trace_out;
  std::size_t sample = 0;
  const bool many = prompts.size() * a.classes.size() > 1;
  for (const auto& p : prompts) {
    std::size_t unknown = 0;
    const auto prompt_ids = tok.encode(p.text, table.vocab(), &unknown);
    if (unknown) std::cerr << "warning: " << unknown << " prompt tokens outside the vocabulary were dropped\n";
    for (const auto& target : a.classes) {
      auto cfg = a.steer.resolved(target);
      cfg.eos = eos;
      if (many) cfg.seed = derive_seed(a.steer.cfg.seed, sample);
      const auto gen = generate(model, prompt_ids, table, cfg, !a.trace.empty());
      const auto text = tok.decode(gen.tokens, table.vocab());
      if (a.out.empty()) {
        std::cout << text << '\n';
      } else {
        out << json{{"sample", sample},     {"prompt", p.text}, {"source_label", p.label}, {"target_class", target},
                    {"seed", cfg.seed},     {"max_tokens", cfg.max_tokens}, {"text", text}, {"tokens", gen.tokens}}
                   .dump()
            << '\n';
      }
      for (const auto& t : gen.traces) {
        auto j = t.to_json();
        j["sample"] = sample;
        trace_out << j.dump() << '\n';
      }
      ++sample;
    }
  }
  if (!a.out.empty()) io::write_file_atomic(a.out, out.str());
  if (!a.trace.empty()) io::write_file_atomic(a.trace, trace_out.str());
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string input, table, judge_config, task, out, persistence_out, format = "json";
  std::vector<std::string> classes;
};

int cmd_evaluate(const EvaluateArgs& a) {
  require_file(a.input, "input");
  if (a.format != "json" && a.format != "csv") throw usage_error("--format must be json or csv");
  if (!a.out.empty()) require_parent(a.out);
  if (!a.persistence_out.empty()) require_parent(a.persistence_out);
  echo_config("evaluate", {{"input", a.input}, {"table", a.table}, {"judge_config", a.judge_config}, {"task", a.task},
                           {"format", a.format}, {"classes", a.classes}});

  std::ifstream in(a.input);
  std::vector<json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception&) {
      throw data_error("malformed JSONL at line " + std::to_string(line_no));
    }
  }
  if (rows.empty()) throw data_error("no data");

  std::vector<std::string> pred, gold, source;
  std::vector<double> conf;
  std::optional<ScoreTable> table;
  std::optional<RemoteJudge> remote;
  std::optional<JudgeTask> task;
  std::string confidence_kind = "judge";
  std::vector<std::string> to_judge;
  std::vector<std::string> classes = a.classes;

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    auto field = [&](std::initializer_list<const char*> names) -> std::optional<std::string> {
      for (auto n : names) {
        if (r.contains(n) && r[n].is_string()) return r[n].get<std::string>();
      }
      return std::nullopt;
    };
    auto g = field({"gold", "target_class"});
    if (!g) throw data_error("row " + std::to_string(i + 1) + " has no gold/target_class");
    gold.push_back(*g);
    if (auto s = field({"source", "source_label"}); s && !s->empty()) source.push_back(*s);
    if (auto p = field({"pred"})) {
      pred.push_back(*p);
      conf.push_back(r.value("confidence", 1.0));
    } else if (auto t = field({"text"})) {
      to_judge.push_back(*t);
    } else {
      throw data_error("row " + std::to_string(i + 1) + " has neither pred nor text");
    }
  }
  if (!pred.empty() && !to_judge.empty()) throw data_error("input mixes predictions and texts");

  if (!to_judge.empty()) {
    if (!a.judge_config.empty()) {
      if (a.task.empty()) throw usage_error("--task is required with --judge-config");
      task = parse_judge_task(a.task);
      auto cfg = JudgeEndpointConfig::from_file(a.judge_config);
      cfg.log = [](std::string_view m) { std::cerr << "judge: " << m << '\n'; };
      remote.emplace(cfg);
      for (auto& j : remote->judge_all(to_judge, *task)) {
        pred.push_back(j.label);
        conf.push_back(j.confidence);
      }
      for (auto& g : gold) {
        auto c = canonical_label(*task, g);
        if (!c) throw data_error("label-set mismatch; \"" + g + "\" is not a " + a.task + " label");
        g = *c;
      }
      if (classes.empty()) {
        for (const auto& [full, code] : label_alphabet(*task)) classes.push_back(full);
      }
    } else {
      require_file(a.table, "table (or --judge-config)");
      table = ScoreTable::load(a.table);
      confidence_kind = "statistical";
      for (const auto& t : to_judge) {
        auto j = classify(t, *table);
        pred.push_back(j.label);
        conf.push_back(j.confidence);
      }
      if (classes.empty()) classes = table->classes();
    }
  }

  auto rep = metrics(pred, gold, conf, classes);
  rep.confidence_kind = confidence_kind;
  std::ostringstream os;
  if (a.format == "json") {
    os << to_json(rep).dump(2) << '\n';
  } else {
    write_csv(os, rep);
  }
  if (a.out.empty()) {
    std::cout << os.str();
  } else {
    io::write_file_atomic(a.out, os.str());
  }
  if (rep.kappa_degenerate || rep.mcc_degenerate) {
    std::cerr << "note: degenerate chance-correction denominator; kappa/mcc reported as 0\n";
  }

  if (!a.persistence_out.empty()) {
    if (source.size() != pred.size()) throw data_error("persistence matrix needs a source label on every row");
    auto pm = persistence_matrix(source, pred, rep.classes);
    for (const auto& w : pm.warnings) std::cerr << "warning: " << w << '\n';
    std::ostringstream ps;
    write_csv(ps, pm);
    io::write_file_atomic(a.persistence_out, ps.str());
  }
  return 0;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  std::string table, model, prompts, out;
  std::vector<double> deltas{0.0, 1.5, 3.0};
  std::vector<double> rhos{0.5};
  std::vector<std::size_t> top_ks{100};
  std::size_t samples = 100;
  std::size_t workers = 1;
  SteeringFlags steer;
};

int cmd_sweep(SweepArgs& a) {
  if (!a.out.empty()) require_parent(a.out);
  auto [table, model] = load_pair(a.table, a.model);
  std::vector<std::vector<TokenId>> prompts;
  if (!a.prompts.empty()) {
    require_file(a.prompts, "prompts file");
    Tokenizer tok(table.meta().tokenizer);
    for (const auto& r : read_records(a.prompts, false)) prompts.push_back(tok.encode(r.text, table.vocab()));
  }
  auto base = a.steer.cfg;
  if (a.steer.max_tokens->count() == 0) base.max_tokens = MaxLengthPolicy{}.fallback;
  SweepGrid grid{a.deltas, a.rhos, a.top_ks};
  echo_config("sweep", {{"table", a.table}, {"model", a.model}, {"deltas", a.deltas}, {"rhos", a.rhos},
                        {"top_ks", a.top_ks}, {"samples", a.samples}, {"workers", a.workers},
                        {"base", base.to_json()}});
  const auto rows = run_sweep(model, table, base, grid, a.samples, a.workers, prompts);
  std::ostringstream os;
  write_sweep_csv(os, rows);
  if (a.out.empty()) {
    std::cout << os.str();
  } else {
    io::write_file_atomic(a.out, os.str());
  }
  return 0;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage: return 1;
    case ErrorKind::data: return 2;
    case ErrorKind::external: return 3;
  }
  return 1;
}

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::data: return "data";
    case ErrorKind::external: return "external";
  }
  return "usage";
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Statistical token z-scores for decoding-time logit steering"};
  app.set_config("--config", "", "TOML/INI file with defaults; command-line flags take precedence");
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Write a synthetic two-dialect corpus (JSONL)");
  s_synth->add_option("--out", synth.out)->required();
  s_synth->add_option("--sentences", synth.sentences, "Sentences per class")->capture_default_str();
  s_synth->add_option("--seed", synth.seed)->capture_default_str();

  BuildArgs build;
  auto* s_build = app.add_subcommand("build-table", "Build a score table from a labeled JSONL corpus");
  s_build->add_option("--input", build.input)->required();
  s_build->add_option("--out", build.out)->required();
  s_build->add_option("--alpha", build.alpha, "Dirichlet smoothing scale")->capture_default_str();
  s_build->add_option("--tokenizer", build.tokenizer)
      ->check(CLI::IsMember({"whitespace", "byte", "external-vocab-map"}))
      ->capture_default_str();
  s_build->add_option("--vocab-map", build.vocab_map, "Token-per-line map for external-vocab-map");
  s_build->add_flag("--casefold", build.casefold);
  s_build->add_flag("--skip-malformed", build.skip_malformed);
  s_build->add_flag("--stamp", build.stamp, "Record the build time in the table header");

  TrainArgs train;
  auto* s_train = app.add_subcommand("train-lm", "Train the reference n-gram LM over a table's vocabulary");
  s_train->add_option("--input", train.input)->required();
  s_train->add_option("--table", train.table)->required();
  s_train->add_option("--out", train.out)->required();
  s_train->add_option("--order", train.order)->capture_default_str();
  s_train->add_option("--discount", train.discount)->capture_default_str();
  s_train->add_flag("--skip-malformed", train.skip_malformed);

  InspectArgs inspect;
  auto* s_inspect = app.add_subcommand("inspect", "List the highest-z tokens per class");
  s_inspect->add_option("--table", inspect.table)->required();
  s_inspect->add_option("--class", inspect.klass);
  s_inspect->add_option("-n,--top", inspect.n)->capture_default_str();
  s_inspect->add_option("--format", inspect.format)->check(CLI::IsMember({"json", "csv"}))->capture_default_str();

  GenerateArgs gen;
  auto* s_gen = app.add_subcommand("generate", "Steered generation with the reference LM");
  s_gen->add_option("--table", gen.table)->required();
  s_gen->add_option("--model", gen.model)->required();
  s_gen->add_option("--class", gen.classes, "Target class (repeatable)");
  s_gen->add_option("--prompt", gen.prompt, "Prompt text");
  s_gen->add_option("--prompts", gen.prompts, "JSONL prompts ({text,label}); label is kept as source_label");
  s_gen->add_option("--out", gen.out, "Write generations as JSONL instead of printing text");
  s_gen->add_option("--trace", gen.trace, "Write per-step traces as JSONL");
  s_gen->add_option("--eos", gen.eos, "Stop after this token");
  gen.steer.add(s_gen);

  EvaluateArgs eval;
  auto* s_eval = app.add_subcommand("evaluate", "Metric report from predictions or generated texts");
  s_eval->add_option("--input", eval.input, "JSONL with pred/gold/confidence or text/target_class")->required();
  s_eval->add_option("--table", eval.table, "Statistical judge table");
  s_eval->add_option("--judge-config", eval.judge_config, "Remote judge endpoint config (JSON)");
  s_eval->add_option("--task", eval.task, "Remote judge task")->check(CLI::IsMember({"ose", "wikipol"}));
  s_eval->add_option("--class", eval.classes, "Fix the label set and its order (repeatable)");
  s_eval->add_option("--out", eval.out);
  s_eval->add_option("--persistence-out", eval.persistence_out, "Source-label persistence matrix (CSV)");
  s_eval->add_option("--format", eval.format)->check(CLI::IsMember({"json", "csv"}))->capture_default_str();

  SweepArgs sweep;
  auto* s_sweep = app.add_subcommand("sweep", "Grid over delta x rho x top-k with the statistical judge");
  s_sweep->add_option("--table", sweep.table)->required();
  s_sweep->add_option("--model", sweep.model)->required();
  s_sweep->add_option("--deltas", sweep.deltas)->delimiter(',')->capture_default_str();
  s_sweep->add_option("--rhos", sweep.rhos)->delimiter(',')->capture_default_str();
  s_sweep->add_option("--top-ks", sweep.top_ks)->delimiter(',')->capture_default_str();
  s_sweep->add_option("--samples", sweep.samples, "Generations per grid point")->capture_default_str();
  s_sweep->add_option("--workers", sweep.workers)->capture_default_str();
  s_sweep->add_option("--prompts", sweep.prompts);
  s_sweep->add_option("--out", sweep.out);
  sweep.steer.add(s_sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "zsteer: error[usage]: " << one_line(e.what()) << '\n';
    return 1;
  }

  try {
    if (*s_synth) return cmd_synth(synth);
    if (*s_build) return cmd_build_table(build);
    if (*s_train) return cmd_train_lm(train);
    if (*s_inspect) return cmd_inspect(inspect);
    if (*s_gen) return cmd_generate(gen);
    if (*s_eval) return cmd_evaluate(eval);
    if (*s_sweep) return cmd_sweep(sweep);
  } catch (const Error& e) {
    std::cerr << "zsteer: error[" << kind_name(e.kind()) << "]: " << one_line(e.what()) << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "zsteer: error[data]: " << one_line(e.what()) << '\n';
    return 2;
  }
  return 1;
}
