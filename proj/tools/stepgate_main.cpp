// Copyright 2026 The stepgate Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line entry point. Exit codes: 0 success, 1 policy or data error,
// 2 usage error, 3 transport error.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "stepgate/controller.h"
#include "stepgate/corpus.h"
#include "stepgate/errors.h"
#include "stepgate/format.h"
#include "stepgate/gateway.h"
#include "stepgate/harness.h"
#include "stepgate/metrics.h"
#include "stepgate/segmenter.h"
#include "stepgate/tagger.h"
#include "stepgate/taxonomy.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stepgate;

namespace {

struct Options {
  std::string corpus;
  std::string policy = "traces";
  std::string delta;
  std::size_t window = kDefaultWindow;
  std::string alpha;
  std::optional<double> eta;
  std::string partition;
  int taxonomy_level = 13;
  std::string tagger = "replay";
  std::string tagger_url;
  std::string lexicon;
  bool tagger_fallback = false;
  double noise_p = 1.0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string endpoint;
  std::string api_key_env = "OPENAI_API_KEY";
  std::string model;
  std::string prompt;
  std::string prompt_file;
  std::string gold;
  std::string answer_mode = "boxed_math";
  std::string exit_prompt_file;
  std::int64_t exit_budget = kDefaultExitTokenBudget;
  std::int64_t max_tokens = 32768;
  std::optional<std::size_t> max_steps;
  std::string out = ".";
  std::size_t jobs = 1;
  bool correct_only = true;
  std::string runs;
  std::string ratings;
  std::string method = "auto";
  std::string text;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw InvalidArgument("empty item in list '" + text + "'");
    out.push_back(item.substr(b, e - b + 1));
  }
  if (out.empty()) throw InvalidArgument("empty list");
  return out;
}

double parse_number(const std::string& text, const char* what) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size()) throw InvalidArgument(std::string(what) + " must be a number, got '" + text + "'");
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& fill) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  fill(out);
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

// Timestamps and wall times live here so the report files stay identical
// across invocations.
void write_sidecar(const Options& o, const std::string& command, double wall_s) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  write_file(fs::path(o.out) / "run.log", [&](std::ostream& out) {
    out << stamp << ' ' << command << " wall_time_s=" << format_fixed(wall_s, 3) << '\n';
  });
}

bool given(const CLI::App& cmd, const std::string& name) {
  const CLI::Option* opt = cmd.get_option_no_throw(name);
  return opt && opt->count() > 0;
}

TaggerKind parse_tagger(const std::string& name) {
  for (auto k : {TaggerKind::Replay, TaggerKind::Lexicon, TaggerKind::Remote, TaggerKind::Noisy}) {
    if (name == tagger_kind_name(k)) return k;
  }
  throw InvalidArgument("unknown tagger '" + name + "'");
}

TaggerSpec tagger_spec(const Options& o) {
  TaggerSpec spec;
  spec.kind = parse_tagger(o.tagger);
  spec.url = o.tagger_url;
  spec.lexicon_file = o.lexicon;
  spec.noise_p = o.noise_p;
  spec.seed = o.seed;
  spec.remote_fallback_other = o.tagger_fallback;
  return spec;
}

ClassPartition resolve_partition(const Options& o) {
  const CoarseTaxonomy coarse(o.taxonomy_level);
  if (o.taxonomy_level != 13) {
    if (!o.partition.empty()) {
      throw InvalidArgument("--partition and --taxonomy-level cannot be combined");
    }
    return coarse.fine_partition();
  }
  if (o.partition.empty()) return default_partition();
  if (fs::exists(o.partition)) return load_partition_file(o.partition);
  return partition_by_name(o.partition);
}

Corpus load(const Options& o) {
  if (o.corpus.empty()) throw InvalidArgument("--corpus is required");
  Corpus corpus = load_corpus(o.corpus);
  for (const auto& w : corpus.warnings) {
    std::cerr << "warning: " << o.corpus << ":" << w.line << ": " << w.message << '\n';
  }
  return corpus;
}

// Policy template from --policy (kind name or JSON file), with explicit
// flags layered on top.
Policy base_policy(const Options& o, const CLI::App& cmd) {
  Policy p;
  if (fs::exists(o.policy)) {
    json doc;
    try {
      doc = json::parse(read_file(o.policy));
    } catch (const json::parse_error& e) {
      throw InvalidArgument("policy file " + o.policy + ": " + e.what());
    }
    p = policy_from_json(doc);
  } else {
    p.kind = parse_policy_kind(o.policy);
  }
  if (given(cmd, "--window")) p.window = o.window;
  if (given(cmd, "--partition") || given(cmd, "--taxonomy-level")) p.partition = resolve_partition(o);
  if (given(cmd, "--exit-budget")) p.exit_token_budget = o.exit_budget;
  if (given(cmd, "--exit-prompt-file")) p.exit_prompt = read_file(o.exit_prompt_file);
  p.on_tagger_error = o.tagger_fallback ? TaggerFailure::TagOther : TaggerFailure::Fail;
  if (given(cmd, "--eta")) p.eta = o.eta;
  return p;
}

std::vector<Policy> expand_policies(const Options& o, const CLI::App& cmd) {
  const Policy base = base_policy(o, cmd);
  std::vector<Policy> out;
  switch (base.kind) {
    case PolicyKind::Traces:
      if (given(cmd, "--delta") || !fs::exists(o.policy)) {
        const std::string list = o.delta.empty() ? "0.4,0.5,0.6,0.7,0.8,0.9" : o.delta;
        for (const auto& d : split_list(list)) {
          Policy p = base;
          p.delta = Threshold::parse(d);
          out.push_back(p);
        }
      } else {
        out.push_back(base);
      }
      break;
    case PolicyKind::Budget:
      if (given(cmd, "--alpha") || (!base.alpha && !base.eta)) {
        std::vector<double> alphas;
        if (o.alpha.empty()) {
          alphas = budget_alpha_grid();
        } else {
          for (const auto& a : split_list(o.alpha)) alphas.push_back(parse_number(a, "alpha"));
        }
        for (double a : alphas) {
          Policy p = base;
          p.alpha = a;
          p.eta.reset();
          out.push_back(p);
        }
      } else {
        out.push_back(base);
      }
      break;
    case PolicyKind::Standard:
      break;  // the standard row is always produced
    case PolicyKind::Ies:
      throw InvalidArgument("use the 'ies' subcommand for ideal early stopping");
  }
  for (const auto& p : out) p.validate();
  return out;
}

json base_config(const std::string& command, const Options& o) {
  json cfg;
  cfg["command"] = command;
  cfg["version"] = std::string(kVersion);
  if (!o.corpus.empty()) cfg["corpus_sha256"] = sha256_hex(read_file(o.corpus));
  return cfg;
}

void print_table(const std::vector<AggregateRow>& rows) {
  for (const auto& r : rows) {
    std::cout << r.dataset << '/' << r.model << ' ' << r.config << " tokens=" << format_fixed(r.tokens_mean, 1)
              << " saved_pct=" << format_fixed(r.saved_pct_mean, 2) << " avg@" << r.k << '='
              << format_fixed(r.avg_k, 4) << " pass@" << r.k << '=' << format_fixed(r.pass_k, 4)
              << " cons@" << r.k << '=' << format_fixed(r.cons_k, 4) << '\n';
  }
}

void write_sweep_outputs(const Options& o, const SweepResult& sweep, const ReportHeader& header) {
  const auto rows = aggregate(sweep);
  const fs::path dir(o.out);
  write_file(dir / "table.csv", [&](std::ostream& out) { write_table_csv(out, header, rows); });
  write_file(dir / "pareto.csv", [&](std::ostream& out) { write_pareto_csv(out, header, rows); });
  write_file(dir / "records.csv", [&](std::ostream& out) { write_records_csv(out, header, sweep); });
  write_file(dir / "runs.json", [&](std::ostream& out) { out << sweep_to_json(sweep).dump(2) << '\n'; });
  print_table(rows);
}

int cmd_replay(const Options& o, const CLI::App& cmd, const std::string& name) {
  const auto t0 = std::chrono::steady_clock::now();
  const Corpus corpus = load(o);
  SweepOptions sweep_opts;
  sweep_opts.policies = expand_policies(o, cmd);
  const bool needs_tagger = std::any_of(sweep_opts.policies.begin(), sweep_opts.policies.end(),
                                        [](const Policy& p) { return p.kind == PolicyKind::Traces; });
  if (needs_tagger) sweep_opts.tagger = make_tagger(tagger_spec(o), corpus);
  sweep_opts.jobs = o.jobs;
  sweep_opts.segmenter.max_steps = o.max_steps;

  json cfg = base_config(name, o);
  json policies = json::array();
  for (const auto& p : sweep_opts.policies) policies.push_back(policy_to_json(p));
  cfg["policies"] = policies;
  cfg["tagger"] = o.tagger;
  if (parse_tagger(o.tagger) == TaggerKind::Noisy) cfg["noise_p"] = o.noise_p;
  if (parse_tagger(o.tagger) == TaggerKind::Remote) cfg["tagger_url"] = o.tagger_url;
  if (o.max_steps) cfg["max_steps"] = *o.max_steps;

  const SweepResult sweep = run_sweep(corpus, sweep_opts);
  write_sweep_outputs(o, sweep, make_header(cfg, o.seed));
  write_sidecar(o, name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  return 0;
}

std::vector<TraceRecord> ies_annotated(const Corpus& corpus, std::vector<RunOutcome>* outcomes) {
  std::vector<const TraceRecord*> order;
  for (const auto& r : corpus.records) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::vector<TraceRecord> out;
  for (const auto* r : order) {
    RunOutcome o = run_ies(*r);
    out.push_back(o.trace);
    if (outcomes) outcomes->push_back(std::move(o));
  }
  return out;
}

int cmd_ies(const Options& o) {
  const Corpus corpus = load(o);
  std::vector<RunOutcome> outcomes;
  const auto traces = ies_annotated(corpus, &outcomes);
  const auto header = make_header(base_config("ies", o), o.seed);
  const fs::path dir(o.out);
  write_file(dir / "ies.csv", [&](std::ostream& out) { write_ies_csv(out, header, outcomes); });
  write_file(dir / "ies_annotated.jsonl", [&](std::ostream& out) { write_corpus(out, traces); });
  std::size_t never = 0;
  for (const auto& oc : outcomes) never += oc.decision.stopped_early ? 0 : 1;
  std::cout << "records=" << outcomes.size() << " never_correct=" << never << '\n';
  return 0;
}

int cmd_analyze(const Options& o) {
  const Corpus corpus = load(o);
  const ClassPartition partition = resolve_partition(o);
  const auto traces = ies_annotated(corpus, nullptr);
  json cfg = base_config("analyze", o);
  cfg["partition"] = json::parse(partition_to_json(partition));
  cfg["correct_only"] = o.correct_only;
  const auto header = make_header(cfg, o.seed);
  CurveOptions copts;
  copts.correct_only = o.correct_only;
  const auto shifts = distribution_shift(traces, o.correct_only);
  const auto bins = binned_curves(traces, partition, copts);
  const fs::path dir(o.out);
  write_file(dir / "distribution.csv", [&](std::ostream& out) { write_distribution_csv(out, header, shifts); });
  write_file(dir / "curves.csv", [&](std::ostream& out) { write_curves_csv(out, header, bins); });
  write_file(dir / "transition.csv", [&](std::ostream& out) {
    write_header(out, header);
    out << "trace_id,step_index,x_norm,ratio\n";
    for (const auto& t : traces) {
      if (o.correct_only && !t.correct) continue;
      write_curve_csv(out, t.id, transition_curve(t, partition));
    }
  });
  for (const auto& s : shifts) {
    std::cout << canonical_name(s.tag) << " before=" << format_fixed(s.before, 4)
              << " after=" << format_fixed(s.after, 4) << '\n';
  }
  return 0;
}

struct TagPair {
  std::vector<std::string> gold;
  std::vector<std::string> predicted;
};

TagPair tag_corpus(const Options& o, const Corpus& corpus, std::ostream* csv) {
  const ClassPartition partition = resolve_partition(o);
  auto tagger = make_tagger(tagger_spec(o), corpus);
  TagPair pairs;
  for (const auto& r : corpus.records) {
    std::vector<StepQuery> queries;
    std::vector<const TaggedStep*> steps;
    for (const auto& s : r.steps) {
      if (s.blank()) continue;
      queries.push_back({s.text, s.index, s.tag, stream_key_of(r.id)});
      steps.push_back(&s);
    }
    const auto preds = tag_batch(queries, *tagger, partition);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const auto* s = steps[i];
      if (csv) {
        *csv << csv_field(r.id) << ',' << s->index << ','
             << (s->tag ? std::string(canonical_name(*s->tag)) : "") << ','
             << canonical_name(preds[i].tag) << ',' << static_cast<int>(preds[i].class_code) << '\n';
      }
      if (s->tag) {
        pairs.gold.emplace_back(canonical_name(*s->tag));
        pairs.predicted.emplace_back(canonical_name(preds[i].tag));
      }
    }
  }
  return pairs;
}

int cmd_tag(const Options& o) {
  if (!o.text.empty()) {
    Corpus empty;
    auto tagger = make_tagger(tagger_spec(o), empty);
    const auto p = tag_step(StepQuery{o.text, 1, std::nullopt, 0}, *tagger, resolve_partition(o));
    std::cout << canonical_name(p.tag) << ' ' << static_cast<int>(p.class_code) << '\n';
    return 0;
  }
  const Corpus corpus = load(o);
  json cfg = base_config("tag", o);
  cfg["tagger"] = o.tagger;
  const auto header = make_header(cfg, o.seed);
  TagPair pairs;
  write_file(fs::path(o.out) / "tags.csv", [&](std::ostream& out) {
    write_header(out, header);
    out << "id,step,gold_tag,tag,class_code\n";
    pairs = tag_corpus(o, corpus, &out);
  });
  std::size_t agree = 0;
  for (std::size_t i = 0; i < pairs.gold.size(); ++i) agree += pairs.gold[i] == pairs.predicted[i];
  std::cout << "steps=" << pairs.gold.size();
  if (!pairs.gold.empty()) {
    std::cout << " accuracy=" << format_fixed(static_cast<double>(agree) / static_cast<double>(pairs.gold.size()), 4)
              << " cohen_kappa=" << format_fixed(cohen_kappa(pairs.gold, pairs.predicted), 4);
  }
  std::cout << '\n';
  return 0;
}

// Minimal RFC 4180 reader for the ratings table.
std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (quoted) throw DataError("unterminated quote in ratings file");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

int cmd_kappa(const Options& o) {
  if (!o.ratings.empty()) {
    auto rows = read_csv(read_file(o.ratings));
    if (rows.size() < 2) throw DataError("ratings file needs a header and at least one item");
    const std::size_t raters = rows.front().size() - 1;
    if (rows.front().size() < 3) throw DataError("ratings file needs an item column and >= 2 raters");
    std::vector<std::vector<std::string>> items;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() != raters + 1) {
        throw DataError("ratings row " + std::to_string(i + 1) + " has " +
                        std::to_string(rows[i].size()) + " fields, expected " +
                        std::to_string(raters + 1));
      }
      items.emplace_back(rows[i].begin() + 1, rows[i].end());
    }
    std::string method = o.method;
    if (method == "auto") method = raters == 2 ? "cohen" : "fleiss";
    if (method == "cohen") {
      if (raters != 2) throw InvalidArgument("cohen needs exactly two raters");
      std::vector<std::string> a;
      std::vector<std::string> b;
      for (const auto& it : items) {
        a.push_back(it[0]);
        b.push_back(it[1]);
      }
      std::cout << "cohen_kappa=" << format_double(cohen_kappa(a, b)) << " items=" << items.size() << '\n';
    } else {
      std::cout << "fleiss_kappa=" << format_double(fleiss_kappa(items)) << " items=" << items.size()
                << " raters=" << raters << '\n';
    }
    return 0;
  }
  const Corpus corpus = load(o);
  const TagPair pairs = tag_corpus(o, corpus, nullptr);
  if (pairs.gold.empty()) throw DataError("corpus has no gold-tagged steps");
  std::cout << "cohen_kappa=" << format_double(cohen_kappa(pairs.gold, pairs.predicted))
            << " items=" << pairs.gold.size() << " tagger=" << o.tagger << '\n';
  return 0;
}

int cmd_report(const Options& o) {
  if (o.runs.empty()) throw InvalidArgument("--runs is required");
  json doc;
  try {
    doc = json::parse(read_file(o.runs));
  } catch (const json::parse_error& e) {
    throw DataError("run file " + o.runs + ": " + e.what());
  }
  const SweepResult sweep = sweep_from_json(doc);
  json cfg = base_config("report", o);
  cfg["runs_sha256"] = sha256_hex(read_file(o.runs));
  const auto header = make_header(cfg, o.seed);
  const auto rows = aggregate(sweep);
  const fs::path dir(o.out);
  write_file(dir / "table.csv", [&](std::ostream& out) { write_table_csv(out, header, rows); });
  write_file(dir / "pareto.csv", [&](std::ostream& out) { write_pareto_csv(out, header, rows); });
  write_file(dir / "records.csv", [&](std::ostream& out) { write_records_csv(out, header, sweep); });
  print_table(rows);
  return 0;
}

int cmd_validate(const Options& o) {
  const Corpus corpus = load(o);
  for (const auto& r : corpus.records) {
    const std::string once = serialize_record(r);
    if (serialize_record(parse_record(once)) != once) {
      throw DataError("record " + r.id + " does not round-trip through the codec");
    }
  }
  std::cout << "valid records=" << corpus.records.size()
            << " datasets=" << corpus.manifest.datasets.size()
            << " models=" << corpus.manifest.models.size()
            << " seeds=" << corpus.manifest.seeds.size()
            << " warnings=" << corpus.warnings.size() << '\n';
  return 0;
}

int cmd_live(const Options& o, const CLI::App& cmd) {
  if (o.endpoint.empty()) throw InvalidArgument("--endpoint is required");
  if (o.model.empty()) throw InvalidArgument("--model is required");
  if (o.prompt.empty() == o.prompt_file.empty()) {
    throw InvalidArgument("give exactly one of --prompt or --prompt-file");
  }
  LiveBackendConfig lc;
  lc.endpoint = o.endpoint;
  lc.model = o.model;
  if (const char* key = std::getenv(o.api_key_env.c_str())) {
    lc.api_key = key;
  } else if (given(cmd, "--api-key-env")) {
    throw InvalidArgument("environment variable " + o.api_key_env + " is not set");
  }
  LiveBackend backend(lc);

  Policy policy = base_policy(o, cmd);
  if (policy.kind == PolicyKind::Traces && given(cmd, "--delta")) {
    const auto list = split_list(o.delta);
    if (list.size() != 1) throw InvalidArgument("live runs take a single --delta");
    policy.delta = Threshold::parse(list.front());
  }
  if (policy.kind == PolicyKind::Budget && !policy.eta) {
    throw InvalidArgument("live budget runs need --eta (alpha needs a corpus mean)");
  }
  policy.validate();

  RunContext ctx;
  ctx.backend = &backend;
  ctx.prompt = o.prompt.empty() ? read_file(o.prompt_file) : o.prompt;
  ctx.params.max_tokens = o.max_tokens;
  if (o.seed_given) ctx.params.seed = o.seed;
  ctx.segmenter.max_steps = o.max_steps;
  ctx.gold_answer = o.gold;
  ctx.answer_mode = parse_answer_mode(o.answer_mode);
  ctx.record_id = "live";
  if (policy.kind == PolicyKind::Traces) {
    if (parse_tagger(o.tagger) == TaggerKind::Replay || parse_tagger(o.tagger) == TaggerKind::Noisy) {
      throw InvalidArgument("live runs need a lexicon or remote tagger");
    }
    ctx.tagger = make_tagger(tagger_spec(o), Corpus{});
  }

  const fs::path dir(o.out);
  RunOutcome outcome;
  try {
    outcome = run_policy(ctx, policy);
  } catch (const RunAborted& e) {
    write_file(dir / "partial.jsonl", [&](std::ostream& out) { write_corpus(out, {e.partial()}); });
    throw;
  }
  write_file(dir / "trace.jsonl", [&](std::ostream& out) { write_corpus(out, {outcome.trace}); });
  const StopDecision& d = outcome.decision;
  json dj;
  dj["policy"] = policy_to_json(policy);
  dj["stopped_early"] = d.stopped_early;
  dj["stop_step"] = d.stop_step ? json(*d.stop_step) : json(nullptr);
  dj["reason"] = stop_reason_name(d.reason);
  dj["tokens_main"] = d.tokens_main;
  dj["tokens_exit"] = d.tokens_exit;
  dj["tokens_total"] = d.tokens_total();
  dj["tokens_estimated"] = d.tokens_estimated;
  dj["forced_answer"] = d.forced_answer ? json(*d.forced_answer) : json(nullptr);
  dj["final_answer"] = outcome.trace.final_answer;
  dj["correct"] = d.correct;
  dj["wall_time_s"] = d.wall_time_s;
  dj["tagger_latency_s"] = d.tagger_latency_s;
  write_file(dir / "decision.json", [&](std::ostream& out) { out << dj.dump(2) << '\n'; });
  std::cout << "reason=" << stop_reason_name(d.reason) << " steps=" << outcome.trace.steps.size()
            << " tokens=" << d.tokens_total() << (d.tokens_estimated ? " (estimated)" : "")
            << " answer=" << outcome.trace.final_answer << '\n';
  return 0;
}

void add_corpus(CLI::App* c, Options& o) { c->add_option("--corpus", o.corpus, "Corpus JSONL file"); }

void add_out(CLI::App* c, Options& o) {
  c->add_option("--out", o.out, "Output directory")->capture_default_str();
}

void add_partition(CLI::App* c, Options& o) {
  c->add_option("--partition", o.partition, "Partition name (default, alt1..alt7, levelN) or JSON file");
  c->add_option("--taxonomy-level", o.taxonomy_level, "Coarse taxonomy level: 13, 6, 4, 3 or 2")
      ->capture_default_str();
}

void add_tagger(CLI::App* c, Options& o) {
  c->add_option("--tagger", o.tagger, "Tagger backend")
      ->check(CLI::IsMember({"replay", "lexicon", "remote", "noisy"}))
      ->capture_default_str();
  c->add_option("--tagger-url", o.tagger_url, "Base URL of the remote tagger");
  c->add_option("--lexicon", o.lexicon, "Lexicon rule file (default: builtin rules)");
  c->add_flag("--tagger-fallback", o.tagger_fallback, "Tag Other when the remote tagger fails");
  c->add_option("--noise-p", o.noise_p, "Accuracy of the noisy tagger")->capture_default_str();
}

void add_seed(CLI::App* c, Options& o) {
  c->add_option("--seed", o.seed, "Seed for noisy tagging and generation")->capture_default_str();
}

void add_policy(CLI::App* c, Options& o, bool lists) {
  c->add_option("--policy", o.policy, "standard, traces, budget, or a policy JSON file")
      ->capture_default_str();
  c->add_option("--delta", o.delta, lists ? "Threshold(s) in (0,1), comma separated" : "Threshold in (0,1)");
  c->add_option("--window", o.window, "Consecutive violations before stopping")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  if (lists) c->add_option("--alpha", o.alpha, "Budget multiplier(s), comma separated");
  c->add_option("--eta", o.eta, "Absolute token budget");
  c->add_option("--exit-prompt-file", o.exit_prompt_file, "File holding the answer-forcing prompt");
  c->add_option("--exit-budget", o.exit_budget, "Token budget of the forced answer")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c->add_option("--max-steps", o.max_steps, "Step cap per generation")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stepgate: step-level monitoring and early stopping for reasoning streams"};
  app.failure_message(CLI::FailureMessage::help);
  app.set_config("--config", "", "TOML/INI file with default flag values");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  Options o;

  auto* replay = app.add_subcommand("replay", "Replay a corpus under one or more policies");
  add_corpus(replay, o);
  add_policy(replay, o, true);
  add_partition(replay, o);
  add_tagger(replay, o);
  add_seed(replay, o);
  add_out(replay, o);
  replay->add_option("--jobs", o.jobs, "Parallel records")->check(CLI::PositiveNumber)->capture_default_str();

  auto* budget = app.add_subcommand("budget", "Replay the token-budget baseline over an alpha grid");
  add_corpus(budget, o);
  budget->add_option("--alpha", o.alpha, "Budget multiplier(s), comma separated (default: full grid)");
  budget->add_option("--exit-prompt-file", o.exit_prompt_file, "File holding the answer-forcing prompt");
  budget->add_option("--exit-budget", o.exit_budget, "Token budget of the forced answer")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_seed(budget, o);
  add_out(budget, o);
  budget->add_option("--jobs", o.jobs, "Parallel records")->check(CLI::PositiveNumber)->capture_default_str();

  auto* ies = app.add_subcommand("ies", "Ideal early-stopping step per record from answer snapshots");
  add_corpus(ies, o);
  add_seed(ies, o);
  add_out(ies, o);

  auto* analyze = app.add_subcommand("analyze", "Tag distribution shift and transition curves");
  add_corpus(analyze, o);
  add_partition(analyze, o);
  analyze->add_flag("--correct-only,!--all-traces", o.correct_only,
                    "Restrict to correct traces (default on)");
  add_seed(analyze, o);
  add_out(analyze, o);

  auto* tag = app.add_subcommand("tag", "Tag corpus steps or a single text");
  add_corpus(tag, o);
  tag->add_option("--text", o.text, "Tag this text instead of a corpus");
  add_tagger(tag, o);
  add_partition(tag, o);
  add_seed(tag, o);
  add_out(tag, o);

  auto* kappa = app.add_subcommand("kappa", "Agreement statistics");
  kappa->add_option("--ratings", o.ratings, "CSV: item column then one column per rater");
  kappa->add_option("--method", o.method, "auto, fleiss or cohen")
      ->check(CLI::IsMember({"auto", "fleiss", "cohen"}))
      ->capture_default_str();
  add_corpus(kappa, o);
  add_tagger(kappa, o);
  add_seed(kappa, o);

  auto* report = app.add_subcommand("report", "Rebuild report CSVs from a runs.json file");
  report->add_option("--runs", o.runs, "runs.json written by replay or budget");
  add_seed(report, o);
  add_out(report, o);

  auto* validate = app.add_subcommand("validate", "Check a corpus against the schema");
  add_corpus(validate, o);

  auto* live = app.add_subcommand("live", "Gate a live OpenAI-compatible stream");
  live->add_option("--endpoint", o.endpoint, "Base URL or .../chat/completions URL");
  live->add_option("--api-key-env", o.api_key_env, "Environment variable holding the API key")
      ->capture_default_str();
  live->add_option("--model", o.model, "Model name");
  live->add_option("--prompt", o.prompt, "User prompt");
  live->add_option("--prompt-file", o.prompt_file, "File holding the user prompt");
  live->add_option("--gold", o.gold, "Gold answer for correctness");
  live->add_option("--answer-mode", o.answer_mode, "boxed_math or mcq")
      ->check(CLI::IsMember({"boxed_math", "mcq"}))
      ->capture_default_str();
  live->add_option("--max-tokens", o.max_tokens, "Generation cap")->check(CLI::PositiveNumber)->capture_default_str();
  add_policy(live, o, false);
  add_partition(live, o);
  live->add_option("--tagger", o.tagger, "Tagger backend")
      ->check(CLI::IsMember({"lexicon", "remote"}))
      ->default_str("lexicon");
  live->add_option("--tagger-url", o.tagger_url, "Base URL of the remote tagger");
  live->add_option("--lexicon", o.lexicon, "Lexicon rule file (default: builtin rules)");
  live->add_flag("--tagger-fallback", o.tagger_fallback, "Tag Other when the remote tagger fails");
  live->add_option("--seed", o.seed, "Sampling seed passed to the endpoint");
  add_out(live, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*live) {
      if (!live->count("--tagger")) o.tagger = "lexicon";
      o.seed_given = live->count("--seed") > 0;
      return cmd_live(o, *live);
    }
    if (*replay) return cmd_replay(o, *replay, "replay");
    if (*budget) {
      o.policy = "budget";
      return cmd_replay(o, *budget, "budget");
    }
    if (*ies) return cmd_ies(o);
    if (*analyze) return cmd_analyze(o);
    if (*tag) return cmd_tag(o);
    if (*kappa) return cmd_kappa(o);
    if (*report) return cmd_report(o);
    if (*validate) return cmd_validate(o);
  } catch (const InvalidArgument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
