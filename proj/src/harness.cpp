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

#include "stepgate/harness.h"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <ostream>
#include <set>
#include <thread>

#include "stepgate/format.h"
#include "stepgate/gateway.h"

namespace stepgate {

using nlohmann::json;
using nlohmann::ordered_json;

std::shared_ptr<const TaggerBackend> make_tagger(const TaggerSpec& spec, const Corpus& corpus) {
  switch (spec.kind) {
    case TaggerKind::Replay:
      return std::make_shared<ReplayTagger>();
    case TaggerKind::Lexicon:
      return std::make_shared<LexiconTagger>(spec.lexicon_file.empty()
                                                 ? LexiconTagger::builtin()
                                                 : LexiconTagger::from_file(spec.lexicon_file));
    case TaggerKind::Remote: {
      if (spec.url.empty()) throw InvalidArgument("remote tagger needs --tagger-url");
      RemoteTaggerConfig config;
      config.base_url = spec.url;
      config.fallback_to_other = spec.remote_fallback_other;
      return std::make_shared<RemoteTagger>(config);
    }
    case TaggerKind::Noisy: {
      std::vector<StepTag> gold;
      for (const auto& r : corpus.records) {
        for (const auto& s : r.steps) {
          if (!s.blank() && s.tag) gold.push_back(*s.tag);
        }
      }
      if (gold.empty()) throw DataError("noisy tagger needs gold tags in the corpus");
      return noisy_wrap(std::make_shared<ReplayTagger>(), spec.noise_p, spec.seed,
                        tag_marginals(gold));
    }
  }
  throw InvalidArgument("unknown tagger kind");
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::atomic<std::size_t>& next) {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::atomic<std::size_t> next{0};
  const std::size_t workers = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    work(next);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back([&] { work(next); });
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

RunOutcome replay_record(const TraceRecord& record, const Policy& policy,
                         std::shared_ptr<const TaggerBackend> tagger,
                         const SegmenterConfig& segmenter,
                         std::optional<std::int64_t> max_tokens) {
  auto backend = ScriptedBackend::from_trace(record);
  RunContext ctx;
  ctx.backend = backend.get();
  ctx.prompt = backend->prompt();
  ctx.params.max_tokens = max_tokens.value_or(std::numeric_limits<std::int64_t>::max() / 4);
  ctx.params.seed = static_cast<std::uint64_t>(record.seed);
  ctx.segmenter = segmenter;
  ctx.tagger = std::move(tagger);
  ctx.reference = &record;
  return run_policy(ctx, policy);
}

namespace {

using GroupKey = std::pair<std::string, std::string>;

RecordRun row_of(const TraceRecord& r, StopDecision d) {
  return {r.id, r.dataset, r.model, r.seed, r.prompt, std::move(d)};
}

std::vector<const TraceRecord*> sorted_records(const Corpus& corpus) {
  std::vector<const TraceRecord*> out;
  for (const auto& r : corpus.records) out.push_back(&r);
  std::sort(out.begin(), out.end(),
            [](const TraceRecord* a, const TraceRecord* b) { return a->id < b->id; });
  return out;
}

}  // namespace

SweepResult run_sweep(const Corpus& corpus, const SweepOptions& options) {
  for (const auto& p : options.policies) {
    p.validate();
    if (p.kind == PolicyKind::Traces && !options.tagger) {
      throw InvalidArgument("traces policy needs a tagger");
    }
  }
  const auto records = sorted_records(corpus);
  const std::size_t n = records.size();
  SweepResult out;
  out.standard.policy = Policy{};
  out.standard.records.resize(n);
  parallel_for(n, options.jobs, [&](std::size_t i) {
    auto o = replay_record(*records[i], out.standard.policy, options.tagger, options.segmenter,
                           options.max_tokens);
    out.standard.records[i] = row_of(*records[i], std::move(o.decision));
  });

  std::map<GroupKey, std::pair<double, std::size_t>> sums;
  for (const auto& row : out.standard.records) {
    auto& s = sums[{row.dataset, row.model}];
    s.first += static_cast<double>(row.decision.tokens_main);
    s.second += 1;
  }
  for (const auto& [key, s] : sums) {
    out.mean_standard_tokens[key] = s.first / static_cast<double>(s.second);
  }

  out.runs.resize(options.policies.size());
  for (std::size_t p = 0; p < options.policies.size(); ++p) {
    out.runs[p].policy = options.policies[p];
    out.runs[p].records.resize(n);
  }
  parallel_for(n * options.policies.size(), options.jobs, [&](std::size_t job) {
    const std::size_t p = job / n;
    const std::size_t i = job % n;
    const TraceRecord& r = *records[i];
    Policy policy = options.policies[p];
    if (policy.kind == PolicyKind::Budget && policy.alpha) {
      const double mu = out.mean_standard_tokens.at({r.dataset, r.model});
      policy.eta = std::max(1.0, *policy.alpha * mu);
    }
    auto o = replay_record(r, policy, options.tagger, options.segmenter, options.max_tokens);
    out.runs[p].records[i] = row_of(r, std::move(o.decision));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

std::map<GroupKey, std::vector<const RecordRun*>> by_group(const PolicyRun& run) {
  std::map<GroupKey, std::vector<const RecordRun*>> groups;
  for (const auto& r : run.records) groups[{r.dataset, r.model}].push_back(&r);
  return groups;
}

std::map<std::int64_t, double> per_seed_mean(const std::vector<const RecordRun*>& rows,
                                             const std::function<double(const RecordRun&)>& f) {
  std::map<std::int64_t, std::pair<double, std::size_t>> acc;
  for (const auto* r : rows) {
    auto& a = acc[r->seed];
    a.first += f(*r);
    a.second += 1;
  }
  std::map<std::int64_t, double> out;
  for (const auto& [seed, a] : acc) out[seed] = a.first / static_cast<double>(a.second);
  return out;
}

std::vector<double> values_of(const std::map<std::int64_t, double>& m) {
  std::vector<double> v;
  for (const auto& [k, x] : m) v.push_back(x);
  return v;
}

AggregateRow aggregate_group(const GroupKey& key, const std::string& config,
                             const std::vector<const RecordRun*>& rows,
                             const std::vector<const RecordRun*>& standard_rows) {
  AggregateRow row;
  row.dataset = key.first;
  row.model = key.second;
  row.config = config;
  row.records = rows.size();

  const auto tokens = per_seed_mean(
      rows, [](const RecordRun& r) { return static_cast<double>(r.decision.tokens_total()); });
  const auto tokens_main = per_seed_mean(
      rows, [](const RecordRun& r) { return static_cast<double>(r.decision.tokens_main); });
  const auto std_tokens = per_seed_mean(standard_rows, [](const RecordRun& r) {
    return static_cast<double>(r.decision.tokens_total());
  });
  const auto accuracy =
      per_seed_mean(rows, [](const RecordRun& r) { return r.decision.correct ? 1.0 : 0.0; });
  row.seeds = tokens.size();

  std::vector<double> saved;
  for (const auto& [seed, t] : tokens) {
    auto it = std_tokens.find(seed);
    if (it == std_tokens.end()) throw DataError("no standard run for seed " + std::to_string(seed));
    saved.push_back(saved_pct(t, it->second));
  }
  const auto tv = values_of(tokens);
  const auto tmv = values_of(tokens_main);
  const auto av = values_of(accuracy);
  row.tokens_mean = mean(tv);
  row.tokens_std = sample_std(tv);
  row.tokens_main_mean = mean(tmv);
  row.saved_pct_mean = mean(saved);
  row.saved_pct_std = sample_std(saved);
  row.avg_k_std = sample_std(av);

  // Samples are prompts; attempts are seeds.
  std::set<std::int64_t> seeds;
  std::map<std::string, std::map<std::int64_t, bool>> by_prompt;
  for (const auto* r : rows) {
    seeds.insert(r->seed);
    if (!by_prompt[r->prompt].emplace(r->seed, r->decision.correct).second) {
      throw InvalidArgument("prompt repeated within seed " + std::to_string(r->seed) +
                            " in " + key.first + "/" + key.second);
    }
  }
  std::vector<std::vector<bool>> matrix;
  for (const auto& [prompt, cells] : by_prompt) {
    if (cells.size() != seeds.size()) {
      throw InvalidArgument("ragged correctness matrix: not every prompt has every seed in " +
                            key.first + "/" + key.second);
    }
    std::vector<bool> line;
    for (const auto& [seed, ok] : cells) line.push_back(ok);
    matrix.push_back(std::move(line));
  }
  const AtK metrics = at_k(matrix);
  row.k = seeds.size();
  row.avg_k = metrics.avg;
  row.pass_k = metrics.pass;
  row.cons_k = metrics.cons;
  for (const auto* r : rows) {
    if (r->decision.stopped_early) ++row.early_stops;
    row.tokens_estimated = row.tokens_estimated || r->decision.tokens_estimated;
  }
  return row;
}

}  // namespace

std::vector<AggregateRow> aggregate(const SweepResult& sweep) {
  const auto standard = by_group(sweep.standard);
  std::vector<std::map<GroupKey, std::vector<const RecordRun*>>> runs;
  for (const auto& run : sweep.runs) runs.push_back(by_group(run));
  std::vector<AggregateRow> rows;
  for (const auto& [key, std_rows] : standard) {
    rows.push_back(aggregate_group(key, sweep.standard.policy.label(), std_rows, std_rows));
    for (std::size_t p = 0; p < sweep.runs.size(); ++p) {
      auto it = runs[p].find(key);
      if (it == runs[p].end()) continue;
      rows.push_back(aggregate_group(key, sweep.runs[p].policy.label(), it->second, std_rows));
    }
  }
  return rows;
}

std::vector<bool> pareto_flags(const std::vector<AggregateRow>& rows) {
  std::map<GroupKey, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i) groups[{rows[i].dataset, rows[i].model}].push_back(i);
  std::vector<bool> flags(rows.size(), false);
  for (const auto& [key, idx] : groups) {
    std::vector<ParetoPoint> pts;
    for (auto i : idx) pts.push_back({rows[i].tokens_mean, rows[i].avg_k});
    const auto f = pareto_frontier(pts);
    for (std::size_t j = 0; j < idx.size(); ++j) flags[idx[j]] = f[j];
  }
  return flags;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

ordered_json policy_doc(const Policy& p) {
  ordered_json doc = ordered_json::parse(policy_to_json(p).dump());
  doc["partition"] = ordered_json::parse(partition_to_json(p.partition));
  return doc;
}

Policy policy_from_doc(const json& doc) {
  json copy = doc;
  const ClassPartition partition = parse_partition_json(copy.at("partition").dump());
  copy.erase("partition");
  copy.erase("partition_name");
  Policy p = policy_from_json(copy);
  p.partition = partition;
  return p;
}

ordered_json row_doc(const RecordRun& r) {
  const StopDecision& d = r.decision;
  ordered_json j;
  j["id"] = r.id;
  j["dataset"] = r.dataset;
  j["model"] = r.model;
  j["seed"] = r.seed;
  j["prompt"] = r.prompt;
  j["stopped_early"] = d.stopped_early;
  j["stop_step"] = d.stop_step ? ordered_json(*d.stop_step) : ordered_json(nullptr);
  j["reason"] = stop_reason_name(d.reason);
  j["tokens_main"] = d.tokens_main;
  j["tokens_exit"] = d.tokens_exit;
  j["correct"] = d.correct;
  j["tokens_estimated"] = d.tokens_estimated;
  j["forced_answer"] = d.forced_answer ? ordered_json(*d.forced_answer) : ordered_json(nullptr);
  return j;
}

StopReason parse_reason(const std::string& s) {
  for (auto r : {StopReason::Eos, StopReason::TracesWindow, StopReason::BudgetExceeded,
                 StopReason::IesCorrect, StopReason::StepLimit}) {
    if (s == stop_reason_name(r)) return r;
  }
  throw DataError("unknown stop reason '" + s + "'");
}

RecordRun row_from_doc(const json& j) {
  RecordRun r;
  r.id = j.at("id").get<std::string>();
  r.dataset = j.at("dataset").get<std::string>();
  r.model = j.at("model").get<std::string>();
  r.seed = j.at("seed").get<std::int64_t>();
  r.prompt = j.at("prompt").get<std::string>();
  StopDecision& d = r.decision;
  d.stopped_early = j.at("stopped_early").get<bool>();
  if (!j.at("stop_step").is_null()) d.stop_step = j.at("stop_step").get<std::size_t>();
  d.reason = parse_reason(j.at("reason").get<std::string>());
  d.tokens_main = j.at("tokens_main").get<std::int64_t>();
  d.tokens_exit = j.at("tokens_exit").get<std::int64_t>();
  d.correct = j.at("correct").get<bool>();
  d.tokens_estimated = j.at("tokens_estimated").get<bool>();
  if (!j.at("forced_answer").is_null()) d.forced_answer = j.at("forced_answer").get<std::string>();
  return r;
}

ordered_json aggregate_doc(const AggregateRow& a) {
  ordered_json j;
  j["dataset"] = a.dataset;
  j["model"] = a.model;
  j["config"] = a.config;
  j["records"] = a.records;
  j["seeds"] = a.seeds;
  j["k"] = a.k;
  j["tokens_mean"] = a.tokens_mean;
  j["tokens_std"] = a.tokens_std;
  j["tokens_main_mean"] = a.tokens_main_mean;
  j["saved_pct_mean"] = a.saved_pct_mean;
  j["saved_pct_std"] = a.saved_pct_std;
  j["avg_k"] = a.avg_k;
  j["avg_k_std"] = a.avg_k_std;
  j["pass_k"] = a.pass_k;
  j["cons_k"] = a.cons_k;
  j["early_stops"] = a.early_stops;
  j["tokens_estimated"] = a.tokens_estimated;
  return j;
}

bool close(double a, double b) {
  return std::fabs(a - b) <= 1e-9 * std::max({1.0, std::fabs(a), std::fabs(b)});
}

bool same_aggregate(const AggregateRow& a, const json& j) {
  return a.dataset == j.at("dataset") && a.model == j.at("model") && a.config == j.at("config") &&
         a.records == j.at("records").get<std::size_t>() &&
         a.seeds == j.at("seeds").get<std::size_t>() && a.k == j.at("k").get<std::size_t>() &&
         close(a.tokens_mean, j.at("tokens_mean")) && close(a.tokens_std, j.at("tokens_std")) &&
         close(a.tokens_main_mean, j.at("tokens_main_mean")) &&
         close(a.saved_pct_mean, j.at("saved_pct_mean")) &&
         close(a.saved_pct_std, j.at("saved_pct_std")) && close(a.avg_k, j.at("avg_k")) &&
         close(a.avg_k_std, j.at("avg_k_std")) && close(a.pass_k, j.at("pass_k")) &&
         close(a.cons_k, j.at("cons_k")) &&
         a.early_stops == j.at("early_stops").get<std::size_t>() &&
         a.tokens_estimated == j.at("tokens_estimated").get<bool>();
}

}  // namespace

ordered_json sweep_to_json(const SweepResult& sweep) {
  ordered_json doc;
  doc["format"] = "stepgate-runs";
  doc["version"] = kVersion;
  ordered_json mu = ordered_json::array();
  for (const auto& [key, v] : sweep.mean_standard_tokens) {
    mu.push_back({{"dataset", key.first}, {"model", key.second}, {"tokens", v}});
  }
  doc["mean_standard_tokens"] = std::move(mu);
  ordered_json runs = ordered_json::array();
  auto add = [&](const PolicyRun& run) {
    ordered_json r;
    r["policy"] = policy_doc(run.policy);
    ordered_json rows = ordered_json::array();
    for (const auto& row : run.records) rows.push_back(row_doc(row));
    r["records"] = std::move(rows);
    runs.push_back(std::move(r));
  };
  add(sweep.standard);
  for (const auto& run : sweep.runs) add(run);
  doc["runs"] = std::move(runs);
  ordered_json aggs = ordered_json::array();
  for (const auto& a : aggregate(sweep)) aggs.push_back(aggregate_doc(a));
  doc["aggregates"] = std::move(aggs);
  return doc;
}

SweepResult sweep_from_json(const json& doc) {
  SweepResult out;
  try {
    if (doc.at("format") != "stepgate-runs") throw DataError("not a stepgate run file");
    for (const auto& m : doc.at("mean_standard_tokens")) {
      out.mean_standard_tokens[{m.at("dataset").get<std::string>(),
                                m.at("model").get<std::string>()}] = m.at("tokens").get<double>();
    }
    const auto& runs = doc.at("runs");
    if (runs.empty()) throw DataError("run file has no runs");
    for (std::size_t i = 0; i < runs.size(); ++i) {
      PolicyRun run;
      run.policy = policy_from_doc(runs[i].at("policy"));
      for (const auto& row : runs[i].at("records")) run.records.push_back(row_from_doc(row));
      if (i == 0) {
        if (run.policy.kind != PolicyKind::Standard) {
          throw DataError("run file must start with the standard run");
        }
        out.standard = std::move(run);
      } else {
        out.runs.push_back(std::move(run));
      }
    }
    const auto recomputed = aggregate(out);
    const auto& stored = doc.at("aggregates");
    if (stored.size() != recomputed.size()) {
      throw DataError("stored aggregates do not match the per-record rows");
    }
    for (std::size_t i = 0; i < recomputed.size(); ++i) {
      if (!same_aggregate(recomputed[i], stored[i])) {
        throw DataError("stored aggregate row " + std::to_string(i + 1) + " (" +
                        recomputed[i].config + ") does not match the per-record rows");
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed run file: ") + e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Phase analyses

namespace {

std::vector<const TraceRecord*> selected(const std::vector<TraceRecord>& traces,
                                         bool correct_only) {
  std::vector<const TraceRecord*> out;
  for (const auto& t : traces) {
    if (!correct_only || t.correct) out.push_back(&t);
  }
  return out;
}

std::array<double, kTagCount> segment_frequencies(const TraceRecord& trace,
                                                  const std::vector<TaggedStep>& steps) {
  std::array<double, kTagCount> freq{};
  std::size_t n = 0;
  for (const auto& s : steps) {
    if (s.blank()) continue;
    if (!s.tag) {
      throw DataError("trace " + trace.id + ": step " + std::to_string(s.index) + " is untagged");
    }
    freq[tag_index(*s.tag)] += 1;
    ++n;
  }
  if (n > 0) {
    for (auto& f : freq) f /= static_cast<double>(n);
  }
  return freq;
}

void require_annotated(const TraceRecord& trace) {
  if (std::none_of(trace.steps.begin(), trace.steps.end(),
                   [](const TaggedStep& s) { return s.answer_correct.has_value(); })) {
    throw DataError("trace " + trace.id + " carries no answer_correct annotations");
  }
}

}  // namespace

std::vector<TagShift> distribution_shift(const std::vector<TraceRecord>& traces,
                                         bool correct_only) {
  const auto chosen = selected(traces, correct_only);
  std::array<double, kTagCount> before{};
  std::array<double, kTagCount> after{};
  for (const auto* t : chosen) {
    const auto [b, a] = split_before_after(*t);
    const auto fb = segment_frequencies(*t, b);
    const auto fa = segment_frequencies(*t, a);
    for (std::size_t i = 0; i < kTagCount; ++i) {
      before[i] += fb[i];
      after[i] += fa[i];
    }
  }
  std::vector<TagShift> out;
  const double n = static_cast<double>(chosen.size());
  for (StepTag tag : kAllTags) {
    const std::size_t i = tag_index(tag);
    out.push_back({tag, n > 0 ? before[i] / n : 0.0, n > 0 ? after[i] / n : 0.0});
  }
  std::stable_sort(out.begin(), out.end(), [](const TagShift& x, const TagShift& y) {
    return x.before - x.after > y.before - y.after;
  });
  return out;
}

std::vector<std::optional<bool>> switch_flags(const TraceRecord& trace) {
  std::vector<std::optional<bool>> flags(trace.steps.size());
  std::optional<std::string> previous;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const TaggedStep& s = trace.steps[i];
    if (s.blank()) continue;
    if (!s.answer_snapshot) {
      throw DataError("trace " + trace.id + ": step " + std::to_string(s.index) +
                      " has no answer snapshot");
    }
    std::string current = extract_boxed(*s.answer_snapshot).value_or(*s.answer_snapshot);
    if (previous) flags[i] = current != *previous;
    previous = std::move(current);
  }
  return flags;
}

std::size_t curve_bin(double x) {
  const double scaled = (x + 1.0) / 2.0 * static_cast<double>(kCurveBins);
  if (!(scaled > 0)) return 0;
  return std::min(kCurveBins - 1, static_cast<std::size_t>(std::floor(scaled)));
}

std::vector<CurveBin> binned_curves(const std::vector<TraceRecord>& traces,
                                    const ClassPartition& partition,
                                    const CurveOptions& options) {
  std::vector<CurveBin> bins(kCurveBins);
  std::vector<double> ratio_sum(kCurveBins, 0);
  std::vector<double> switch_sum(kCurveBins, 0);
  std::vector<double> correct_sum(kCurveBins, 0);
  for (const auto* t : selected(traces, options.correct_only)) {
    require_annotated(*t);
    const std::size_t ies = ies_index_of(*t);
    const double count = static_cast<double>(t->steps.size());
    auto position = [&](std::size_t index) {
      return (static_cast<double>(index) - static_cast<double>(ies)) / count;
    };
    if (options.ratios) {
      for (const auto& p : transition_curve(*t, partition)) {
        const std::size_t b = curve_bin(p.x);
        ratio_sum[b] += p.ratio;
        ++bins[b].ratio_obs;
      }
    }
    const auto flags = options.switches ? switch_flags(*t)
                                        : std::vector<std::optional<bool>>(t->steps.size());
    for (std::size_t i = 0; i < t->steps.size(); ++i) {
      const TaggedStep& s = t->steps[i];
      if (s.blank()) continue;
      const std::size_t b = curve_bin(position(s.index));
      if (flags[i]) {
        switch_sum[b] += *flags[i] ? 1.0 : 0.0;
        ++bins[b].switch_obs;
      }
      if (s.answer_correct) {
        correct_sum[b] += *s.answer_correct ? 1.0 : 0.0;
        ++bins[b].correct_obs;
      }
    }
  }
  for (std::size_t b = 0; b < kCurveBins; ++b) {
    CurveBin& bin = bins[b];
    bin.lo = -1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(kCurveBins);
    bin.hi = -1.0 + 2.0 * static_cast<double>(b + 1) / static_cast<double>(kCurveBins);
    if (bin.ratio_obs) bin.mean_ratio = ratio_sum[b] / static_cast<double>(bin.ratio_obs);
    if (bin.switch_obs) bin.switch_rate = switch_sum[b] / static_cast<double>(bin.switch_obs);
    if (bin.correct_obs) bin.correct_rate = correct_sum[b] / static_cast<double>(bin.correct_obs);
  }
  return bins;
}

// ---------------------------------------------------------------------------
// Latency

LatencyModel fit_corpus_latency(const Corpus& corpus) {
  std::vector<TokenTiming> points;
  for (const auto& r : corpus.records) {
    if (r.runtime_s) points.push_back({static_cast<double>(r.total_tokens()), *r.runtime_s});
  }
  return fit_latency(points);
}

RuntimeBreakdown policy_runtime(const LatencyModel& model, const PolicyRun& run,
                                const PolicyRun& standard) {
  if (run.records.empty() || standard.records.empty()) {
    throw InvalidArgument("runtime estimate needs non-empty runs");
  }
  double stopped = 0;
  double classifier = 0;
  double completion = 0;
  for (const auto& r : run.records) {
    stopped += model.predict(static_cast<double>(r.decision.tokens_main));
    classifier += r.decision.tagger_latency_s;
    completion += model.slope * static_cast<double>(r.decision.tokens_exit);
  }
  double std_total = 0;
  for (const auto& r : standard.records) {
    std_total += model.predict(static_cast<double>(r.decision.tokens_main));
  }
  const double n = static_cast<double>(run.records.size());
  return compose_runtime(stopped / n, classifier / n, completion / n,
                         std_total / static_cast<double>(standard.records.size()));
}

// ---------------------------------------------------------------------------
// Reports

std::string sha256_hex(std::string_view text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw StateError("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

std::string config_hash(const json& config) { return sha256_hex(config.dump()); }

ReportHeader make_header(json config, std::uint64_t seed) {
  ReportHeader h;
  h.config_hash = config_hash(config);
  h.seed = seed;
  h.config = std::move(config);
  return h;
}

void write_header(std::ostream& out, const ReportHeader& header) {
  out << "# stepgate " << kVersion << " config_sha256=" << header.config_hash
      << " seed=" << header.seed << '\n';
  out << "# config=" << header.config.dump() << '\n';
}

namespace {

std::string fixed(double v) { return format_fixed(v, 4); }

std::string opt(const std::optional<double>& v) { return v ? format_fixed(*v, 6) : ""; }

}  // namespace

void write_table_csv(std::ostream& out, const ReportHeader& header,
                     const std::vector<AggregateRow>& rows) {
  write_header(out, header);
  out << "dataset,model,config,records,seeds,k,tokens,tokens_std,tokens_main,saved_pct,"
         "saved_pct_std,avg_at_k,avg_at_k_std,pass_at_k,cons_at_k,early_stops,tokens_estimated\n";
  for (const auto& r : rows) {
    out << csv_field(r.dataset) << ',' << csv_field(r.model) << ',' << csv_field(r.config) << ','
        << r.records << ',' << r.seeds << ',' << r.k << ',' << fixed(r.tokens_mean) << ','
        << fixed(r.tokens_std) << ',' << fixed(r.tokens_main_mean) << ','
        << fixed(r.saved_pct_mean) << ',' << fixed(r.saved_pct_std) << ',' << fixed(r.avg_k)
        << ',' << fixed(r.avg_k_std) << ',' << fixed(r.pass_k) << ',' << fixed(r.cons_k) << ','
        << r.early_stops << ',' << (r.tokens_estimated ? "true" : "false") << '\n';
  }
}

void write_pareto_csv(std::ostream& out, const ReportHeader& header,
                      const std::vector<AggregateRow>& rows) {
  const auto flags = pareto_flags(rows);
  write_header(out, header);
  out << "dataset,model,config,tokens,accuracy,frontier\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out << csv_field(r.dataset) << ',' << csv_field(r.model) << ',' << csv_field(r.config) << ','
        << fixed(r.tokens_mean) << ',' << fixed(r.avg_k) << ',' << (flags[i] ? "true" : "false")
        << '\n';
  }
}

void write_records_csv(std::ostream& out, const ReportHeader& header, const SweepResult& sweep) {
  write_header(out, header);
  out << "config,id,dataset,model,seed,stopped_early,stop_step,reason,tokens_main,tokens_exit,"
         "tokens_total,correct\n";
  auto emit = [&](const PolicyRun& run) {
    const std::string label = run.policy.label();
    for (const auto& r : run.records) {
      const StopDecision& d = r.decision;
      out << csv_field(label) << ',' << csv_field(r.id) << ',' << csv_field(r.dataset) << ','
          << csv_field(r.model) << ',' << r.seed << ',' << (d.stopped_early ? "true" : "false")
          << ',' << (d.stop_step ? std::to_string(*d.stop_step) : "") << ','
          << stop_reason_name(d.reason) << ',' << d.tokens_main << ',' << d.tokens_exit << ','
          << d.tokens_total() << ',' << (d.correct ? "true" : "false") << '\n';
    }
  };
  emit(sweep.standard);
  for (const auto& run : sweep.runs) emit(run);
}

void write_distribution_csv(std::ostream& out, const ReportHeader& header,
                            const std::vector<TagShift>& shifts) {
  write_header(out, header);
  out << "tag,freq_before,freq_after,difference\n";
  for (const auto& s : shifts) {
    out << canonical_name(s.tag) << ',' << format_fixed(s.before, 6) << ','
        << format_fixed(s.after, 6) << ',' << format_fixed(s.before - s.after, 6) << '\n';
  }
}

void write_curves_csv(std::ostream& out, const ReportHeader& header,
                      const std::vector<CurveBin>& bins) {
  write_header(out, header);
  out << "bin,x_lo,x_hi,ratio_obs,mean_ratio,switch_obs,switch_rate,correct_obs,correct_rate\n";
  for (std::size_t b = 0; b < bins.size(); ++b) {
    const auto& c = bins[b];
    out << b << ',' << format_fixed(c.lo, 2) << ',' << format_fixed(c.hi, 2) << ','
        << c.ratio_obs << ',' << opt(c.mean_ratio) << ',' << c.switch_obs << ','
        << opt(c.switch_rate) << ',' << c.correct_obs << ',' << opt(c.correct_rate) << '\n';
  }
}

void write_ies_csv(std::ostream& out, const ReportHeader& header,
                   const std::vector<RunOutcome>& outcomes) {
  write_header(out, header);
  out << "id,steps,s_ies,reason,tokens_to_ies,tokens_total,never_correct\n";
  for (const auto& o : outcomes) {
    const StopDecision& d = o.decision;
    out << csv_field(o.trace.id) << ',' << o.trace.steps.size() << ','
        << d.stop_step.value_or(0) << ',' << stop_reason_name(d.reason) << ',' << d.tokens_main
        << ',' << o.trace.total_tokens() << ',' << (d.stopped_early ? "false" : "true") << '\n';
  }
}

}  // namespace stepgate
