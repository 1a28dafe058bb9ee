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

#include "stepgate/controller.h"

#include <chrono>

#include "stepgate/format.h"
#include "stepgate/metrics.h"

namespace stepgate {

std::string_view policy_kind_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Standard:
      return "standard";
    case PolicyKind::Traces:
      return "traces";
    case PolicyKind::Budget:
      return "budget";
    case PolicyKind::Ies:
      return "ies";
  }
  return "unknown";
}

PolicyKind parse_policy_kind(std::string_view text) {
  for (auto k : {PolicyKind::Standard, PolicyKind::Traces, PolicyKind::Budget,
                 PolicyKind::Ies}) {
    if (text == policy_kind_name(k)) return k;
  }
  throw InvalidArgument("unknown policy kind '" + std::string(text) +
                        "' (expected standard, traces, budget or ies)");
}

std::string_view stop_reason_name(StopReason reason) {
  switch (reason) {
    case StopReason::Eos:
      return "eos";
    case StopReason::TracesWindow:
      return "traces_window";
    case StopReason::BudgetExceeded:
      return "budget_exceeded";
    case StopReason::IesCorrect:
      return "ies_correct";
    case StopReason::StepLimit:
      return "step_limit";
  }
  return "unknown";
}

void Policy::validate() const {
  if (window < 1) throw InvalidArgument("window must be at least 1");
  if (exit_token_budget < 1) throw InvalidArgument("exit_token_budget must be at least 1");
  if (alpha && !(*alpha > 0)) throw InvalidArgument("alpha must be positive");
  if (eta && !(*eta >= 1)) throw InvalidArgument("eta must be at least 1");
  if (kind == PolicyKind::Budget && !alpha && !eta) {
    throw InvalidArgument("budget policy needs alpha or eta");
  }
}

std::string Policy::label() const {
  switch (kind) {
    case PolicyKind::Traces:
      return "traces(delta=" + delta.to_string() + ",w=" + std::to_string(window) + "," +
             partition.name() + ")";
    case PolicyKind::Budget:
      if (alpha) return "budget(alpha=" + format_double(*alpha) + ")";
      return "budget(eta=" + format_double(eta.value_or(0)) + ")";
    default:
      return std::string(policy_kind_name(kind));
  }
}

Policy make_traces_policy(Threshold delta, std::size_t window, ClassPartition partition) {
  Policy p;
  p.kind = PolicyKind::Traces;
  p.delta = delta;
  p.window = window;
  p.partition = std::move(partition);
  p.validate();
  return p;
}

Policy make_budget_policy(double eta) {
  Policy p;
  p.kind = PolicyKind::Budget;
  p.eta = eta;
  p.validate();
  return p;
}

Policy policy_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw InvalidArgument("policy must be a JSON object");
  Policy p;
  try {
    if (doc.contains("kind")) p.kind = parse_policy_kind(doc.at("kind").get<std::string>());
    if (doc.contains("delta")) {
      const auto& d = doc.at("delta");
      p.delta = d.is_string() ? Threshold::parse(d.get<std::string>())
                              : Threshold::from_double(d.get<double>());
    }
    if (doc.contains("window")) {
      const auto w = doc.at("window").get<std::int64_t>();
      if (w < 1) throw InvalidArgument("window must be at least 1");
      p.window = static_cast<std::size_t>(w);
    }
    if (doc.contains("alpha") && !doc.at("alpha").is_null()) p.alpha = doc.at("alpha").get<double>();
    if (doc.contains("eta") && !doc.at("eta").is_null()) p.eta = doc.at("eta").get<double>();
    if (doc.contains("partition_name")) {
      p.partition = partition_by_name(doc.at("partition_name").get<std::string>());
    }
    if (doc.contains("exit_prompt")) p.exit_prompt = doc.at("exit_prompt").get<std::string>();
    if (doc.contains("exit_token_budget")) {
      p.exit_token_budget = doc.at("exit_token_budget").get<std::int64_t>();
    }
    if (doc.contains("on_tagger_error")) {
      const auto v = doc.at("on_tagger_error").get<std::string>();
      if (v == "fail") {
        p.on_tagger_error = TaggerFailure::Fail;
      } else if (v == "other") {
        p.on_tagger_error = TaggerFailure::TagOther;
      } else {
        throw InvalidArgument("on_tagger_error must be 'fail' or 'other'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed policy: ") + e.what());
  }
  p.validate();
  return p;
}

nlohmann::json policy_to_json(const Policy& policy) {
  nlohmann::ordered_json doc;
  doc["kind"] = policy_kind_name(policy.kind);
  doc["delta"] = policy.delta.to_string();
  doc["window"] = policy.window;
  doc["alpha"] = policy.alpha ? nlohmann::ordered_json(*policy.alpha) : nullptr;
  doc["eta"] = policy.eta ? nlohmann::ordered_json(*policy.eta) : nullptr;
  doc["partition_name"] = policy.partition.name();
  doc["exit_prompt"] = policy.exit_prompt;
  doc["exit_token_budget"] = policy.exit_token_budget;
  doc["on_tagger_error"] = policy.on_tagger_error == TaggerFailure::Fail ? "fail" : "other";
  return nlohmann::json::parse(doc.dump());
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// A closed session standing in for an arbitrary context, so continuations
// can be issued over text that was not produced by a live session.
class FrozenSession final : public StreamSession {
 public:
  FrozenSession(std::string prompt, GenerationParams params, const std::string& generated)
      : StreamSession("frozen", std::move(prompt), params) {
    record(StreamEvent::chunk(generated, 0));
    record(StreamEvent::eos(FinishReason::Stop));
  }
  std::optional<StreamEvent> next() override { return std::nullopt; }
  bool cancel() override { return false; }
};

struct Forced {
  std::string text;
  std::int64_t tokens = 0;
};

Forced force_answer(ModelBackend& backend, const StreamSession& prior,
                    const Policy& policy, const TraceRecord& partial) {
  auto session = continue_with(backend, prior, policy.exit_prompt, policy.exit_token_budget);
  Forced f;
  while (auto ev = session->next()) {
    if (ev->kind == StreamEvent::Kind::Error) {
      throw RunAborted("forced answer failed: " + ev->message, partial);
    }
    if (ev->kind == StreamEvent::Kind::Eos) break;
    f.text += ev->text;
  }
  f.tokens = std::min(session->tokens(), policy.exit_token_budget);
  return f;
}

TraceRecord skeleton(const RunContext& ctx) {
  TraceRecord out;
  if (ctx.reference) {
    const TraceRecord& r = *ctx.reference;
    out.id = r.id;
    out.dataset = r.dataset;
    out.model = r.model;
    out.seed = r.seed;
    out.prompt = r.prompt;
    out.gold_answer = r.gold_answer;
    out.answer_mode = r.answer_mode;
  } else {
    out.id = ctx.record_id;
    out.prompt = ctx.prompt;
    out.gold_answer = ctx.gold_answer;
    out.answer_mode = ctx.answer_mode;
    if (ctx.params.seed) out.seed = static_cast<std::int64_t>(*ctx.params.seed);
  }
  return out;
}

// The reference step at `index` when the generated text reproduces it.
const TaggedStep* reference_step(const RunContext& ctx, const TaggedStep& step) {
  if (!ctx.reference || step.index == 0 || step.index > ctx.reference->steps.size()) {
    return nullptr;
  }
  const TaggedStep& ref = ctx.reference->steps[step.index - 1];
  return ref.text == step.text ? &ref : nullptr;
}

// Called for non-blank steps with the cumulative token count through the
// step; returns true to stop after it.
using StepHook = std::function<bool(TaggedStep&, StopDecision&, std::int64_t)>;

RunOutcome drive(const RunContext& ctx, const Policy& policy, const StepHook& hook,
                 StopReason hook_reason) {
  if (!ctx.backend) throw InvalidArgument("run context has no model backend");
  policy.validate();
  const auto t0 = Clock::now();
  RunOutcome result;
  TraceRecord& out = result.trace;
  StopDecision& d = result.decision;
  out = skeleton(ctx);

  auto session = ctx.backend->start(ctx.prompt, ctx.params);
  StepwiseGeneration gen(*session, ctx.segmenter);
  std::int64_t cumulative = 0;
  try {
    while (auto g = gen.next()) {
      TaggedStep ts;
      ts.index = g->index;
      ts.text = std::move(g->step.text);
      ts.token_count = g->step.token_count;
      if (const TaggedStep* ref = reference_step(ctx, ts)) {
        ts.answer_snapshot = ref->answer_snapshot;
        ts.answer_correct = ref->answer_correct;
      }
      cumulative += ts.token_count;
      const bool stop = !ts.blank() && hook && hook(ts, d, cumulative);
      out.steps.push_back(std::move(ts));
      if (stop) {
        gen.cancel();
        d.stopped_early = true;
        d.stop_step = out.steps.back().index;
        d.reason = hook_reason;
        break;
      }
    }
  } catch (const RunAborted&) {
    throw;
  } catch (const TransportError& e) {
    throw RunAborted(e.what(), out);
  }
  if (!d.stopped_early && gen.step_limit_hit()) {
    d.stopped_early = true;
    d.reason = StopReason::StepLimit;
    if (!out.steps.empty()) d.stop_step = out.steps.back().index;
  }
  d.tokens_main = gen.tokens_received();
  d.tokens_estimated = gen.tokens_estimated();

  if (d.stopped_early) {
    const Forced f = force_answer(*ctx.backend, *session, policy, out);
    d.tokens_exit = f.tokens;
    d.forced_answer = f.text;
    const auto check =
        check_answer_detailed(policy.exit_prompt + f.text, out.gold_answer, out.answer_mode);
    out.final_answer = check.extracted;
    out.correct = check.correct;
  } else if (ctx.reference && out.full_text() == ctx.reference->full_text()) {
    out.final_answer = ctx.reference->final_answer;
    out.correct = ctx.reference->correct;
  } else {
    const auto check =
        check_answer_detailed(session->generated(), out.gold_answer, out.answer_mode);
    out.final_answer = check.extracted;
    out.correct = check.correct;
  }
  d.correct = out.correct;
  d.wall_time_s = seconds_since(t0);
  return result;
}

}  // namespace

RunOutcome run_standard(const RunContext& ctx, const Policy& policy) {
  return drive(ctx, policy, {}, StopReason::Eos);
}

RunOutcome run_traces(const RunContext& ctx, const Policy& policy) {
  if (!ctx.tagger) throw InvalidArgument("traces policy needs a tagger backend");
  PhaseMonitor monitor(policy.delta, policy.window);
  const std::uint64_t key =
      stream_key_of(ctx.reference ? ctx.reference->id : ctx.record_id);
  StepHook hook = [&](TaggedStep& ts, StopDecision& d, std::int64_t) {
    StepQuery q;
    q.text = ts.text;
    q.ordinal = ts.index;
    q.stream_key = key;
    if (const TaggedStep* ref = reference_step(ctx, ts)) q.gold = ref->tag;
    TagPrediction p;
    try {
      p = tag_step(q, *ctx.tagger, policy.partition);
    } catch (const TransportError&) {
      if (policy.on_tagger_error == TaggerFailure::Fail) throw;
      p.tag = StepTag::Other;
      p.class_code = ClassCode::Other;
    }
    ts.tag = p.tag;
    ts.class_code = p.class_code;
    d.tagger_latency_s += p.latency_s;
    return monitor.observe(p.class_code, ts.index).should_stop;
  };
  return drive(ctx, policy, hook, StopReason::TracesWindow);
}

RunOutcome run_budget(const RunContext& ctx, const Policy& policy) {
  if (!policy.eta) throw InvalidArgument("budget policy has no resolved eta");
  const double eta = *policy.eta;
  StepHook hook = [eta](TaggedStep&, StopDecision&, std::int64_t cumulative) {
    return static_cast<double>(cumulative) >= eta;
  };
  return drive(ctx, policy, hook, StopReason::BudgetExceeded);
}

RunOutcome run_policy(const RunContext& ctx, const Policy& policy) {
  switch (policy.kind) {
    case PolicyKind::Standard:
      return run_standard(ctx, policy);
    case PolicyKind::Traces:
      return run_traces(ctx, policy);
    case PolicyKind::Budget:
      return run_budget(ctx, policy);
    case PolicyKind::Ies:
      return run_ies_live(ctx, policy);
  }
  throw InvalidArgument("unknown policy kind");
}

RunOutcome run_ies(const TraceRecord& trace, const AnswerChecker& checker) {
  if (trace.steps.empty()) throw DataError("trace " + trace.id + " has no steps");
  if (trace.gold_answer.empty()) {
    throw DataError("trace " + trace.id + " has no gold_answer; IES needs one");
  }
  RunOutcome result;
  result.trace = trace;
  StopDecision& d = result.decision;
  std::optional<std::string> snapshot;
  std::optional<std::size_t> ies;
  std::optional<std::string> ies_snapshot;
  for (auto& step : result.trace.steps) {
    if (step.answer_snapshot) {
      snapshot = step.answer_snapshot;
    } else if (!step.blank()) {
      throw DataError("trace " + trace.id + ": step " + std::to_string(step.index) +
                      " has no answer snapshot");
    }
    const bool correct =
        snapshot && checker(*snapshot, trace.gold_answer, trace.answer_mode);
    step.answer_correct = correct;
    if (correct && !ies) {
      ies = step.index;
      ies_snapshot = snapshot;
    }
  }
  const std::size_t stop = ies.value_or(result.trace.steps.back().index);
  for (const auto& step : result.trace.steps) {
    if (step.index <= stop) d.tokens_main += step.token_count;
  }
  d.stop_step = stop;
  d.stopped_early = ies.has_value();
  d.reason = ies ? StopReason::IesCorrect : StopReason::Eos;
  d.forced_answer = ies_snapshot;
  d.correct = ies ? true : trace.correct;
  return result;
}

RunOutcome run_ies_live(const RunContext& ctx, const Policy& policy) {
  const auto t0 = Clock::now();
  RunOutcome result = run_standard(ctx, policy);
  TraceRecord& out = result.trace;
  StopDecision& d = result.decision;
  if (out.gold_answer.empty()) {
    throw DataError("trace " + out.id + " has no gold_answer; IES needs one");
  }
  if (out.steps.empty()) throw DataError("trace " + out.id + " has no steps");
  const std::int64_t tokens_full = d.tokens_main;
  const bool final_correct = out.correct;
  const bool estimated = d.tokens_estimated;
  d = StopDecision{};
  d.tokens_estimated = estimated;

  std::string prefix;
  std::optional<std::size_t> ies;
  std::optional<bool> last_verdict;
  std::int64_t cumulative = 0;
  for (auto& step : out.steps) {
    prefix += step.text;
    cumulative += step.token_count;
    if (step.blank()) {
      step.answer_correct = last_verdict;
      continue;
    }
    FrozenSession context(ctx.prompt, ctx.params, prefix);
    const Forced f = force_answer(*ctx.backend, context, policy, out);
    const auto check =
        check_answer_detailed(policy.exit_prompt + f.text, out.gold_answer, out.answer_mode);
    if (check.parsed) step.answer_snapshot = check.extracted;
    step.answer_correct = check.correct;
    last_verdict = check.correct;
    if (check.correct && !ies) {
      ies = step.index;
      d.tokens_main = cumulative;
      d.tokens_exit = f.tokens;
      d.forced_answer = f.text;
    }
  }
  d.stop_step = ies.value_or(out.steps.back().index);
  d.stopped_early = ies.has_value();
  d.reason = ies ? StopReason::IesCorrect : StopReason::Eos;
  if (!ies) d.tokens_main = tokens_full;
  d.correct = ies ? true : final_correct;
  d.wall_time_s = seconds_since(t0);
  return result;
}

std::pair<std::vector<TaggedStep>, std::vector<TaggedStep>> split_before_after(
    const TraceRecord& trace) {
  const bool annotated = std::any_of(trace.steps.begin(), trace.steps.end(),
                                     [](const TaggedStep& s) { return s.answer_correct.has_value(); });
  if (!annotated) {
    throw DataError("trace " + trace.id + " carries no answer_correct annotations");
  }
  const std::size_t ies = ies_index_of(trace);
  std::pair<std::vector<TaggedStep>, std::vector<TaggedStep>> split;
  for (const auto& s : trace.steps) {
    (s.index <= ies ? split.first : split.second).push_back(s);
  }
  return split;
}

std::optional<std::size_t> simulate_traces(const std::vector<std::optional<ClassCode>>& codes,
                                           Threshold delta, std::size_t window) {
  if (window < 1) throw InvalidArgument("window must be at least 1");
  std::vector<bool> flags;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (!codes[i]) continue;
    std::uint64_t c = 0;
    std::uint64_t e = 0;
    for (std::size_t j = 0; j <= i; ++j) {
      if (codes[j] == ClassCode::Constructive) ++c;
      if (codes[j] == ClassCode::Evaluative) ++e;
    }
    flags.push_back(c + e > 0 && delta.ratio_below(c, c + e));
    if (flags.size() >= window &&
        std::all_of(flags.end() - static_cast<std::ptrdiff_t>(window), flags.end(),
                    [](bool f) { return f; })) {
      return i + 1;
    }
  }
  return std::nullopt;
}

}  // namespace stepgate
