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

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stepgate/errors.h"
#include "stepgate/gateway.h"
#include "stepgate/metrics.h"
#include "stepgate/monitor.h"
#include "stepgate/tagger.h"
#include "stepgate/taxonomy.h"
#include "stepgate/types.h"

namespace stepgate {

inline constexpr std::string_view kDefaultExitPrompt =
    "\n\nTime is up. Given my reasoning so far, the single most likely final "
    "answer is \\boxed{";
inline constexpr std::int64_t kDefaultExitTokenBudget = 100;

enum class PolicyKind : std::uint8_t { Standard, Traces, Budget, Ies };

std::string_view policy_kind_name(PolicyKind kind);
PolicyKind parse_policy_kind(std::string_view text);

enum class TaggerFailure : std::uint8_t { Fail, TagOther };

struct Policy {
  PolicyKind kind = PolicyKind::Standard;
  // traces
  Threshold delta = Threshold::parse("0.5");
  std::size_t window = kDefaultWindow;
  ClassPartition partition = default_partition();
  TaggerFailure on_tagger_error = TaggerFailure::Fail;
  // budget: either eta directly, or alpha times the corpus mean of the
  // standard runs (resolved by the harness).
  std::optional<double> alpha;
  std::optional<double> eta;
  // answer forcing
  std::string exit_prompt = std::string(kDefaultExitPrompt);
  std::int64_t exit_token_budget = kDefaultExitTokenBudget;

  // Throws InvalidArgument on out-of-range fields.
  void validate() const;
  // Short label used in report rows, e.g. "traces(delta=0.5,w=5,default)".
  std::string label() const;
};

// Budget multipliers of the token-budget baseline sweep.
inline std::vector<double> budget_alpha_grid() { return {0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0}; }

Policy make_traces_policy(Threshold delta, std::size_t window = kDefaultWindow,
                          ClassPartition partition = default_partition());
Policy make_budget_policy(double eta);

// {kind, delta, window, alpha, eta, partition_name, exit_prompt,
// exit_token_budget}; absent fields keep their defaults.
Policy policy_from_json(const nlohmann::json& doc);
nlohmann::json policy_to_json(const Policy& policy);

enum class StopReason : std::uint8_t {
  Eos,
  TracesWindow,
  BudgetExceeded,
  IesCorrect,
  StepLimit
};

std::string_view stop_reason_name(StopReason reason);

struct StopDecision {
  bool stopped_early = false;
  std::optional<std::size_t> stop_step;
  StopReason reason = StopReason::Eos;
  std::int64_t tokens_main = 0;
  std::int64_t tokens_exit = 0;
  std::optional<std::string> forced_answer;
  double wall_time_s = 0;
  bool tokens_estimated = false;
  bool correct = false;
  double tagger_latency_s = 0;  // summed over tagged steps

  std::int64_t tokens_total() const { return tokens_main + tokens_exit; }
};

using AnswerChecker =
    std::function<bool(std::string_view answer, std::string_view gold, AnswerMode mode)>;

// Everything a run needs besides the policy. `reference` is the recorded
// trace being replayed, when there is one; it supplies gold tags to the
// replay tagger, metadata for the output record, and the recorded verdict
// when generation reproduces the whole trace.
struct RunContext {
  ModelBackend* backend = nullptr;
  std::string prompt;
  GenerationParams params;
  SegmenterConfig segmenter;
  std::shared_ptr<const TaggerBackend> tagger;
  const TraceRecord* reference = nullptr;
  // Used when no reference is given.
  std::string gold_answer;
  AnswerMode answer_mode = AnswerMode::BoxedMath;
  std::string record_id;
};

struct RunOutcome {
  StopDecision decision;
  TraceRecord trace;
};

// Stream failures during a run; carries what was produced before the
// failure.
class RunAborted : public TransportError {
 public:
  RunAborted(const std::string& message, TraceRecord partial)
      : TransportError(message), partial_(std::move(partial)) {}
  const TraceRecord& partial() const { return partial_; }

 private:
  TraceRecord partial_;
};

RunOutcome run_standard(const RunContext& ctx, const Policy& policy);
RunOutcome run_traces(const RunContext& ctx, const Policy& policy);
// Requires policy.eta to be set (>= 1).
RunOutcome run_budget(const RunContext& ctx, const Policy& policy);
// Dispatches on policy.kind; Ies policies go to run_ies_live.
RunOutcome run_policy(const RunContext& ctx, const Policy& policy);

// Replay IES over recorded answer snapshots. Every non-blank step needs a
// snapshot (blank steps inherit the previous one); throws DataError
// otherwise. Annotates answer_correct on every step.
RunOutcome run_ies(const TraceRecord& trace, const AnswerChecker& checker = answers_match);

// Live IES: generates to EOS, then forces an answer after every non-blank
// step. Costs one forced generation per step.
RunOutcome run_ies_live(const RunContext& ctx, const Policy& policy);

// Steps 1..S_IES and S_IES+1..T. Throws DataError when no step carries an
// answer_correct annotation.
std::pair<std::vector<TaggedStep>, std::vector<TaggedStep>> split_before_after(
    const TraceRecord& trace);

// Offline simulation of the traces policy over class codes. Blank steps are
// passed as nullopt and skipped. Returns the 1-based position of the stop.
std::optional<std::size_t> simulate_traces(const std::vector<std::optional<ClassCode>>& codes,
                                           Threshold delta, std::size_t window);

}  // namespace stepgate
