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
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stepgate/controller.h"
#include "stepgate/corpus.h"
#include "stepgate/metrics.h"
#include "stepgate/tagger.h"

namespace stepgate {

inline constexpr std::string_view kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Tagger construction

struct TaggerSpec {
  TaggerKind kind = TaggerKind::Replay;
  std::string url;                  // remote
  std::string lexicon_file;         // lexicon; empty = builtin rules
  double noise_p = 1.0;             // noisy
  std::uint64_t seed = 0;           // noisy
  bool remote_fallback_other = false;
};

// Noisy wraps the replay tagger, with marginals taken from the corpus gold
// tags.
std::shared_ptr<const TaggerBackend> make_tagger(const TaggerSpec& spec, const Corpus& corpus);

// ---------------------------------------------------------------------------
// Sweeps

struct RecordRun {
  std::string id;
  std::string dataset;
  std::string model;
  std::int64_t seed = 0;
  std::string prompt;
  StopDecision decision;
};

struct PolicyRun {
  Policy policy;
  std::vector<RecordRun> records;  // sorted by id
};

struct SweepOptions {
  std::vector<Policy> policies;
  std::shared_ptr<const TaggerBackend> tagger;
  SegmenterConfig segmenter;
  std::size_t jobs = 1;
  std::optional<std::int64_t> max_tokens;  // unlimited when absent
};

struct SweepResult {
  PolicyRun standard;
  std::vector<PolicyRun> runs;
  // Mean standard tokens per (dataset, model); the base of budget alphas.
  std::map<std::pair<std::string, std::string>, double> mean_standard_tokens;
};

// Replays every record under the standard policy and each requested policy.
// Output does not depend on `jobs`.
SweepResult run_sweep(const Corpus& corpus, const SweepOptions& options);

// One replay of one record.
RunOutcome replay_record(const TraceRecord& record, const Policy& policy,
                         std::shared_ptr<const TaggerBackend> tagger,
                         const SegmenterConfig& segmenter = {},
                         std::optional<std::int64_t> max_tokens = std::nullopt);

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first failure in
// index order is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

// ---------------------------------------------------------------------------
// Aggregation (per-seed means, then mean and sample std across seeds)

struct AggregateRow {
  std::string dataset;
  std::string model;
  std::string config;
  std::size_t records = 0;
  std::size_t seeds = 0;
  std::size_t k = 0;
  double tokens_mean = 0;  // main + exit
  double tokens_std = 0;
  double tokens_main_mean = 0;
  double saved_pct_mean = 0;
  double saved_pct_std = 0;
  double avg_k = 0;
  double avg_k_std = 0;
  double pass_k = 0;
  double cons_k = 0;
  std::size_t early_stops = 0;
  bool tokens_estimated = false;
};

// Standard row first, then one row per policy run, grouped by (dataset,
// model). Throws InvalidArgument when prompts do not share one seed set.
std::vector<AggregateRow> aggregate(const SweepResult& sweep);

// Row flags in the order given; computed within each (dataset, model).
std::vector<bool> pareto_flags(const std::vector<AggregateRow>& rows);

// Persisted run file: per-record rows plus the aggregates, which are
// re-derived and compared on load (DataError on mismatch).
nlohmann::ordered_json sweep_to_json(const SweepResult& sweep);
SweepResult sweep_from_json(const nlohmann::json& doc);

// ---------------------------------------------------------------------------
// Phase analyses

struct TagShift {
  StepTag tag = StepTag::Other;
  double before = 0;
  double after = 0;
};

// Per-trace tag frequencies before and after the first correct step,
// averaged over traces, ordered by decreasing before - after.
std::vector<TagShift> distribution_shift(const std::vector<TraceRecord>& traces,
                                         bool correct_only = true);

// Per step: nullopt for the first step, else whether the extracted answer
// snapshot differs from the previous non-blank one. Blank steps get no flag;
// a non-blank step without a snapshot is a DataError.
std::vector<std::optional<bool>> switch_flags(const TraceRecord& trace);

inline constexpr std::size_t kCurveBins = 100;

// Bin of a normalized position in [-1, 1]; out-of-range values clamp.
std::size_t curve_bin(double x);

struct CurveBin {
  double lo = 0;
  double hi = 0;
  std::size_t ratio_obs = 0;
  std::optional<double> mean_ratio;
  std::size_t switch_obs = 0;
  std::optional<double> switch_rate;
  std::size_t correct_obs = 0;
  std::optional<double> correct_rate;
};

struct CurveOptions {
  bool correct_only = true;
  bool ratios = true;     // needs tags on every non-blank step
  bool switches = true;   // needs answer snapshots
};

// Normalized position x = (i - S_IES) / |S| binned over kCurveBins bins.
std::vector<CurveBin> binned_curves(const std::vector<TraceRecord>& traces,
                                    const ClassPartition& partition,
                                    const CurveOptions& options = {});

// ---------------------------------------------------------------------------
// Latency

// Fits runtime_s against total tokens over records that carry a runtime.
LatencyModel fit_corpus_latency(const Corpus& corpus);

// Mean per-record runtime of a policy run predicted by `model`, with the
// classifier cost taken from measured tagger latency.
RuntimeBreakdown policy_runtime(const LatencyModel& model, const PolicyRun& run,
                                const PolicyRun& standard);

// ---------------------------------------------------------------------------
// Reports

struct ReportHeader {
  std::string config_hash;
  std::uint64_t seed = 0;
  nlohmann::json config;
};

std::string sha256_hex(std::string_view bytes);
// SHA-256 (hex) of the compact JSON dump.
std::string config_hash(const nlohmann::json& config);
ReportHeader make_header(nlohmann::json config, std::uint64_t seed);
void write_header(std::ostream& out, const ReportHeader& header);

void write_table_csv(std::ostream& out, const ReportHeader& header,
                     const std::vector<AggregateRow>& rows);
void write_pareto_csv(std::ostream& out, const ReportHeader& header,
                      const std::vector<AggregateRow>& rows);
void write_records_csv(std::ostream& out, const ReportHeader& header, const SweepResult& sweep);
void write_distribution_csv(std::ostream& out, const ReportHeader& header,
                            const std::vector<TagShift>& shifts);
void write_curves_csv(std::ostream& out, const ReportHeader& header,
                      const std::vector<CurveBin>& bins);
void write_ies_csv(std::ostream& out, const ReportHeader& header,
                   const std::vector<RunOutcome>& outcomes);

}  // namespace stepgate
