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

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "stepgate/harness.h"

using namespace stepgate;

namespace {

Corpus mini() { return load_corpus(std::string(STEPGATE_DATA_DIR) + "/mini_corpus.jsonl"); }

nlohmann::json expected() {
  std::ifstream in(std::string(STEPGATE_DATA_DIR) + "/mini_corpus_expected.json");
  return nlohmann::json::parse(in);
}

TaggedStep tagged(std::size_t index, StepTag tag, std::string snapshot, bool correct) {
  TaggedStep s;
  s.index = index;
  s.text = "s" + std::to_string(index) + "\n\n";
  s.tag = tag;
  s.answer_snapshot = std::move(snapshot);
  s.answer_correct = correct;
  return s;
}

SweepOptions traces_options(std::size_t jobs = 1) {
  SweepOptions o;
  o.policies = {make_traces_policy(Threshold::parse("0.5"), 5)};
  o.tagger = std::make_shared<ReplayTagger>();
  o.jobs = jobs;
  return o;
}

}  // namespace

TEST_CASE("replay of the mini corpus matches the hand oracle") {
  const auto corpus = mini();
  const auto exp = expected();
  auto sweep = run_sweep(corpus, traces_options());
  REQUIRE(sweep.runs.size() == 1);
  for (const auto& e : exp["records"]) {
    const std::string id = e["id"];
    CAPTURE(id);
    const RecordRun* row = nullptr;
    for (const auto& r : sweep.runs[0].records) {
      if (r.id == id) row = &r;
    }
    REQUIRE(row);
    const auto& d = row->decision;
    CHECK(d.stopped_early == e["stopped_early"].get<bool>());
    if (e["stop_step"].is_null()) {
      CHECK_FALSE(d.stop_step.has_value());
    } else {
      CHECK(d.stop_step == e["stop_step"].get<std::size_t>());
    }
    CHECK(d.tokens_main == e["tokens_main"].get<std::int64_t>());
    CHECK(d.tokens_exit == e["tokens_exit"].get<std::int64_t>());
    CHECK(d.correct == e["correct"].get<bool>());
  }
  for (const auto& r : sweep.standard.records) {
    CHECK_FALSE(r.decision.stopped_early);
    CHECK(r.decision.tokens_main == corpus.find(r.id)->total_tokens());
  }
}

TEST_CASE("parallel sweeps are identical to serial ones") {
  const auto corpus = mini();
  auto serial = sweep_to_json(run_sweep(corpus, traces_options(1))).dump();
  auto parallel = sweep_to_json(run_sweep(corpus, traces_options(4))).dump();
  CHECK(serial == parallel);
}

TEST_CASE("aggregation and persistence") {
  const auto corpus = mini();
  auto opts = traces_options();
  Policy budget;
  budget.kind = PolicyKind::Budget;
  budget.alpha = 0.5;
  opts.policies.push_back(budget);
  auto sweep = run_sweep(corpus, opts);
  const double mu = sweep.mean_standard_tokens.at({"mini", "synthetic"});
  CHECK(mu == doctest::Approx(313.6666667));

  auto rows = aggregate(sweep);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].config == "standard");
  CHECK(rows[0].saved_pct_mean == 0.0);
  CHECK(rows[0].k == 3);
  CHECK(rows[0].pass_k == 1.0);
  CHECK(rows[0].cons_k == 0.5);
  CHECK(rows[0].avg_k == doctest::Approx(10.0 / 12.0));
  CHECK(rows[1].config == "traces(delta=0.5,w=5,default)");
  CHECK(rows[2].config == "budget(alpha=0.5)");
  CHECK(rows[2].early_stops == 12);
  for (const auto& r : sweep.runs[1].records) {
    CHECK(r.decision.tokens_main >= static_cast<std::int64_t>(std::ceil(0.5 * mu)));
  }

  auto doc = sweep_to_json(sweep);
  auto back = sweep_from_json(nlohmann::json::parse(doc.dump()));
  CHECK(sweep_to_json(back).dump() == doc.dump());

  auto tampered = nlohmann::json::parse(doc.dump());
  tampered["runs"][1]["records"][0]["tokens_main"] = 1;
  CHECK_THROWS_AS(sweep_from_json(tampered), DataError);
  tampered = nlohmann::json::parse(doc.dump());
  tampered["format"] = "other";
  CHECK_THROWS_AS(sweep_from_json(tampered), DataError);
  CHECK_THROWS_AS(sweep_from_json(nlohmann::json::object()), DataError);

  auto flags = pareto_flags(rows);
  CHECK(flags.size() == 3);
}

TEST_CASE("ragged seed sets are rejected") {
  auto corpus = mini();
  corpus.records.pop_back();
  auto sweep = run_sweep(corpus, traces_options());
  CHECK_THROWS_AS(aggregate(sweep), InvalidArgument);
}

TEST_CASE("pareto over two policies") {
  AggregateRow a{"d", "m", "a", 1, 1, 1, 100, 0, 100, 0, 0, 0.9};
  AggregateRow b{"d", "m", "b", 1, 1, 1, 80, 0, 80, 0, 0, 0.95};
  CHECK(pareto_flags({a, b}) == std::vector<bool>{false, true});
  CHECK(pareto_flags({a}) == std::vector<bool>{true});
}

TEST_CASE("distribution shift on a small trace") {
  TraceRecord t;
  t.id = "t";
  t.correct = true;
  t.steps = {tagged(1, StepTag::ProblemRestatement, "1", false),
             tagged(2, StepTag::DefinitionRecall, "4", true),
             tagged(3, StepTag::Verification, "4", true),
             tagged(4, StepTag::FinalConclusion, "4", true)};
  auto shifts = distribution_shift({t});
  auto find = [&](StepTag tag) {
    for (const auto& s : shifts) {
      if (s.tag == tag) return s;
    }
    return TagShift{};
  };
  CHECK(find(StepTag::ProblemRestatement).before == 0.5);
  CHECK(find(StepTag::DefinitionRecall).before == 0.5);
  CHECK(find(StepTag::Verification).after == 0.5);
  CHECK(find(StepTag::FinalConclusion).after == 0.5);
  CHECK(shifts.front().before - shifts.front().after >= shifts.back().before - shifts.back().after);

  for (auto& s : t.steps) s.answer_correct = false;
  t.steps.back().answer_correct = false;
  for (const auto& s : distribution_shift({t})) CHECK(s.after == 0.0);

  t.correct = false;
  for (const auto& s : distribution_shift({t})) CHECK(s.before == 0.0);
  for (const auto& s : distribution_shift({t}, false)) CHECK(s.before >= 0.0);
}

TEST_CASE("distribution shift recovers sampling frequencies") {
  std::mt19937_64 rng(5);
  const std::vector<StepTag> support = {StepTag::ProblemRestatement, StepTag::DefinitionRecall,
                                        StepTag::Verification, StepTag::FinalConclusion};
  const std::vector<double> p_before = {0.5, 0.3, 0.15, 0.05};
  const std::vector<double> p_after = {0.05, 0.1, 0.6, 0.25};
  std::discrete_distribution<std::size_t> db(p_before.begin(), p_before.end());
  std::discrete_distribution<std::size_t> da(p_after.begin(), p_after.end());
  constexpr std::size_t kTraces = 50;
  constexpr std::size_t kHalf = 20;
  std::vector<TraceRecord> traces;
  for (std::size_t n = 0; n < kTraces; ++n) {
    TraceRecord t;
    t.id = "t" + std::to_string(n);
    t.correct = true;
    for (std::size_t i = 1; i <= 2 * kHalf; ++i) {
      const bool after = i > kHalf;
      const StepTag tag = support[after ? da(rng) : db(rng)];
      t.steps.push_back(tagged(i, tag, i >= kHalf ? "ok" : "no", i >= kHalf));
    }
    traces.push_back(std::move(t));
  }
  // The first correct step closes the "before" segment, so it holds kHalf steps.
  auto shifts = distribution_shift(traces);
  for (std::size_t k = 0; k < support.size(); ++k) {
    for (const auto& s : shifts) {
      if (s.tag != support[k]) continue;
      const double sb = std::sqrt(p_before[k] * (1 - p_before[k]) / (kTraces * kHalf));
      const double sa = std::sqrt(p_after[k] * (1 - p_after[k]) / (kTraces * kHalf));
      CHECK(std::abs(s.before - p_before[k]) <= 3 * sb);
      CHECK(std::abs(s.after - p_after[k]) <= 3 * sa);
    }
  }
}

TEST_CASE("switch flags") {
  TraceRecord t;
  t.id = "t";
  t.steps = {tagged(1, StepTag::Other, "2", false), tagged(2, StepTag::Other, "3", false),
             tagged(3, StepTag::Other, "\\boxed{3}", false)};
  auto f = switch_flags(t);
  CHECK_FALSE(f[0].has_value());
  CHECK(f[1] == true);
  CHECK(f[2] == false);
  for (auto& s : t.steps) s.answer_snapshot = "7";
  for (std::size_t i = 1; i < t.steps.size(); ++i) CHECK(switch_flags(t)[i] == false);
  t.steps[1].answer_snapshot.reset();
  CHECK_THROWS_AS(switch_flags(t), DataError);
}

TEST_CASE("curve bins") {
  CHECK(curve_bin(-1.0) == 0);
  CHECK(curve_bin(-2.0) == 0);
  CHECK(curve_bin(0.0) == 50);
  CHECK(curve_bin(0.999) == 99);
  CHECK(curve_bin(1.0) == 99);
  CHECK(curve_bin(-0.98) == 1);

  auto corpus = mini();
  auto bins = binned_curves(corpus.records, default_partition());
  REQUIRE(bins.size() == kCurveBins);
  std::size_t obs = 0;
  for (const auto& b : bins) {
    obs += b.ratio_obs;
    if (b.mean_ratio) {
      CHECK(*b.mean_ratio >= 0.0);
      CHECK(*b.mean_ratio <= 1.0);
    }
  }
  std::size_t expected_obs = 0;
  for (const auto& r : corpus.records) {
    if (r.correct) expected_obs += r.non_blank_steps();
  }
  CHECK(obs == expected_obs);
  CHECK(bins[50].correct_rate == 1.0);
}

TEST_CASE("latency fit over the corpus and policy runtime") {
  auto corpus = mini();
  auto model = fit_corpus_latency(corpus);
  CHECK(model.slope == doctest::Approx(0.02).epsilon(0.01));
  CHECK(model.intercept == doctest::Approx(1.5).epsilon(0.01));
  auto sweep = run_sweep(corpus, traces_options());
  auto rt = policy_runtime(model, sweep.runs[0], sweep.standard);
  CHECK(rt.total == doctest::Approx(rt.stopped + rt.classifier + rt.completion));
  CHECK(rt.speedup > 1.0);
}

TEST_CASE("noisy tagger spec") {
  auto corpus = mini();
  TaggerSpec spec;
  spec.kind = TaggerKind::Noisy;
  spec.noise_p = 0.7;
  auto t = make_tagger(spec, corpus);
  CHECK(t->kind() == TaggerKind::Noisy);
  spec.kind = TaggerKind::Remote;
  CHECK_THROWS_AS(make_tagger(spec, corpus), InvalidArgument);
  spec.kind = TaggerKind::Lexicon;
  CHECK(make_tagger(spec, corpus)->kind() == TaggerKind::Lexicon);
}

TEST_CASE("report header and hashing") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  auto h = make_header({{"a", 1}}, 7);
  std::ostringstream os;
  write_header(os, h);
  CHECK(os.str() == "# stepgate " + std::string(kVersion) + " config_sha256=" +
                        sha256_hex("{\"a\":1}") + " seed=7\n# config={\"a\":1}\n");
}

TEST_CASE("parallel_for rethrows the first failure by index") {
  std::vector<int> hit(10, 0);
  parallel_for(10, 3, [&](std::size_t i) { hit[i] = 1; });
  CHECK(std::count(hit.begin(), hit.end(), 1) == 10);
  CHECK_THROWS_WITH(parallel_for(10, 4,
                                 [](std::size_t i) {
                                   if (i == 3 || i == 7) throw DataError("bad " + std::to_string(i));
                                 }),
                    "bad 3");
}
