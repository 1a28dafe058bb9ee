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

#include <random>
#include <sstream>
#include <vector>

#include "stepgate/controller.h"
#include "stepgate/errors.h"
#include "stepgate/monitor.h"

using namespace stepgate;

namespace {

constexpr ClassCode O = ClassCode::Other;
constexpr ClassCode C = ClassCode::Constructive;
constexpr ClassCode E = ClassCode::Evaluative;

TaggedStep step(std::size_t index, StepTag tag, std::optional<bool> correct = std::nullopt) {
  TaggedStep s;
  s.index = index;
  s.text = "s\n\n";
  s.tag = tag;
  s.answer_correct = correct;
  return s;
}

}  // namespace

TEST_CASE("threshold parsing is exact") {
  auto t = Threshold::parse("0.7");
  CHECK(t.numerator() == 7);
  CHECK(t.denominator() == 10);
  CHECK(Threshold::parse(".5") == Threshold::parse("0.50"));
  CHECK(Threshold::from_double(0.9) == Threshold::parse("0.9"));
  CHECK(t.to_string() == "0.7");
  CHECK_THROWS_AS(Threshold::parse("1.5"), InvalidArgument);
  CHECK_THROWS_AS(Threshold::parse("0"), InvalidArgument);
  CHECK_THROWS_AS(Threshold::parse("1"), InvalidArgument);
  CHECK_THROWS_AS(Threshold::parse("-0.5"), InvalidArgument);
  CHECK_THROWS_AS(Threshold::parse("abc"), InvalidArgument);
  CHECK_THROWS_AS(Threshold::parse("0.1234567891"), InvalidArgument);
  CHECK_THROWS_AS(Threshold::from_double(1.0), InvalidArgument);
  // 9/10 is not below 0.9 even though 0.9 as a double is not 9/10.
  CHECK_FALSE(Threshold::parse("0.9").ratio_below(9, 10));
  CHECK(Threshold::parse("0.9").ratio_below(8, 9));
}

TEST_CASE("threshold grid") {
  auto grid = standard_delta_grid();
  REQUIRE(grid.size() == 6);
  CHECK(grid.front() == Threshold::parse("0.4"));
  CHECK(grid.back() == Threshold::parse("0.9"));
  CHECK(kDefaultWindow == 5);
}

TEST_CASE("fresh monitor on an Other step") {
  PhaseMonitor m(Threshold::parse("0.5"), 5);
  auto obs = m.observe(O);
  CHECK(obs.ratio == 1.0);
  CHECK_FALSE(obs.flag);
  CHECK_FALSE(obs.should_stop);
}

TEST_CASE("ratio after C C E") {
  PhaseMonitor m(Threshold::parse("0.5"));
  m.observe(C);
  m.observe(C);
  CHECK(m.observe(E).ratio == doctest::Approx(2.0 / 3.0));
  CHECK(m.constructive_count() == 2);
  CHECK(m.evaluative_count() == 1);
}

TEST_CASE("hand simulation delta 0.5 window 3") {
  PhaseMonitor m(Threshold::parse("0.5"), 3);
  const std::vector<ClassCode> codes = {C, E, E, E, E};
  const std::vector<double> ratios = {1.0, 0.5, 1.0 / 3, 0.25, 0.2};
  const std::vector<int> flags = {0, 0, 1, 1, 1};
  for (std::size_t i = 0; i < codes.size(); ++i) {
    auto obs = m.observe(codes[i]);
    CHECK(obs.ratio == doctest::Approx(ratios[i]));
    CHECK(obs.flag == (flags[i] == 1));
    CHECK(obs.should_stop == (i == 4));
  }
  CHECK(m.fired());
  CHECK_THROWS_AS(m.observe(C), StateError);
  CHECK(m.ratio_history().back().step_index == 5);
}

TEST_CASE("window resets on an unflagged step") {
  PhaseMonitor m(Threshold::parse("0.5"), 2);
  m.observe(E);                     // 0 -> flag
  CHECK_FALSE(m.observe(C).flag);   // 1/2
  CHECK(m.observe(E).flag);         // 1/3
  CHECK(m.observe(O).should_stop);  // still 1/3, second flag
}

TEST_CASE("zero window rejected") {
  CHECK_THROWS_AS(PhaseMonitor(Threshold::parse("0.5"), 0), InvalidArgument);
}

TEST_CASE("streamed stop matches the recount oracle") {
  std::mt19937_64 rng(11);
  for (int iter = 0; iter < 500; ++iter) {
    std::vector<std::optional<ClassCode>> codes;
    const std::size_t n = 1 + rng() % 60;
    for (std::size_t i = 0; i < n; ++i) codes.push_back(static_cast<ClassCode>(rng() % 3));
    for (const auto& delta : standard_delta_grid()) {
      PhaseMonitor m(delta, 5);
      std::optional<std::size_t> streamed;
      for (std::size_t i = 0; i < n; ++i) {
        if (m.observe(*codes[i]).should_stop) {
          streamed = i + 1;
          break;
        }
      }
      CHECK(streamed == simulate_traces(codes, delta, 5));
    }
  }
}

TEST_CASE("ies index") {
  TraceRecord r;
  r.id = "t";
  r.steps = {step(1, StepTag::ProblemRestatement, false), step(2, StepTag::Verification, false),
             step(3, StepTag::Verification, true), step(4, StepTag::FinalConclusion, true)};
  CHECK(ies_index_of(r) == 3);
  for (auto& s : r.steps) s.answer_correct = false;
  CHECK(ies_index_of(r) == 4);
  for (auto& s : r.steps) s.answer_correct = true;
  CHECK(ies_index_of(r) == 1);
  r.steps.clear();
  CHECK_THROWS_AS(ies_index_of(r), DataError);
}

TEST_CASE("transition curve positions") {
  TraceRecord r;
  r.id = "t";
  for (std::size_t i = 1; i <= 10; ++i) r.steps.push_back(step(i, StepTag::ProblemRestatement, i >= 4));
  auto curve = transition_curve(r, default_partition());
  REQUIRE(curve.size() == 10);
  CHECK(curve[5].x == doctest::Approx(0.2));
  CHECK(curve[3].x == 0.0);
  for (const auto& p : curve) CHECK(p.ratio == 1.0);

  r.steps[2].tag.reset();
  CHECK_THROWS_AS(transition_curve(r, default_partition()), DataError);
  r.steps[2].text = "\n\n";
  CHECK(transition_curve(r, default_partition()).size() == 9);

  std::ostringstream os;
  write_curve_csv(os, "a,b", {{1, -0.5, 1.0}});
  CHECK(os.str() == "\"a,b\",1,-0.5,1\n");
}
