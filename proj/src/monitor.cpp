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

#include "stepgate/monitor.h"

#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>

#include "stepgate/errors.h"
#include "stepgate/format.h"

namespace stepgate {

Threshold::Threshold(std::int64_t num, std::int64_t den) {
  const std::int64_t g = std::gcd(num, den);
  num_ = num / g;
  den_ = den / g;
  if (!(num_ > 0 && num_ < den_)) {
    throw InvalidArgument("delta must lie in the open interval (0, 1), got " +
                          format_double(value()));
  }
}

Threshold Threshold::parse(std::string_view text) {
  const std::size_t dot = text.find('.');
  const std::string_view whole = text.substr(0, dot);
  const std::string_view frac =
      dot == std::string_view::npos ? std::string_view() : text.substr(dot + 1);
  auto digits_only = [](std::string_view s) {
    return s.find_first_not_of("0123456789") == std::string_view::npos;
  };
  if (text.empty() || !digits_only(whole) || !digits_only(frac) ||
      (whole.empty() && frac.empty()) || frac.size() > 9) {
    throw InvalidArgument("delta must be a decimal in (0, 1), got '" +
                          std::string(text) + "'");
  }
  std::int64_t w = 0;
  std::int64_t f = 0;
  if (!whole.empty()) std::from_chars(whole.data(), whole.data() + whole.size(), w);
  if (!frac.empty()) std::from_chars(frac.data(), frac.data() + frac.size(), f);
  if (w >= 1) {
    throw InvalidArgument("delta must lie in the open interval (0, 1), got " +
                          std::string(text));
  }
  std::int64_t den = 1;
  for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
  return Threshold(f, den);
}

Threshold Threshold::from_double(double value) {
  if (!(value > 0.0 && value < 1.0)) {
    throw InvalidArgument("delta must lie in the open interval (0, 1), got " +
                          format_double(value));
  }
  constexpr std::int64_t kScale = 1'000'000'000;
  const auto num = static_cast<std::int64_t>(std::llround(value * kScale));
  if (num <= 0 || num >= kScale) {
    throw InvalidArgument("delta too close to 0 or 1: " + format_double(value));
  }
  return Threshold(num, kScale);
}

std::string Threshold::to_string() const { return format_double(value()); }

bool Threshold::ratio_below(std::uint64_t constructive, std::uint64_t total) const {
  // R = constructive / total < num / den  <=>  constructive * den < num * total
  __extension__ using u128 = unsigned __int128;
  return static_cast<u128>(constructive) * static_cast<u128>(den_) <
         static_cast<u128>(num_) * static_cast<u128>(total);
}

std::vector<Threshold> standard_delta_grid() {
  std::vector<Threshold> grid;
  for (int tenth = 4; tenth <= 9; ++tenth) {
    grid.push_back(Threshold::parse("0." + std::to_string(tenth)));
  }
  return grid;
}

// ---------------------------------------------------------------------------

PhaseMonitor::PhaseMonitor(Threshold delta, std::size_t window)
    : delta_(delta), window_(window) {
  if (window_ == 0) throw InvalidArgument("window must be at least 1");
}

double PhaseMonitor::ratio() const {
  const std::uint64_t total = constructive_ + evaluative_;
  if (total == 0) return 1.0;
  return static_cast<double>(constructive_) / static_cast<double>(total);
}

Observation PhaseMonitor::observe(ClassCode code, std::size_t step_index) {
  if (fired_) throw StateError("monitor already fired; no further steps");
  if (code == ClassCode::Constructive) ++constructive_;
  if (code == ClassCode::Evaluative) ++evaluative_;

  const std::uint64_t total = constructive_ + evaluative_;
  Observation obs;
  obs.ratio = ratio();
  obs.flag = total > 0 && delta_.ratio_below(constructive_, total);
  trailing_flags_ = obs.flag ? trailing_flags_ + 1 : 0;
  obs.should_stop = trailing_flags_ >= window_;

  history_.push_back({step_index, obs.ratio});
  flags_.push_back(obs.flag ? 1 : 0);
  fired_ = obs.should_stop;
  return obs;
}

// ---------------------------------------------------------------------------

std::size_t ies_index_of(const TraceRecord& trace) {
  if (trace.steps.empty()) throw DataError("trace " + trace.id + " has no steps");
  for (const auto& s : trace.steps) {
    if (s.answer_correct.value_or(false)) return s.index;
  }
  return trace.steps.back().index;
}

std::vector<CurvePoint> transition_curve(const TraceRecord& trace,
                                         const ClassPartition& partition) {
  const std::size_t ies = ies_index_of(trace);
  const auto count = static_cast<double>(trace.steps.size());
  std::uint64_t constructive = 0;
  std::uint64_t evaluative = 0;
  std::vector<CurvePoint> curve;
  for (const auto& s : trace.steps) {
    if (s.blank()) continue;
    if (!s.tag) {
      throw DataError("trace " + trace.id + ": step " + std::to_string(s.index) +
                      " is untagged");
    }
    const ClassCode code = class_code_of(*s.tag, partition);
    if (code == ClassCode::Constructive) ++constructive;
    if (code == ClassCode::Evaluative) ++evaluative;
    const std::uint64_t total = constructive + evaluative;
    const double ratio = total == 0 ? 1.0
                                    : static_cast<double>(constructive) /
                                          static_cast<double>(total);
    const double x = (static_cast<double>(s.index) - static_cast<double>(ies)) / count;
    curve.push_back({s.index, x, ratio});
  }
  return curve;
}

void write_curve_csv(std::ostream& out, std::string_view trace_id,
                     const std::vector<CurvePoint>& curve) {
  for (const auto& p : curve) {
    out << csv_field(trace_id) << ',' << p.step_index << ',' << format_double(p.x)
        << ',' << format_double(p.ratio) << '\n';
  }
}

}  // namespace stepgate
