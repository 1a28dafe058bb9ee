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
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "stepgate/taxonomy.h"
#include "stepgate/types.h"

namespace stepgate {

// A stopping threshold held as an exact fraction in (0, 1), so that R < δ is
// decided without floating-point error (R = 9/10 is not below δ = 0.9).
class Threshold {
 public:
  // Decimal text such as "0.7"; at most 9 fractional digits.
  static Threshold parse(std::string_view text);
  // Rounds to the nearest multiple of 1e-9 before reducing.
  static Threshold from_double(double value);

  std::int64_t numerator() const { return num_; }
  std::int64_t denominator() const { return den_; }
  double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  std::string to_string() const;

  // Exact test of constructive / (constructive + evaluative) < this.
  bool ratio_below(std::uint64_t constructive, std::uint64_t total) const;

  friend bool operator==(const Threshold&, const Threshold&) = default;

 private:
  Threshold(std::int64_t num, std::int64_t den);
  std::int64_t num_;
  std::int64_t den_;
};

// The threshold grid used for sweeps: 0.4, 0.5, ..., 0.9.
std::vector<Threshold> standard_delta_grid();
inline constexpr std::size_t kDefaultWindow = 5;

struct RatioPoint {
  std::size_t step_index;
  double ratio;
};

struct Observation {
  double ratio = 1.0;
  bool flag = false;
  bool should_stop = false;
};

// Running constructive/evaluative ratio with a violation window. The ratio is
// 1 while no constructive or evaluative step has been seen; a step is flagged
// when the ratio is strictly below the threshold; the monitor fires once the
// last `window` flags are all set.
class PhaseMonitor {
 public:
  PhaseMonitor(Threshold delta, std::size_t window = kDefaultWindow);

  // Throws StateError once the monitor has fired.
  Observation observe(ClassCode code, std::size_t step_index);
  Observation observe(ClassCode code) { return observe(code, flags_.size() + 1); }

  std::uint64_t constructive_count() const { return constructive_; }
  std::uint64_t evaluative_count() const { return evaluative_; }
  double ratio() const;
  const std::vector<RatioPoint>& ratio_history() const { return history_; }
  const std::vector<std::uint8_t>& flags() const { return flags_; }
  bool fired() const { return fired_; }
  const Threshold& delta() const { return delta_; }
  std::size_t window() const { return window_; }

 private:
  Threshold delta_;
  std::size_t window_;
  std::uint64_t constructive_ = 0;
  std::uint64_t evaluative_ = 0;
  std::size_t trailing_flags_ = 0;
  std::vector<RatioPoint> history_;
  std::vector<std::uint8_t> flags_;
  bool fired_ = false;
};

struct CurvePoint {
  std::size_t step_index;
  double x;  // (step_index - ies_index) / step_count
  double ratio;
};

// Index of the first step whose answer is marked correct, else the last
// step index. Throws DataError on a trace without steps.
std::size_t ies_index_of(const TraceRecord& trace);

// Cumulative ratio at every non-blank step, positioned relative to the first
// correct step. Throws DataError when a non-blank step is untagged.
std::vector<CurvePoint> transition_curve(const TraceRecord& trace,
                                         const ClassPartition& partition);

// CSV rows "trace_id,step_index,x_norm,ratio" (no header).
void write_curve_csv(std::ostream& out, std::string_view trace_id,
                     const std::vector<CurvePoint>& curve);

}  // namespace stepgate
