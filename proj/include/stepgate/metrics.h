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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stepgate/types.h"

namespace stepgate {

// ---------------------------------------------------------------------------
// Answer checking

// Contents of the last complete \boxed{...} group, braces balanced.
std::optional<std::string> extract_boxed(std::string_view text);
// Last standalone letter A-J, bare or parenthesized.
std::optional<char> extract_choice(std::string_view text);

// Canonical form used for boxed_math comparison: trimmed, outer braces and
// dollar signs removed, internal whitespace dropped, decimal trailing zeros
// removed, integer fractions reduced.
std::string normalize_math_answer(std::string_view answer);

struct AnswerCheck {
  bool correct = false;
  bool parsed = false;  // false when nothing could be extracted
  std::string extracted;
};

AnswerCheck check_answer_detailed(std::string_view candidate, std::string_view gold,
                                  AnswerMode mode);
bool check_answer(std::string_view candidate, std::string_view gold, AnswerMode mode);

// Compares an already-extracted answer (e.g. a recorded snapshot). A snapshot
// that still carries \boxed{} is unwrapped first.
bool answers_match(std::string_view answer, std::string_view gold, AnswerMode mode);

// ---------------------------------------------------------------------------
// Token and accuracy metrics

// 100 * (1 - method / standard). Throws InvalidArgument when standard <= 0.
double saved_pct(double tokens_method, double tokens_standard);

struct AtK {
  double avg = 0;
  double pass = 0;
  double cons = 0;
};

// Rows are samples, columns the k attempts. Throws InvalidArgument on an
// empty or ragged matrix.
AtK at_k(const std::vector<std::vector<bool>>& matrix);

// ---------------------------------------------------------------------------
// Latency model

struct LatencyModel {
  double slope = 0;      // seconds per token
  double intercept = 0;  // seconds
  double r_squared = 0;
  std::size_t n = 0;

  double predict(double tokens) const { return slope * tokens + intercept; }
};

struct TokenTiming {
  double tokens = 0;
  double seconds = 0;
};

// Ordinary least squares. Throws FitError with fewer than two distinct
// token values.
LatencyModel fit_latency(std::span<const TokenTiming> points);

struct RuntimeBreakdown {
  double stopped = 0;     // generation up to the stop point
  double classifier = 0;  // step classification overhead
  double completion = 0;  // forced answer
  double total = 0;
  double standard = 0;
  double speedup = 0;  // standard / total
};

RuntimeBreakdown compose_runtime(double r_stopped, double r_classifier,
                                 double r_completion, double r_standard);
// r_stopped predicted from the model at `tokens_stopped`.
RuntimeBreakdown estimate_runtime(const LatencyModel& model, double tokens_stopped,
                                  double r_classifier, double r_completion,
                                  double r_standard);

// ---------------------------------------------------------------------------
// Agreement

// ratings[item][rater]; every item needs the same number (>= 2) of raters.
double fleiss_kappa(const std::vector<std::vector<std::string>>& ratings);
double cohen_kappa(std::span<const std::string> a, std::span<const std::string> b);

// ---------------------------------------------------------------------------
// Pareto frontier over (tokens, accuracy)

struct ParetoPoint {
  double tokens = 0;
  double accuracy = 0;
};

// Flag per point: true when no other point has tokens <= and accuracy >=
// with at least one strict.
std::vector<bool> pareto_frontier(std::span<const ParetoPoint> points);

// ---------------------------------------------------------------------------
// Small statistics helpers

double mean(std::span<const double> values);
// Sample standard deviation; 0 for fewer than two values.
double sample_std(std::span<const double> values);
// Spearman rank correlation with average ranks for ties. Throws
// InvalidArgument on mismatched or too-short inputs; 0 when either side is
// constant.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace stepgate
