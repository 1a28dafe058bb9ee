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
#include <string>
#include <string_view>
#include <vector>

#include "stepgate/taxonomy.h"

namespace stepgate {

enum class AnswerMode : std::uint8_t { BoxedMath, Mcq };

std::string_view answer_mode_name(AnswerMode mode);
AnswerMode parse_answer_mode(std::string_view text);

// True when the text holds nothing but whitespace (including empty).
bool is_blank(std::string_view text);

struct TaggedStep {
  std::size_t index = 0;  // 1-based
  std::string text;       // includes the trailing delimiter, if any
  std::int64_t token_count = 0;
  std::optional<StepTag> tag;
  std::optional<ClassCode> class_code;
  std::optional<std::string> answer_snapshot;
  std::optional<bool> answer_correct;

  bool blank() const { return is_blank(text); }
};

struct TraceRecord {
  std::string id;
  std::string dataset;
  std::string model;
  std::int64_t seed = 0;
  std::string prompt;
  std::string gold_answer;
  AnswerMode answer_mode = AnswerMode::BoxedMath;
  std::string final_answer;
  bool correct = false;
  std::optional<double> runtime_s;
  std::vector<TaggedStep> steps;
  // Optional full output text; when present it must equal the step
  // concatenation.
  std::optional<std::string> output;

  std::string full_text() const;
  std::int64_t total_tokens() const;
  std::size_t non_blank_steps() const;
};

// Re-derives class codes of tagged steps under `partition`.
void assign_class_codes(TraceRecord& trace, const ClassPartition& partition);

}  // namespace stepgate
