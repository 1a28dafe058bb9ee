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

#include "stepgate/types.h"

#include <algorithm>
#include <cctype>

#include "stepgate/errors.h"

namespace stepgate {

std::string_view answer_mode_name(AnswerMode mode) {
  return mode == AnswerMode::Mcq ? "mcq" : "boxed_math";
}

AnswerMode parse_answer_mode(std::string_view text) {
  if (text == "boxed_math") return AnswerMode::BoxedMath;
  if (text == "mcq") return AnswerMode::Mcq;
  throw InvalidArgument("answer_mode must be \"boxed_math\" or \"mcq\", got \"" +
                        std::string(text) + "\"");
}

bool is_blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(), [](unsigned char c) {
    return std::isspace(c) != 0;
  });
}

std::string TraceRecord::full_text() const {
  std::string out;
  for (const auto& s : steps) out += s.text;
  return out;
}

std::int64_t TraceRecord::total_tokens() const {
  std::int64_t total = 0;
  for (const auto& s : steps) total += s.token_count;
  return total;
}

std::size_t TraceRecord::non_blank_steps() const {
  return static_cast<std::size_t>(std::count_if(
      steps.begin(), steps.end(), [](const TaggedStep& s) { return !s.blank(); }));
}

void assign_class_codes(TraceRecord& trace, const ClassPartition& partition) {
  for (auto& s : trace.steps) {
    if (s.tag) {
      s.class_code = class_code_of(*s.tag, partition);
    } else {
      s.class_code.reset();
    }
  }
}

}  // namespace stepgate
