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
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stepgate {

inline constexpr std::string_view kDefaultDelimiter = "\n\n";

struct SegmentedStep {
  std::string text;
  std::int64_t token_count = 0;
  bool blank = false;
};

struct SegmenterConfig {
  std::string delimiter{kDefaultDelimiter};
  std::optional<std::size_t> max_steps;  // unlimited when empty
  bool normalize_crlf = true;            // "\r\n\r\n" -> "\n\n" on ingestion
};

// Thrown by feed() when a step beyond max_steps would be emitted. Steps that
// completed earlier in the same feed() call are carried in `emitted`.
class StepLimitError : public std::runtime_error {
 public:
  StepLimitError(std::size_t limit, std::vector<SegmentedStep> emitted);
  std::size_t limit() const { return limit_; }
  std::vector<SegmentedStep> emitted;

 private:
  std::size_t limit_;
};

// Incremental splitter of a generated text stream into delimiter-terminated
// steps. Steps keep their delimiter; the final residual step does not.
// Concatenating every emitted step reproduces the (normalized) input.
//
// Per-step token counts: whole chunks inside a step contribute their count,
// a chunk straddling a boundary contributes a share proportional to the
// characters falling in the step; each step total is rounded half-up.
class StepSegmenter {
 public:
  explicit StepSegmenter(SegmenterConfig config = {});

  // Throws StateError after finish(), InvalidArgument on negative tokens,
  // StepLimitError past max_steps.
  std::vector<SegmentedStep> feed(std::string_view chunk,
                                  std::int64_t chunk_tokens);

  // Flushes the residual buffer as a last step, if non-empty.
  std::optional<SegmentedStep> finish();

  const std::string& buffer() const { return buffer_; }
  std::size_t emitted() const { return emitted_; }
  bool finished() const { return finished_; }
  const SegmenterConfig& config() const { return config_; }

 private:
  struct Piece {
    std::size_t chars;
    long double tokens_per_char;
  };

  std::string normalize(std::string_view chunk);
  void append(std::string_view text, std::int64_t tokens);
  SegmentedStep take_front(std::size_t length);

  SegmenterConfig config_;
  std::string buffer_;
  std::deque<Piece> pieces_;
  std::string held_raw_;
  std::int64_t carried_tokens_ = 0;
  std::size_t scan_from_ = 0;
  std::size_t emitted_ = 0;
  bool finished_ = false;
};

// Whole-string reference segmentation (no chunking, no token accounting).
std::vector<std::string> split_steps(std::string_view text,
                                     std::string_view delimiter = kDefaultDelimiter);

}  // namespace stepgate
