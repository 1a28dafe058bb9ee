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

#include "stepgate/segmenter.h"

#include <cmath>

#include "stepgate/errors.h"
#include "stepgate/types.h"

namespace stepgate {
namespace {

constexpr std::string_view kCrlfPair = "\r\n\r\n";

// Length of the longest suffix of `text` that is a proper prefix of `pattern`.
std::size_t partial_suffix(std::string_view text, std::string_view pattern) {
  const std::size_t max_len = std::min(text.size(), pattern.size() - 1);
  for (std::size_t len = max_len; len > 0; --len) {
    if (text.substr(text.size() - len) == pattern.substr(0, len)) return len;
  }
  return 0;
}

std::string replace_all(std::string_view text, std::string_view from,
                        std::string_view to) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (true) {
    const std::size_t hit = text.find(from, pos);
    if (hit == std::string_view::npos) break;
    out.append(text.substr(pos, hit - pos));
    out.append(to);
    pos = hit + from.size();
  }
  out.append(text.substr(pos));
  return out;
}

}  // namespace

StepLimitError::StepLimitError(std::size_t limit,
                               std::vector<SegmentedStep> steps)
    : std::runtime_error("step limit of " + std::to_string(limit) +
                         " reached"),
      emitted(std::move(steps)),
      limit_(limit) {}

StepSegmenter::StepSegmenter(SegmenterConfig config)
    : config_(std::move(config)) {
  if (config_.delimiter.empty()) {
    throw InvalidArgument("step delimiter must not be empty");
  }
}

std::string StepSegmenter::normalize(std::string_view chunk) {
  if (!config_.normalize_crlf) return std::string(chunk);
  std::string raw = held_raw_;
  raw.append(chunk);
  const std::size_t hold = partial_suffix(raw, kCrlfPair);
  const std::size_t keep = raw.size() - hold;
  held_raw_ = raw.substr(keep);
  return replace_all(std::string_view(raw).substr(0, keep), kCrlfPair, "\n\n");
}

void StepSegmenter::append(std::string_view text, std::int64_t tokens) {
  tokens += carried_tokens_;
  carried_tokens_ = 0;
  if (text.empty()) {
    carried_tokens_ = tokens;
    return;
  }
  buffer_.append(text);
  pieces_.push_back({text.size(), static_cast<long double>(tokens) /
                                      static_cast<long double>(text.size())});
}

SegmentedStep StepSegmenter::take_front(std::size_t length) {
  SegmentedStep step;
  step.text = buffer_.substr(0, length);
  buffer_.erase(0, length);
  long double share = 0;
  std::size_t remaining = length;
  while (remaining > 0 && !pieces_.empty()) {
    Piece& p = pieces_.front();
    const std::size_t taken = std::min(remaining, p.chars);
    share += p.tokens_per_char * static_cast<long double>(taken);
    p.chars -= taken;
    remaining -= taken;
    if (p.chars == 0) pieces_.pop_front();
  }
  // Half-up; the epsilon absorbs representation error of the shares.
  step.token_count = static_cast<std::int64_t>(std::floor(share + 0.5L + 1e-9L));
  step.blank = is_blank(step.text);
  return step;
}

std::vector<SegmentedStep> StepSegmenter::feed(std::string_view chunk,
                                               std::int64_t chunk_tokens) {
  if (finished_) throw StateError("feed() called after finish()");
  if (chunk_tokens < 0) throw InvalidArgument("chunk token count must be >= 0");

  append(normalize(chunk), chunk_tokens);

  std::vector<SegmentedStep> out;
  const std::string& delim = config_.delimiter;
  while (true) {
    const std::size_t hit = buffer_.find(delim, scan_from_);
    if (hit == std::string::npos) break;
    if (config_.max_steps && emitted_ >= *config_.max_steps) {
      throw StepLimitError(*config_.max_steps, std::move(out));
    }
    out.push_back(take_front(hit + delim.size()));
    ++emitted_;
    scan_from_ = 0;
  }
  scan_from_ = buffer_.size() >= delim.size() ? buffer_.size() - delim.size() + 1
                                              : 0;
  return out;
}

std::optional<SegmentedStep> StepSegmenter::finish() {
  if (finished_) throw StateError("finish() called twice");
  // A held partial CR/LF sequence is flushed verbatim.
  if (!held_raw_.empty()) {
    std::string tail = std::move(held_raw_);
    held_raw_.clear();
    buffer_.append(tail);
    pieces_.push_back({tail.size(), 0});
  }
  finished_ = true;
  if (buffer_.empty()) return std::nullopt;
  if (carried_tokens_ > 0 && !pieces_.empty()) {
    pieces_.back().tokens_per_char +=
        static_cast<long double>(carried_tokens_) /
        static_cast<long double>(pieces_.back().chars);
    carried_tokens_ = 0;
  }
  auto step = take_front(buffer_.size());
  ++emitted_;
  return step;
}

std::vector<std::string> split_steps(std::string_view text,
                                     std::string_view delimiter) {
  if (delimiter.empty()) throw InvalidArgument("step delimiter must not be empty");
  std::vector<std::string> steps;
  std::size_t start = 0;
  while (true) {
    const std::size_t hit = text.find(delimiter, start);
    if (hit == std::string_view::npos) break;
    steps.emplace_back(text.substr(start, hit + delimiter.size() - start));
    start = hit + delimiter.size();
  }
  if (start < text.size()) steps.emplace_back(text.substr(start));
  return steps;
}

}  // namespace stepgate
