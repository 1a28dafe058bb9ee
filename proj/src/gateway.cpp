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

#include "stepgate/gateway.h"

#include <cmath>
#include <sstream>

#include "stepgate/errors.h"

namespace stepgate {

std::string_view finish_reason_name(FinishReason reason) {
  switch (reason) {
    case FinishReason::Stop:
      return "stop";
    case FinishReason::Length:
      return "length";
    case FinishReason::Cancelled:
      return "cancelled";
  }
  return "unknown";
}

StreamEvent StreamEvent::chunk(std::string text, std::int64_t tokens,
                               bool estimated) {
  StreamEvent e;
  e.kind = Kind::TextChunk;
  e.text = std::move(text);
  e.token_count = tokens;
  e.tokens_estimated = estimated;
  return e;
}

StreamEvent StreamEvent::eos(FinishReason reason) {
  StreamEvent e;
  e.kind = Kind::Eos;
  e.finish = reason;
  return e;
}

StreamEvent StreamEvent::error(std::string message, std::string raw) {
  StreamEvent e;
  e.kind = Kind::Error;
  e.message = std::move(message);
  e.raw_payload = std::move(raw);
  return e;
}

StreamSession::StreamSession(std::string id, std::string prompt,
                             GenerationParams params)
    : id_(std::move(id)), prompt_(std::move(prompt)), params_(params) {}

void StreamSession::record(const StreamEvent& event) {
  if (event.kind == StreamEvent::Kind::TextChunk) {
    generated_ += event.text;
    tokens_ += event.token_count;
  } else {
    state_ = SessionState::Finished;
  }
}

std::unique_ptr<StreamSession> ModelBackend::continue_session(
    const StreamSession& prior, const std::string& suffix,
    std::int64_t max_tokens) {
  GenerationParams params = prior.params();
  params.max_tokens = max_tokens;
  return start(prior.prompt() + prior.generated() + suffix, params);
}

std::unique_ptr<StreamSession> continue_with(ModelBackend& backend,
                                             const StreamSession& prior,
                                             const std::string& suffix,
                                             std::int64_t max_tokens) {
  if (prior.state() == SessionState::Open) {
    throw StateError("continue_with needs a cancelled or finished session");
  }
  if (max_tokens < 1) throw InvalidArgument("max_tokens must be at least 1");
  return backend.continue_session(prior, suffix, max_tokens);
}

std::int64_t estimate_tokens(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string word;
  std::int64_t words = 0;
  while (in >> word) ++words;
  return static_cast<std::int64_t>(std::llround(static_cast<double>(words) * 1.3));
}

// ---------------------------------------------------------------------------
// Scripted backend

namespace {

class ScriptedSession final : public StreamSession {
 public:
  ScriptedSession(std::string id, std::string prompt, GenerationParams params,
                  std::vector<ScriptChunk> chunks)
      : StreamSession(std::move(id), std::move(prompt), params),
        chunks_(std::move(chunks)) {}

  std::optional<StreamEvent> next() override {
    if (state_ != SessionState::Open) return std::nullopt;
    StreamEvent event = produce();
    record(event);
    return event;
  }

  bool cancel() override {
    if (state_ != SessionState::Open) return false;
    state_ = SessionState::Cancelled;
    return true;
  }

 private:
  StreamEvent produce() {
    if (truncated_) return StreamEvent::eos(FinishReason::Length);
    if (cursor_ >= chunks_.size()) return StreamEvent::eos(FinishReason::Stop);
    const ScriptChunk& c = chunks_[cursor_++];
    const std::int64_t room = params().max_tokens - tokens();
    if (c.tokens <= room) return StreamEvent::chunk(c.text, c.tokens);
    truncated_ = true;
    if (room <= 0) return StreamEvent::eos(FinishReason::Length);
    const auto keep = static_cast<std::size_t>(
        static_cast<double>(c.text.size()) * static_cast<double>(room) /
        static_cast<double>(c.tokens));
    return StreamEvent::chunk(c.text.substr(0, keep), room);
  }

  std::vector<ScriptChunk> chunks_;
  std::size_t cursor_ = 0;
  bool truncated_ = false;
};

}  // namespace

ScriptedBackend::ScriptedBackend(std::string prompt,
                                 std::vector<ScriptChunk> chunks,
                                 ForcedAnswerFn forced)
    : prompt_(std::move(prompt)),
      chunks_(std::move(chunks)),
      forced_(std::move(forced)) {}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_trace(
    const TraceRecord& trace) {
  std::vector<ScriptChunk> chunks;
  chunks.reserve(trace.steps.size());
  for (const auto& s : trace.steps) chunks.push_back({s.text, s.token_count});

  const std::string prompt = trace.prompt.empty() ? trace.id : trace.prompt;
  auto steps = trace.steps;
  ForcedAnswerFn forced = [steps](std::string_view continuation) {
    std::size_t offset = 0;
    std::optional<std::string> snapshot;
    for (const auto& s : steps) {
      if (continuation.substr(offset, s.text.size()) != s.text) break;
      offset += s.text.size();
      if (s.answer_snapshot) snapshot = s.answer_snapshot;
    }
    const std::string answer = snapshot.value_or("");
    constexpr std::string_view kOpen = "\\boxed{";
    const bool opened = continuation.size() >= kOpen.size() &&
                        continuation.substr(continuation.size() - kOpen.size()) == kOpen;
    std::string text = opened ? answer + "}" : std::string(kOpen) + answer + "}";
    const std::int64_t tokens = std::max<std::int64_t>(1, estimate_tokens(text));
    return ScriptChunk{std::move(text), tokens};
  };
  return std::make_unique<ScriptedBackend>(prompt, std::move(chunks),
                                           std::move(forced));
}

std::unique_ptr<StreamSession> ScriptedBackend::start(
    const std::string& prompt, const GenerationParams& params) {
  if (prompt.empty()) throw InvalidArgument("prompt must not be empty");
  if (params.max_tokens < 1) throw InvalidArgument("max_tokens must be at least 1");
  const std::string id = "scripted-" + std::to_string(++sessions_);
  if (prompt == prompt_) {
    return std::make_unique<ScriptedSession>(id, prompt, params, chunks_);
  }
  std::vector<ScriptChunk> chunks;
  if (forced_ && prompt.size() > prompt_.size() &&
      prompt.compare(0, prompt_.size(), prompt_) == 0) {
    chunks.push_back(forced_(std::string_view(prompt).substr(prompt_.size())));
  }
  return std::make_unique<ScriptedSession>(id, prompt, params, std::move(chunks));
}

// ---------------------------------------------------------------------------
// SSE framing

std::vector<std::string> SseParser::feed(std::string_view bytes) {
  pending_.append(bytes);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t nl = pending_.find('\n', start);
    if (nl == std::string::npos) break;
    std::string_view line(pending_.data() + start, nl - start);
    start = nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (!data_.empty()) {
        out.push_back(std::move(data_));
        data_.clear();
      }
      continue;
    }
    if (line.substr(0, 5) != "data:") continue;  // comments, event:, id:
    std::string_view value = line.substr(5);
    if (!value.empty() && value.front() == ' ') value.remove_prefix(1);
    if (!data_.empty()) data_.push_back('\n');
    data_.append(value);
  }
  pending_.erase(0, start);
  return out;
}

// ---------------------------------------------------------------------------
// Step-wise generation loop

StepwiseGeneration::StepwiseGeneration(StreamSession& session,
                                       SegmenterConfig config)
    : session_(session), segmenter_(std::move(config)) {}

void StepwiseGeneration::pull() {
  auto event = session_.next();
  if (!event) {
    done_ = true;
    if (session_.state() == SessionState::Cancelled) finish_ = FinishReason::Cancelled;
    return;
  }
  auto push = [this](SegmentedStep s) {
    ready_.push_back({std::move(s), next_index_++});
  };
  switch (event->kind) {
    case StreamEvent::Kind::TextChunk:
      tokens_received_ += event->token_count;
      tokens_estimated_ = tokens_estimated_ || event->tokens_estimated;
      try {
        for (auto& s : segmenter_.feed(event->text, event->token_count)) push(std::move(s));
      } catch (StepLimitError& e) {
        for (auto& s : e.emitted) push(std::move(s));
        step_limit_hit_ = true;
        session_.cancel();
        done_ = true;
      }
      break;
    case StreamEvent::Kind::Eos:
      finish_ = event->finish;
      if (auto last = segmenter_.finish()) push(std::move(*last));
      done_ = true;
      break;
    case StreamEvent::Kind::Error:
      done_ = true;
      throw TransportError(event->raw_payload.empty()
                               ? event->message
                               : event->message + " (payload: " + event->raw_payload + ")");
  }
}

std::optional<GeneratedStep> StepwiseGeneration::next() {
  while (ready_.empty() && !done_) pull();
  if (ready_.empty()) return std::nullopt;
  GeneratedStep step = std::move(ready_.front());
  ready_.pop_front();
  return step;
}

void StepwiseGeneration::cancel() {
  session_.cancel();
  ready_.clear();
  done_ = true;
  finish_ = FinishReason::Cancelled;
}

}  // namespace stepgate
