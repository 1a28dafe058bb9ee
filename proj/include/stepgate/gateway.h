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

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stepgate/segmenter.h"
#include "stepgate/types.h"

namespace stepgate {

struct GenerationParams {
  std::int64_t max_tokens = 32768;
  double temperature = 0.0;
  std::optional<std::int64_t> seed;
};

enum class FinishReason : std::uint8_t { Stop, Length, Cancelled };

std::string_view finish_reason_name(FinishReason reason);

struct StreamEvent {
  enum class Kind : std::uint8_t { TextChunk, Eos, Error };

  Kind kind = Kind::TextChunk;
  std::string text;             // TextChunk
  std::int64_t token_count = 0; // TextChunk
  bool tokens_estimated = false;
  FinishReason finish = FinishReason::Stop;  // Eos
  std::string message;                       // Error
  std::string raw_payload;                   // Error: offending frame, if any

  static StreamEvent chunk(std::string text, std::int64_t tokens,
                           bool estimated = false);
  static StreamEvent eos(FinishReason reason);
  static StreamEvent error(std::string message, std::string raw = {});
  bool terminal() const { return kind != Kind::TextChunk; }
};

enum class SessionState : std::uint8_t { Open, Cancelled, Finished };

// One generation request. Events arrive in order to a single consumer; the
// session delivers exactly one terminal event unless it is cancelled first.
class StreamSession {
 public:
  virtual ~StreamSession() = default;

  // Next event, or nullopt once the session is cancelled or finished.
  virtual std::optional<StreamEvent> next() = 0;
  // Returns true for the call that performed the cancellation; false (a
  // no-op) when the session was already cancelled or finished.
  virtual bool cancel() = 0;

  SessionState state() const { return state_; }
  const std::string& id() const { return id_; }
  const std::string& prompt() const { return prompt_; }
  const GenerationParams& params() const { return params_; }
  // Text delivered to the consumer so far.
  const std::string& generated() const { return generated_; }
  std::int64_t tokens() const { return tokens_; }

 protected:
  StreamSession(std::string id, std::string prompt, GenerationParams params);
  // Bookkeeping for every event handed to the consumer.
  void record(const StreamEvent& event);

  SessionState state_ = SessionState::Open;

 private:
  std::string id_;
  std::string prompt_;
  GenerationParams params_;
  std::string generated_;
  std::int64_t tokens_ = 0;
};

class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  // Throws InvalidArgument on an empty prompt.
  virtual std::unique_ptr<StreamSession> start(const std::string& prompt,
                                               const GenerationParams& params) = 0;
  // New bounded session over prior prompt + generated text + suffix. The
  // default implementation issues start() on the concatenated text.
  virtual std::unique_ptr<StreamSession> continue_session(
      const StreamSession& prior, const std::string& suffix,
      std::int64_t max_tokens);
};

// Throws StateError while `prior` is still open.
std::unique_ptr<StreamSession> continue_with(ModelBackend& backend,
                                             const StreamSession& prior,
                                             const std::string& suffix,
                                             std::int64_t max_tokens);

// Word count x 1.3, rounded; used when a backend reports no token usage.
std::int64_t estimate_tokens(std::string_view text);

// ---------------------------------------------------------------------------
// Scripted backend

struct ScriptChunk {
  std::string text;
  std::int64_t tokens = 0;
};

// Produces the forced answer for a continuation. `continuation` is everything
// after the scripted prompt: the text generated so far plus the suffix.
using ForcedAnswerFn = std::function<ScriptChunk(std::string_view continuation)>;

// Deterministic backend replaying fixed chunks for one prompt. Continuations
// (any prompt that extends the scripted one) are answered by `forced`.
class ScriptedBackend final : public ModelBackend {
 public:
  ScriptedBackend(std::string prompt, std::vector<ScriptChunk> chunks,
                  ForcedAnswerFn forced = {});

  // One chunk per recorded step with its exact token count; continuations
  // answer with the latest answer snapshot among the steps already
  // generated.
  static std::unique_ptr<ScriptedBackend> from_trace(const TraceRecord& trace);

  std::unique_ptr<StreamSession> start(const std::string& prompt,
                                       const GenerationParams& params) override;

  const std::string& prompt() const { return prompt_; }

 private:
  std::string prompt_;
  std::vector<ScriptChunk> chunks_;
  ForcedAnswerFn forced_;
  std::size_t sessions_ = 0;
};

// ---------------------------------------------------------------------------
// Live OpenAI-compatible backend

struct LiveBackendConfig {
  std::string endpoint;  // base URL or full .../chat/completions URL
  std::string api_key;
  std::string model;
  std::chrono::milliseconds timeout{60000};
  int retries = 2;  // connection attempts beyond the first, before any byte
};

// Streams /v1/chat/completions with stream=true. Text is taken from
// choices[0].delta.reasoning_content and .content; token counts come from
// cumulative usage.completion_tokens when the server sends it and are
// estimated otherwise.
class LiveBackend final : public ModelBackend {
 public:
  explicit LiveBackend(LiveBackendConfig config);

  std::unique_ptr<StreamSession> start(const std::string& prompt,
                                       const GenerationParams& params) override;
  // Sends the generated text back as an assistant prefix to be continued.
  std::unique_ptr<StreamSession> continue_session(
      const StreamSession& prior, const std::string& suffix,
      std::int64_t max_tokens) override;

  const LiveBackendConfig& config() const { return config_; }

 private:
  LiveBackendConfig config_;
  std::string origin_;
  std::string path_;
};

// Incremental parser for server-sent-event bodies. Returns the payload of
// every complete "data:" event; "[DONE]" is returned verbatim.
class SseParser {
 public:
  std::vector<std::string> feed(std::string_view bytes);

 private:
  std::string pending_;
  std::string data_;
};

// ---------------------------------------------------------------------------
// Step-wise generation loop

struct GeneratedStep {
  SegmentedStep step;
  std::size_t index = 0;  // 1-based
};

// Pulls events from a session into a segmenter and yields completed steps:
// the buffer is flushed as a final step on EOS; a step cap stops generation.
class StepwiseGeneration {
 public:
  StepwiseGeneration(StreamSession& session, SegmenterConfig config = {});

  // Next step, or nullopt when the stream is exhausted. Throws
  // TransportError when the stream reports an error.
  std::optional<GeneratedStep> next();

  // Cancels the underlying session; pending buffered text is dropped.
  void cancel();

  bool done() const { return done_; }
  std::optional<FinishReason> finish_reason() const { return finish_; }
  bool step_limit_hit() const { return step_limit_hit_; }
  bool tokens_estimated() const { return tokens_estimated_; }
  std::int64_t tokens_received() const { return tokens_received_; }

 private:
  void pull();

  StreamSession& session_;
  StepSegmenter segmenter_;
  std::deque<GeneratedStep> ready_;
  std::size_t next_index_ = 1;
  bool done_ = false;
  std::optional<FinishReason> finish_;
  bool step_limit_hit_ = false;
  bool tokens_estimated_ = false;
  std::int64_t tokens_received_ = 0;
};

}  // namespace stepgate
