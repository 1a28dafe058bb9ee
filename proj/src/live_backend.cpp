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

#include <httplib.h>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "stepgate/errors.h"
#include "stepgate/gateway.h"
#include "url.h"

namespace stepgate {
namespace {

using nlohmann::json;

std::string completions_path(const std::string& path) {
  constexpr std::string_view kSuffix = "/chat/completions";
  if (path.size() >= kSuffix.size() &&
      path.compare(path.size() - kSuffix.size(), kSuffix.size(), kSuffix) == 0) {
    return path;
  }
  if (path.size() >= 3 && path.compare(path.size() - 3, 3, "/v1") == 0) {
    return path + std::string(kSuffix);
  }
  return path + "/v1" + std::string(kSuffix);
}

json request_body(const LiveBackendConfig& config, const GenerationParams& params,
                  json messages) {
  json body = {{"model", config.model},
               {"messages", std::move(messages)},
               {"stream", true},
               {"stream_options", {{"include_usage", true}, {"continuous_usage_stats", true}}},
               {"max_tokens", params.max_tokens},
               {"temperature", params.temperature}};
  if (params.seed) body["seed"] = *params.seed;
  return body;
}

class LiveSession final : public StreamSession {
 public:
  LiveSession(std::string id, std::string prompt, GenerationParams params,
              const LiveBackendConfig& config, std::string origin, std::string path,
              std::string body)
      : StreamSession(std::move(id), std::move(prompt), params),
        client_(origin) {
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
    const auto usecs =
        std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - secs);
    client_.set_connection_timeout(secs.count(), usecs.count());
    client_.set_read_timeout(secs.count(), usecs.count());
    client_.set_write_timeout(secs.count(), usecs.count());
    if (!config.api_key.empty()) client_.set_bearer_token_auth(config.api_key);
    worker_ = std::thread([this, path = std::move(path), body = std::move(body),
                           retries = config.retries] { run(path, body, retries); });
  }

  ~LiveSession() override {
    cancelled_ = true;
    client_.stop();
    if (worker_.joinable()) worker_.join();
  }

  std::optional<StreamEvent> next() override {
    if (state_ != SessionState::Open) return std::nullopt;
    std::unique_lock lock(mu_);
    cv_.wait(lock, [this] { return !queue_.empty() || producer_done_; });
    if (queue_.empty()) {
      lock.unlock();
      StreamEvent e = StreamEvent::error("stream ended without a terminal event");
      record(e);
      return e;
    }
    StreamEvent e = std::move(queue_.front());
    queue_.pop_front();
    lock.unlock();
    record(e);
    return e;
  }

  bool cancel() override {
    if (state_ != SessionState::Open) return false;
    state_ = SessionState::Cancelled;
    cancelled_ = true;
    client_.stop();
    return true;
  }

 private:
  void push(StreamEvent e) {
    {
      std::lock_guard lock(mu_);
      if (terminal_pushed_) return;
      terminal_pushed_ = e.terminal();
      queue_.push_back(std::move(e));
    }
    cv_.notify_one();
  }

  // Returns false to abort the transfer.
  bool handle_payload(const std::string& payload) {
    if (payload == "[DONE]") {
      push(StreamEvent::eos(finish_));
      return false;
    }
    json frame = json::parse(payload, nullptr, false);
    if (frame.is_discarded() || !frame.is_object()) {
      push(StreamEvent::error("malformed stream frame", payload));
      return false;
    }
    if (frame.contains("error")) {
      push(StreamEvent::error("server reported an error", payload));
      return false;
    }
    std::string text;
    try {
      const json& choices = frame.value("choices", json::array());
      if (!choices.empty()) {
        const json& choice = choices.at(0);
        const json& delta = choice.value("delta", json::object());
        for (const char* key : {"reasoning_content", "reasoning", "content"}) {
          auto it = delta.find(key);
          if (it != delta.end() && it->is_string()) text += it->get<std::string>();
        }
        auto fr = choice.find("finish_reason");
        if (fr != choice.end() && fr->is_string()) {
          finish_ = *fr == "length" ? FinishReason::Length : FinishReason::Stop;
        }
      }
      std::optional<std::int64_t> usage;
      auto u = frame.find("usage");
      if (u != frame.end() && u->is_object() && u->contains("completion_tokens")) {
        usage = u->at("completion_tokens").get<std::int64_t>();
      }
      if (text.empty()) return true;
      if (usage && *usage >= reported_) {
        const std::int64_t delta_tokens = *usage - reported_;
        reported_ = *usage;
        push(StreamEvent::chunk(std::move(text), delta_tokens, false));
      } else {
        push(StreamEvent::chunk(text, estimate_tokens(text), true));
      }
    } catch (const json::exception&) {
      push(StreamEvent::error("malformed stream frame", payload));
      return false;
    }
    return true;
  }

  void run(const std::string& path, const std::string& body, int retries) {
    SseParser parser;
    bool received = false;
    bool aborted = false;
    std::string error_body;
    for (int attempt = 0; attempt <= retries && !cancelled_; ++attempt) {
      httplib::Request req;
      req.method = "POST";
      req.path = path;
      req.headers.emplace("Accept", "text/event-stream");
      req.set_header("Content-Type", "application/json");
      req.body = body;
      int status = 0;
      req.response_handler = [&](const httplib::Response& res) {
        status = res.status;
        return !cancelled_.load();
      };
      req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t,
                                 std::uint64_t) {
        received = true;
        if (cancelled_) return false;
        if (status >= 400) {
          error_body.append(data, len);
          return true;
        }
        for (const auto& payload : parser.feed(std::string_view(data, len))) {
          if (!handle_payload(payload)) {
            aborted = true;
            return false;
          }
        }
        return true;
      };
      httplib::Response res;
      httplib::Error err = httplib::Error::Success;
      const bool ok = client_.send(req, res, err);
      if (cancelled_) break;
      if (status >= 400) {
        push(StreamEvent::error("HTTP " + std::to_string(status), error_body));
        break;
      }
      if (aborted) break;
      if (ok) {
        push(StreamEvent::eos(finish_));  // server closed without [DONE]
        break;
      }
      if (received || attempt == retries) {
        push(StreamEvent::error("request failed: " + httplib::to_string(err)));
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(100 << attempt));
    }
    {
      std::lock_guard lock(mu_);
      producer_done_ = true;
    }
    cv_.notify_all();
  }

  httplib::Client client_;
  std::thread worker_;
  std::atomic<bool> cancelled_{false};
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<StreamEvent> queue_;
  bool producer_done_ = false;
  bool terminal_pushed_ = false;
  // Touched only by the worker thread.
  FinishReason finish_ = FinishReason::Stop;
  std::int64_t reported_ = 0;
};

std::atomic<std::uint64_t> g_live_sessions{0};

}  // namespace

LiveBackend::LiveBackend(LiveBackendConfig config) : config_(std::move(config)) {
  if (config_.model.empty()) throw InvalidArgument("live backend needs a model name");
  if (config_.retries < 0) throw InvalidArgument("retries must be non-negative");
  const auto url = detail::split_url(config_.endpoint);
  origin_ = url.origin;
  path_ = completions_path(url.path);
}

std::unique_ptr<StreamSession> LiveBackend::start(const std::string& prompt,
                                                  const GenerationParams& params) {
  if (prompt.empty()) throw InvalidArgument("prompt must not be empty");
  if (params.max_tokens < 1) throw InvalidArgument("max_tokens must be at least 1");
  json messages = json::array({{{"role", "user"}, {"content", prompt}}});
  const std::string id = "live-" + std::to_string(++g_live_sessions);
  return std::make_unique<LiveSession>(id, prompt, params, config_, origin_, path_,
                                       request_body(config_, params, std::move(messages)).dump());
}

std::unique_ptr<StreamSession> LiveBackend::continue_session(
    const StreamSession& prior, const std::string& suffix, std::int64_t max_tokens) {
  GenerationParams params = prior.params();
  params.max_tokens = max_tokens;
  const std::string prefix = prior.generated() + suffix;
  json messages = json::array({{{"role", "user"}, {"content", prior.prompt()}},
                               {{"role", "assistant"}, {"content", prefix}}});
  json body = request_body(config_, params, std::move(messages));
  body["continue_final_message"] = true;
  body["add_generation_prompt"] = false;
  const std::string id = "live-" + std::to_string(++g_live_sessions);
  return std::make_unique<LiveSession>(id, prior.prompt() + prefix, params, config_,
                                       origin_, path_, body.dump());
}

}  // namespace stepgate
