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

#include <doctest.h>

#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "stepgate/errors.h"
#include "stepgate/gateway.h"

using namespace stepgate;

namespace {

std::vector<StreamEvent> drain(StreamSession& s) {
  std::vector<StreamEvent> out;
  while (auto e = s.next()) out.push_back(*e);
  return out;
}

TraceRecord three_step_trace() {
  TraceRecord r;
  r.id = "t1";
  r.prompt = "What is 2+2?";
  const char* texts[] = {"We add.\n\n", "2+2 = 4.\n\n", "So \\boxed{4}."};
  const char* snaps[] = {"3", "4", "4"};
  std::size_t i = 0;
  for (const char* t : texts) {
    TaggedStep s;
    s.index = i + 1;
    s.text = t;
    s.token_count = static_cast<std::int64_t>(10 * (i + 1));
    s.answer_snapshot = snaps[i];
    r.steps.push_back(s);
    ++i;
  }
  return r;
}

// Serves canned SSE bodies on /v1/chat/completions.
class FakeCompletions {
 public:
  FakeCompletions() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                httplib::Response& res) {
      std::vector<std::string> frames;
      int status = 200;
      {
        std::lock_guard lock(mu_);
        bodies_.push_back(req.body);
        auth_ = req.get_header_value("Authorization");
        frames = frames_;
        status = status_;
      }
      res.status = status;
      if (status != 200) {
        res.set_content(R"({"error":"overloaded"})", "application/json");
        return;
      }
      res.set_chunked_content_provider(
          "text/event-stream", [frames](std::size_t, httplib::DataSink& sink) {
            for (const auto& f : frames) {
              if (!sink.write(f.data(), f.size())) return false;
            }
            sink.done();
            return true;
          });
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeCompletions() {
    server_.stop();
    thread_.join();
  }

  void script(std::vector<std::string> frames, int status = 200) {
    std::lock_guard lock(mu_);
    frames_ = std::move(frames);
    status_ = status;
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::vector<std::string> bodies() {
    std::lock_guard lock(mu_);
    return bodies_;
  }
  std::string auth() {
    std::lock_guard lock(mu_);
    return auth_;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  std::vector<std::string> frames_;
  int status_ = 200;
  std::vector<std::string> bodies_;
  std::string auth_;
};

std::string frame(const nlohmann::json& j) { return "data: " + j.dump() + "\n\n"; }

nlohmann::json delta_frame(const std::string& text, std::optional<int> usage = std::nullopt,
                           const char* key = "content") {
  nlohmann::json j = {{"choices", {{{"index", 0}, {"delta", {{key, text}}}}}}};
  if (usage) j["usage"] = {{"completion_tokens", *usage}};
  return j;
}

}  // namespace

TEST_CASE("scripted replay emits the recorded chunks") {
  auto trace = three_step_trace();
  auto backend = ScriptedBackend::from_trace(trace);
  auto session = backend->start(trace.prompt, {});
  auto events = drain(*session);
  REQUIRE(events.size() == 4);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(events[i].kind == StreamEvent::Kind::TextChunk);
    CHECK(events[i].text == trace.steps[i].text);
    CHECK(events[i].token_count == trace.steps[i].token_count);
  }
  CHECK(events[3].kind == StreamEvent::Kind::Eos);
  CHECK(events[3].finish == FinishReason::Stop);
  CHECK(session->state() == SessionState::Finished);
  CHECK(session->generated() == trace.full_text());
  CHECK(session->tokens() == 60);
  CHECK_FALSE(session->next().has_value());
}

TEST_CASE("max_tokens truncates with a length finish") {
  ScriptedBackend backend("p", {{std::string(100, 'a'), 100}});
  GenerationParams params;
  params.max_tokens = 10;
  auto session = backend.start("p", params);
  auto events = drain(*session);
  REQUIRE(events.size() == 2);
  CHECK(events[0].token_count == 10);
  CHECK(events[0].text.size() == 10);
  CHECK(events[1].kind == StreamEvent::Kind::Eos);
  CHECK(events[1].finish == FinishReason::Length);
  CHECK(session->tokens() <= 10);
}

TEST_CASE("cancel is acknowledged once") {
  auto trace = three_step_trace();
  auto backend = ScriptedBackend::from_trace(trace);
  auto session = backend->start(trace.prompt, {});
  session->next();
  CHECK(session->cancel());
  CHECK_FALSE(session->cancel());
  CHECK(session->state() == SessionState::Cancelled);
  CHECK_FALSE(session->next().has_value());
}

TEST_CASE("stepwise generation stops where the consumer cancels") {
  TraceRecord r;
  r.prompt = "q";
  for (int i = 0; i < 5; ++i) {
    TaggedStep s;
    s.text = "step " + std::to_string(i) + (i < 4 ? "\n\n" : "");
    s.token_count = 3;
    r.steps.push_back(s);
  }
  auto backend = ScriptedBackend::from_trace(r);
  auto session = backend->start("q", {});
  StepwiseGeneration gen(*session);
  std::vector<std::string> seen;
  while (auto step = gen.next()) {
    seen.push_back(step->step.text);
    CHECK(step->index == seen.size());
    if (seen.size() == 2) gen.cancel();
  }
  CHECK(seen.size() == 2);
  CHECK(gen.finish_reason() == FinishReason::Cancelled);
  CHECK(gen.tokens_received() == 6);
  CHECK(session->state() == SessionState::Cancelled);
}

TEST_CASE("continue_with after cancel forces the latest snapshot") {
  auto trace = three_step_trace();
  auto backend = ScriptedBackend::from_trace(trace);
  auto session = backend->start(trace.prompt, {});
  CHECK_THROWS_AS(continue_with(*backend, *session, "x", 5), StateError);
  session->next();
  session->cancel();
  CHECK_THROWS_AS(continue_with(*backend, *session, "x", 0), InvalidArgument);
  auto forced = continue_with(*backend, *session, "answer: \\boxed{", 100);
  CHECK(forced->prompt() == trace.prompt + trace.steps[0].text + "answer: \\boxed{");
  CHECK(forced->params().max_tokens == 100);
  auto events = drain(*forced);
  REQUIRE(events.size() == 2);
  CHECK(events[0].text == "3}");
  CHECK(events[0].token_count == 1);
  CHECK(events[1].kind == StreamEvent::Kind::Eos);

  auto plain = continue_with(*backend, *forced, " then", 1);
  auto more = drain(*plain);
  REQUIRE_FALSE(more.empty());
  CHECK(plain->tokens() <= 1);
}

TEST_CASE("custom forced answer is returned verbatim") {
  ScriptedBackend backend("p", {{"a\n\n", 1}, {"b", 1}},
                          [](std::string_view) { return ScriptChunk{"Z}", 1}; });
  auto s = backend.start("p", {});
  drain(*s);
  auto forced = continue_with(backend, *s, "\\boxed{", 100);
  auto events = drain(*forced);
  CHECK(events.at(0).text == "Z}");
}

TEST_CASE("scripted backend input checks") {
  ScriptedBackend backend("p", {});
  CHECK_THROWS_AS(backend.start("", {}), InvalidArgument);
  GenerationParams zero;
  zero.max_tokens = 0;
  CHECK_THROWS_AS(backend.start("p", zero), InvalidArgument);
  auto other = backend.start("unrelated", {});
  auto events = drain(*other);
  REQUIRE(events.size() == 1);
  CHECK(events[0].kind == StreamEvent::Kind::Eos);
}

TEST_CASE("token estimate") {
  CHECK(estimate_tokens("") == 0);
  CHECK(estimate_tokens("42}") == 1);
  CHECK(estimate_tokens("one two three four five six seven eight nine ten") == 13);
}

TEST_CASE("SSE parser") {
  SseParser p;
  CHECK(p.feed("data: {\"a\":").empty());
  auto out = p.feed("1}\n\n: comment\n\nevent: x\ndata: [DONE]\r\n\r\n");
  REQUIRE(out.size() == 2);
  CHECK(out[0] == "{\"a\":1}");
  CHECK(out[1] == "[DONE]");
  auto multi = p.feed("data: a\ndata: b\n\n");
  REQUIRE(multi.size() == 1);
  CHECK(multi[0] == "a\nb");
}

TEST_CASE("stream error surfaces as a transport error") {
  class Failing final : public StreamSession {
   public:
    Failing() : StreamSession("f", "p", {}) {}
    std::optional<StreamEvent> next() override {
      if (state_ != SessionState::Open) return std::nullopt;
      StreamEvent e = sent_++ == 0 ? StreamEvent::chunk("a\n\nb", 2)
                                   : StreamEvent::error("boom", "{bad");
      record(e);
      return e;
    }
    bool cancel() override { return false; }

   private:
    int sent_ = 0;
  };
  Failing session;
  StepwiseGeneration gen(session);
  CHECK(gen.next()->step.text == "a\n\n");
  CHECK_THROWS_WITH_AS(gen.next(), doctest::Contains("{bad"), TransportError);
}

TEST_CASE("step limit ends the generation") {
  ScriptedBackend backend("p", {{"a\n\nb\n\nc\n\nd", 8}});
  auto s = backend.start("p", {});
  SegmenterConfig cfg;
  cfg.max_steps = 2;
  StepwiseGeneration gen(*s, cfg);
  std::size_t n = 0;
  while (gen.next()) ++n;
  CHECK(n == 2);
  CHECK(gen.step_limit_hit());
  CHECK(s->state() == SessionState::Cancelled);
}

TEST_CASE("live backend decodes server-sent events") {
  FakeCompletions server;
  server.script({frame(delta_frame("Let me think.\n", 3, "reasoning_content")),
                 ": keep-alive\n\n",
                 frame(delta_frame("\nSo 4.", 6)),
                 frame({{"choices", {{{"index", 0}, {"delta", nlohmann::json::object()},
                                       {"finish_reason", "length"}}}},
                        {"usage", {{"completion_tokens", 6}}}}),
                 "data: [DONE]\n\n"});
  LiveBackendConfig cfg;
  cfg.endpoint = server.url();
  cfg.model = "m";
  cfg.api_key = "secret";
  cfg.timeout = std::chrono::milliseconds(3000);
  LiveBackend backend(cfg);
  GenerationParams params;
  params.max_tokens = 50;
  params.seed = 9;
  auto session = backend.start("What is 2+2?", params);
  StepwiseGeneration gen(*session);
  std::vector<SegmentedStep> steps;
  while (auto s = gen.next()) steps.push_back(s->step);
  REQUIRE(steps.size() == 2);
  CHECK(steps[0].text == "Let me think.\n\n");
  CHECK(steps[1].text == "So 4.");
  CHECK(gen.finish_reason() == FinishReason::Length);
  CHECK(gen.tokens_received() == 6);
  CHECK_FALSE(gen.tokens_estimated());

  auto body = nlohmann::json::parse(server.bodies().at(0));
  CHECK(body["model"] == "m");
  CHECK(body["stream"] == true);
  CHECK(body["max_tokens"] == 50);
  CHECK(body["seed"] == 9);
  CHECK(body["messages"][0]["content"] == "What is 2+2?");
  CHECK(server.auth() == "Bearer secret");

  server.script({frame(delta_frame("4}")), "data: [DONE]\n\n"});
  auto forced = continue_with(backend, *session, "\\boxed{", 100);
  auto events = drain(*forced);
  REQUIRE(events.size() == 2);
  CHECK(events[0].text == "4}");
  CHECK(events[0].tokens_estimated);
  auto cont = nlohmann::json::parse(server.bodies().at(1));
  CHECK(cont["messages"][1]["role"] == "assistant");
  CHECK(cont["messages"][1]["content"] == "Let me think.\n\nSo 4.\\boxed{");
  CHECK(cont["continue_final_message"] == true);
  CHECK(cont["max_tokens"] == 100);
}

TEST_CASE("live backend error paths") {
  FakeCompletions server;
  LiveBackendConfig cfg;
  cfg.endpoint = server.url() + "/v1";
  cfg.model = "m";
  cfg.timeout = std::chrono::milliseconds(3000);
  LiveBackend backend(cfg);

  server.script({"data: {not json\n\n"});
  auto bad = backend.start("p", {});
  StepwiseGeneration g1(*bad);
  CHECK_THROWS_WITH_AS(g1.next(), doctest::Contains("{not json"), TransportError);

  server.script({frame({{"error", {{"message", "nope"}}}})});
  auto err = backend.start("p", {});
  StepwiseGeneration g2(*err);
  CHECK_THROWS_AS(g2.next(), TransportError);

  server.script({}, 503);
  auto http = backend.start("p", {});
  StepwiseGeneration g3(*http);
  CHECK_THROWS_WITH_AS(g3.next(), doctest::Contains("HTTP 503"), TransportError);

  // Closing without [DONE] still ends the stream.
  server.script({frame(delta_frame("a\n\nb"))});
  auto open = backend.start("p", {});
  StepwiseGeneration g4(*open);
  std::size_t n = 0;
  while (g4.next()) ++n;
  CHECK(n == 2);
  CHECK(g4.tokens_estimated());

  CHECK_THROWS_AS(LiveBackend(LiveBackendConfig{"http://x", "", ""}), InvalidArgument);
  CHECK_THROWS_AS(LiveBackend(LiveBackendConfig{"ftp://x", "", "m"}), InvalidArgument);
}

TEST_CASE("live backend unreachable host") {
  LiveBackendConfig cfg;
  cfg.endpoint = "http://127.0.0.1:1";
  cfg.model = "m";
  cfg.retries = 1;
  cfg.timeout = std::chrono::milliseconds(300);
  LiveBackend backend(cfg);
  auto s = backend.start("p", {});
  StepwiseGeneration gen(*s);
  CHECK_THROWS_AS(gen.next(), TransportError);
}

TEST_CASE("live session cancel") {
  FakeCompletions server;
  server.script({frame(delta_frame("a\n\n")), frame(delta_frame("b\n\n")), "data: [DONE]\n\n"});
  LiveBackendConfig cfg;
  cfg.endpoint = server.url();
  cfg.model = "m";
  LiveBackend backend(cfg);
  auto s = backend.start("p", {});
  StepwiseGeneration gen(*s);
  REQUIRE(gen.next());
  gen.cancel();
  CHECK_FALSE(gen.next().has_value());
  CHECK(s->state() == SessionState::Cancelled);
  CHECK_FALSE(s->cancel());
}
