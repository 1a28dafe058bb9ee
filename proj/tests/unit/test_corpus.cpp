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

#include <sstream>

#include <json.hpp>

#include "stepgate/controller.h"
#include "stepgate/corpus.h"
#include "stepgate/errors.h"

using namespace stepgate;
using nlohmann::json;

namespace {

json base_record() {
  return json::parse(R"({
    "id": "r1", "dataset": "d", "model": "m", "seed": 42, "prompt": "p",
    "gold_answer": "4", "answer_mode": "boxed_math", "final_answer": "4",
    "correct": true, "runtime_s": 1.5,
    "steps": [
      {"text": "a\n\n", "token_count": 3, "gold_tag": "problem_restatement",
       "answer_snapshot": "3", "answer_correct": false},
      {"text": "\n\n", "token_count": 1, "gold_tag": null,
       "answer_snapshot": null, "answer_correct": null},
      {"text": "\\boxed{4}", "token_count": 4, "gold_tag": "Final Conclusion",
       "answer_snapshot": "4", "answer_correct": true}
    ]})");
}

std::string expect_error(const json& doc) {
  try {
    parse_record(doc.dump(), nullptr, 7, "file.jsonl");
  } catch (const CorpusError& e) {
    CHECK(e.line() == 7);
    return e.what();
  }
  FAIL("record was accepted");
  return {};
}

}  // namespace

TEST_CASE("valid record parses") {
  auto r = parse_record(base_record().dump());
  CHECK(r.id == "r1");
  CHECK(r.seed == 42);
  CHECK(r.steps.size() == 3);
  CHECK(r.steps[0].index == 1);
  CHECK(r.steps[2].tag == StepTag::FinalConclusion);
  CHECK_FALSE(r.steps[1].tag.has_value());
  CHECK(r.total_tokens() == 8);
  CHECK(r.non_blank_steps() == 2);
  CHECK(r.runtime_s == 1.5);
}

TEST_CASE("serialize round trip") {
  auto doc = base_record();
  doc["output"] = "a\n\n\n\n\\boxed{4}";
  auto r = parse_record(doc.dump());
  auto again = parse_record(serialize_record(r));
  CHECK(serialize_record(again) == serialize_record(r));
  CHECK(again.output == r.output);
  auto j = json::parse(serialize_record(r));
  CHECK(j["steps"][2]["gold_tag"] == "final_conclusion");
}

TEST_CASE("invalid records are rejected with the line number") {
  auto doc = base_record();
  doc["output"] = "something else";
  CHECK(expect_error(doc).find("file.jsonl:7:") == 0);

  doc = base_record();
  doc["extra"] = 1;
  CHECK(expect_error(doc).find("unknown field 'extra'") != std::string::npos);

  doc = base_record();
  doc.erase("gold_answer");
  CHECK(expect_error(doc).find("gold_answer") != std::string::npos);

  doc = base_record();
  doc["steps"][0]["token_count"] = -1;
  expect_error(doc);

  doc = base_record();
  doc["steps"][0]["token_count"] = 1.5;
  expect_error(doc);

  doc = base_record();
  doc["steps"] = json::array();
  expect_error(doc);

  doc = base_record();
  doc["answer_mode"] = "essay";
  expect_error(doc);

  doc = base_record();
  doc["runtime_s"] = -2;
  expect_error(doc);

  // Steps that do not follow the delimiter split of their concatenation.
  doc = base_record();
  doc["steps"][0]["text"] = "a";
  CHECK(expect_error(doc).find("segmentation") != std::string::npos);

  doc = base_record();
  doc["steps"][0]["text"] = "a\r\n\r\n";
  CHECK(expect_error(doc).find("CRLF") != std::string::npos);

  CHECK_THROWS_AS(parse_record("{not json"), CorpusError);
  CHECK_THROWS_AS(parse_record("[]"), CorpusError);
}

TEST_CASE("unknown tags load as other with a warning") {
  auto doc = base_record();
  doc["steps"][0]["gold_tag"] = "banana";
  std::vector<CorpusWarning> warnings;
  auto r = parse_record(doc.dump(), &warnings, 3);
  CHECK(r.steps[0].tag == StepTag::Other);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].line == 3);
}

TEST_CASE("corpus parsing") {
  auto a = base_record();
  auto b = base_record();
  b["id"] = "r2";
  b["seed"] = 41;
  b["model"] = "n";
  std::stringstream in(a.dump() + "\n\n" + b.dump() + "\n");
  auto corpus = parse_corpus(in, "c.jsonl");
  CHECK(corpus.records.size() == 2);
  CHECK(corpus.manifest.seeds == std::vector<std::int64_t>{41, 42});
  CHECK(corpus.manifest.models == std::vector<std::string>{"m", "n"});
  CHECK(corpus.find("r2") != nullptr);
  CHECK(corpus.find("zz") == nullptr);

  std::stringstream dup(a.dump() + "\n" + a.dump() + "\n");
  try {
    parse_corpus(dup, "c.jsonl");
    FAIL("duplicate accepted");
  } catch (const CorpusError& e) {
    CHECK(e.line() == 2);
  }

  std::ostringstream out;
  write_corpus(out, corpus.records);
  std::stringstream back(out.str());
  auto again = parse_corpus(back);
  REQUIRE(again.records.size() == 2);
  CHECK(serialize_record(again.records[1]) == serialize_record(corpus.records[1]));
  CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.jsonl"), IoError);
}

TEST_CASE("missing gold answer fails at run time, not load time") {
  auto doc = base_record();
  doc["gold_answer"] = "";
  auto r = parse_record(doc.dump());
  CHECK_THROWS_AS(run_ies(r), DataError);
}

TEST_CASE("bundled mini corpus loads") {
  auto corpus = load_corpus(std::string(STEPGATE_DATA_DIR) + "/mini_corpus.jsonl");
  CHECK(corpus.records.size() == 12);
  CHECK(corpus.warnings.empty());
  CHECK(corpus.manifest.seeds == std::vector<std::int64_t>{40, 41, 42});
  for (const auto& r : corpus.records) {
    CHECK(serialize_record(parse_record(serialize_record(r))) == serialize_record(r));
  }
}
