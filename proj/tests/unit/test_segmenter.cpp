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

#include <random>
#include <string>
#include <vector>

#include "stepgate/errors.h"
#include "stepgate/segmenter.h"

using namespace stepgate;

namespace {

std::vector<std::string> texts(const std::vector<SegmentedStep>& steps) {
  std::vector<std::string> out;
  for (const auto& s : steps) out.push_back(s.text);
  return out;
}

std::vector<std::string> run_chunks(const std::vector<std::string>& chunks,
                                    SegmenterConfig cfg = {}) {
  StepSegmenter seg(cfg);
  std::vector<std::string> out;
  for (const auto& c : chunks) {
    for (auto& s : seg.feed(c, 1)) out.push_back(s.text);
  }
  if (auto last = seg.finish()) out.push_back(last->text);
  return out;
}

}  // namespace

TEST_CASE("feed emits delimiter-terminated steps") {
  StepSegmenter seg;
  CHECK(texts(seg.feed("a\n\nb\n\nc", 3)) == std::vector<std::string>{"a\n\n", "b\n\n"});
  CHECK(seg.buffer() == "c");
  CHECK(seg.feed("", 0).empty());
  CHECK(seg.buffer() == "c");
  auto last = seg.finish();
  REQUIRE(last);
  CHECK(last->text == "c");
  CHECK(seg.emitted() == 3);
}

TEST_CASE("consecutive delimiters give a blank step") {
  StepSegmenter seg;
  auto out = seg.feed("x\n\n\n\ny", 5);
  REQUIRE(out.size() == 2);
  CHECK(out[0].text == "x\n\n");
  CHECK(out[1].text == "\n\n");
  CHECK(out[1].blank);
  CHECK_FALSE(out[0].blank);
  CHECK(seg.buffer() == "y");
}

TEST_CASE("three newlines split after the first pair") {
  CHECK(split_steps("a\n\n\nb") == std::vector<std::string>{"a\n\n", "\nb"});
  CHECK(run_chunks({"a\n", "\n", "\nb"}) == std::vector<std::string>{"a\n\n", "\nb"});
}

TEST_CASE("finish flushes the residual only when non-empty") {
  StepSegmenter empty;
  CHECK_FALSE(empty.finish().has_value());
  CHECK_THROWS_AS(empty.finish(), StateError);
  CHECK_THROWS_AS(empty.feed("x", 1), StateError);

  StepSegmenter seg;
  auto steps = seg.feed("p\n\nq", 2);
  auto last = seg.finish();
  REQUIRE(last);
  steps.push_back(*last);
  CHECK(texts(steps) == std::vector<std::string>{"p\n\n", "q"});
  CHECK(steps[0].text + steps[1].text == "p\n\nq");
}

TEST_CASE("delimiter split across chunks") {
  CHECK(run_chunks({"ab\n", "\ncd\n", "\n"}) == std::vector<std::string>{"ab\n\n", "cd\n\n"});
}

TEST_CASE("token counts follow characters") {
  StepSegmenter seg;
  // 8 chars, 8 tokens: "aaa\n\n" gets 5, the rest 3.
  auto out = seg.feed("aaa\n\nbbb", 8);
  REQUIRE(out.size() == 1);
  CHECK(out[0].token_count == 5);
  CHECK(seg.finish()->token_count == 3);

  StepSegmenter whole;
  auto steps = whole.feed("one\n\n", 7);
  CHECK(steps.at(0).token_count == 7);
  CHECK_THROWS_AS(whole.feed("x", -1), InvalidArgument);
}

TEST_CASE("tokens on empty chunks carry to the next text") {
  StepSegmenter seg;
  CHECK(seg.feed("", 4).empty());
  auto out = seg.feed("ab\n\n", 0);
  REQUIRE(out.size() == 1);
  CHECK(out[0].token_count == 4);
}

TEST_CASE("CRLF pairs are normalized") {
  CHECK(run_chunks({"a\r\n\r\nb"}) == std::vector<std::string>{"a\n\n", "b"});
  CHECK(run_chunks({"a\r", "\n\r", "\nb"}) == std::vector<std::string>{"a\n\n", "b"});
  CHECK(run_chunks({"a\r"}) == std::vector<std::string>{"a\r"});
  SegmenterConfig raw;
  raw.normalize_crlf = false;
  CHECK(run_chunks({"a\r\n\r\nb"}, raw) == std::vector<std::string>{"a\r\n\r\nb"});
}

TEST_CASE("custom delimiter") {
  SegmenterConfig cfg;
  cfg.delimiter = "||";
  CHECK(run_chunks({"a|", "|b||c"}, cfg) == std::vector<std::string>{"a||", "b||", "c"});
  cfg.delimiter.clear();
  CHECK_THROWS_AS(StepSegmenter{cfg}, InvalidArgument);
}

TEST_CASE("step limit reports the steps emitted in the same call") {
  SegmenterConfig cfg;
  cfg.max_steps = 2;
  StepSegmenter seg(cfg);
  CHECK(seg.feed("a\n\n", 1).size() == 1);
  try {
    seg.feed("b\n\nc\n\nd\n\n", 3);
    FAIL("expected StepLimitError");
  } catch (const StepLimitError& e) {
    CHECK(e.limit() == 2);
    REQUIRE(e.emitted.size() == 1);
    CHECK(e.emitted[0].text == "b\n\n");
  }
}

TEST_CASE("random chunkings reproduce the single-shot split") {
  std::mt19937_64 rng(7);
  const std::string alphabet = "ab \n\n\n";
  for (int iter = 0; iter < 300; ++iter) {
    std::string text;
    const int len = static_cast<int>(rng() % 60);
    for (int i = 0; i < len; ++i) text.push_back(alphabet[rng() % alphabet.size()]);
    std::vector<std::string> chunks;
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t n = 1 + rng() % 5;
      chunks.push_back(text.substr(pos, n));
      pos += n;
    }
    auto got = run_chunks(chunks);
    CHECK(got == split_steps(text));
    std::string joined;
    for (const auto& s : got) joined += s;
    CHECK(joined == text);
  }
}
