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

#include "stepgate/corpus.h"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "stepgate/segmenter.h"

namespace stepgate {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

const std::set<std::string, std::less<>> kRecordKeys = {
    "id",           "dataset", "model",     "seed",  "prompt", "gold_answer",
    "answer_mode",  "final_answer", "correct", "runtime_s", "steps", "output"};
const std::set<std::string, std::less<>> kStepKeys = {
    "text", "token_count", "gold_tag", "answer_snapshot", "answer_correct"};

class Fields {
 public:
  Fields(const json& obj, std::string where, std::string_view source, std::size_t line)
      : obj_(obj), where_(std::move(where)), source_(source), line_(line) {}

  [[noreturn]] void fail(const std::string& message) const {
    throw CorpusError(std::string(source_), line_, where_ + message);
  }

  const json& at(const char* key) const {
    auto it = obj_.find(key);
    if (it == obj_.end()) fail(std::string("missing field '") + key + "'");
    return *it;
  }

  std::string str(const char* key) const {
    const json& v = at(key);
    if (!v.is_string()) fail(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
  }

  std::optional<std::string> opt_str(const char* key) const {
    const json& v = at(key);
    if (v.is_null()) return std::nullopt;
    if (!v.is_string()) fail(std::string("field '") + key + "' must be a string or null");
    return v.get<std::string>();
  }

  std::int64_t integer(const char* key) const {
    const json& v = at(key);
    if (!v.is_number_integer()) fail(std::string("field '") + key + "' must be an integer");
    return v.get<std::int64_t>();
  }

  bool boolean(const char* key) const {
    const json& v = at(key);
    if (!v.is_boolean()) fail(std::string("field '") + key + "' must be a boolean");
    return v.get<bool>();
  }

  std::optional<bool> opt_bool(const char* key) const {
    const json& v = at(key);
    if (v.is_null()) return std::nullopt;
    if (!v.is_boolean()) fail(std::string("field '") + key + "' must be a boolean or null");
    return v.get<bool>();
  }

  void only(const std::set<std::string, std::less<>>& allowed) const {
    for (const auto& [k, v] : obj_.items()) {
      if (!allowed.count(k)) fail("unknown field '" + k + "'");
    }
  }

 private:
  const json& obj_;
  std::string where_;
  std::string_view source_;
  std::size_t line_;
};

template <typename T>
std::vector<T> sorted_unique(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

CorpusError::CorpusError(std::string source, std::size_t line, const std::string& message)
    : DataError(source + ":" + std::to_string(line) + ": " + message), line_(line) {}

const TraceRecord* Corpus::find(std::string_view id) const {
  for (const auto& r : records) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

TraceRecord parse_record(std::string_view line, std::vector<CorpusWarning>* warnings,
                         std::size_t line_no, std::string_view source) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw CorpusError(std::string(source), line_no, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw CorpusError(std::string(source), line_no, "record must be an object");
  Fields f(doc, "", source, line_no);
  f.only(kRecordKeys);

  TraceRecord r;
  r.id = f.str("id");
  if (r.id.empty()) f.fail("field 'id' must not be empty");
  Fields rf(doc, "record " + r.id + ": ", source, line_no);
  r.dataset = rf.str("dataset");
  r.model = rf.str("model");
  r.seed = rf.integer("seed");
  r.prompt = rf.str("prompt");
  r.gold_answer = rf.str("gold_answer");
  try {
    r.answer_mode = parse_answer_mode(rf.str("answer_mode"));
  } catch (const InvalidArgument& e) {
    rf.fail(e.what());
  }
  r.final_answer = rf.str("final_answer");
  r.correct = rf.boolean("correct");
  const json& runtime = rf.at("runtime_s");
  if (!runtime.is_null()) {
    if (!runtime.is_number()) rf.fail("field 'runtime_s' must be a number or null");
    r.runtime_s = runtime.get<double>();
    if (*r.runtime_s < 0) rf.fail("field 'runtime_s' must be non-negative");
  }
  if (doc.contains("output")) r.output = rf.str("output");

  const json& steps = rf.at("steps");
  if (!steps.is_array()) rf.fail("field 'steps' must be an array");
  if (steps.empty()) rf.fail("record has no steps");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const json& s = steps[i];
    Fields sf(s, "record " + r.id + ", step " + std::to_string(i + 1) + ": ", source, line_no);
    if (!s.is_object()) sf.fail("step must be an object");
    sf.only(kStepKeys);
    TaggedStep step;
    step.index = i + 1;
    step.text = sf.str("text");
    step.token_count = sf.integer("token_count");
    if (step.token_count < 0) sf.fail("token_count must be non-negative");
    if (auto tag = sf.opt_str("gold_tag")) {
      const ParsedTag parsed = parse_tag(*tag);
      step.tag = parsed.tag;
      if (parsed.unknown && warnings) {
        warnings->push_back({line_no, "record " + r.id + ", step " + std::to_string(i + 1) +
                                          ": unknown tag '" + *tag + "' read as other"});
      }
    }
    step.answer_snapshot = sf.opt_str("answer_snapshot");
    step.answer_correct = sf.opt_bool("answer_correct");
    r.steps.push_back(std::move(step));
  }

  const std::string full = r.full_text();
  if (r.output && *r.output != full) rf.fail("step texts do not concatenate to 'output'");
  if (full.find("\r\n\r\n") != std::string::npos) {
    rf.fail("output contains CRLF step delimiters; normalize to \\n\\n before loading");
  }
  const auto resplit = split_steps(full);
  bool same = resplit.size() == r.steps.size();
  for (std::size_t i = 0; same && i < resplit.size(); ++i) same = resplit[i] == r.steps[i].text;
  if (!same) {
    rf.fail("steps do not match the delimiter segmentation of their concatenation");
  }
  return r;
}

std::string serialize_record(const TraceRecord& r) {
  ordered_json doc;
  doc["id"] = r.id;
  doc["dataset"] = r.dataset;
  doc["model"] = r.model;
  doc["seed"] = r.seed;
  doc["prompt"] = r.prompt;
  doc["gold_answer"] = r.gold_answer;
  doc["answer_mode"] = answer_mode_name(r.answer_mode);
  doc["final_answer"] = r.final_answer;
  doc["correct"] = r.correct;
  doc["runtime_s"] = r.runtime_s ? ordered_json(*r.runtime_s) : ordered_json(nullptr);
  ordered_json steps = ordered_json::array();
  for (const auto& s : r.steps) {
    ordered_json js;
    js["text"] = s.text;
    js["token_count"] = s.token_count;
    js["gold_tag"] = s.tag ? ordered_json(canonical_name(*s.tag)) : ordered_json(nullptr);
    js["answer_snapshot"] =
        s.answer_snapshot ? ordered_json(*s.answer_snapshot) : ordered_json(nullptr);
    js["answer_correct"] =
        s.answer_correct ? ordered_json(*s.answer_correct) : ordered_json(nullptr);
    steps.push_back(std::move(js));
  }
  doc["steps"] = std::move(steps);
  if (r.output) doc["output"] = *r.output;
  return doc.dump();
}

Corpus parse_corpus(std::istream& in, std::string_view source) {
  Corpus corpus;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    TraceRecord r = parse_record(line, &corpus.warnings, line_no, source);
    if (!ids.insert(r.id).second) {
      throw CorpusError(std::string(source), line_no, "duplicate record id '" + r.id + "'");
    }
    corpus.manifest.datasets.push_back(r.dataset);
    corpus.manifest.models.push_back(r.model);
    corpus.manifest.seeds.push_back(r.seed);
    corpus.records.push_back(std::move(r));
  }
  if (in.bad()) throw IoError("failed reading " + std::string(source));
  corpus.manifest.datasets = sorted_unique(std::move(corpus.manifest.datasets));
  corpus.manifest.models = sorted_unique(std::move(corpus.manifest.models));
  corpus.manifest.seeds = sorted_unique(std::move(corpus.manifest.seeds));
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus " + path.string());
  return parse_corpus(in, path.string());
}

void write_corpus(std::ostream& out, const std::vector<TraceRecord>& records) {
  for (const auto& r : records) out << serialize_record(r) << '\n';
}

}  // namespace stepgate
