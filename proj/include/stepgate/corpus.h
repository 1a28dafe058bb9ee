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
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "stepgate/errors.h"
#include "stepgate/types.h"

namespace stepgate {

// Schema violation on a specific corpus line.
class CorpusError : public DataError {
 public:
  CorpusError(std::string source, std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct CorpusWarning {
  std::size_t line = 0;
  std::string message;
};

struct CorpusManifest {
  std::vector<std::string> datasets;  // sorted, unique
  std::vector<std::string> models;    // sorted, unique
  std::vector<std::int64_t> seeds;    // sorted, unique
  std::string delimiter = "\n\n";
};

struct Corpus {
  std::vector<TraceRecord> records;  // file order
  CorpusManifest manifest;
  std::vector<CorpusWarning> warnings;

  const TraceRecord* find(std::string_view id) const;
};

// One JSONL line. Unknown gold tags become Other with a warning.
TraceRecord parse_record(std::string_view line, std::vector<CorpusWarning>* warnings = nullptr,
                         std::size_t line_no = 0, std::string_view source = "<input>");
// Compact single-line JSON with the schema's key order.
std::string serialize_record(const TraceRecord& record);

Corpus parse_corpus(std::istream& in, std::string_view source = "<input>");
// Throws IoError when the file cannot be read.
Corpus load_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& out, const std::vector<TraceRecord>& records);

}  // namespace stepgate
