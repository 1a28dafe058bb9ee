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

#include <array>
#include <bitset>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stepgate {

// ReasonType labels: 13 substantive step types plus the Other placeholder.
enum class StepTag : std::uint8_t {
  ProblemRestatement,
  ContextRepetition,
  DefinitionRecall,
  FormulaSubstitution,
  SymbolicTransformation,
  EdgeCase,
  PatternRecognition,
  Exploration,
  Interpretation,
  SelfTalk,
  Verification,
  HeuristicIntuition,
  FinalConclusion,
  Other,
};

inline constexpr std::size_t kTagCount = 14;

inline constexpr std::array<StepTag, kTagCount> kAllTags = {
    StepTag::ProblemRestatement, StepTag::ContextRepetition,
    StepTag::DefinitionRecall,   StepTag::FormulaSubstitution,
    StepTag::SymbolicTransformation, StepTag::EdgeCase,
    StepTag::PatternRecognition, StepTag::Exploration,
    StepTag::Interpretation,     StepTag::SelfTalk,
    StepTag::Verification,       StepTag::HeuristicIntuition,
    StepTag::FinalConclusion,    StepTag::Other,
};

constexpr std::size_t tag_index(StepTag tag) {
  return static_cast<std::size_t>(tag);
}

// snake_case form used in corpus files and on the wire.
std::string_view canonical_name(StepTag tag);

// Human-readable form, e.g. "Problem Re-statement".
std::string_view display_name(StepTag tag);

struct ParsedTag {
  StepTag tag = StepTag::Other;
  bool unknown = false;  // input did not name any known label
};

// Case- and separator-insensitive. Unknown strings map to Other with
// `unknown` set.
ParsedTag parse_tag(std::string_view text);

enum class ClassCode : std::uint8_t {
  Other = 0,
  Constructive = 1,
  Evaluative = 2,
};

class ClassPartition {
 public:
  // Throws InvalidArgument when the classes overlap or contain Other.
  ClassPartition(std::string name, std::span<const StepTag> constructive,
                 std::span<const StepTag> evaluative);
  ClassPartition(std::string name, std::initializer_list<StepTag> constructive,
                 std::initializer_list<StepTag> evaluative);

  const std::string& name() const { return name_; }
  bool is_constructive(StepTag tag) const {
    return constructive_.test(tag_index(tag));
  }
  bool is_evaluative(StepTag tag) const {
    return evaluative_.test(tag_index(tag));
  }
  std::vector<StepTag> constructive() const;
  std::vector<StepTag> evaluative() const;

  bool same_classes(const ClassPartition& other) const {
    return constructive_ == other.constructive_ &&
           evaluative_ == other.evaluative_;
  }

 private:
  std::string name_;
  std::bitset<kTagCount> constructive_;
  std::bitset<kTagCount> evaluative_;
};

// constructive = {ProblemRestatement, DefinitionRecall},
// evaluative = {Verification, FinalConclusion}.
const ClassPartition& default_partition();

// Alternative transition classes "alt1".."alt7" (one, two or three tags per
// class drawn from PR/DR/CR vs V/FC/Exploration). alt4 equals the default.
std::vector<ClassPartition> alternative_partitions();

// Looks up "default", "alt1".."alt7" or "level6"/"level4"/"level3"/"level2".
ClassPartition partition_by_name(std::string_view name);

ClassCode class_code_of(StepTag tag, const ClassPartition& partition);

// Partition documents: {"name": str, "constructive": [label...],
// "evaluative": [label...]}.
ClassPartition load_partition_file(const std::filesystem::path& path);
ClassPartition parse_partition_json(std::string_view json_text);
std::string partition_to_json(const ClassPartition& partition);

// Grouped label sets at coarser granularity. Level 13 is the identity.
class CoarseTaxonomy {
 public:
  // Throws InvalidArgument unless level is one of 13, 6, 4, 3, 2.
  explicit CoarseTaxonomy(int level);

  int level() const { return level_; }
  std::string_view label_of(StepTag tag) const;
  // Distinct coarse labels in first-appearance order over kAllTags.
  std::vector<std::string_view> labels() const;
  std::string_view constructive_label() const;
  std::string_view evaluative_label() const;
  // The coarse (constructive, evaluative) choice pulled back onto fine tags.
  ClassPartition fine_partition() const;

 private:
  int level_;
};

// Throws InvalidArgument for levels other than 6, 4, 3, 2.
std::string_view coarsen(StepTag tag, int level);

}  // namespace stepgate
