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

#include "stepgate/taxonomy.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "stepgate/errors.h"

namespace stepgate {
namespace {

using Tag = StepTag;

constexpr std::array<std::string_view, kTagCount> kCanonical = {
    "problem_restatement", "context_repetition",  "definition_recall",
    "formula_substitution", "symbolic_transformation", "edge_case",
    "pattern_recognition", "exploration",          "interpretation",
    "self_talk",           "verification",         "heuristic_intuition",
    "final_conclusion",    "other",
};

constexpr std::array<std::string_view, kTagCount> kDisplay = {
    "Problem Re-statement", "Context Repetition",  "Definition Recall",
    "Formula Substitution", "Symbolic Transformation", "Edge Case",
    "Pattern Recognition",  "Exploration",         "Interpretation",
    "Self-Talk",            "Verification",        "Heuristic / Intuition",
    "Final Conclusion",     "Other",
};

std::string squash(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (unsigned char c : text) {
    if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

const std::unordered_map<std::string, Tag>& lookup_table() {
  static const auto table = [] {
    std::unordered_map<std::string, Tag> m;
    for (Tag t : kAllTags) {
      m.emplace(squash(kCanonical[tag_index(t)]), t);
      m.emplace(squash(kDisplay[tag_index(t)]), t);
    }
    // Spellings seen in annotation outputs and figure legends.
    m.emplace("problemrestatementsetup", Tag::ProblemRestatement);
    m.emplace("setup", Tag::ProblemRestatement);
    m.emplace("finalanswer", Tag::FinalConclusion);
    m.emplace("heuristic", Tag::HeuristicIntuition);
    m.emplace("intuition", Tag::HeuristicIntuition);
    m.emplace("alternativeapproach", Tag::Exploration);
    m.emplace("alternativeexploration", Tag::Exploration);
    return m;
  }();
  return table;
}

std::vector<StepTag> tags_from_json(const nlohmann::json& arr,
                                    std::string_view field) {
  if (!arr.is_array()) {
    throw InvalidArgument("partition field '" + std::string(field) +
                          "' must be an array of labels");
  }
  std::vector<StepTag> tags;
  for (const auto& item : arr) {
    if (!item.is_string()) {
      throw InvalidArgument("partition labels must be strings");
    }
    const ParsedTag parsed = parse_tag(item.get<std::string>());
    if (parsed.unknown) {
      throw InvalidArgument("unknown label in partition: " +
                            item.get<std::string>());
    }
    tags.push_back(parsed.tag);
  }
  return tags;
}

}  // namespace

std::string_view canonical_name(StepTag tag) {
  return kCanonical.at(tag_index(tag));
}

std::string_view display_name(StepTag tag) {
  return kDisplay.at(tag_index(tag));
}

ParsedTag parse_tag(std::string_view text) {
  const auto& table = lookup_table();
  auto it = table.find(squash(text));
  if (it == table.end()) return {StepTag::Other, true};
  return {it->second, false};
}

ClassPartition::ClassPartition(std::string name,
                               std::span<const StepTag> constructive,
                               std::span<const StepTag> evaluative)
    : name_(std::move(name)) {
  for (StepTag t : constructive) constructive_.set(tag_index(t));
  for (StepTag t : evaluative) evaluative_.set(tag_index(t));
  if ((constructive_ & evaluative_).any()) {
    throw InvalidArgument("partition '" + name_ +
                          "': constructive and evaluative classes overlap");
  }
  if (constructive_.test(tag_index(StepTag::Other)) ||
      evaluative_.test(tag_index(StepTag::Other))) {
    throw InvalidArgument("partition '" + name_ +
                          "': Other cannot belong to a class");
  }
}

ClassPartition::ClassPartition(std::string name,
                               std::initializer_list<StepTag> constructive,
                               std::initializer_list<StepTag> evaluative)
    : ClassPartition(std::move(name),
                     std::span<const StepTag>(constructive.begin(),
                                              constructive.size()),
                     std::span<const StepTag>(evaluative.begin(),
                                              evaluative.size())) {}

std::vector<StepTag> ClassPartition::constructive() const {
  std::vector<StepTag> out;
  for (StepTag t : kAllTags) {
    if (is_constructive(t)) out.push_back(t);
  }
  return out;
}

std::vector<StepTag> ClassPartition::evaluative() const {
  std::vector<StepTag> out;
  for (StepTag t : kAllTags) {
    if (is_evaluative(t)) out.push_back(t);
  }
  return out;
}

const ClassPartition& default_partition() {
  static const ClassPartition p(
      "default", {Tag::ProblemRestatement, Tag::DefinitionRecall},
      {Tag::Verification, Tag::FinalConclusion});
  return p;
}

std::vector<ClassPartition> alternative_partitions() {
  using T = Tag;
  return {
      ClassPartition("alt1", {T::ProblemRestatement}, {T::Verification}),
      ClassPartition("alt2", {T::DefinitionRecall}, {T::FinalConclusion}),
      ClassPartition("alt3", {T::ContextRepetition}, {T::Exploration}),
      ClassPartition("alt4", {T::ProblemRestatement, T::DefinitionRecall},
                     {T::Verification, T::FinalConclusion}),
      ClassPartition("alt5", {T::ProblemRestatement, T::ContextRepetition},
                     {T::Verification, T::Exploration}),
      ClassPartition("alt6", {T::DefinitionRecall, T::ContextRepetition},
                     {T::FinalConclusion, T::Exploration}),
      ClassPartition("alt7",
                     {T::ProblemRestatement, T::DefinitionRecall,
                      T::ContextRepetition},
                     {T::Verification, T::FinalConclusion, T::Exploration}),
  };
}

ClassPartition partition_by_name(std::string_view name) {
  if (name == "default") return default_partition();
  for (auto& p : alternative_partitions()) {
    if (p.name() == name) return p;
  }
  for (int level : {6, 4, 3, 2}) {
    if (name == "level" + std::to_string(level)) {
      return CoarseTaxonomy(level).fine_partition();
    }
  }
  throw InvalidArgument("unknown partition name: " + std::string(name));
}

ClassCode class_code_of(StepTag tag, const ClassPartition& partition) {
  if (partition.is_constructive(tag)) return ClassCode::Constructive;
  if (partition.is_evaluative(tag)) return ClassCode::Evaluative;
  return ClassCode::Other;
}

ClassPartition parse_partition_json(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(std::string("partition document: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("name") || !doc["name"].is_string()) {
    throw InvalidArgument("partition document needs a string 'name'");
  }
  auto constructive = tags_from_json(doc.value("constructive", nlohmann::json()),
                                     "constructive");
  auto evaluative =
      tags_from_json(doc.value("evaluative", nlohmann::json()), "evaluative");
  return ClassPartition(doc["name"].get<std::string>(), constructive,
                        evaluative);
}

ClassPartition load_partition_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open partition file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_partition_json(ss.str());
}

std::string partition_to_json(const ClassPartition& partition) {
  nlohmann::ordered_json doc;
  doc["name"] = partition.name();
  doc["constructive"] = nlohmann::json::array();
  for (StepTag t : partition.constructive())
    doc["constructive"].push_back(canonical_name(t));
  doc["evaluative"] = nlohmann::json::array();
  for (StepTag t : partition.evaluative())
    doc["evaluative"].push_back(canonical_name(t));
  return doc.dump();
}

// ---------------------------------------------------------------------------
// Coarse taxonomies

namespace {

constexpr std::string_view kOther = "Other";

std::string_view level6(StepTag tag) {
  switch (tag) {
    case Tag::ProblemRestatement:
    case Tag::ContextRepetition:
    case Tag::DefinitionRecall:
      return "Setup";
    case Tag::FormulaSubstitution:
    case Tag::SymbolicTransformation:
      return "Manipulation";
    case Tag::EdgeCase:
    case Tag::PatternRecognition:
      return "Analysis";
    case Tag::Exploration:
    case Tag::Interpretation:
    case Tag::SelfTalk:
      return "Meta Reasoning";
    case Tag::Verification:
    case Tag::HeuristicIntuition:
      return "Checking";
    case Tag::FinalConclusion:
      return "End Reasoning";
    case Tag::Other:
      break;
  }
  return kOther;
}

std::string_view level4(StepTag tag) {
  switch (tag) {
    case Tag::ProblemRestatement:
    case Tag::ContextRepetition:
    case Tag::DefinitionRecall:
      return "Early Reasoning";
    case Tag::FormulaSubstitution:
    case Tag::SymbolicTransformation:
    case Tag::EdgeCase:
    case Tag::PatternRecognition:
      return "Mid Reasoning";
    case Tag::Exploration:
    case Tag::Interpretation:
    case Tag::SelfTalk:
    case Tag::Verification:
    case Tag::HeuristicIntuition:
      return "Late Reasoning";
    case Tag::FinalConclusion:
      return "End Reasoning";
    case Tag::Other:
      break;
  }
  return kOther;
}

std::string_view level3(StepTag tag) {
  std::string_view l4 = level4(tag);
  return l4 == "End Reasoning" ? "Late Reasoning" : l4;
}

std::string_view level2(StepTag tag) {
  std::string_view l3 = level3(tag);
  return l3 == "Mid Reasoning" ? "Early Reasoning" : l3;
}

}  // namespace

CoarseTaxonomy::CoarseTaxonomy(int level) : level_(level) {
  if (level != 13 && level != 6 && level != 4 && level != 3 && level != 2) {
    throw InvalidArgument("taxonomy level must be one of 13, 6, 4, 3, 2 (got " +
                          std::to_string(level) + ")");
  }
}

std::string_view CoarseTaxonomy::label_of(StepTag tag) const {
  switch (level_) {
    case 6:
      return level6(tag);
    case 4:
      return level4(tag);
    case 3:
      return level3(tag);
    case 2:
      return level2(tag);
    default:
      return tag == Tag::Other ? kOther : display_name(tag);
  }
}

std::vector<std::string_view> CoarseTaxonomy::labels() const {
  std::vector<std::string_view> out;
  for (StepTag t : kAllTags) {
    std::string_view label = label_of(t);
    if (std::find(out.begin(), out.end(), label) == out.end())
      out.push_back(label);
  }
  return out;
}

std::string_view CoarseTaxonomy::constructive_label() const {
  if (level_ == 13) return "";
  return level_ == 6 ? "Setup" : "Early Reasoning";
}

std::string_view CoarseTaxonomy::evaluative_label() const {
  if (level_ == 13) return "";
  return level_ == 6 ? "Checking" : "Late Reasoning";
}

ClassPartition CoarseTaxonomy::fine_partition() const {
  if (level_ == 13) return default_partition();
  std::vector<StepTag> constructive, evaluative;
  for (StepTag t : kAllTags) {
    if (t == Tag::Other) continue;
    std::string_view label = label_of(t);
    if (label == constructive_label()) constructive.push_back(t);
    if (label == evaluative_label()) evaluative.push_back(t);
  }
  return ClassPartition("level" + std::to_string(level_), constructive,
                        evaluative);
}

std::string_view coarsen(StepTag tag, int level) {
  if (level == 13) {
    throw InvalidArgument("coarsen: level must be one of 6, 4, 3, 2");
  }
  return CoarseTaxonomy(level).label_of(tag);
}

}  // namespace stepgate
