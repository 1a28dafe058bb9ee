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

#include "stepgate/tagger.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "lexicon_rules_embed.h"
#include "stepgate/errors.h"
#include "stepgate/types.h"

namespace stepgate {
namespace {

using Clock = std::chrono::steady_clock;

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

void require_non_blank(std::span<const StepQuery> steps) {
  for (const auto& s : steps) {
    if (is_blank(s.text)) {
      throw InvalidArgument("blank steps are not sent to the tagger (ordinal " +
                            std::to_string(s.ordinal) + ")");
    }
  }
}

}  // namespace

std::string_view tagger_kind_name(TaggerKind kind) {
  switch (kind) {
    case TaggerKind::Replay:
      return "replay";
    case TaggerKind::Lexicon:
      return "lexicon";
    case TaggerKind::Remote:
      return "remote";
    case TaggerKind::Noisy:
      return "noisy";
  }
  return "unknown";
}

TagPrediction tag_step(const StepQuery& step, const TaggerBackend& backend,
                       const ClassPartition& partition) {
  auto batch = tag_batch(std::span<const StepQuery>(&step, 1), backend, partition);
  return batch.front();
}

std::vector<TagPrediction> tag_batch(std::span<const StepQuery> steps,
                                     const TaggerBackend& backend,
                                     const ClassPartition& partition) {
  require_non_blank(steps);
  if (steps.empty()) return {};
  const auto start = Clock::now();
  std::vector<StepTag> tags = backend.classify(steps);
  const double elapsed =
      std::chrono::duration<double>(Clock::now() - start).count();
  if (tags.size() != steps.size()) {
    throw DataError("tagger returned " + std::to_string(tags.size()) +
                    " tags for " + std::to_string(steps.size()) + " steps");
  }
  std::vector<TagPrediction> out;
  out.reserve(tags.size());
  for (StepTag t : tags) {
    out.push_back({t, class_code_of(t, partition),
                   elapsed / static_cast<double>(tags.size()), backend.kind()});
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<StepTag> ReplayTagger::classify(std::span<const StepQuery> steps) const {
  std::vector<StepTag> out;
  out.reserve(steps.size());
  for (const auto& s : steps) {
    if (!s.gold) {
      throw DataError("replay tagger: step " + std::to_string(s.ordinal) +
                      " has no gold tag");
    }
    out.push_back(*s.gold);
  }
  return out;
}

// ---------------------------------------------------------------------------

LexiconTagger::LexiconTagger(std::vector<LexiconRule> rules)
    : rules_(std::move(rules)) {
  for (auto& r : rules_) {
    for (auto& t : r.triggers) {
      if (t.empty()) throw InvalidArgument("lexicon trigger must not be empty");
      t = lower(t);
    }
  }
}

LexiconTagger LexiconTagger::builtin() {
  static const LexiconTagger tagger = from_json(kBuiltinLexiconRules);
  return tagger;
}

LexiconTagger LexiconTagger::from_json(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(std::string("lexicon rules: ") + e.what());
  }
  if (!doc.contains("rules") || !doc["rules"].is_array()) {
    throw InvalidArgument("lexicon rules: missing 'rules' array");
  }
  std::vector<LexiconRule> rules;
  for (const auto& r : doc["rules"]) {
    const ParsedTag parsed = parse_tag(r.at("tag").get<std::string>());
    if (parsed.unknown) {
      throw InvalidArgument("lexicon rules: unknown tag " +
                            r.at("tag").get<std::string>());
    }
    rules.push_back({parsed.tag, r.at("triggers").get<std::vector<std::string>>()});
  }
  return LexiconTagger(std::move(rules));
}

LexiconTagger LexiconTagger::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon rules " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

StepTag LexiconTagger::match(std::string_view text) const {
  const std::string haystack = lower(text);
  for (const auto& rule : rules_) {
    for (const auto& trigger : rule.triggers) {
      if (haystack.find(trigger) != std::string::npos) return rule.tag;
    }
  }
  return StepTag::Other;
}

std::vector<StepTag> LexiconTagger::classify(std::span<const StepQuery> steps) const {
  std::vector<StepTag> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(match(s.text));
  return out;
}

// ---------------------------------------------------------------------------

TagDistribution tag_marginals(std::span<const StepTag> tags) {
  if (tags.empty()) throw InvalidArgument("tag_marginals: no tags");
  TagDistribution dist{};
  for (StepTag t : tags) dist[tag_index(t)] += 1.0;
  for (double& d : dist) d /= static_cast<double>(tags.size());
  return dist;
}

NoisyTagger::NoisyTagger(std::shared_ptr<const TaggerBackend> inner,
                         double accuracy, std::uint64_t seed,
                         const TagDistribution& marginals)
    : inner_(std::move(inner)),
      accuracy_(accuracy),
      seed_(seed),
      marginals_(marginals) {
  if (!inner_) throw InvalidArgument("noisy tagger needs an inner backend");
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
    throw InvalidArgument("noisy tagger accuracy must lie in [0, 1]");
  }
  double total = 0;
  for (double m : marginals_) {
    if (!(m >= 0.0) || !std::isfinite(m)) {
      throw InvalidArgument("tag marginals must be finite and non-negative");
    }
    total += m;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw InvalidArgument("tag marginals must sum to 1");
  }
}

StepTag NoisyTagger::perturb(StepTag gold, const StepQuery& query) const {
  std::seed_seq seq{static_cast<std::uint32_t>(seed_),
                    static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(query.stream_key),
                    static_cast<std::uint32_t>(query.stream_key >> 32),
                    static_cast<std::uint32_t>(query.ordinal),
                    static_cast<std::uint32_t>(query.ordinal >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < accuracy_) return gold;

  std::array<double, kTagCount> weights = marginals_;
  weights[tag_index(gold)] = 0.0;
  if (std::accumulate(weights.begin(), weights.end(), 0.0) <= 0.0) {
    weights.fill(1.0);
    weights[tag_index(gold)] = 0.0;
  }
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  return kAllTags[pick(rng)];
}

std::vector<StepTag> NoisyTagger::classify(std::span<const StepQuery> steps) const {
  std::vector<StepTag> gold = inner_->classify(steps);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    gold[i] = perturb(gold[i], steps[i]);
  }
  return gold;
}

std::shared_ptr<const TaggerBackend> noisy_wrap(
    std::shared_ptr<const TaggerBackend> inner, double accuracy,
    std::uint64_t seed, const TagDistribution& marginals) {
  return std::make_shared<NoisyTagger>(std::move(inner), accuracy, seed,
                                       marginals);
}

std::uint64_t stream_key_of(std::string_view id) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace stepgate
