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
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stepgate/taxonomy.h"

namespace stepgate {

enum class TaggerKind : std::uint8_t { Replay, Lexicon, Remote, Noisy };

std::string_view tagger_kind_name(TaggerKind kind);

// One step handed to a tagger. `gold` feeds the replay backend; `stream_key`
// and `ordinal` key the noisy backend's per-step randomness.
struct StepQuery {
  std::string_view text;
  std::size_t ordinal = 0;
  std::optional<StepTag> gold;
  std::uint64_t stream_key = 0;
};

struct TagPrediction {
  StepTag tag = StepTag::Other;
  ClassCode class_code = ClassCode::Other;
  double latency_s = 0;
  TaggerKind source = TaggerKind::Replay;
};

// Backends are immutable after construction; classify() is safe to call from
// several threads.
class TaggerBackend {
 public:
  virtual ~TaggerBackend() = default;
  virtual TaggerKind kind() const = 0;
  // Exactly one tag per query, in order. Any failure fails the whole batch.
  virtual std::vector<StepTag> classify(std::span<const StepQuery> steps) const = 0;
};

// Throws InvalidArgument on a blank step.
TagPrediction tag_step(const StepQuery& step, const TaggerBackend& backend,
                       const ClassPartition& partition);

// Batch latency is split evenly across predictions.
std::vector<TagPrediction> tag_batch(std::span<const StepQuery> steps,
                                     const TaggerBackend& backend,
                                     const ClassPartition& partition);

// Identity on gold tags; throws DataError when a query has none.
class ReplayTagger final : public TaggerBackend {
 public:
  TaggerKind kind() const override { return TaggerKind::Replay; }
  std::vector<StepTag> classify(std::span<const StepQuery> steps) const override;
};

struct LexiconRule {
  StepTag tag;
  std::vector<std::string> triggers;  // lower-case substrings
};

// Ordered, case-insensitive trigger table. First matching rule wins; no match
// yields Other.
class LexiconTagger final : public TaggerBackend {
 public:
  explicit LexiconTagger(std::vector<LexiconRule> rules);

  // The rule table bundled with the library.
  static LexiconTagger builtin();
  static LexiconTagger from_json(std::string_view json_text);
  static LexiconTagger from_file(const std::filesystem::path& path);

  TaggerKind kind() const override { return TaggerKind::Lexicon; }
  std::vector<StepTag> classify(std::span<const StepQuery> steps) const override;
  StepTag match(std::string_view text) const;
  const std::vector<LexiconRule>& rules() const { return rules_; }

 private:
  std::vector<LexiconRule> rules_;
};

struct RemoteTaggerConfig {
  std::string base_url;  // e.g. "http://127.0.0.1:8700"
  std::string taxonomy = "reasontype13";
  std::chrono::milliseconds timeout{10000};
  bool fallback_to_other = false;  // on transport failure tag Other instead of throwing
};

struct HealthStatus {
  std::string status;
  std::string model_id;
};

// Client for the tagging service: POST /v1/tag {"steps": [...],
// "taxonomy": ...} -> {"tags": [...]}; GET /health.
class RemoteTagger final : public TaggerBackend {
 public:
  explicit RemoteTagger(RemoteTaggerConfig config);

  TaggerKind kind() const override { return TaggerKind::Remote; }
  std::vector<StepTag> classify(std::span<const StepQuery> steps) const override;
  HealthStatus health() const;
  const RemoteTaggerConfig& config() const { return config_; }

 private:
  RemoteTaggerConfig config_;
};

using TagDistribution = std::array<double, kTagCount>;

// Empirical tag frequencies; throws InvalidArgument on an empty input.
TagDistribution tag_marginals(std::span<const StepTag> tags);

// Treats the inner tag as gold and keeps it with probability `accuracy`;
// otherwise substitutes a different tag drawn from `marginals` renormalized
// without the gold tag (uniform over the rest when that mass is zero).
class NoisyTagger final : public TaggerBackend {
 public:
  NoisyTagger(std::shared_ptr<const TaggerBackend> inner, double accuracy,
              std::uint64_t seed, const TagDistribution& marginals);

  TaggerKind kind() const override { return TaggerKind::Noisy; }
  std::vector<StepTag> classify(std::span<const StepQuery> steps) const override;
  double accuracy() const { return accuracy_; }
  std::uint64_t seed() const { return seed_; }

 private:
  StepTag perturb(StepTag gold, const StepQuery& query) const;

  std::shared_ptr<const TaggerBackend> inner_;
  double accuracy_;
  std::uint64_t seed_;
  TagDistribution marginals_;
};

std::shared_ptr<const TaggerBackend> noisy_wrap(
    std::shared_ptr<const TaggerBackend> inner, double accuracy,
    std::uint64_t seed, const TagDistribution& marginals);

// Stable key for a trace id (FNV-1a), used as StepQuery::stream_key.
std::uint64_t stream_key_of(std::string_view id);

}  // namespace stepgate
