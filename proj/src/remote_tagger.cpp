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

#include <json.hpp>

#include "stepgate/errors.h"
#include "stepgate/tagger.h"
#include "url.h"

namespace stepgate {
namespace {

httplib::Client make_client(const RemoteTaggerConfig& config,
                            const detail::UrlParts& url) {
  httplib::Client client(url.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(
      config.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  return client;
}

std::vector<StepTag> request_tags(const RemoteTaggerConfig& config,
                                  std::span<const StepQuery> steps) {
  const auto url = detail::split_url(config.base_url);
  auto client = make_client(config, url);

  nlohmann::json body;
  body["steps"] = nlohmann::json::array();
  for (const auto& s : steps) body["steps"].push_back(std::string(s.text));
  body["taxonomy"] = config.taxonomy;

  auto res = client.Post(url.path + "/v1/tag", body.dump(), "application/json");
  if (!res) {
    throw TransportError("tagger service unreachable at " + config.base_url +
                         ": " + httplib::to_string(res.error()));
  }
  if (res->status >= 400) {
    throw TransportError("tagger service returned HTTP " +
                         std::to_string(res->status));
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error&) {
    throw TransportError("tagger service sent malformed JSON: " + res->body);
  }
  if (!doc.is_object() || !doc.contains("tags") || !doc["tags"].is_array()) {
    throw TransportError("tagger response lacks a 'tags' array");
  }
  const auto& tags = doc["tags"];
  if (tags.size() != steps.size()) {
    throw TransportError("tagger returned " + std::to_string(tags.size()) +
                         " tags for " + std::to_string(steps.size()) + " steps");
  }
  std::vector<StepTag> out;
  out.reserve(tags.size());
  for (const auto& t : tags) {
    if (!t.is_string()) throw TransportError("tagger returned a non-string tag");
    const ParsedTag parsed = parse_tag(t.get<std::string>());
    if (parsed.unknown) {
      throw TransportError("tagger returned unknown label '" +
                           t.get<std::string>() + "'");
    }
    out.push_back(parsed.tag);
  }
  return out;
}

}  // namespace

RemoteTagger::RemoteTagger(RemoteTaggerConfig config) : config_(std::move(config)) {
  detail::split_url(config_.base_url);
}

std::vector<StepTag> RemoteTagger::classify(std::span<const StepQuery> steps) const {
  if (steps.empty()) return {};
  try {
    return request_tags(config_, steps);
  } catch (const TransportError&) {
    if (!config_.fallback_to_other) throw;
    return std::vector<StepTag>(steps.size(), StepTag::Other);
  }
}

HealthStatus RemoteTagger::health() const {
  const auto url = detail::split_url(config_.base_url);
  auto client = make_client(config_, url);
  auto res = client.Get(url.path + "/health");
  if (!res) {
    throw TransportError("tagger service unreachable at " + config_.base_url);
  }
  if (res->status >= 400) {
    throw TransportError("tagger /health returned HTTP " +
                         std::to_string(res->status));
  }
  try {
    const auto doc = nlohmann::json::parse(res->body);
    return {doc.at("status").get<std::string>(),
            doc.value("model_id", std::string())};
  } catch (const nlohmann::json::exception&) {
    throw TransportError("malformed /health response: " + res->body);
  }
}

}  // namespace stepgate
