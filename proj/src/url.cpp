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

#include "url.h"

#include "stepgate/errors.h"

namespace stepgate::detail {

UrlParts split_url(std::string_view url) {
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw InvalidArgument("URL needs an http:// or https:// scheme: " +
                          std::string(url));
  }
  const std::string_view scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw InvalidArgument("unsupported URL scheme: " + std::string(scheme));
  }
  const std::size_t path_start = url.find('/', scheme_end + 3);
  UrlParts parts;
  if (path_start == std::string_view::npos) {
    parts.origin = std::string(url);
  } else {
    parts.origin = std::string(url.substr(0, path_start));
    parts.path = std::string(url.substr(path_start));
  }
  while (parts.path.size() > 1 && parts.path.back() == '/') parts.path.pop_back();
  if (parts.path == "/") parts.path.clear();
  return parts;
}

}  // namespace stepgate::detail
