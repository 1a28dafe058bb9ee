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

#include "stepgate/metrics.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <regex>

#include "stepgate/errors.h"

namespace stepgate {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// True when s is "{...}" with the opening brace closed by the last char.
bool wrapped_in_braces(std::string_view s) {
  if (s.size() < 2 || s.front() != '{' || s.back() != '}') return false;
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '{') ++depth;
    if (s[i] == '}' && --depth == 0 && i + 1 != s.size()) return false;
  }
  return depth == 0;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos;
       pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::string reduce_fraction(const std::string& num, const std::string& den) {
  // Integers that overflow long long are left as written.
  try {
    long long a = std::stoll(num);
    long long b = std::stoll(den);
    if (b == 0) return num + "/" + den;
    if (b < 0) {
      a = -a;
      b = -b;
    }
    const long long g = std::gcd(a, b);
    if (g > 1) {
      a /= g;
      b /= g;
    }
    return b == 1 ? std::to_string(a) : std::to_string(a) + "/" + std::to_string(b);
  } catch (const std::out_of_range&) {
    return num + "/" + den;
  }
}

char upper(char c) { return static_cast<char>(std::toupper(static_cast<unsigned char>(c))); }

}  // namespace

std::optional<std::string> extract_boxed(std::string_view text) {
  constexpr std::string_view kOpen = "\\boxed{";
  std::optional<std::string> last;
  for (std::size_t pos = text.find(kOpen); pos != std::string_view::npos;
       pos = text.find(kOpen, pos + 1)) {
    const std::size_t begin = pos + kOpen.size();
    int depth = 1;
    std::size_t i = begin;
    for (; i < text.size() && depth > 0; ++i) {
      if (text[i] == '{') ++depth;
      if (text[i] == '}') --depth;
    }
    if (depth == 0) last = std::string(text.substr(begin, i - 1 - begin));
  }
  return last;
}

std::optional<char> extract_choice(std::string_view text) {
  for (std::size_t i = text.size(); i-- > 0;) {
    const char c = text[i];
    if (c < 'A' || c > 'J') continue;
    const bool left = i == 0 || !std::isalnum(static_cast<unsigned char>(text[i - 1]));
    const bool right =
        i + 1 == text.size() || !std::isalnum(static_cast<unsigned char>(text[i + 1]));
    if (left && right) return c;
  }
  return std::nullopt;
}

std::string normalize_math_answer(std::string_view answer) {
  std::string s(trim(answer));
  while (true) {
    std::string_view v = trim(s);
    if (v.size() >= 2 && v.front() == '$' && v.back() == '$') {
      s = std::string(v.substr(1, v.size() - 2));
    } else if (wrapped_in_braces(v)) {
      s = std::string(v.substr(1, v.size() - 2));
    } else {
      s = std::string(v);
      break;
    }
  }
  for (std::string_view spacing : {"\\!", "\\,", "\\;", "\\left", "\\right"}) {
    replace_all(s, spacing, "");
  }
  replace_all(s, "\\dfrac", "\\frac");
  replace_all(s, "\\tfrac", "\\frac");
  s.erase(std::remove_if(s.begin(), s.end(),
                         [](unsigned char c) { return std::isspace(c); }),
          s.end());
  while (!s.empty() && s.back() == '.') s.pop_back();

  static const std::regex kThousands(R"(-?\d{1,3}(,\d{3})+(\.\d+)?)");
  if (std::regex_match(s, kThousands)) replace_all(s, ",", "");

  static const std::regex kDecimal(R"((-?\d*)\.(\d+))");
  static const std::regex kFraction(R"((-?\d+)/(-?\d+))");
  static const std::regex kLatexFraction(R"((-?)\\frac\{?(\d+)\}?\{?(\d+)\}?)");
  std::smatch m;
  if (std::regex_match(s, m, kDecimal)) {
    std::string frac = m[2].str();
    while (!frac.empty() && frac.back() == '0') frac.pop_back();
    std::string whole = m[1].str();
    if (whole.empty() || whole == "-") whole += "0";
    s = frac.empty() ? whole : whole + "." + frac;
    if (s == "-0") s = "0";
  } else if (std::regex_match(s, m, kFraction)) {
    s = reduce_fraction(m[1].str(), m[2].str());
  } else if (std::regex_match(s, m, kLatexFraction)) {
    s = reduce_fraction(m[1].str() + m[2].str(), m[3].str());
  }
  return s;
}

AnswerCheck check_answer_detailed(std::string_view candidate, std::string_view gold,
                                  AnswerMode mode) {
  AnswerCheck out;
  if (mode == AnswerMode::BoxedMath) {
    auto boxed = extract_boxed(candidate);
    if (!boxed) return out;
    out.parsed = true;
    out.extracted = *boxed;
    out.correct = answers_match(*boxed, gold, mode);
    return out;
  }
  auto choice = extract_choice(candidate);
  if (!choice) return out;
  out.parsed = true;
  out.extracted = std::string(1, *choice);
  out.correct = answers_match(out.extracted, gold, mode);
  return out;
}

bool check_answer(std::string_view candidate, std::string_view gold, AnswerMode mode) {
  return check_answer_detailed(candidate, gold, mode).correct;
}

bool answers_match(std::string_view answer, std::string_view gold, AnswerMode mode) {
  if (mode == AnswerMode::BoxedMath) {
    std::string a(answer);
    if (auto boxed = extract_boxed(answer)) a = *boxed;
    const std::string na = normalize_math_answer(a);
    return !na.empty() && na == normalize_math_answer(gold);
  }
  auto pick = [](std::string_view s) -> std::optional<char> {
    const std::string_view t = trim(s);
    if (t.size() == 1 && std::isalpha(static_cast<unsigned char>(t[0]))) return upper(t[0]);
    std::string up(t);
    std::transform(up.begin(), up.end(), up.begin(), upper);
    return extract_choice(up);
  };
  const auto a = pick(answer);
  const auto g = pick(gold);
  return a && g && *a == *g;
}

double saved_pct(double tokens_method, double tokens_standard) {
  if (!(tokens_standard > 0)) {
    throw InvalidArgument("standard token count must be positive");
  }
  return 100.0 * (1.0 - tokens_method / tokens_standard);
}

AtK at_k(const std::vector<std::vector<bool>>& matrix) {
  if (matrix.empty()) throw InvalidArgument("at_k needs at least one sample");
  const std::size_t k = matrix.front().size();
  if (k == 0) throw InvalidArgument("at_k needs k >= 1");
  std::size_t hits = 0;
  std::size_t any = 0;
  std::size_t all = 0;
  for (const auto& row : matrix) {
    if (row.size() != k) throw InvalidArgument("ragged correctness matrix");
    const auto n = static_cast<std::size_t>(std::count(row.begin(), row.end(), true));
    hits += n;
    any += n > 0 ? 1 : 0;
    all += n == k ? 1 : 0;
  }
  const double rows = static_cast<double>(matrix.size());
  return {static_cast<double>(hits) / (rows * static_cast<double>(k)),
          static_cast<double>(any) / rows, static_cast<double>(all) / rows};
}

LatencyModel fit_latency(std::span<const TokenTiming> points) {
  if (points.size() < 2) throw FitError("latency fit needs at least two points");
  const double n = static_cast<double>(points.size());
  double mx = 0;
  double my = 0;
  for (const auto& p : points) {
    mx += p.tokens;
    my += p.seconds;
  }
  mx /= n;
  my /= n;
  double sxx = 0;
  double sxy = 0;
  double syy = 0;
  for (const auto& p : points) {
    const double dx = p.tokens - mx;
    const double dy = p.seconds - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0)) throw FitError("latency fit needs at least two distinct token counts");
  LatencyModel m;
  m.slope = sxy / sxx;
  m.intercept = my - m.slope * mx;
  m.n = points.size();
  double ss_res = 0;
  for (const auto& p : points) {
    const double r = p.seconds - m.predict(p.tokens);
    ss_res += r * r;
  }
  m.r_squared = syy > 0 ? 1.0 - ss_res / syy : 1.0;
  return m;
}

RuntimeBreakdown compose_runtime(double r_stopped, double r_classifier,
                                 double r_completion, double r_standard) {
  RuntimeBreakdown b;
  b.stopped = r_stopped;
  b.classifier = r_classifier;
  b.completion = r_completion;
  b.total = r_stopped + r_classifier + r_completion;
  b.standard = r_standard;
  if (!(b.total > 0)) throw InvalidArgument("composed runtime must be positive");
  b.speedup = r_standard / b.total;
  return b;
}

RuntimeBreakdown estimate_runtime(const LatencyModel& model, double tokens_stopped,
                                  double r_classifier, double r_completion,
                                  double r_standard) {
  return compose_runtime(model.predict(tokens_stopped), r_classifier, r_completion,
                         r_standard);
}

double fleiss_kappa(const std::vector<std::vector<std::string>>& ratings) {
  if (ratings.empty()) throw InvalidArgument("fleiss_kappa needs at least one item");
  const std::size_t raters = ratings.front().size();
  if (raters < 2) throw InvalidArgument("fleiss_kappa needs at least two raters");
  std::map<std::string, double> totals;
  double p_bar = 0;
  for (const auto& item : ratings) {
    if (item.size() != raters) throw InvalidArgument("every item needs the same rater count");
    std::map<std::string, double> counts;
    for (const auto& r : item) counts[r] += 1;
    double sq = 0;
    for (const auto& [cat, c] : counts) {
      sq += c * c;
      totals[cat] += c;
    }
    const double n = static_cast<double>(raters);
    p_bar += (sq - n) / (n * (n - 1));
  }
  if (totals.size() < 2) return 1.0;
  const double items = static_cast<double>(ratings.size());
  p_bar /= items;
  double p_e = 0;
  for (const auto& [cat, c] : totals) {
    const double p = c / (items * static_cast<double>(raters));
    p_e += p * p;
  }
  if (p_e == 1.0) throw DataError("fleiss_kappa is undefined for this table");
  return (p_bar - p_e) / (1.0 - p_e);
}

double cohen_kappa(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.size() != b.size()) throw InvalidArgument("cohen_kappa needs equal-length inputs");
  if (a.empty()) throw InvalidArgument("cohen_kappa needs at least one item");
  std::map<std::string, std::pair<double, double>> margins;
  double agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    margins[a[i]].first += 1;
    margins[b[i]].second += 1;
    if (a[i] == b[i]) agree += 1;
  }
  const double n = static_cast<double>(a.size());
  const double p_o = agree / n;
  if (margins.size() < 2 && p_o == 1.0) return 1.0;
  double p_e = 0;
  for (const auto& [cat, m] : margins) p_e += (m.first / n) * (m.second / n);
  if (p_e == 1.0) throw DataError("cohen_kappa is undefined for these ratings");
  return (p_o - p_e) / (1.0 - p_e);
}

std::vector<bool> pareto_frontier(std::span<const ParetoPoint> points) {
  std::vector<bool> flags(points.size(), true);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < points.size(); ++j) {
      const auto& p = points[i];
      const auto& q = points[j];
      if (q.tokens <= p.tokens && q.accuracy >= p.accuracy &&
          (q.tokens < p.tokens || q.accuracy > p.accuracy)) {
        flags[i] = false;
        break;
      }
    }
  }
  return flags;
}

double mean(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("mean of an empty sequence");
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

double sample_std(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw InvalidArgument("spearman needs two equal-length sequences of size >= 2");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mx = mean(rx);
  const double my = mean(ry);
  double sxy = 0;
  double sxx = 0;
  double syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace stepgate
