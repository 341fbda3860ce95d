// Copyright 2026 The loosecf Authors.
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

// Similarity, diversity and fluency metrics between a generated text and its
// original: smoothed sentence BLEU-2, Levenshtein distance, Distinct-2 and an
// embedding soft-alignment similarity (mover_sim).

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "loosecf/concepts.hpp"
#include "loosecf/errors.hpp"
#include "loosecf/textcore.hpp"

namespace loosecf {

namespace internal {

inline std::map<TokenList, int> NgramCounts(std::span<const Token> tokens,
                                            std::size_t n) {
  std::map<TokenList, int> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[TokenList(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

}  // namespace internal

// Geometric mean of clipped 1- and 2-gram precisions, each add-1 smoothed
// ((matches + 1) / (total + 1)), times the brevity penalty. Two empty inputs
// score 1; an empty candidate against a non-empty reference scores 0.
inline double Bleu2(std::span<const Token> candidate,
                    std::span<const Token> reference) {
  if (candidate.empty() && reference.empty()) return 1.0;
  if (candidate.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 2; ++n) {
    auto cand = internal::NgramCounts(candidate, n);
    auto ref = internal::NgramCounts(reference, n);
    int total = 0, matched = 0;
    for (const auto& [gram, c] : cand) {
      total += c;
      auto it = ref.find(gram);
      if (it != ref.end()) matched += std::min(c, it->second);
    }
    log_sum += std::log((matched + 1.0) / (total + 1.0));
  }
  double c = static_cast<double>(candidate.size());
  double r = static_cast<double>(reference.size());
  double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / 2.0);
}

// Unit-cost insert/delete/substitute distance, two-row DP.
template <typename T>
std::size_t EditDistance(std::span<const T> a, std::span<const T> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

enum class EditUnit { kChar, kToken };

inline std::string_view EditUnitName(EditUnit u) {
  return u == EditUnit::kChar ? "char" : "token";
}

// kChar compares Unicode code points; kToken compares Tokenize() output.
inline std::size_t Levenshtein(std::string_view a, std::string_view b,
                               EditUnit unit = EditUnit::kChar) {
  if (unit == EditUnit::kChar) {
    auto ca = CodePoints(a), cb = CodePoints(b);
    return EditDistance<char32_t>(ca, cb);
  }
  auto ta = Tokenize(a), tb = Tokenize(b);
  return EditDistance<Token>(ta, tb);
}

// Unique bigrams over total bigrams across the collection. Bigrams do not
// span text boundaries.
inline double Distinct2(std::span<const TokenList> texts) {
  std::set<std::pair<Token, Token>> unique;
  std::size_t total = 0;
  for (const auto& t : texts) {
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
      unique.emplace(t[i], t[i + 1]);
      ++total;
    }
  }
  if (total == 0) throw ContractError("distinct2: no bigrams");
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

namespace internal {

inline std::vector<const std::vector<double>*> Embeddable(
    std::span<const Token> tokens, const EmbeddingTable& emb) {
  std::vector<const std::vector<double>*> out;
  for (const auto& t : tokens) {
    const auto* v = emb.Find(t);
    if (v && std::any_of(v->begin(), v->end(),
                         [](double x) { return x != 0.0; })) {
      out.push_back(v);
    }
  }
  return out;
}

inline double MeanMaxCosine(const std::vector<const std::vector<double>*>& from,
                            const std::vector<const std::vector<double>*>& to) {
  double sum = 0.0;
  for (const auto* u : from) {
    double best = -1.0;
    for (const auto* v : to) best = std::max(best, Cosine(*u, *v));
    sum += best;
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace internal

// Relaxed soft alignment: the two directional means of each token's best
// cosine on the other side are averaged, then mapped from [-1, 1] to [0, 1].
// Tokens without a (non-zero) vector are ignored.
inline double MoverSim(std::span<const Token> a, std::span<const Token> b,
                       const EmbeddingTable& emb) {
  auto va = internal::Embeddable(a, emb);
  auto vb = internal::Embeddable(b, emb);
  if (va.empty() || vb.empty()) {
    throw ContractError("mover_sim: a side has no embeddable token");
  }
  double ab = internal::MeanMaxCosine(va, vb);
  double ba = internal::MeanMaxCosine(vb, va);
  double sim = (ab + ba) / 2.0;
  return std::clamp((sim + 1.0) / 2.0, 0.0, 1.0);
}

struct MetricReport {
  double bleu2 = 0.0;
  std::size_t levenshtein = 0;
  double mover_sim = 0.0;
  double ppl = 1.0;
  double distinct2 = 0.0;
};

}  // namespace loosecf
