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

// Decoding prompts built from a prefix of the original text.

#pragma once

#include <span>
#include <string>
#include <string_view>

#include "loosecf/concepts.hpp"
#include "loosecf/errors.hpp"
#include "loosecf/sentiment.hpp"
#include "loosecf/textcore.hpp"

namespace loosecf {

enum class PromptKind { kUnigram, kNeutralPrefix, kNone };

inline std::string_view PromptKindName(PromptKind k) {
  switch (k) {
    case PromptKind::kUnigram: return "unigram";
    case PromptKind::kNeutralPrefix: return "neutral_prefix";
    case PromptKind::kNone: return "none";
  }
  return "none";
}

inline std::optional<PromptKind> ParsePromptKind(std::string_view s) {
  if (s == "unigram") return PromptKind::kUnigram;
  if (s == "neutral_prefix") return PromptKind::kNeutralPrefix;
  if (s == "none") return PromptKind::kNone;
  return std::nullopt;
}

struct Prompt {
  TokenList tokens;
  PromptKind kind = PromptKind::kNone;
};

inline constexpr std::size_t kMinNeutralPrefix = 4;

// First token of the text.
inline Prompt PromptUnigram(std::string_view text) {
  auto tokens = Tokenize(text);
  if (tokens.empty()) throw ContractError("unigram prompt of empty text");
  return {{tokens.front()}, PromptKind::kUnigram};
}

// Longest strict prefix of at least four tokens whose remainder still holds
// an extracted concept and which the scorer judges neutral. Candidates are
// tried longest first. kind == kNone when nothing qualifies.
inline Prompt PromptNeutralPrefix(std::string_view text,
                                  const PolarityScorer& scorer,
                                  const ConceptLexicon& lex) {
  const TokenList tokens = Tokenize(text);
  if (tokens.size() <= kMinNeutralPrefix) return {};
  const auto spans = ExtractConcepts(tokens, lex);
  // A prefix of length L qualifies when some concept starts at or after L.
  std::size_t last_start = 0;
  bool any = false;
  for (const auto& s : spans) {
    last_start = std::max(last_start, s.start);
    any = true;
  }
  if (!any) return {};
  std::size_t longest = std::min(last_start, tokens.size() - 1);
  for (std::size_t len = longest; len >= kMinNeutralPrefix; --len) {
    std::span<const Token> prefix(tokens.data(), len);
    if (scorer.Classify(Detokenize(prefix)) == SentimentClass::kNeutral) {
      return {TokenList(prefix.begin(), prefix.end()),
              PromptKind::kNeutralPrefix};
    }
  }
  return {};
}

}  // namespace loosecf
