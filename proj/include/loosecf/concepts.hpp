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

// Lexicon-backed concept extraction and embedding-based concept alteration.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "loosecf/errors.hpp"
#include "loosecf/textcore.hpp"

namespace loosecf {

class ConceptLexicon {
 public:
  static constexpr std::size_t kMaxPhraseLen = 5;

  explicit ConceptLexicon(std::span<const TokenList> entries) {
    for (const auto& e : entries) Add(e);
    if (entries_.empty()) throw ContractError("concept lexicon is empty");
  }

  // One lowercase concept per line, tokens separated by spaces.
  static ConceptLexicon FromLines(std::span<const std::string> lines) {
    std::vector<TokenList> entries;
    for (const auto& line : lines) {
      auto tokens = Tokenize(line, Casing::kLower);
      if (!tokens.empty()) entries.push_back(std::move(tokens));
    }
    return ConceptLexicon(entries);
  }

  static ConceptLexicon Load(const std::string& path) {
    auto lines = ReadLines(path);
    try {
      return FromLines(lines);
    } catch (const ContractError& e) {
      throw IoError(path + ": " + e.what());
    }
  }

  bool Contains(std::span<const Token> phrase) const {
    return entries_.count(TokenList(phrase.begin(), phrase.end())) > 0;
  }

  const std::set<TokenList>& entries() const { return entries_; }
  std::size_t max_phrase_len() const { return max_phrase_len_; }

  std::string Fingerprint() const {
    std::string all;
    for (const auto& e : entries_) {
      all += Detokenize(e);
      all += '\n';
    }
    return HexDigest(Fnv1a64(all));
  }

 private:
  void Add(const TokenList& phrase) {
    if (phrase.empty() || phrase.size() > kMaxPhraseLen) {
      throw ContractError("concept entries must have 1.." +
                          std::to_string(kMaxPhraseLen) + " tokens");
    }
    TokenList lower = ToLower(phrase);
    max_phrase_len_ = std::max(max_phrase_len_, lower.size());
    entries_.insert(std::move(lower));
  }

  std::set<TokenList> entries_;
  std::size_t max_phrase_len_ = 0;
};

struct ConceptSpan {
  TokenList phrase;  // lowercase
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive

  friend bool operator==(const ConceptSpan&, const ConceptSpan&) = default;
};

// Greedy left-to-right longest match on lowercased tokens. Spans never
// overlap and come out in source order.
inline std::vector<ConceptSpan> ExtractConcepts(std::span<const Token> tokens,
                                                const ConceptLexicon& lex) {
  TokenList lower = ToLower(tokens);
  std::vector<ConceptSpan> spans;
  std::size_t i = 0;
  while (i < lower.size()) {
    std::size_t longest = std::min(lex.max_phrase_len(), lower.size() - i);
    std::size_t matched = 0;
    for (std::size_t k = longest; k >= 1; --k) {
      if (lex.Contains(std::span<const Token>(lower).subspan(i, k))) {
        matched = k;
        break;
      }
    }
    if (matched) {
      spans.push_back({TokenList(lower.begin() + i, lower.begin() + i + matched),
                       i, i + matched});
      i += matched;
    } else {
      ++i;
    }
  }
  return spans;
}

inline std::vector<ConceptSpan> ExtractConcepts(std::string_view text,
                                                const ConceptLexicon& lex) {
  auto tokens = Tokenize(text);
  return ExtractConcepts(tokens, lex);
}

// Distinct phrases in first-occurrence order.
inline std::vector<TokenList> UniquePhrases(std::span<const ConceptSpan> spans) {
  std::vector<TokenList> out;
  std::set<TokenList> seen;
  for (const auto& s : spans) {
    if (seen.insert(s.phrase).second) out.push_back(s.phrase);
  }
  return out;
}

inline double Cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ContractError("cosine: dimension mismatch");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw ContractError("cosine: zero-norm vector");
  double c = dot / (std::sqrt(nu) * std::sqrt(nv));
  return std::clamp(c, -1.0, 1.0);
}

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

  void Add(std::string word, std::vector<double> vec) {
    if (vectors_.empty() && dim_ == 0) dim_ = vec.size();
    if (vec.size() != dim_) {
      throw ContractError("embedding for '" + word + "' has dimension " +
                          std::to_string(vec.size()) + ", expected " +
                          std::to_string(dim_));
    }
    vectors_[ToLower(word)] = std::move(vec);
  }

  // Exact match on the lowercased word.
  const std::vector<double>* Find(std::string_view word) const {
    auto it = vectors_.find(ToLower(word));
    return it == vectors_.end() ? nullptr : &it->second;
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  bool empty() const { return vectors_.empty(); }

  // Phrase vector: the underscore-joined phrase if present, else the mean of
  // the token vectors; nullopt when neither is available or the result has
  // zero norm.
  std::optional<std::vector<double>> PhraseVector(
      std::span<const Token> phrase) const {
    if (phrase.empty()) return std::nullopt;
    if (phrase.size() > 1) {
      if (const auto* v = Find(Join(phrase, "_")); v && NonZero(*v)) return *v;
    }
    std::vector<double> mean(dim_, 0.0);
    for (const auto& t : phrase) {
      const auto* v = Find(t);
      if (!v) return std::nullopt;
      for (std::size_t i = 0; i < dim_; ++i) mean[i] += (*v)[i];
    }
    for (auto& x : mean) x /= static_cast<double>(phrase.size());
    if (!NonZero(mean)) return std::nullopt;
    return mean;
  }

  // Text word-vector format: `count dim` header, then `word v1 .. vdim`.
  static EmbeddingTable FromLines(std::span<const std::string> lines,
                                  const std::string& source = "<embeddings>") {
    if (lines.empty()) throw IoError(source + ": missing header");
    auto header = Tokenize(lines[0]);
    std::size_t count = 0, dim = 0;
    try {
      if (header.size() != 2) throw std::invalid_argument("header");
      count = std::stoul(header[0]);
      dim = std::stoul(header[1]);
    } catch (const std::exception&) {
      throw IoError(source + ":1: expected `count dim` header");
    }
    EmbeddingTable table(dim);
    std::size_t seen = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      std::string where = source + ":" + std::to_string(i + 1);
      std::vector<std::string> fields;
      for (auto& f : SplitString(lines[i], ' ')) {
        if (!f.empty()) fields.push_back(std::move(f));
      }
      if (fields.size() != dim + 1) {
        throw IoError(where + ": expected word and " + std::to_string(dim) +
                      " values");
      }
      std::vector<double> vec(dim);
      for (std::size_t d = 0; d < dim; ++d) {
        try {
          vec[d] = std::stod(fields[d + 1]);
        } catch (const std::exception&) {
          throw IoError(where + ": bad value '" + fields[d + 1] + "'");
        }
      }
      table.Add(fields[0], std::move(vec));
      ++seen;
    }
    if (seen != count) {
      throw IoError(source + ": header promises " + std::to_string(count) +
                    " vectors, found " + std::to_string(seen));
    }
    return table;
  }

  std::string Fingerprint() const {
    std::string all = std::to_string(dim_) + "\n";
    char buf[40];
    for (const auto& [w, v] : vectors_) {
      all += w;
      for (double x : v) {
        std::snprintf(buf, sizeof(buf), " %.17g", x);
        all += buf;
      }
      all += '\n';
    }
    return HexDigest(Fnv1a64(all));
  }

  static EmbeddingTable Load(const std::string& path) {
    auto lines = ReadLines(path);
    return FromLines(lines, path);
  }

 private:
  static bool NonZero(const std::vector<double>& v) {
    return std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; });
  }

  std::size_t dim_ = 0;
  std::map<std::string, std::vector<double>> vectors_;
};

// Thrown when a concept cannot be altered; callers keep the original.
class NotEmbeddable : public ContractError {
 public:
  using ContractError::ContractError;
};

// Lexicon entry other than `phrase` with the highest cosine similarity to
// it. Ties go to the lexicographically smallest entry.
inline TokenList NearestConcept(std::span<const Token> phrase,
                                const EmbeddingTable& emb,
                                const ConceptLexicon& lex) {
  TokenList query = ToLower(phrase);
  auto qv = emb.PhraseVector(query);
  if (!qv) throw NotEmbeddable("'" + Detokenize(query) + "' is not embeddable");
  const TokenList* best = nullptr;
  double best_sim = -2.0;
  for (const auto& entry : lex.entries()) {
    if (entry == query) continue;
    auto ev = emb.PhraseVector(entry);
    if (!ev) continue;
    double sim = Cosine(*qv, *ev);
    // entries() is ordered, so strict > keeps the smallest entry on ties.
    if (sim > best_sim) {
      best_sim = sim;
      best = &entry;
    }
  }
  if (!best) {
    throw NotEmbeddable("no embeddable neighbour for '" + Detokenize(query) +
                        "'");
  }
  return *best;
}

}  // namespace loosecf
