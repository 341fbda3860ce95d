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

// CNF lexical constraints over positive phrase predicates, and the small
// per-hypothesis state that tracks clause satisfaction and in-progress
// partial matches as tokens are appended.

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "loosecf/errors.hpp"
#include "loosecf/textcore.hpp"

namespace loosecf {

// Satisfied iff `phrase` occurs contiguously in the text. Case-sensitive.
struct Predicate {
  TokenList phrase;

  friend bool operator==(const Predicate&, const Predicate&) = default;
};

// Disjunction of predicates.
struct Clause {
  std::vector<Predicate> predicates;

  friend bool operator==(const Clause&, const Clause&) = default;
};

// Conjunction of clauses. Predicates are also kept in a flat array with
// their clause index and prefix-function table so state updates are cheap.
class ConstraintSet {
 public:
  ConstraintSet() = default;

  explicit ConstraintSet(std::vector<Clause> clauses)
      : clauses_(std::move(clauses)) {
    for (std::size_t c = 0; c < clauses_.size(); ++c) {
      if (clauses_[c].predicates.empty()) {
        throw ContractError("constraint clause with no predicates");
      }
      for (const auto& p : clauses_[c].predicates) {
        if (p.phrase.empty()) {
          throw ContractError("constraint predicate with empty phrase");
        }
        for (const auto& t : p.phrase) {
          if (t.empty()) throw ContractError("constraint with empty token");
        }
        flat_.push_back({&p.phrase, static_cast<int>(c), Failure(p.phrase)});
        for (const auto& t : p.phrase) tokens_.insert(t);
      }
    }
  }

  ConstraintSet(const ConstraintSet& other)
      : ConstraintSet(other.clauses_) {}
  ConstraintSet& operator=(const ConstraintSet& other) {
    if (this != &other) *this = ConstraintSet(other.clauses_);
    return *this;
  }
  ConstraintSet(ConstraintSet&&) = default;
  ConstraintSet& operator=(ConstraintSet&&) = default;

  std::size_t size() const { return clauses_.size(); }
  bool empty() const { return clauses_.empty(); }
  const std::vector<Clause>& clauses() const { return clauses_; }

  std::size_t num_predicates() const { return flat_.size(); }
  const TokenList& phrase(std::size_t p) const { return *flat_[p].phrase; }
  int clause_of(std::size_t p) const { return flat_[p].clause; }
  const std::vector<int>& failure(std::size_t p) const {
    return flat_[p].failure;
  }

  // Every token that appears in some predicate.
  const std::set<Token>& tokens() const { return tokens_; }
  bool Mentions(std::string_view token) const {
    return tokens_.count(std::string(token)) > 0;
  }

  // Constraint-file form: one clause per line, predicates joined by `|`,
  // tokens by single spaces.
  std::string ToText() const {
    std::string out;
    for (const auto& clause : clauses_) {
      for (std::size_t i = 0; i < clause.predicates.size(); ++i) {
        if (i) out += '|';
        out += Detokenize(clause.predicates[i].phrase);
      }
      out += '\n';
    }
    return out;
  }

  static ConstraintSet FromText(std::span<const std::string> lines) {
    std::vector<Clause> clauses;
    for (const auto& line : lines) {
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      Clause clause;
      for (const auto& part : SplitString(line, '|')) {
        Predicate p;
        for (auto& t : SplitString(part, ' ')) {
          if (!t.empty()) p.phrase.push_back(std::move(t));
        }
        clause.predicates.push_back(std::move(p));
      }
      clauses.push_back(std::move(clause));
    }
    return ConstraintSet(std::move(clauses));
  }

  // JSON form: array of clauses, each an array of space-joined phrases.
  nlohmann::json ToJson() const {
    auto j = nlohmann::json::array();
    for (const auto& clause : clauses_) {
      auto jc = nlohmann::json::array();
      for (const auto& p : clause.predicates) jc.push_back(Detokenize(p.phrase));
      j.push_back(std::move(jc));
    }
    return j;
  }

  static ConstraintSet FromJson(const nlohmann::json& j) {
    if (!j.is_array()) throw IoError("constraint set must be a JSON array");
    std::vector<Clause> clauses;
    for (const auto& jc : j) {
      if (!jc.is_array()) throw IoError("clause must be a JSON array");
      Clause clause;
      for (const auto& jp : jc) {
        if (!jp.is_string()) throw IoError("predicate must be a string");
        clause.predicates.push_back({Tokenize(jp.get<std::string>())});
      }
      clauses.push_back(std::move(clause));
    }
    return ConstraintSet(std::move(clauses));
  }

  friend bool operator==(const ConstraintSet& a, const ConstraintSet& b) {
    return a.clauses_ == b.clauses_;
  }

 private:
  struct FlatPredicate {
    const TokenList* phrase;
    int clause;
    std::vector<int> failure;
  };

  // failure[i] = length of the longest proper prefix of phrase[0..i] that is
  // also a suffix of it.
  static std::vector<int> Failure(const TokenList& phrase) {
    std::vector<int> f(phrase.size(), 0);
    int k = 0;
    for (std::size_t i = 1; i < phrase.size(); ++i) {
      while (k > 0 && phrase[i] != phrase[k]) k = f[k - 1];
      if (phrase[i] == phrase[k]) ++k;
      f[i] = k;
    }
    return f;
  }

  std::vector<Clause> clauses_;
  std::vector<FlatPredicate> flat_;
  std::set<Token> tokens_;
};

// Title-cases each token's first ASCII letter: "plot devices" -> "Plot
// Devices".
inline TokenList Capitalize(std::span<const Token> phrase) {
  TokenList out(phrase.begin(), phrase.end());
  for (auto& t : out) {
    if (!t.empty() && t[0] >= 'a' && t[0] <= 'z') {
      t[0] = static_cast<char>(t[0] - 'a' + 'A');
    }
  }
  return out;
}

// One clause per distinct (lowercased) concept. With `include_capitalized`
// each clause is (Capitalized | lowercase).
inline ConstraintSet BuildCnf(std::span<const TokenList> concepts,
                              bool include_capitalized = true) {
  std::vector<Clause> clauses;
  std::set<TokenList> seen;
  for (const auto& concept_phrase : concepts) {
    if (concept_phrase.empty()) {
      throw ContractError("empty concept phrase");
    }
    TokenList lower = ToLower(concept_phrase);
    if (!seen.insert(lower).second) continue;
    Clause clause;
    if (include_capitalized) {
      TokenList cap = Capitalize(lower);
      if (cap != lower) clause.predicates.push_back({std::move(cap)});
    }
    clause.predicates.push_back({std::move(lower)});
    clauses.push_back(std::move(clause));
  }
  return ConstraintSet(std::move(clauses));
}

struct ConstraintState {
  std::vector<std::uint8_t> satisfied;  // per clause
  std::vector<int> partial;             // per flat predicate, |â|

  friend bool operator==(const ConstraintState&,
                         const ConstraintState&) = default;

  std::string Key() const {
    std::string k(satisfied.begin(), satisfied.end());
    for (int p : partial) {
      k.push_back('|');
      k += std::to_string(p);
    }
    return k;
  }
};

inline ConstraintState InitialState(const ConstraintSet& set) {
  return {std::vector<std::uint8_t>(set.size(), 0),
          std::vector<int>(set.num_predicates(), 0)};
}

// Appends one token: every tracked partial follows the prefix-function
// transition; a completed predicate satisfies its clause, and satisfied
// clauses stop tracking partials.
inline void AdvanceInPlace(ConstraintState& state, const ConstraintSet& set,
                           std::string_view token) {
  bool completed = false;
  for (std::size_t p = 0; p < set.num_predicates(); ++p) {
    int c = set.clause_of(p);
    if (state.satisfied[c]) continue;
    const TokenList& phrase = set.phrase(p);
    const auto& fail = set.failure(p);
    int k = state.partial[p];
    while (k > 0 && phrase[k] != token) k = fail[k - 1];
    if (phrase[k] == token) ++k;
    if (k == static_cast<int>(phrase.size())) {
      state.satisfied[c] = 1;
      completed = true;
      k = 0;
    }
    state.partial[p] = k;
  }
  if (completed) {
    for (std::size_t p = 0; p < set.num_predicates(); ++p) {
      if (state.satisfied[set.clause_of(p)]) state.partial[p] = 0;
    }
  }
}

inline ConstraintState Advance(ConstraintState state, const ConstraintSet& set,
                               std::string_view token) {
  AdvanceInPlace(state, set, token);
  return state;
}

inline ConstraintState StateAfter(const ConstraintSet& set,
                                  std::span<const Token> text) {
  auto state = InitialState(set);
  for (const auto& t : text) AdvanceInPlace(state, set, t);
  return state;
}

inline int SatisfiedCount(const ConstraintState& state) {
  int n = 0;
  for (auto s : state.satisfied) n += s ? 1 : 0;
  return n;
}

inline bool AllSatisfied(const ConstraintState& state) {
  return std::all_of(state.satisfied.begin(), state.satisfied.end(),
                     [](std::uint8_t s) { return s != 0; });
}

// max |â|/|a| over unsatisfied predicates with |a| >= 2; 0 if none.
inline double MaxPartialRatio(const ConstraintState& state,
                              const ConstraintSet& set) {
  double best = 0.0;
  for (std::size_t p = 0; p < set.num_predicates(); ++p) {
    const auto len = set.phrase(p).size();
    if (len < 2 || state.satisfied[set.clause_of(p)]) continue;
    double r = static_cast<double>(state.partial[p]) /
               static_cast<double>(len);
    best = std::max(best, r);
  }
  return best;
}

inline constexpr int kUnreachable = std::numeric_limits<int>::max();

// Exact minimum number of further tokens after which at least `target`
// clauses are satisfied, searching up to `cap` tokens. Returns kUnreachable
// when more than `cap` tokens would be needed.
//
// Only predicate tokens accepted by `allowed` are considered; a token that
// occurs in no predicate resets every partial, which never helps, so
// restricting the search alphabet to predicate tokens loses nothing.
template <typename AllowedFn>
int MinCompletionCost(const ConstraintState& state, const ConstraintSet& set,
                      int target, int cap, AllowedFn&& allowed) {
  const int have = SatisfiedCount(state);
  int needed = target - have;
  if (needed <= 0) return 0;

  // Per clause: tokens needed crediting the current partial (rem) and from
  // scratch (full).
  std::vector<int> rem, full;
  for (std::size_t c = 0; c < set.size(); ++c) {
    if (state.satisfied[c]) continue;
    int best = kUnreachable, best_full = kUnreachable;
    for (std::size_t p = 0; p < set.num_predicates(); ++p) {
      if (set.clause_of(p) != static_cast<int>(c)) continue;
      const auto& phrase = set.phrase(p);
      bool ok = std::all_of(phrase.begin(), phrase.end(),
                            [&](const Token& t) { return allowed(t); });
      if (!ok) continue;
      const int len = static_cast<int>(phrase.size());
      best = std::min(best, len - state.partial[p]);
      best_full = std::min(best_full, len);
    }
    if (best == kUnreachable) continue;
    rem.push_back(best);
    full.push_back(best_full);
  }
  if (static_cast<int>(rem.size()) < needed) return kUnreachable;
  std::vector<int> sorted_rem = rem;
  std::sort(sorted_rem.begin(), sorted_rem.end());
  const int lower = sorted_rem[needed - 1];
  if (lower > cap) return kUnreachable;
  // Completing one clause from its partial and then writing the other
  // phrases out in full is always a valid completion.
  long upper = std::numeric_limits<long>::max();
  for (std::size_t first = 0; first < rem.size(); ++first) {
    std::vector<int> others;
    for (std::size_t c = 0; c < full.size(); ++c) {
      if (c != first) others.push_back(full[c]);
    }
    std::sort(others.begin(), others.end());
    long total = rem[first];
    for (int i = 0; i < needed - 1; ++i) total += others[i];
    upper = std::min(upper, total);
  }
  if (lower == upper) return lower;

  std::vector<Token> alphabet;
  for (const auto& t : set.tokens()) {
    if (allowed(t)) alphabet.push_back(t);
  }
  std::unordered_set<std::string> seen{state.Key()};
  std::vector<ConstraintState> frontier{state};
  const int limit = static_cast<int>(std::min<long>(cap, upper));
  for (int depth = 1; depth <= limit; ++depth) {
    std::vector<ConstraintState> next;
    for (const auto& s : frontier) {
      for (const auto& t : alphabet) {
        auto n = Advance(s, set, t);
        if (SatisfiedCount(n) >= target) return depth;
        if (seen.insert(n.Key()).second) next.push_back(std::move(n));
      }
    }
    if (next.empty()) break;
    frontier = std::move(next);
  }
  return upper <= cap ? static_cast<int>(upper) : kUnreachable;
}

inline int MinCompletionCost(const ConstraintState& state,
                             const ConstraintSet& set, int target, int cap) {
  return MinCompletionCost(state, set, target, cap,
                           [](const Token&) { return true; });
}

// True iff no completion of at most `remaining_budget` tokens satisfies every
// clause.
inline bool Infeasible(const ConstraintState& state, const ConstraintSet& set,
                       int remaining_budget) {
  if (remaining_budget < 0) throw ContractError("negative remaining budget");
  return MinCompletionCost(state, set, static_cast<int>(set.size()),
                           remaining_budget) > remaining_budget;
}

}  // namespace loosecf
