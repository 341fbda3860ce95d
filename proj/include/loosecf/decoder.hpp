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

// Constrained beam search. Each step expands every live hypothesis by every
// generable token, blocks repeated n-grams, prunes expansions that can no
// longer reach the target clause count within the length budget, groups the
// survivors by satisfied-clause count, and fills the beam round-robin across
// the retained groups by step score. An EOS expansion that meets the target
// finishes directly instead of competing for a beam slot. Finished
// hypotheses are ranked by
//
//   objective = normalize(logprob, L) - lambda * (m - satisfied)
//
// with normalize(s, L) = s / ((5 + L) / 6)^alpha.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "loosecf/constraints.hpp"
#include "loosecf/errors.hpp"
#include "loosecf/ngram_lm.hpp"
#include "loosecf/textcore.hpp"

namespace loosecf {

enum class LengthPenaltyForm { kGnmt, kPower };

struct DecoderConfig {
  int beam_size = 20;
  double length_penalty_alpha = 0.3;
  int no_repeat_ngram = 2;  // 0 disables blocking
  double beta = 1.25;       // in-progress partial-match reward
  int sat_tolerance = 2;
  double lambda = 10.0;     // per-clause penalty in the final objective
  int max_len = 64;         // prompt + generated tokens, EOS excluded
  LengthPenaltyForm length_penalty_form = LengthPenaltyForm::kGnmt;
  bool length_penalty_in_search = true;
  bool length_penalty_in_ranking = true;
  bool prompt_in_repeat_window = true;

  void Validate() const {
    if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
    if (max_len < 1) throw ConfigError("max_len must be >= 1");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
    if (no_repeat_ngram < 0) throw ConfigError("no_repeat_ngram must be >= 0");
    if (sat_tolerance < 0) throw ConfigError("sat_tolerance must be >= 0");
    if (!std::isfinite(length_penalty_alpha)) {
      throw ConfigError("length_penalty_alpha must be finite");
    }
  }
};

inline double LengthNormalize(double logprob, std::size_t length, double alpha,
                              LengthPenaltyForm form = LengthPenaltyForm::kGnmt) {
  if (length == 0) return logprob;
  double l = static_cast<double>(length);
  double denom = form == LengthPenaltyForm::kGnmt
                     ? std::pow((5.0 + l) / 6.0, alpha)
                     : std::pow(l, alpha);
  return logprob / denom;
}

struct Hypothesis {
  std::vector<TokenId> tokens;  // generated, prompt and EOS excluded
  double logprob = 0.0;
  ConstraintState cstate;
  bool finished = false;  // EOS emitted
};

inline double StepScore(const Hypothesis& h, const ConstraintSet& set,
                        const DecoderConfig& cfg) {
  double s = cfg.length_penalty_in_search
                 ? LengthNormalize(h.logprob, h.tokens.size(),
                                   cfg.length_penalty_alpha,
                                   cfg.length_penalty_form)
                 : h.logprob;
  return s + cfg.beta * MaxPartialRatio(h.cstate, set);
}

struct Generation {
  TokenList tokens;
  double logprob = 0.0;
  int satisfied_clauses = 0;
  double objective = 0.0;
  double normalized_score = 0.0;
  bool ended_with_eos = false;
};

inline double Objective(double logprob, std::size_t length, int satisfied,
                        std::size_t num_clauses, const DecoderConfig& cfg) {
  double s = cfg.length_penalty_in_ranking
                 ? LengthNormalize(logprob, length, cfg.length_penalty_alpha,
                                   cfg.length_penalty_form)
                 : logprob;
  return s - cfg.lambda * static_cast<double>(
                              static_cast<int>(num_clauses) - satisfied);
}

// Greatest clause count reachable from `state` within `budget` tokens.
template <typename AllowedFn>
int ReachableTarget(const ConstraintState& state, const ConstraintSet& set,
                    int budget, AllowedFn&& allowed) {
  for (int k = static_cast<int>(set.size()); k > SatisfiedCount(state); --k) {
    if (MinCompletionCost(state, set, k, budget, allowed) <= budget) return k;
  }
  return SatisfiedCount(state);
}

inline std::vector<Generation> Decode(const LanguageModel& lm,
                                      std::span<const Token> prompt,
                                      const ConstraintSet& set,
                                      const DecoderConfig& cfg) {
  cfg.Validate();
  const Vocabulary& vocab = lm.vocabulary();
  if (vocab.user_size() == 0) throw ContractError("decode: empty vocabulary");
  if (static_cast<int>(prompt.size()) > cfg.max_len) {
    throw ContractError("decode: prompt longer than max_len");
  }
  const int budget = cfg.max_len - static_cast<int>(prompt.size());
  const std::size_t m = set.size();
  const TokenId vsize = static_cast<TokenId>(vocab.size());

  std::vector<TokenId> prompt_ids = ToIdsOrUnk(vocab, prompt);
  // Repetition window ids: OOV prompt words get distinct ids past the
  // vocabulary so they neither collide with UNK nor with each other.
  std::vector<TokenId> window_ids;
  if (cfg.prompt_in_repeat_window) {
    std::unordered_map<std::string, TokenId> oov;
    for (std::size_t i = 0; i < prompt.size(); ++i) {
      if (prompt_ids[i] != Vocabulary::kUnk) {
        window_ids.push_back(prompt_ids[i]);
      } else {
        auto [it, _] = oov.emplace(prompt[i], vsize + static_cast<TokenId>(oov.size()));
        window_ids.push_back(it->second);
      }
    }
  }

  std::vector<std::uint8_t> mentioned(vocab.size(), 0);
  for (TokenId id = Vocabulary::kEos + 1; id < vsize; ++id) {
    mentioned[id] = set.Mentions(vocab.token(id)) ? 1 : 0;
  }
  auto allowed = [&](const Token& t) {
    auto id = vocab.Find(t);
    return id && *id > Vocabulary::kEos;
  };

  const ConstraintState start = StateAfter(set, prompt);
  const int target = ReachableTarget(start, set, budget, allowed);
  std::unordered_map<std::string, int> cost_cache;
  auto cost = [&](const ConstraintState& s) {
    auto key = s.Key();
    auto it = cost_cache.find(key);
    if (it != cost_cache.end()) return it->second;
    int c = MinCompletionCost(s, set, target, budget, allowed);
    cost_cache.emplace(std::move(key), c);
    return c;
  };

  auto strings_of = [&](const std::vector<TokenId>& ids) {
    TokenList out;
    out.reserve(ids.size());
    for (TokenId id : ids) out.push_back(vocab.token(id));
    return out;
  };

  std::vector<Hypothesis> live(1);
  live[0].cstate = start;
  std::vector<TokenList> live_surface(1);  // generated strings per live hyp
  std::vector<Hypothesis> finished;
  if (budget == 0) {
    // The prompt already fills max_len.
    finished = std::move(live);
    live.clear();
  }

  // A candidate refers to its parent and to a state in `states`; tokens
  // outside every predicate share the parent's reset state.
  struct Candidate {
    int parent;
    TokenId token;
    int state;
    double logprob;
    double score;
    int satisfied;
  };
  auto ranks_before = [&](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    const TokenList& pa = live_surface[a.parent];
    const TokenList& pb = live_surface[b.parent];
    if (pa != pb) {
      // Same length, so the first difference decides.
      return std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(),
                                          pb.end());
    }
    return vocab.token(a.token) < vocab.token(b.token);
  };

  std::vector<std::uint8_t> banned(vocab.size(), 0);
  for (int step = 0; !live.empty(); ++step) {
    const int remaining_after = budget - (step + 1);
    std::vector<Candidate> candidates;
    std::vector<ConstraintState> states;

    for (std::size_t hi = 0; hi < live.size(); ++hi) {
      const Hypothesis& h = live[hi];
      std::vector<TokenId> context = prompt_ids;
      context.insert(context.end(), h.tokens.begin(), h.tokens.end());
      const std::vector<double> row = lm.NextLogprobs(context);

      // Tokens that would complete an already-seen n-gram.
      std::fill(banned.begin(), banned.end(), 0);
      const int n = cfg.no_repeat_ngram;
      if (n >= 1) {
        std::vector<TokenId> seq = window_ids;
        seq.insert(seq.end(), h.tokens.begin(), h.tokens.end());
        const std::size_t k = static_cast<std::size_t>(n - 1);
        for (std::size_t i = 0; i + k < seq.size(); ++i) {
          if (std::equal(seq.begin() + i, seq.begin() + i + k,
                         seq.end() - k) &&
              seq[i + k] < vsize) {
            banned[seq[i + k]] = 1;
          }
        }
      }

      // EOS ends the hypothesis only once the target is met; it goes
      // straight to the finished pool.
      if (row[Vocabulary::kEos] != kNegInf && cost(h.cstate) == 0) {
        Hypothesis done = h;
        done.logprob += row[Vocabulary::kEos];
        done.finished = true;
        finished.push_back(std::move(done));
      }

      int reset_state = -1;
      for (TokenId tok = Vocabulary::kEos + 1; tok < vsize; ++tok) {
        const double lp = row[tok];
        if (lp == kNegInf || banned[tok]) continue;
        int state;
        if (mentioned[tok]) {
          states.push_back(Advance(h.cstate, set, vocab.token(tok)));
          state = static_cast<int>(states.size()) - 1;
        } else {
          if (reset_state < 0) {
            states.push_back(h.cstate);
            std::fill(states.back().partial.begin(),
                      states.back().partial.end(), 0);
            reset_state = static_cast<int>(states.size()) - 1;
          }
          state = reset_state;
        }
        if (cost(states[state]) > remaining_after) continue;
        const double logprob = h.logprob + lp;
        const ConstraintState& cs = states[state];
        double s = cfg.length_penalty_in_search
                       ? LengthNormalize(logprob, h.tokens.size() + 1,
                                         cfg.length_penalty_alpha,
                                         cfg.length_penalty_form)
                       : logprob;
        s += cfg.beta * MaxPartialRatio(cs, set);
        candidates.push_back(
            {static_cast<int>(hi), tok, state, logprob, s, SatisfiedCount(cs)});
      }
    }

    if (candidates.empty()) {
      // Nothing survives pruning: keep what we have rather than nothing.
      if (finished.empty()) {
        for (auto& h : live) finished.push_back(std::move(h));
      }
      break;
    }

    // Group by satisfied count, dropping groups beyond the tolerance.
    int best_count = 0;
    for (const auto& c : candidates) best_count = std::max(best_count, c.satisfied);
    const int floor_count = best_count - cfg.sat_tolerance;
    std::vector<std::vector<int>> groups(best_count + 1);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (candidates[i].satisfied >= floor_count) {
        groups[candidates[i].satisfied].push_back(static_cast<int>(i));
      }
    }
    const std::size_t beam = static_cast<std::size_t>(cfg.beam_size);
    for (auto& g : groups) {
      auto by_rank = [&](int a, int b) {
        return ranks_before(candidates[a], candidates[b]);
      };
      if (g.size() > beam) {
        std::partial_sort(g.begin(), g.begin() + beam, g.end(), by_rank);
        g.resize(beam);
      } else {
        std::sort(g.begin(), g.end(), by_rank);
      }
    }

    // Round-robin from the most satisfied group down.
    std::vector<int> selected;
    for (std::size_t round = 0; selected.size() < beam; ++round) {
      bool any = false;
      for (int g = best_count; g >= 0 && selected.size() < beam; --g) {
        if (round < groups[g].size()) {
          selected.push_back(groups[g][round]);
          any = true;
        }
      }
      if (!any) break;
    }

    std::vector<Hypothesis> next_live;
    std::vector<TokenList> next_surface;
    for (int ci : selected) {
      const Candidate& c = candidates[ci];
      Hypothesis h;
      h.tokens = live[c.parent].tokens;
      h.tokens.push_back(c.token);
      h.logprob = c.logprob;
      h.cstate = states[c.state];
      TokenList surface = live_surface[c.parent];
      surface.push_back(vocab.token(c.token));
      next_live.push_back(std::move(h));
      next_surface.push_back(std::move(surface));
    }
    live = std::move(next_live);
    live_surface = std::move(next_surface);
    if (step + 1 >= budget) {
      // Length budget exhausted: force-finish without EOS.
      for (auto& h : live) finished.push_back(std::move(h));
      live.clear();
    }
  }

  std::vector<Generation> out;
  out.reserve(finished.size());
  for (const auto& h : finished) {
    Generation g;
    g.tokens = strings_of(h.tokens);
    g.logprob = h.logprob;
    g.satisfied_clauses = SatisfiedCount(h.cstate);
    g.normalized_score =
        LengthNormalize(h.logprob, h.tokens.size(), cfg.length_penalty_alpha,
                        cfg.length_penalty_form);
    g.objective = Objective(h.logprob, h.tokens.size(), g.satisfied_clauses,
                            m, cfg);
    g.ended_with_eos = h.finished;
    out.push_back(std::move(g));
  }
  std::sort(out.begin(), out.end(),
            [](const Generation& a, const Generation& b) {
              if (a.objective != b.objective) return a.objective > b.objective;
              if (a.tokens != b.tokens) return a.tokens < b.tokens;
              return a.ended_with_eos > b.ended_with_eos;
            });
  return out;
}

}  // namespace loosecf
