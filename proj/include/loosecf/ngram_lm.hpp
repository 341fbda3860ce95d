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

// Next-token language models: the abstract interface the decoder consumes, an
// add-alpha smoothed n-gram model, and an explicit table model.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "loosecf/errors.hpp"
#include "loosecf/textcore.hpp"

namespace loosecf {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual const Vocabulary& vocabulary() const = 0;

  // Log-probability of every vocabulary id following `context`, indexed by
  // id. BOS always gets -inf; the exponentiated row sums to 1. The context is
  // implicitly preceded by BOS.
  virtual std::vector<double> NextLogprobs(
      std::span<const TokenId> context) const = 0;

  // Stable content hash; empty when the model has no serialized form.
  virtual std::string Fingerprint() const { return {}; }
};

namespace internal {

inline std::string FormatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double ParseDouble(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(where + ": not a number '" + s + "'");
  }
}

inline std::int64_t ParseInt(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(where + ": not an integer '" + s + "'");
  }
}

}  // namespace internal

// Add-alpha smoothed n-gram model:
//   P(t | c) = (count(c, t) + alpha) / (count(c) + alpha * K)
// where c is the last order-1 tokens (BOS-padded) and K is the number of
// outcome ids (every id except BOS, so EOS and UNK receive smoothed mass).
class NGramLM : public LanguageModel {
 public:
  struct ContextCounts {
    std::map<TokenId, std::uint64_t> next;
    std::uint64_t total = 0;

    friend bool operator==(const ContextCounts&,
                           const ContextCounts&) = default;
  };
  using CountTable = std::map<std::vector<TokenId>, ContextCounts>;

  NGramLM(std::shared_ptr<const Vocabulary> vocab, int order, double alpha,
          CountTable counts = {})
      : vocab_(std::move(vocab)),
        order_(order),
        alpha_(alpha),
        counts_(std::move(counts)) {
    if (!vocab_ || vocab_->user_size() == 0) {
      throw ContractError("n-gram model: empty vocabulary");
    }
    if (order_ < 1) throw ContractError("n-gram model: order must be >= 1");
    if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) {
      throw ContractError("n-gram model: alpha must be > 0");
    }
  }

  // Sentences are wrapped in BOS/EOS; OOV words count as UNK.
  static NGramLM Train(std::span<const TokenList> corpus,
                       std::shared_ptr<const Vocabulary> vocab, int order,
                       double alpha) {
    NGramLM lm(std::move(vocab), order, alpha);
    for (const auto& sentence : corpus) {
      std::vector<TokenId> ids(order - 1, Vocabulary::kBos);
      for (const auto& w : sentence) ids.push_back(lm.vocab_->IdOrUnk(w));
      ids.push_back(Vocabulary::kEos);
      for (std::size_t i = order - 1; i < ids.size(); ++i) {
        std::vector<TokenId> ctx(ids.begin() + (i - (order - 1)),
                                 ids.begin() + i);
        auto& cc = lm.counts_[std::move(ctx)];
        ++cc.next[ids[i]];
        ++cc.total;
      }
    }
    return lm;
  }

  // Vocabulary built from the corpus itself.
  static NGramLM Train(std::span<const TokenList> corpus, int order,
                       double alpha) {
    return Train(corpus,
                 std::make_shared<const Vocabulary>(
                     Vocabulary::FromCorpus(corpus)),
                 order, alpha);
  }

  const Vocabulary& vocabulary() const override { return *vocab_; }
  std::shared_ptr<const Vocabulary> shared_vocabulary() const {
    return vocab_;
  }
  int order() const { return order_; }
  double alpha() const { return alpha_; }
  const CountTable& counts() const { return counts_; }

  // The BOS-padded order-1 context the model conditions on.
  std::vector<TokenId> ContextKey(std::span<const TokenId> context) const {
    std::size_t n = static_cast<std::size_t>(order_ - 1);
    std::vector<TokenId> key(n, Vocabulary::kBos);
    std::size_t take = std::min(n, context.size());
    std::copy(context.end() - take, context.end(), key.end() - take);
    return key;
  }

  double Prob(std::span<const TokenId> context, TokenId token) const {
    if (!Vocabulary::IsOutcome(token)) return 0.0;
    double k = static_cast<double>(vocab_->size() - 1);
    auto it = counts_.find(ContextKey(context));
    double c = 0.0, total = 0.0;
    if (it != counts_.end()) {
      total = static_cast<double>(it->second.total);
      auto jt = it->second.next.find(token);
      if (jt != it->second.next.end()) c = static_cast<double>(jt->second);
    }
    return (c + alpha_) / (total + alpha_ * k);
  }

  std::vector<double> NextLogprobs(
      std::span<const TokenId> context) const override {
    const std::size_t v = vocab_->size();
    double k = static_cast<double>(v - 1);
    auto it = counts_.find(ContextKey(context));
    double total = it == counts_.end() ? 0.0
                                       : static_cast<double>(it->second.total);
    double denom = total + alpha_ * k;
    double floor = std::log(alpha_ / denom);
    std::vector<double> row(v, floor);
    row[Vocabulary::kBos] = kNegInf;
    if (it != counts_.end()) {
      for (const auto& [tok, c] : it->second.next) {
        row[tok] = std::log((static_cast<double>(c) + alpha_) / denom);
      }
    }
    return row;
  }

  // Plain-text dump: header, order, alpha, user vocabulary, then one
  // `context<TAB>token<TAB>count` line per observed n-gram.
  std::string Serialize() const {
    std::string out = "#loosecf-ngram\tv1\n";
    out += "order\t" + std::to_string(order_) + "\n";
    out += "alpha\t" + internal::FormatDouble(alpha_) + "\n";
    for (std::size_t id = 3; id < vocab_->size(); ++id) {
      out += "vocab\t" + vocab_->token(static_cast<TokenId>(id)) + "\n";
    }
    for (const auto& [ctx, cc] : counts_) {
      for (const auto& [tok, c] : cc.next) {
        for (std::size_t i = 0; i < ctx.size(); ++i) {
          if (i) out += ' ';
          out += vocab_->token(ctx[i]);
        }
        out += '\t';
        out += vocab_->token(tok);
        out += '\t';
        out += std::to_string(c);
        out += '\n';
      }
    }
    return out;
  }

  static NGramLM Deserialize(std::span<const std::string> lines,
                             const std::string& source = "<model>") {
    auto where = [&](std::size_t i) {
      return source + ":" + std::to_string(i + 1);
    };
    if (lines.empty() || lines[0] != "#loosecf-ngram\tv1") {
      throw IoError(source + ": not a loosecf n-gram model (bad header)");
    }
    int order = 0;
    double alpha = 0.0;
    std::vector<Token> words;
    std::size_t i = 1;
    for (; i < lines.size(); ++i) {
      auto f = SplitString(lines[i], '\t');
      if (f.size() != 2) break;
      if (f[0] == "order") {
        order = static_cast<int>(internal::ParseInt(f[1], where(i)));
      } else if (f[0] == "alpha") {
        alpha = internal::ParseDouble(f[1], where(i));
      } else if (f[0] == "vocab") {
        words.push_back(f[1]);
      } else {
        throw IoError(where(i) + ": unknown header key '" + f[0] + "'");
      }
    }
    std::shared_ptr<const Vocabulary> vocab;
    try {
      vocab = std::make_shared<const Vocabulary>(words);
      NGramLM probe(vocab, order, alpha);
    } catch (const ContractError& e) {
      throw IoError(source + ": " + e.what());
    }
    CountTable counts;
    for (; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      auto f = SplitString(lines[i], '\t');
      if (f.size() != 3) throw IoError(where(i) + ": expected 3 fields");
      std::vector<TokenId> ctx;
      if (!f[0].empty()) {
        for (const auto& w : SplitString(f[0], ' ')) {
          auto id = vocab->Find(w);
          if (!id) throw IoError(where(i) + ": unknown token '" + w + "'");
          ctx.push_back(*id);
        }
      }
      if (static_cast<int>(ctx.size()) != order - 1) {
        throw IoError(where(i) + ": context length does not match order");
      }
      auto tok = vocab->Find(f[1]);
      if (!tok || !Vocabulary::IsOutcome(*tok)) {
        throw IoError(where(i) + ": bad token '" + f[1] + "'");
      }
      auto c = internal::ParseInt(f[2], where(i));
      if (c <= 0) throw IoError(where(i) + ": count must be positive");
      auto& cc = counts[std::move(ctx)];
      cc.next[*tok] += static_cast<std::uint64_t>(c);
      cc.total += static_cast<std::uint64_t>(c);
    }
    return NGramLM(std::move(vocab), order, alpha, std::move(counts));
  }

  void Save(const std::string& path) const { WriteFile(path, Serialize()); }

  static NGramLM Load(const std::string& path) {
    auto lines = ReadLines(path);
    return Deserialize(lines, path);
  }

  std::string Fingerprint() const override {
    return HexDigest(Fnv1a64(Serialize()));
  }

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  int order_;
  double alpha_;
  CountTable counts_;
};

// Explicit probability rows keyed by context. Lookup uses the longest suffix
// of the context that has a stored row, else the default row.
class TableLM : public LanguageModel {
 public:
  TableLM(std::shared_ptr<const Vocabulary> vocab,
          std::vector<double> default_row)
      : vocab_(std::move(vocab)) {
    if (!vocab_ || vocab_->user_size() == 0) {
      throw ContractError("table model: empty vocabulary");
    }
    Check(default_row);
    default_row_ = ToLog(default_row);
  }

  void SetRow(std::vector<TokenId> context, const std::vector<double>& probs) {
    Check(probs);
    if (context.size() > max_context_) max_context_ = context.size();
    rows_[std::move(context)] = ToLog(probs);
  }

  const Vocabulary& vocabulary() const override { return *vocab_; }

  std::vector<double> NextLogprobs(
      std::span<const TokenId> context) const override {
    std::size_t longest = std::min(max_context_, context.size());
    for (std::size_t len = longest + 1; len-- > 0;) {
      std::vector<TokenId> key(context.end() - len, context.end());
      auto it = rows_.find(key);
      if (it != rows_.end()) return it->second;
    }
    return default_row_;
  }

  // Uniform over user words, zero on UNK and EOS.
  static std::vector<double> UniformUserRow(const Vocabulary& vocab) {
    std::vector<double> row(vocab.size(), 0.0);
    for (std::size_t id = 3; id < vocab.size(); ++id) {
      row[id] = 1.0 / static_cast<double>(vocab.user_size());
    }
    return row;
  }

 private:
  void Check(const std::vector<double>& probs) const {
    if (probs.size() != vocab_->size()) {
      throw ContractError("table model: row size does not match vocabulary");
    }
    if (probs[Vocabulary::kBos] != 0.0) {
      throw ContractError("table model: BOS must have zero probability");
    }
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0)) throw ContractError("table model: negative entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ContractError("table model: row does not sum to 1");
    }
  }

  static std::vector<double> ToLog(const std::vector<double>& probs) {
    std::vector<double> out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
      out[i] = probs[i] > 0.0 ? std::log(probs[i]) : kNegInf;
    }
    return out;
  }

  std::shared_ptr<const Vocabulary> vocab_;
  std::vector<double> default_row_;
  std::map<std::vector<TokenId>, std::vector<double>> rows_;
  std::size_t max_context_ = 0;
};

// Strict string -> id mapping; throws on OOV naming the token.
inline std::vector<TokenId> ToIds(const Vocabulary& vocab,
                                  std::span<const Token> tokens) {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto id = vocab.Find(t);
    if (!id) throw ContractError("out-of-vocabulary token '" + t + "'");
    ids.push_back(*id);
  }
  return ids;
}

// OOV -> UNK mapping, for text that did not come from the model.
inline std::vector<TokenId> ToIdsOrUnk(const Vocabulary& vocab,
                                       std::span<const Token> tokens) {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.IdOrUnk(t));
  return ids;
}

// Sum of next-token log-probabilities of `tokens` following `context`.
inline double SequenceLogprob(const LanguageModel& lm,
                              std::span<const TokenId> tokens,
                              std::span<const TokenId> context = {}) {
  std::vector<TokenId> history(context.begin(), context.end());
  double total = 0.0;
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= lm.vocabulary().size()) {
      throw ContractError("token id out of range");
    }
    if (t == Vocabulary::kBos) {
      throw ContractError("BOS cannot be scored as a next token");
    }
    total += lm.NextLogprobs(history)[t];
    history.push_back(t);
  }
  return total;
}

inline double SequenceLogprob(const LanguageModel& lm,
                              std::span<const Token> tokens,
                              std::span<const Token> context = {}) {
  auto ids = ToIds(lm.vocabulary(), tokens);
  auto ctx = ToIds(lm.vocabulary(), context);
  return SequenceLogprob(lm, std::span<const TokenId>(ids),
                         std::span<const TokenId>(ctx));
}

inline double Perplexity(const LanguageModel& lm,
                         std::span<const TokenId> tokens) {
  if (tokens.empty()) throw ContractError("perplexity of an empty sequence");
  return std::exp(-SequenceLogprob(lm, tokens) /
                  static_cast<double>(tokens.size()));
}

inline double Perplexity(const LanguageModel& lm,
                         std::span<const Token> tokens) {
  auto ids = ToIds(lm.vocabulary(), tokens);
  return Perplexity(lm, std::span<const TokenId>(ids));
}

}  // namespace loosecf
