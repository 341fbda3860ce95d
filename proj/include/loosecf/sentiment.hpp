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

// Sentence polarity scoring: a lexicon-mean scorer and a subprocess scorer
// speaking a one-line-in, one-line-out protocol.

#pragma once

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "loosecf/errors.hpp"
#include "loosecf/textcore.hpp"

namespace loosecf {

enum class SentimentClass { kNegative, kNeutral, kPositive };

inline std::string_view SentimentClassName(SentimentClass c) {
  switch (c) {
    case SentimentClass::kNegative: return "negative";
    case SentimentClass::kNeutral: return "neutral";
    case SentimentClass::kPositive: return "positive";
  }
  return "neutral";
}

struct PolarityThresholds {
  double negative = -0.1;
  double positive = 0.1;
};

class PolarityScorer {
 public:
  explicit PolarityScorer(PolarityThresholds t = {}) : thresholds_(t) {
    if (!(t.negative < 0.0 && 0.0 < t.positive)) {
      throw ConfigError("polarity thresholds must satisfy neg < 0 < pos");
    }
  }
  virtual ~PolarityScorer() = default;

  // Polarity in [-1, 1].
  virtual double Score(std::string_view text) const = 0;

  SentimentClass Classify(std::string_view text) const {
    return ClassifyScore(Score(text));
  }

  SentimentClass ClassifyScore(double score) const {
    if (score < thresholds_.negative) return SentimentClass::kNegative;
    if (score > thresholds_.positive) return SentimentClass::kPositive;
    return SentimentClass::kNeutral;
  }

  const PolarityThresholds& thresholds() const { return thresholds_; }

  // Identifies the scorer and its thresholds for config fingerprints.
  virtual std::string Fingerprint() const {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g", thresholds_.negative,
                  thresholds_.positive);
    return buf;
  }

 private:
  PolarityThresholds thresholds_;
};

class SentimentLexicon {
 public:
  SentimentLexicon() = default;

  // Values are clamped to [-1, 1]; words are stored lowercase.
  void Set(std::string_view word, double polarity) {
    polarity_[ToLower(word)] = std::clamp(polarity, -1.0, 1.0);
  }

  std::optional<double> Find(std::string_view word) const {
    auto it = polarity_.find(ToLower(word));
    if (it == polarity_.end()) return std::nullopt;
    return it->second;
  }

  double Polarity(std::string_view word) const {
    return Find(word).value_or(0.0);
  }

  std::size_t size() const { return polarity_.size(); }

  // `word<TAB>score` per line.
  static SentimentLexicon FromLines(std::span<const std::string> lines,
                                    const std::string& source = "<lexicon>") {
    SentimentLexicon lex;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      auto f = SplitString(lines[i], '\t');
      std::string where = source + ":" + std::to_string(i + 1);
      if (f.size() != 2 || f[0].empty()) {
        throw IoError(where + ": expected word<TAB>score");
      }
      double v;
      try {
        std::size_t used = 0;
        v = std::stod(f[1], &used);
        if (used != f[1].size()) throw std::invalid_argument(f[1]);
      } catch (const std::exception&) {
        throw IoError(where + ": bad score '" + f[1] + "'");
      }
      lex.Set(f[0], v);
    }
    return lex;
  }

  static SentimentLexicon Load(const std::string& path) {
    auto lines = ReadLines(path);
    return FromLines(lines, path);
  }

  std::string Fingerprint() const {
    std::vector<std::pair<std::string, double>> items(polarity_.begin(),
                                                      polarity_.end());
    std::sort(items.begin(), items.end());
    std::string all;
    for (const auto& [w, v] : items) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      all += w + "\t" + buf + "\n";
    }
    return HexDigest(Fnv1a64(all));
  }

 private:
  std::unordered_map<std::string, double> polarity_;
};

// Mean polarity of the tokens present in the lexicon; 0 when none are.
inline double LexiconScore(std::string_view text, const SentimentLexicon& lex) {
  double sum = 0.0;
  int hits = 0;
  for (const auto& t : Tokenize(text, Casing::kLower)) {
    if (auto v = lex.Find(t)) {
      sum += *v;
      ++hits;
    }
  }
  return hits ? sum / hits : 0.0;
}

class LexiconScorer : public PolarityScorer {
 public:
  explicit LexiconScorer(SentimentLexicon lex, PolarityThresholds t = {})
      : PolarityScorer(t), lex_(std::move(lex)) {}

  double Score(std::string_view text) const override {
    return LexiconScore(text, lex_);
  }

  const SentimentLexicon& lexicon() const { return lex_; }

  std::string Fingerprint() const override {
    return "lexicon:" + lex_.Fingerprint() + ":" + PolarityScorer::Fingerprint();
  }

 private:
  SentimentLexicon lex_;
};

// Runs `command` through /bin/sh once and keeps it alive. Each Score call
// writes one line of text and reads one decimal score back. Calls are
// serialized on a mutex.
class SubprocessScorer : public PolarityScorer {
 public:
  explicit SubprocessScorer(const std::string& command,
                            PolarityThresholds t = {})
      : PolarityScorer(t), command_(command) {
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) {
      throw IoError("scorer: pipe() failed");
    }
    pid_ = fork();
    if (pid_ < 0) throw IoError("scorer: fork() failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    in_ = fdopen(to_child[1], "w");
    out_ = fdopen(from_child[0], "r");
    if (!in_ || !out_) throw IoError("scorer: fdopen() failed");
  }

  SubprocessScorer(const SubprocessScorer&) = delete;
  SubprocessScorer& operator=(const SubprocessScorer&) = delete;

  ~SubprocessScorer() override {
    if (in_) fclose(in_);
    if (out_) fclose(out_);
    if (pid_ > 0) {
      int status;
      waitpid(pid_, &status, 0);
    }
  }

  double Score(std::string_view text) const override {
    std::lock_guard<std::mutex> lock(mu_);
    std::string line(text);
    std::replace(line.begin(), line.end(), '\n', ' ');
    line.push_back('\n');
    // A dead child would otherwise kill us with SIGPIPE.
    struct sigaction ignore {}, old {};
    ignore.sa_handler = SIG_IGN;
    sigaction(SIGPIPE, &ignore, &old);
    bool ok = fputs(line.c_str(), in_) >= 0 && fflush(in_) == 0;
    sigaction(SIGPIPE, &old, nullptr);
    if (!ok) throw IoError("scorer: write to subprocess failed");
    std::string reply;
    int c;
    while ((c = fgetc(out_)) != EOF && c != '\n') {
      reply.push_back(static_cast<char>(c));
    }
    if (c == EOF && reply.empty()) {
      throw IoError("scorer: subprocess closed its output");
    }
    try {
      std::size_t used = 0;
      double v = std::stod(reply, &used);
      while (used < reply.size() && (reply[used] == ' ' || reply[used] == '\r')) {
        ++used;
      }
      if (used != reply.size()) throw std::invalid_argument(reply);
      return std::clamp(v, -1.0, 1.0);
    } catch (const std::exception&) {
      throw IoError("scorer: bad reply '" + reply + "'");
    }
  }

  std::string Fingerprint() const override {
    return "command:" + HexDigest(Fnv1a64(command_)) + ":" +
           PolarityScorer::Fingerprint();
  }

 private:
  std::string command_;
  pid_t pid_ = -1;
  FILE* in_ = nullptr;
  FILE* out_ = nullptr;
  mutable std::mutex mu_;
};

struct PolaritySplit {
  std::vector<LabeledExample> negative;
  std::vector<LabeledExample> positive;
};

inline PolaritySplit SplitCorpusByPolarity(
    std::span<const LabeledExample> examples) {
  PolaritySplit split;
  for (const auto& ex : examples) {
    (ex.label == Polarity::kNegative ? split.negative : split.positive)
        .push_back(ex);
  }
  return split;
}

}  // namespace loosecf
