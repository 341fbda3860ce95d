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

// Word-level tokenization, vocabularies, labeled datasets and the small
// text/file helpers shared by the rest of the library.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "loosecf/errors.hpp"

namespace loosecf {

using Token = std::string;
using TokenList = std::vector<Token>;
using TokenId = std::int32_t;

enum class Casing { kPreserve, kLower };

namespace internal {

inline bool IsSpace(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
         c == '\f';
}

}  // namespace internal

// Punctuation marks that always become tokens of their own.
inline bool IsSplitPunct(char c) {
  switch (c) {
    case '.': case ',': case '!': case '?': case ';': case ':':
    case '"': case '\'': case '(': case ')':
      return true;
    default:
      return false;
  }
}

// ASCII lowercasing; bytes outside ASCII pass through untouched.
inline std::string ToLower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

inline TokenList ToLower(std::span<const Token> tokens) {
  TokenList out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(ToLower(t));
  return out;
}

inline TokenList Tokenize(std::string_view text,
                          Casing casing = Casing::kPreserve) {
  TokenList tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char c : text) {
    if (internal::IsSpace(c)) {
      flush();
    } else if (IsSplitPunct(c)) {
      flush();
      tokens.emplace_back(1, c);
    } else {
      current.push_back(c);
    }
  }
  flush();
  if (casing == Casing::kLower) {
    for (auto& t : tokens) t = ToLower(t);
  }
  return tokens;
}

// Single-space join. Tokenize(Detokenize(ts)) == ts for every ts that
// Tokenize can produce.
inline std::string Detokenize(std::span<const Token> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

inline std::string Join(std::span<const Token> tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

inline std::vector<std::string> SplitString(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(s.substr(start));
      break;
    }
    parts.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

// Returns false on any malformed or overlong UTF-8 sequence.
inline bool IsValidUtf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    int extra;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c >> 5) == 0x6) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c >> 4) == 0xE) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c >> 3) == 0x1E) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (int k = 1; k <= extra; ++k) {
      auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc >> 6) != 0x2) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      return false;
    }
    i += extra + 1;
  }
  return true;
}

// Decodes UTF-8 into code points. Invalid bytes decode as themselves.
inline std::vector<char32_t> CodePoints(std::string_view s) {
  std::vector<char32_t> out;
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    int extra = c < 0x80 ? 0 : (c >> 5) == 0x6 ? 1 : (c >> 4) == 0xE ? 2
                : (c >> 3) == 0x1E ? 3 : -1;
    if (extra <= 0 || i + extra >= s.size()) {
      out.push_back(c);
      ++i;
      continue;
    }
    char32_t cp = c & (0x7F >> (extra + 1));
    bool ok = true;
    for (int k = 1; k <= extra; ++k) {
      auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc >> 6) != 0x2) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (cc & 0x3F);
    }
    if (!ok) {
      out.push_back(c);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

// Dense token ids. Ids 0..2 are reserved for the BOS, UNK and EOS sentinels;
// user words follow in insertion order. BOS is context-only, UNK is
// predictable but never generated, EOS terminates a generation.
class Vocabulary {
 public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kEos = 2;
  static constexpr std::string_view kBosToken = "<s>";
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::string_view kEosToken = "</s>";

  Vocabulary() { AddReserved(); }

  // Duplicates are skipped; reserved sentinel strings are rejected.
  explicit Vocabulary(std::span<const Token> words) {
    AddReserved();
    for (const auto& w : words) Add(w);
  }

  // Sorted unique words of a corpus, so the ids do not depend on sentence
  // order.
  static Vocabulary FromCorpus(std::span<const TokenList> corpus) {
    std::vector<Token> words;
    for (const auto& sentence : corpus) {
      words.insert(words.end(), sentence.begin(), sentence.end());
    }
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    return Vocabulary(words);
  }

  static bool IsReserved(std::string_view w) {
    return w == kBosToken || w == kUnkToken || w == kEosToken;
  }

  std::optional<TokenId> Find(std::string_view w) const {
    auto it = id_of_.find(std::string(w));
    if (it == id_of_.end()) return std::nullopt;
    return it->second;
  }

  // OOV words map to UNK.
  TokenId IdOrUnk(std::string_view w) const {
    auto id = Find(w);
    return id ? *id : kUnk;
  }

  const Token& token(TokenId id) const { return token_of_.at(id); }
  std::size_t size() const { return token_of_.size(); }
  std::size_t user_size() const { return token_of_.size() - 3; }

  // Ids that receive probability mass from a language model.
  static bool IsOutcome(TokenId id) { return id != kBos; }
  // Ids the decoder may emit (EOS and user words).
  static bool IsGenerable(TokenId id) { return id >= kEos; }

  const std::vector<Token>& tokens() const { return token_of_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.token_of_ == b.token_of_;
  }

 private:
  void AddReserved() {
    for (auto w : {kBosToken, kUnkToken, kEosToken}) {
      id_of_.emplace(std::string(w), static_cast<TokenId>(token_of_.size()));
      token_of_.emplace_back(w);
    }
  }

  void Add(const Token& w) {
    if (w.empty()) throw ContractError("vocabulary: empty token");
    if (IsReserved(w)) {
      throw ContractError("vocabulary: reserved token '" + w +
                          "' in user words");
    }
    if (id_of_.count(w)) return;
    id_of_.emplace(w, static_cast<TokenId>(token_of_.size()));
    token_of_.push_back(w);
  }

  std::unordered_map<std::string, TokenId> id_of_;
  std::vector<Token> token_of_;
};

enum class Polarity { kNegative, kPositive };

inline Polarity Opposite(Polarity p) {
  return p == Polarity::kNegative ? Polarity::kPositive : Polarity::kNegative;
}

inline std::string_view PolarityName(Polarity p) {
  return p == Polarity::kNegative ? "negative" : "positive";
}

// Accepts negative/positive, neg/pos and 0/1 in any ASCII case.
inline std::optional<Polarity> ParsePolarity(std::string_view s) {
  std::string v = ToLower(s);
  if (v == "negative" || v == "neg" || v == "0") return Polarity::kNegative;
  if (v == "positive" || v == "pos" || v == "1") return Polarity::kPositive;
  return std::nullopt;
}

struct LabeledExample {
  std::string id;
  std::string text;
  Polarity label = Polarity::kNegative;

  friend bool operator==(const LabeledExample&,
                         const LabeledExample&) = default;
};

enum class DatasetFormat { kTsv, kJsonl };

inline DatasetFormat FormatFromPath(std::string_view path) {
  return path.ends_with(".jsonl") || path.ends_with(".json")
             ? DatasetFormat::kJsonl
             : DatasetFormat::kTsv;
}

inline std::ifstream OpenForRead(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream OpenForWrite(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

// Lines without their trailing newline (and without a trailing CR).
inline std::vector<std::string> ReadLines(const std::string& path) {
  auto in = OpenForRead(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline std::string ReadFile(const std::string& path) {
  auto in = OpenForRead(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace internal {

inline Polarity LabelAt(std::string_view value, const std::string& where) {
  auto label = ParsePolarity(value);
  if (!label) {
    throw IoError(where + ": unknown label '" + std::string(value) + "'");
  }
  return *label;
}

}  // namespace internal

// Parses a dataset from in-memory lines. `source` names the input in errors.
inline std::vector<LabeledExample> ParseDataset(
    std::span<const std::string> lines, DatasetFormat format,
    const std::string& source = "<dataset>") {
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    std::string where = source + ":" + std::to_string(i + 1);
    if (line.empty()) continue;
    if (!IsValidUtf8(line)) throw IoError(where + ": invalid UTF-8");
    LabeledExample ex;
    if (format == DatasetFormat::kTsv) {
      auto first = line.find('\t');
      auto second =
          first == std::string::npos ? first : line.find('\t', first + 1);
      if (second == std::string::npos) {
        throw IoError(where + ": expected id<TAB>label<TAB>text");
      }
      ex.id = line.substr(0, first);
      ex.label = internal::LabelAt(
          std::string_view(line).substr(first + 1, second - first - 1), where);
      ex.text = line.substr(second + 1);
    } else {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw IoError(where + ": malformed JSON (" + e.what() + ")");
      }
      for (const char* key : {"id", "label", "text"}) {
        if (!j.is_object() || !j.contains(key) || !j[key].is_string()) {
          throw IoError(where + ": missing string field '" + key + "'");
        }
      }
      ex.id = j["id"].get<std::string>();
      ex.label = internal::LabelAt(j["label"].get<std::string>(), where);
      ex.text = j["text"].get<std::string>();
    }
    if (ex.text.empty()) throw IoError(where + ": empty text");
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::vector<LabeledExample> LoadDataset(const std::string& path,
                                               DatasetFormat format) {
  auto lines = ReadLines(path);
  return ParseDataset(lines, format, path);
}

inline std::vector<LabeledExample> LoadDataset(const std::string& path) {
  return LoadDataset(path, FormatFromPath(path));
}

inline std::string FormatDataset(std::span<const LabeledExample> examples,
                                 DatasetFormat format) {
  std::string out;
  for (const auto& ex : examples) {
    if (format == DatasetFormat::kTsv) {
      if (ex.id.find_first_of("\t\n") != std::string::npos ||
          ex.text.find('\n') != std::string::npos) {
        throw ContractError("example '" + ex.id +
                            "' cannot be written as TSV");
      }
      out += ex.id;
      out += '\t';
      out += PolarityName(ex.label);
      out += '\t';
      out += ex.text;
    } else {
      nlohmann::ordered_json j;
      j["id"] = ex.id;
      j["label"] = PolarityName(ex.label);
      j["text"] = ex.text;
      out += j.dump();
    }
    out += '\n';
  }
  return out;
}

inline void SaveDataset(const std::string& path,
                        std::span<const LabeledExample> examples,
                        DatasetFormat format) {
  auto out = OpenForWrite(path);
  out << FormatDataset(examples, format);
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline void SaveDataset(const std::string& path,
                        std::span<const LabeledExample> examples) {
  SaveDataset(path, examples, FormatFromPath(path));
}

inline void WriteFile(const std::string& path, std::string_view content) {
  auto out = OpenForWrite(path);
  out << content;
  if (!out) throw IoError("failed writing '" + path + "'");
}

// 64-bit FNV-1a. Used for config and model fingerprints.
inline std::uint64_t Fnv1a64(std::string_view data,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string HexDigest(std::uint64_t h) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = kHex[h & 0xF];
    h >>= 4;
  }
  return s;
}

}  // namespace loosecf
