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

#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "loosecf/simmetrics.hpp"
#include "oracles/random_instances.hpp"

namespace loosecf {
namespace {

std::size_t RecursiveDistance(const std::u32string& a, const std::u32string& b) {
  if (a.empty()) return b.size();
  if (b.empty()) return a.size();
  auto ra = a.substr(1), rb = b.substr(1);
  std::size_t best = std::min(RecursiveDistance(ra, b), RecursiveDistance(a, rb)) + 1;
  return std::min(best, RecursiveDistance(ra, rb) + (a[0] == b[0] ? 0 : 1));
}

std::string RandomString(std::mt19937_64& rng) {
  static const std::vector<std::string> alphabet{"a", "b", "c", "é", " "};
  std::string s;
  int n = testing::UniformInt(rng, 0, 8);
  for (int i = 0; i < n; ++i) {
    s += alphabet[testing::UniformInt(rng, 0, alphabet.size() - 1)];
  }
  return s;
}

TEST(Bleu2Test, HandValues) {
  TokenList x{"the", "film", "was", "fine"};
  EXPECT_NEAR(Bleu2(x, x), 1.0, 1e-12);
  EXPECT_NEAR(Bleu2(TokenList{"a", "b", "c"}, TokenList{"a", "b", "d"}),
              std::sqrt(3.0 / 4.0 * 2.0 / 3.0), 1e-12);
  EXPECT_NEAR(Bleu2(TokenList{"a", "b", "c", "d"}, TokenList{"e", "f", "g", "h"}),
              std::sqrt(1.0 / 5.0 * 1.0 / 4.0), 1e-12);
  // Brevity penalty exp(1 - 4/2) on a perfect two-token match.
  EXPECT_NEAR(Bleu2(TokenList{"a", "b"}, TokenList{"a", "b", "c", "d"}),
              std::exp(-1.0), 1e-12);
  EXPECT_EQ(Bleu2(TokenList{}, TokenList{}), 1.0);
  EXPECT_EQ(Bleu2(TokenList{}, TokenList{"a"}), 0.0);
}

TEST(Bleu2Test, ClippedCounts) {
  // p1 = (2 + 1) / (4 + 1): "the" is clipped to one match.
  // p2 = (1 + 1) / (3 + 1): only "the cat" matches.
  EXPECT_NEAR(Bleu2(TokenList{"the", "the", "the", "cat"},
                    TokenList{"the", "cat", "sat", "down"}),
              std::sqrt(3.0 / 5.0 * 2.0 / 4.0), 1e-12);
}

TEST(Bleu2Test, Bounded) {
  std::mt19937_64 rng(47);
  auto words = testing::Words(4);
  for (int i = 0; i < 500; ++i) {
    auto a = testing::RandomText(rng, words, 8);
    auto b = testing::RandomText(rng, words, 8);
    double s = Bleu2(a, b);
    ASSERT_GE(s, 0.0);
    ASSERT_LE(s, 1.0);
  }
}

TEST(LevenshteinTest, KnownValues) {
  EXPECT_EQ(Levenshtein("kitten", "sitting"), 3u);
  EXPECT_EQ(Levenshtein("same", "same"), 0u);
  EXPECT_EQ(Levenshtein("", "abc"), 3u);
  EXPECT_EQ(Levenshtein("café", "cafe"), 1u);
  EXPECT_EQ(Levenshtein("the good film", "the bad film", EditUnit::kToken), 1u);
  EXPECT_EQ(EditUnitName(EditUnit::kChar), "char");
}

TEST(LevenshteinTest, MatchesRecursiveOracle) {
  std::mt19937_64 rng(53);
  for (int i = 0; i < 500; ++i) {
    auto a = RandomString(rng), b = RandomString(rng);
    auto ca = CodePoints(a), cb = CodePoints(b);
    ASSERT_EQ(Levenshtein(a, b),
              RecursiveDistance(std::u32string(ca.begin(), ca.end()),
                                std::u32string(cb.begin(), cb.end())))
        << a << " | " << b;
  }
}

TEST(LevenshteinTest, MetricAxioms) {
  std::mt19937_64 rng(59);
  for (int i = 0; i < 300; ++i) {
    auto a = RandomString(rng), b = RandomString(rng), c = RandomString(rng);
    ASSERT_EQ(Levenshtein(a, b), Levenshtein(b, a));
    ASSERT_EQ(Levenshtein(a, b) == 0, a == b);
    ASSERT_LE(Levenshtein(a, c), Levenshtein(a, b) + Levenshtein(b, c));
  }
}

TEST(Distinct2Test, Examples) {
  std::vector<TokenList> abab{{"a", "b", "a", "b"}};
  EXPECT_EQ(Distinct2(abab), 2.0 / 3.0);
  std::vector<TokenList> distinct{{"a", "b", "c"}, {"c", "d"}};
  EXPECT_EQ(Distinct2(distinct), 1.0);
  std::vector<TokenList> twice{{"a", "b", "c"}, {"a", "b", "c"}};
  std::vector<TokenList> once{{"a", "b", "c"}};
  EXPECT_EQ(Distinct2(twice), Distinct2(once) / 2.0);
  std::vector<TokenList> none{{"a"}, {}};
  EXPECT_THROW(Distinct2(none), ContractError);
}

TEST(Distinct2Test, OrderInvariant) {
  std::mt19937_64 rng(61);
  auto words = testing::Words(3);
  for (int i = 0; i < 100; ++i) {
    std::vector<TokenList> texts(5);
    for (auto& t : texts) t = testing::RandomText(rng, words, 6);
    texts[0] = {"w0", "w1"};
    auto shuffled = texts;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    ASSERT_EQ(Distinct2(texts), Distinct2(shuffled));
  }
}

TEST(MoverSimTest, Examples) {
  EmbeddingTable emb(2);
  emb.Add("x", {1.0, 0.0});
  emb.Add("y", {0.0, 3.0});
  emb.Add("z", {1.0, 1.0});
  EXPECT_NEAR(MoverSim(TokenList{"x", "y"}, TokenList{"x", "y"}, emb), 1.0,
              1e-12);
  EXPECT_NEAR(MoverSim(TokenList{"x"}, TokenList{"y"}, emb), 0.5, 1e-12);
  // Tokens without vectors are ignored.
  EXPECT_NEAR(MoverSim(TokenList{"x", "qq"}, TokenList{"x"}, emb), 1.0, 1e-12);
  EXPECT_THROW(MoverSim(TokenList{"qq"}, TokenList{"x"}, emb), ContractError);
}

TEST(MoverSimTest, MatchesBruteForceAndIsSymmetric) {
  std::mt19937_64 rng(67);
  std::normal_distribution<double> g;
  EmbeddingTable emb(3);
  auto words = testing::Words(6);
  for (const auto& w : words) emb.Add(w, {g(rng), g(rng), g(rng)});
  auto cos = [&](const Token& a, const Token& b) {
    const auto& u = *emb.Find(a);
    const auto& v = *emb.Find(b);
    double dot = 0, nu = 0, nv = 0;
    for (int i = 0; i < 3; ++i) {
      dot += u[i] * v[i];
      nu += u[i] * u[i];
      nv += v[i] * v[i];
    }
    return dot / std::sqrt(nu * nv);
  };
  auto directional = [&](const TokenList& a, const TokenList& b) {
    double sum = 0;
    for (const auto& s : a) {
      double best = -1;
      for (const auto& t : b) best = std::max(best, cos(s, t));
      sum += best;
    }
    return sum / a.size();
  };
  for (int i = 0; i < 100; ++i) {
    auto a = testing::RandomText(rng, words, 6);
    auto b = testing::RandomText(rng, words, 6);
    if (a.empty()) a.push_back("w0");
    if (b.empty()) b.push_back("w1");
    double expected = ((directional(a, b) + directional(b, a)) / 2 + 1) / 2;
    double got = MoverSim(a, b, emb);
    ASSERT_NEAR(got, expected, 1e-12);
    ASSERT_EQ(got, MoverSim(b, a, emb));
    ASSERT_GE(got, 0.0);
    ASSERT_LE(got, 1.0);
  }
}

}  // namespace
}  // namespace loosecf
