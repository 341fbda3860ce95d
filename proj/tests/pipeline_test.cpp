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

#include <atomic>
#include <random>

#include "loosecf/pipeline.hpp"
#include "oracles/random_instances.hpp"

namespace loosecf {
namespace {

// Forwards to a model and counts how often it was consulted.
class CountingLM : public LanguageModel {
 public:
  explicit CountingLM(std::shared_ptr<const LanguageModel> base)
      : base_(std::move(base)) {}
  const Vocabulary& vocabulary() const override { return base_->vocabulary(); }
  std::vector<double> NextLogprobs(
      std::span<const TokenId> context) const override {
    ++calls_;
    return base_->NextLogprobs(context);
  }
  std::string Fingerprint() const override { return base_->Fingerprint(); }
  long calls() const { return calls_; }

 private:
  std::shared_ptr<const LanguageModel> base_;
  mutable std::atomic<long> calls_{0};
};

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    examples_ = new std::vector<LabeledExample>(
        LoadDataset(testing::DataPath("toy_reviews.tsv")));
    lms_ = new SteerModels(TrainSteers(*examples_, 2, 0.1));
    lex_ = new ConceptLexicon(
        ConceptLexicon::Load(testing::DataPath("concepts.txt")));
    scorer_ = new LexiconScorer(
        SentimentLexicon::Load(testing::DataPath("sentiment.tsv")));
    emb_ = new EmbeddingTable(
        EmbeddingTable::Load(testing::DataPath("embeddings.txt")));
  }

  static std::vector<LabeledExample> Load(const char* name) {
    return LoadDataset(testing::DataPath(name));
  }

  GenerationRun Run(std::span<const LabeledExample> examples,
                    GenerationMode mode, PipelineConfig cfg = {}) {
    return GenerateCfs(examples, *lms_, *lex_, *scorer_, cfg, mode);
  }

  static inline std::vector<LabeledExample>* examples_;
  static inline SteerModels* lms_;
  static inline ConceptLexicon* lex_;
  static inline LexiconScorer* scorer_;
  static inline EmbeddingTable* emb_;
};

TEST_F(PipelineTest, SteerRoutingFollowsOppositeLabel) {
  auto pos = std::make_shared<CountingLM>(lms_->positive);
  auto neg = std::make_shared<CountingLM>(lms_->negative);
  SteerModels counted{pos, neg};
  PipelineConfig cfg;
  cfg.decoder.beam_size = 4;
  cfg.decoder.max_len = 12;
  for (const auto& ex : *examples_) {
    long p0 = pos->calls(), n0 = neg->calls();
    auto run = GenerateCfs(std::span<const LabeledExample>(&ex, 1), counted,
                           *lex_, *scorer_, cfg, GenerationMode::kUnigram);
    ASSERT_EQ(run.records.size(), 1u);
    bool used_pos = pos->calls() > p0, used_neg = neg->calls() > n0;
    EXPECT_EQ(used_pos, ex.label == Polarity::kNegative) << ex.id;
    EXPECT_EQ(used_neg, ex.label == Polarity::kPositive) << ex.id;
    EXPECT_NE(run.records[0].cf_label, ex.label);
    EXPECT_EQ(run.records[0].steer_polarity, run.records[0].cf_label);
  }
}

TEST_F(PipelineTest, NeutralPrefixSkipsNegativeOpeners) {
  auto openers = Load("negative_openers.tsv");
  auto run = Run(openers, GenerationMode::kNeutralPrefix);
  EXPECT_TRUE(run.records.empty());
  EXPECT_EQ(run.manifest.skipped.size(), openers.size());
}

TEST_F(PipelineTest, FixtureNeutralPrefixRun) {
  auto fixture = Load("fixture5.tsv");
  auto run = Run(fixture, GenerationMode::kNeutralPrefix);
  ASSERT_EQ(run.records.size(), 4u);
  ASSERT_EQ(run.manifest.skipped.size(), 1u);
  EXPECT_EQ(run.manifest.skipped[0].id, "f2");
  std::vector<std::string> ids;
  for (const auto& r : run.records) {
    ids.push_back(r.source_id);
    EXPECT_EQ(r.prompt_kind, PromptKind::kNeutralPrefix);
    EXPECT_GE(r.prompt_tokens.size(), kMinNeutralPrefix);
  }
  EXPECT_EQ(ids, (std::vector<std::string>{"f1", "f3", "f4", "f5"}));
  EXPECT_EQ(Detokenize(run.records[1].prompt_tokens), "it ' s maybe the");
}

TEST_F(PipelineTest, CoverageAccounting) {
  auto run = Run(*examples_, GenerationMode::kNeutralPrefix);
  EXPECT_EQ(run.records.size() + run.manifest.skipped.size(),
            examples_->size());
  EXPECT_TRUE(run.manifest.failures.empty());
  EXPECT_EQ(run.manifest.inputs, examples_->size());
}

TEST_F(PipelineTest, NoConstraintsMode) {
  auto run = Run(*examples_, GenerationMode::kNoConstraints);
  ASSERT_EQ(run.records.size(), examples_->size());
  for (std::size_t i = 0; i < run.records.size(); ++i) {
    const auto& r = run.records[i];
    EXPECT_EQ(r.source_id, (*examples_)[i].id);
    EXPECT_TRUE(r.constraint_set.empty());
    EXPECT_EQ(r.satisfied_clauses, 0);
    EXPECT_EQ(r.prompt_tokens,
              TokenList{Tokenize((*examples_)[i].text, Casing::kLower)[0]});
  }
}

TEST_F(PipelineTest, RecordsReplayAgainstDecoder) {
  auto fixture = Load("fixture5.tsv");
  PipelineConfig cfg;
  auto run = Run(fixture, GenerationMode::kUnigram, cfg);
  for (const auto& r : run.records) {
    auto gens = Decode(lms_->For(r.steer_polarity), r.prompt_tokens,
                       r.constraint_set, cfg.decoder);
    ASSERT_FALSE(gens.empty());
    EXPECT_EQ(gens[0].tokens, r.generation_tokens);
    EXPECT_EQ(gens[0].logprob, r.logprob);
    EXPECT_EQ(gens[0].objective, r.objective);
  }
}

TEST_F(PipelineTest, ParallelRunMatchesSerial) {
  PipelineConfig serial, parallel;
  parallel.jobs = 4;
  auto a = Run(*examples_, GenerationMode::kNeutralPrefix, serial);
  auto b = Run(*examples_, GenerationMode::kNeutralPrefix, parallel);
  EXPECT_EQ(FormatCfRecords(a.records), FormatCfRecords(b.records));
  EXPECT_EQ(a.manifest.ToJson().dump(), b.manifest.ToJson().dump());
}

TEST_F(PipelineTest, FingerprintTracksConfig) {
  auto fixture = Load("fixture5.tsv");
  PipelineConfig cfg;
  auto a = Run(fixture, GenerationMode::kUnigram, cfg);
  cfg.decoder.beam_size = 5;
  auto b = Run(fixture, GenerationMode::kUnigram, cfg);
  EXPECT_NE(a.manifest.config_fingerprint, b.manifest.config_fingerprint);
  EXPECT_EQ(a.records[0].config_fingerprint, a.manifest.config_fingerprint);
  auto c = Run(fixture, GenerationMode::kUnigram, PipelineConfig{});
  EXPECT_EQ(a.manifest.config_fingerprint, c.manifest.config_fingerprint);
}

TEST_F(PipelineTest, VocabularyMismatchIsAnError) {
  std::vector<TokenList> other{{"just", "words"}};
  SteerModels bad{lms_->positive,
                  std::make_shared<NGramLM>(NGramLM::Train(other, 2, 0.1))};
  EXPECT_THROW(GenerateCfs(*examples_, bad, *lex_, *scorer_, PipelineConfig{},
                           GenerationMode::kUnigram),
               ContractError);
}

TEST_F(PipelineTest, OovConceptIsFlaggedNotFatal) {
  std::vector<LabeledExample> one{
      {"x1", "The cinematography was a dreamcast of talent.",
       Polarity::kPositive}};
  std::vector<TokenList> corpus{{"the", "talent", "was", "a", "of"}};
  auto vocab = std::make_shared<const Vocabulary>(Vocabulary::FromCorpus(corpus));
  auto lm = std::make_shared<NGramLM>(NGramLM::Train(corpus, vocab, 2, 0.1));
  SteerModels small{lm, lm};
  auto run = GenerateCfs(one, small, *lex_, *scorer_, PipelineConfig{},
                         GenerationMode::kUnigram);
  ASSERT_EQ(run.records.size(), 1u);
  ASSERT_EQ(run.manifest.unsatisfiable.size(), 2u);
  EXPECT_EQ(run.manifest.unsatisfiable[0].predicates,
            "Cinematography|cinematography");
  EXPECT_EQ(run.manifest.unsatisfiable[1].predicates, "Dreamcast|dreamcast");
  EXPECT_EQ(run.records[0].satisfied_clauses, 1);
}

TEST_F(PipelineTest, PromptTooLongIsRecordedAsFailure) {
  PipelineConfig cfg;
  cfg.decoder.max_len = 5;
  auto fixture = Load("fixture5.tsv");
  auto run = Run(fixture, GenerationMode::kNeutralPrefix, cfg);
  EXPECT_EQ(run.records.size(), 1u);  // only the 5-token spoof prompt fits
  EXPECT_EQ(run.manifest.failures.size(), 3u);
}

TEST_F(PipelineTest, JsonlRoundTrip) {
  PipelineConfig cfg;
  cfg.verify_with_scorer = true;
  auto run = Run(Load("fixture5.tsv"), GenerationMode::kNeutralPrefix, cfg);
  auto text = FormatCfRecords(run.records);
  auto path = ::testing::TempDir() + "/cfs.jsonl";
  WriteCfRecords(path, run.records);
  auto back = ReadCfRecords(path);
  EXPECT_EQ(FormatCfRecords(back), text);
  ASSERT_TRUE(back[0].scorer_label.has_value());
  auto first = nlohmann::ordered_json::parse(SplitString(text, '\n')[0]);
  std::vector<std::string> keys;
  for (const auto& [k, v] : first.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{
                      "source_id", "prompt_kind", "prompt_tokens",
                      "constraint_set", "generation_tokens", "logprob",
                      "objective", "satisfied_clauses", "steer_polarity",
                      "cf_label", "config_fingerprint",
                      "length_penalty_alpha", "scorer_label"}));
  WriteFile(path, "{\"source_id\": 3}\n");
  EXPECT_THROW(ReadCfRecords(path), IoError);
}

TEST_F(PipelineTest, SweepGivesFourIndependentCandidates) {
  auto fixture = Load("fixture5.tsv");
  auto run = SweepCandidates(std::span(fixture).subspan(0, 1), *lms_, *lex_,
                             *scorer_, PipelineConfig{});
  ASSERT_EQ(run.records.size(), 4u);
  std::set<std::string> fps;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& r = run.records[i];
    EXPECT_EQ(r.length_penalty_alpha, kSweepAlphas[i]);
    fps.insert(r.config_fingerprint);
    DecoderConfig d;
    d.length_penalty_alpha = kSweepAlphas[i];
    auto gens = Decode(lms_->For(r.steer_polarity), r.prompt_tokens,
                       r.constraint_set, d);
    EXPECT_EQ(gens[0].logprob, r.logprob);
    EXPECT_EQ(gens[0].tokens, r.generation_tokens);
  }
  EXPECT_EQ(fps.size(), 4u);
}

TEST_F(PipelineTest, SweepSkipsLikeGenerate) {
  auto fixture = Load("fixture5.tsv");
  auto run = SweepCandidates(fixture, *lms_, *lex_, *scorer_, PipelineConfig{});
  EXPECT_EQ(run.records.size(), 16u);
  EXPECT_EQ(run.manifest.skipped.size(), 1u);
}

CFRecord Candidate(const std::string& text, double alpha,
                   const std::string& id = "s") {
  CFRecord r;
  r.source_id = id;
  r.prompt_tokens = Tokenize(text);
  r.length_penalty_alpha = alpha;
  return r;
}

TEST(SelectVariantTest, LooseAndTight) {
  EmbeddingTable emb(2);
  emb.Add("x", {1.0, 0.0});
  emb.Add("y", {0.0, 1.0});
  emb.Add("z", {1.0, 1.0});
  TokenList reference{"x"};
  // mover_sim against "x": "y" 0.5, "z" ~0.854, "x" 1.
  std::vector<CFRecord> cands{Candidate("z", 0.1), Candidate("y", 0.3),
                              Candidate("x", 0.5)};
  EXPECT_EQ(SelectVariant(cands, reference, emb, SelectMode::kLoose)
                .prompt_tokens,
            TokenList{"y"});
  EXPECT_EQ(SelectVariant(cands, reference, emb, SelectMode::kTight)
                .prompt_tokens,
            TokenList{"x"});
  std::vector<CFRecord> one{Candidate("z", 0.7)};
  for (auto m : {SelectMode::kLoose, SelectMode::kTight}) {
    EXPECT_EQ(SelectVariant(one, reference, emb, m).length_penalty_alpha, 0.7);
  }
  EXPECT_THROW(SelectVariant(std::vector<CFRecord>{}, reference, emb,
                             SelectMode::kLoose),
               ContractError);
}

TEST(SelectVariantTest, TiesPreferLowerPenaltyThenText) {
  EmbeddingTable emb(2);
  emb.Add("x", {1.0, 0.0});
  emb.Add("y", {2.0, 0.0});
  TokenList reference{"x"};
  std::vector<CFRecord> cands{Candidate("y", 0.5), Candidate("x", 0.3),
                              Candidate("y", 0.3)};
  auto picked = SelectVariant(cands, reference, emb, SelectMode::kLoose);
  EXPECT_EQ(picked.length_penalty_alpha, 0.3);
  EXPECT_EQ(picked.prompt_tokens, TokenList{"x"});
}

TEST(SelectVariantTest, AgreesWithFullScan) {
  std::mt19937_64 rng(71);
  std::normal_distribution<double> g;
  EmbeddingTable emb(3);
  auto words = testing::Words(6);
  for (const auto& w : words) emb.Add(w, {g(rng), g(rng), g(rng)});
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<CFRecord> cands;
    for (double a : kSweepAlphas) {
      auto t = testing::RandomText(rng, words, 5);
      t.push_back(words[0]);
      cands.push_back(Candidate(Detokenize(t), a));
    }
    TokenList reference = testing::RandomText(rng, words, 6);
    reference.push_back(words[1]);
    std::size_t lo = 0, hi = 0;
    std::vector<double> sims;
    for (const auto& c : cands) sims.push_back(MoverSim(c.Text(), reference, emb));
    for (std::size_t i = 1; i < sims.size(); ++i) {
      if (sims[i] < sims[lo]) lo = i;
      if (sims[i] > sims[hi]) hi = i;
    }
    EXPECT_EQ(SelectVariant(cands, reference, emb, SelectMode::kLoose)
                  .length_penalty_alpha,
              kSweepAlphas[lo]);
    EXPECT_EQ(SelectVariant(cands, reference, emb, SelectMode::kTight)
                  .length_penalty_alpha,
              kSweepAlphas[hi]);
  }
}

TEST(SelectVariantsTest, PriorGenerationAnchor) {
  EmbeddingTable emb(2);
  emb.Add("x", {1.0, 0.0});
  emb.Add("y", {0.0, 1.0});
  std::vector<LabeledExample> originals{{"s", "x", Polarity::kNegative}};
  std::vector<CFRecord> cands{Candidate("x", 0.1), Candidate("y", 0.3)};
  auto vs_original =
      SelectVariants(cands, originals, emb, SelectMode::kTight);
  EXPECT_EQ(vs_original[0].prompt_tokens, TokenList{"x"});
  std::vector<CFRecord> prior{Candidate("y", 0.3)};
  auto vs_prior =
      SelectVariants(cands, originals, emb, SelectMode::kTight, true, &prior);
  EXPECT_EQ(vs_prior[0].prompt_tokens, TokenList{"y"});
  std::vector<CFRecord> stray{Candidate("x", 0.1, "nope")};
  EXPECT_THROW(SelectVariants(stray, originals, emb, SelectMode::kTight),
               ContractError);
}

std::vector<LabeledExample> Originals(std::size_t n) {
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"o" + std::to_string(i), "text " + std::to_string(i),
                   i % 2 ? Polarity::kPositive : Polarity::kNegative});
  }
  return out;
}

std::vector<CFRecord> CfsFor(const std::vector<LabeledExample>& originals,
                             std::size_t n) {
  std::vector<CFRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto r = Candidate("cf " + std::to_string(i), 0.3,
                       originals[i % originals.size()].id);
    r.prompt_kind = i % 3 ? PromptKind::kNeutralPrefix : PromptKind::kUnigram;
    r.cf_label = Opposite(originals[i % originals.size()].label);
    out.push_back(r);
  }
  return out;
}

TEST(AugmentTest, CountArithmetic) {
  auto originals = Originals(8173);
  auto cfs = CfsFor(originals, 4732);
  auto aug = Augment(originals, cfs, std::nullopt, 0);
  EXPECT_EQ(aug.examples.size(), 12905u);
  EXPECT_EQ(aug.manifest["counts"]["total"], 12905);
  EXPECT_EQ(aug.manifest["counts"]["cfs_selected"], 4732);
  EXPECT_EQ(aug.manifest["per_prompt_kind"]["unigram"], 1578);
  std::set<std::string> ids;
  for (const auto& e : aug.examples) ids.insert(e.id);
  EXPECT_EQ(ids.size(), aug.examples.size());
}

TEST(AugmentTest, DownsampleIsSeededAndExact) {
  auto originals = Originals(20);
  auto cfs = CfsFor(originals, 30);
  auto a = Augment(originals, cfs, 12, 5);
  auto b = Augment(originals, cfs, 12, 5);
  auto c = Augment(originals, cfs, 12, 6);
  EXPECT_EQ(a.examples, b.examples);
  EXPECT_NE(a.examples, c.examples);
  EXPECT_EQ(a.examples.size(), 32u);
  auto all = Augment(originals, cfs, 30, 5);
  auto none = Augment(originals, cfs, std::nullopt, 5);
  EXPECT_EQ(all.examples, none.examples);
  auto zero = Augment(originals, cfs, 0, 5);
  EXPECT_EQ(zero.examples, originals);
  EXPECT_THROW(Augment(originals, cfs, 31, 5), ContractError);
}

TEST(AugmentTest, CfLabelsAndSources) {
  auto originals = Originals(3);
  auto cfs = CfsFor(originals, 3);
  auto aug = Augment(originals, cfs, std::nullopt, 1);
  for (std::size_t i = 3; i < 6; ++i) {
    EXPECT_NE(aug.examples[i].label, originals[i - 3].label);
    EXPECT_EQ(aug.examples[i].id, originals[i - 3].id + "-cf");
  }
  cfs[0].source_id = "ghost";
  EXPECT_THROW(Augment(originals, cfs, std::nullopt, 1), ContractError);
}

TEST_F(PipelineTest, ConceptAlteredConstraints) {
  auto fixture = Load("fixture5.tsv");
  std::span<const LabeledExample> spoof(&fixture[2], 1);
  auto run = ConceptAlteredRun(spoof, *lms_, *lex_, *scorer_, PipelineConfig{},
                               GenerationMode::kNeutralPrefix, *emb_);
  ASSERT_EQ(run.records.size(), 1u);
  std::vector<TokenList> altered{{"comedic"}, {"parodied"}};
  EXPECT_EQ(run.records[0].constraint_set, BuildCnf(altered));

  EmbeddingTable empty;
  auto same = ConceptAlteredRun(fixture, *lms_, *lex_, *scorer_,
                                PipelineConfig{},
                                GenerationMode::kNeutralPrefix, empty);
  auto plain = Run(fixture, GenerationMode::kNeutralPrefix);
  ASSERT_EQ(same.records.size(), plain.records.size());
  for (std::size_t i = 0; i < plain.records.size(); ++i) {
    EXPECT_EQ(same.records[i].constraint_set, plain.records[i].constraint_set);
  }
}

TEST_F(PipelineTest, ConceptAlterationMatchesBruteForce) {
  auto run = ConceptAlteredRun(*examples_, *lms_, *lex_, *scorer_,
                               PipelineConfig{}, GenerationMode::kUnigram,
                               *emb_);
  ASSERT_EQ(run.records.size(), examples_->size());
  for (std::size_t i = 0; i < examples_->size(); ++i) {
    std::vector<TokenList> expected;
    for (const auto& c : UniquePhrases(
             ExtractConcepts((*examples_)[i].text, *lex_))) {
      auto qv = emb_->PhraseVector(c);
      if (!qv) {
        expected.push_back(c);
        continue;
      }
      double best = -2.0;
      TokenList arg = c;
      for (const auto& e : lex_->entries()) {
        if (e == c) continue;
        auto ev = emb_->PhraseVector(e);
        if (!ev) continue;
        double s = Cosine(*qv, *ev);
        if (s > best) {
          best = s;
          arg = e;
        }
      }
      expected.push_back(arg);
    }
    EXPECT_EQ(run.records[i].constraint_set, BuildCnf(expected))
        << (*examples_)[i].id;
  }
}

TEST_F(PipelineTest, ReportOnIdentityCounterfactuals) {
  std::vector<CFRecord> identity;
  for (const auto& ex : *examples_) {
    CFRecord r;
    r.source_id = ex.id;
    r.prompt_kind = ex.label == Polarity::kPositive ? PromptKind::kUnigram
                                                    : PromptKind::kNeutralPrefix;
    r.prompt_tokens = Tokenize(ex.text, Casing::kLower);
    identity.push_back(r);
  }
  auto table = Report(*examples_, identity, *lms_->positive, *emb_);
  ASSERT_EQ(table.rows.size(), examples_->size());
  for (const auto& row : table.rows) {
    EXPECT_NEAR(row.bleu2, 1.0, 1e-12);
    EXPECT_EQ(row.levenshtein, 0u);
    EXPECT_NEAR(row.mover_sim, 1.0, 1e-12);
  }
  ASSERT_EQ(table.means.size(), 3u);
  EXPECT_EQ(table.means[0].kind, "neutral_prefix");
  EXPECT_EQ(table.means[1].kind, "unigram");
  EXPECT_EQ(table.means[2].kind, "all");
  EXPECT_EQ(table.means[2].count, examples_->size());
  auto csv = table.ToCsv();
  auto lines = SplitString(csv, '\n');
  EXPECT_EQ(lines[0][0], '#');
  EXPECT_EQ(lines[1], "id,bleu2,levenshtein,unit,mover_sim,ppl,distinct2_corpus");
  EXPECT_EQ(lines[2].substr(0, 13), "n01,1,0,char,");
}

TEST_F(PipelineTest, ReportCellsMatchStandaloneMetrics) {
  auto fixture = Load("fixture5.tsv");
  auto run = Run(fixture, GenerationMode::kUnigram);
  auto table = Report(fixture, run.records, *lms_->positive, *emb_,
                      EditUnit::kToken);
  for (std::size_t i = 0; i < run.records.size(); ++i) {
    const auto& r = run.records[i];
    auto ref = Tokenize(fixture[i].text, Casing::kLower);
    auto cand = r.Text();
    EXPECT_EQ(table.rows[i].bleu2, Bleu2(cand, ref));
    EXPECT_EQ(table.rows[i].levenshtein,
              EditDistance<Token>(cand, ref));
    EXPECT_EQ(table.rows[i].mover_sim, MoverSim(cand, ref, *emb_));
    auto ids = ToIdsOrUnk(lms_->positive->vocabulary(), cand);
    ids.push_back(Vocabulary::kEos);
    EXPECT_EQ(table.rows[i].ppl,
              Perplexity(*lms_->positive, std::span<const TokenId>(ids)));
  }
  std::vector<CFRecord> stray = run.records;
  stray[0].source_id = "missing";
  EXPECT_THROW(Report(fixture, stray, *lms_->positive, *emb_), ContractError);
}

}  // namespace
}  // namespace loosecf
