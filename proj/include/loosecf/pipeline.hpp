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

// Counterfactual generation pipeline: per-example constraint building,
// steer routing, prompt construction, decoding, candidate sweeps,
// loose/tight selection, augmentation and metric reports.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <iterator>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "loosecf/concepts.hpp"
#include "loosecf/constraints.hpp"
#include "loosecf/decoder.hpp"
#include "loosecf/errors.hpp"
#include "loosecf/ngram_lm.hpp"
#include "loosecf/prompts.hpp"
#include "loosecf/sentiment.hpp"
#include "loosecf/simmetrics.hpp"
#include "loosecf/textcore.hpp"

namespace loosecf {

enum class GenerationMode { kNeutralPrefix, kUnigram, kNoConstraints };

inline std::string_view GenerationModeName(GenerationMode m) {
  switch (m) {
    case GenerationMode::kNeutralPrefix: return "np";
    case GenerationMode::kUnigram: return "1g";
    case GenerationMode::kNoConstraints: return "no_constraints";
  }
  return "np";
}

inline std::optional<GenerationMode> ParseGenerationMode(std::string_view s) {
  if (s == "np") return GenerationMode::kNeutralPrefix;
  if (s == "1g") return GenerationMode::kUnigram;
  if (s == "no_constraints") return GenerationMode::kNoConstraints;
  return std::nullopt;
}

// The two sentiment-steered models. A counterfactual for a source labeled
// `l` is decoded with the steer for Opposite(l).
struct SteerModels {
  std::shared_ptr<const LanguageModel> positive;
  std::shared_ptr<const LanguageModel> negative;

  const LanguageModel& For(Polarity p) const {
    return p == Polarity::kPositive ? *positive : *negative;
  }

  void Validate() const {
    if (!positive || !negative) throw ContractError("missing steer model");
    if (!(positive->vocabulary() == negative->vocabulary())) {
      throw ContractError("steer models do not share one vocabulary");
    }
  }
};

// Trains both steers on the polarity splits of `examples`, over one
// vocabulary built from the whole corpus.
inline SteerModels TrainSteers(std::span<const LabeledExample> examples,
                               int order, double alpha, bool lowercase = true) {
  const Casing casing = lowercase ? Casing::kLower : Casing::kPreserve;
  std::vector<TokenList> all, pos, neg;
  for (const auto& ex : examples) {
    all.push_back(Tokenize(ex.text, casing));
    (ex.label == Polarity::kPositive ? pos : neg).push_back(all.back());
  }
  auto vocab = std::make_shared<const Vocabulary>(Vocabulary::FromCorpus(all));
  return {std::make_shared<NGramLM>(NGramLM::Train(pos, vocab, order, alpha)),
          std::make_shared<NGramLM>(NGramLM::Train(neg, vocab, order, alpha))};
}

struct PipelineConfig {
  DecoderConfig decoder;
  bool lowercase = true;  // texts are lowercased before prompting and decoding
  bool include_capitalized = true;
  int jobs = 1;
  bool verify_with_scorer = false;
  // Replaces the concept-derived constraints of every example; prompts still
  // come from the extracted concepts. Ignored without constraints.
  std::optional<ConstraintSet> constraints;

  void Validate() const {
    decoder.Validate();
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
  }
};

inline constexpr double kSweepAlphas[] = {0.1, 0.3, 0.5, 0.7};

struct CFRecord {
  std::string source_id;
  PromptKind prompt_kind = PromptKind::kNone;
  TokenList prompt_tokens;
  ConstraintSet constraint_set;
  TokenList generation_tokens;
  double logprob = 0.0;
  double objective = 0.0;
  int satisfied_clauses = 0;
  Polarity steer_polarity = Polarity::kPositive;
  Polarity cf_label = Polarity::kPositive;
  std::string config_fingerprint;
  double length_penalty_alpha = 0.3;
  std::optional<SentimentClass> scorer_label;

  // Prompt followed by the generation.
  TokenList Text() const {
    TokenList t = prompt_tokens;
    t.insert(t.end(), generation_tokens.begin(), generation_tokens.end());
    return t;
  }
};

inline nlohmann::ordered_json ToJson(const CFRecord& r) {
  nlohmann::ordered_json j;
  j["source_id"] = r.source_id;
  j["prompt_kind"] = PromptKindName(r.prompt_kind);
  j["prompt_tokens"] = r.prompt_tokens;
  j["constraint_set"] = r.constraint_set.ToJson();
  j["generation_tokens"] = r.generation_tokens;
  j["logprob"] = r.logprob;
  j["objective"] = r.objective;
  j["satisfied_clauses"] = r.satisfied_clauses;
  j["steer_polarity"] = PolarityName(r.steer_polarity);
  j["cf_label"] = PolarityName(r.cf_label);
  j["config_fingerprint"] = r.config_fingerprint;
  j["length_penalty_alpha"] = r.length_penalty_alpha;
  if (r.scorer_label) j["scorer_label"] = SentimentClassName(*r.scorer_label);
  return j;
}

inline CFRecord CfRecordFromJson(const nlohmann::json& j,
                                 const std::string& where) {
  try {
    CFRecord r;
    r.source_id = j.at("source_id").get<std::string>();
    auto kind = ParsePromptKind(j.at("prompt_kind").get<std::string>());
    if (!kind) throw IoError(where + ": bad prompt_kind");
    r.prompt_kind = *kind;
    r.prompt_tokens = j.at("prompt_tokens").get<TokenList>();
    r.constraint_set = ConstraintSet::FromJson(j.at("constraint_set"));
    r.generation_tokens = j.at("generation_tokens").get<TokenList>();
    r.logprob = j.at("logprob").get<double>();
    r.objective = j.at("objective").get<double>();
    r.satisfied_clauses = j.at("satisfied_clauses").get<int>();
    auto steer = ParsePolarity(j.at("steer_polarity").get<std::string>());
    auto label = ParsePolarity(j.at("cf_label").get<std::string>());
    if (!steer || !label) throw IoError(where + ": bad polarity");
    r.steer_polarity = *steer;
    r.cf_label = *label;
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    r.length_penalty_alpha = j.value("length_penalty_alpha", 0.3);
    if (j.contains("scorer_label")) {
      auto s = j.at("scorer_label").get<std::string>();
      for (auto c : {SentimentClass::kNegative, SentimentClass::kNeutral,
                     SentimentClass::kPositive}) {
        if (SentimentClassName(c) == s) r.scorer_label = c;
      }
      if (!r.scorer_label) throw IoError(where + ": bad scorer_label");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(where + ": " + e.what());
  } catch (const ContractError& e) {
    throw IoError(where + ": " + e.what());
  }
}

inline std::string FormatCfRecords(std::span<const CFRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += ToJson(r).dump();
    out += '\n';
  }
  return out;
}

inline void WriteCfRecords(const std::string& path,
                           std::span<const CFRecord> records) {
  WriteFile(path, FormatCfRecords(records));
}

inline std::vector<CFRecord> ReadCfRecords(const std::string& path) {
  std::vector<CFRecord> out;
  auto lines = ReadLines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string where = path + ":" + std::to_string(i + 1);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(where + ": " + e.what());
    }
    out.push_back(CfRecordFromJson(j, where));
  }
  return out;
}

struct ManifestEntry {
  std::string id;
  std::string detail;
};

struct UnsatisfiableClause {
  std::string id;
  std::size_t clause = 0;
  std::string predicates;  // `|`-joined
};

struct GenerationManifest {
  std::string mode;
  std::string config_fingerprint;
  std::size_t inputs = 0;
  std::size_t records = 0;
  std::vector<ManifestEntry> skipped;
  std::vector<ManifestEntry> failures;
  std::vector<UnsatisfiableClause> unsatisfiable;

  nlohmann::ordered_json ToJson() const {
    nlohmann::ordered_json j;
    j["config_fingerprint"] = config_fingerprint;
    j["mode"] = mode;
    j["counts"] = {{"inputs", inputs},
                   {"records", records},
                   {"skipped", skipped.size()},
                   {"failed", failures.size()}};
    auto entries = [](const std::vector<ManifestEntry>& v, const char* key) {
      auto a = nlohmann::ordered_json::array();
      for (const auto& e : v) a.push_back({{"id", e.id}, {key, e.detail}});
      return a;
    };
    j["skipped"] = entries(skipped, "reason");
    j["failures"] = entries(failures, "error");
    auto u = nlohmann::ordered_json::array();
    for (const auto& c : unsatisfiable) {
      u.push_back(
          {{"id", c.id}, {"clause", c.clause}, {"predicates", c.predicates}});
    }
    j["unsatisfiable_clauses"] = u;
    return j;
  }
};

struct GenerationRun {
  std::vector<CFRecord> records;
  GenerationManifest manifest;
};

namespace internal {

inline std::string CanonicalConfig(const PipelineConfig& cfg) {
  const DecoderConfig& d = cfg.decoder;
  std::string s;
  auto add = [&](const char* k, const std::string& v) {
    s += k;
    s += '=';
    s += v;
    s += ';';
  };
  add("beam_size", std::to_string(d.beam_size));
  add("length_penalty_alpha", FormatDouble(d.length_penalty_alpha));
  add("no_repeat_ngram", std::to_string(d.no_repeat_ngram));
  add("beta", FormatDouble(d.beta));
  add("sat_tolerance", std::to_string(d.sat_tolerance));
  add("lambda", FormatDouble(d.lambda));
  add("max_len", std::to_string(d.max_len));
  add("length_penalty_form",
      d.length_penalty_form == LengthPenaltyForm::kGnmt ? "gnmt" : "power");
  add("length_penalty_in_search", d.length_penalty_in_search ? "1" : "0");
  add("length_penalty_in_ranking", d.length_penalty_in_ranking ? "1" : "0");
  add("prompt_in_repeat_window", d.prompt_in_repeat_window ? "1" : "0");
  add("lowercase", cfg.lowercase ? "1" : "0");
  add("include_capitalized", cfg.include_capitalized ? "1" : "0");
  if (cfg.constraints) add("constraints", cfg.constraints->ToJson().dump());
  return s;
}

// Everything per-run that does not depend on the decoder config.
struct RunContext {
  const SteerModels* lms;
  const ConceptLexicon* lex;
  const PolarityScorer* scorer;
  const EmbeddingTable* alter_with;  // null: concepts used as extracted
  std::string inputs_fingerprint;
};

inline std::string Fingerprint(const RunContext& ctx,
                               const PipelineConfig& cfg,
                               GenerationMode mode) {
  std::string s = CanonicalConfig(cfg);
  s += "mode=" + std::string(GenerationModeName(mode)) + ";";
  s += ctx.inputs_fingerprint;
  return HexDigest(Fnv1a64(s));
}

inline RunContext MakeContext(const SteerModels& lms, const ConceptLexicon& lex,
                              const PolarityScorer& scorer,
                              const EmbeddingTable* alter_with) {
  lms.Validate();
  std::string in = "positive_lm=" + lms.positive->Fingerprint() +
                   ";negative_lm=" + lms.negative->Fingerprint() +
                   ";concepts=" + lex.Fingerprint() +
                   ";scorer=" + scorer.Fingerprint() + ";";
  if (alter_with) in += "altered=" + alter_with->Fingerprint() + ";";
  return {&lms, &lex, &scorer, alter_with, in};
}

struct ExampleOutcome {
  std::optional<CFRecord> record;
  std::optional<std::string> skip;
  std::optional<std::string> failure;
  std::vector<UnsatisfiableClause> unsatisfiable;
};

inline ExampleOutcome GenerateOne(const LabeledExample& ex,
                                  const RunContext& ctx,
                                  const PipelineConfig& cfg,
                                  GenerationMode mode,
                                  const std::string& fingerprint) {
  ExampleOutcome out;
  try {
    const TokenList tokens = Tokenize(ex.text);
    std::vector<TokenList> concepts;
    if (mode != GenerationMode::kNoConstraints) {
      concepts = UniquePhrases(ExtractConcepts(tokens, *ctx.lex));
      if (ctx.alter_with) {
        for (auto& c : concepts) {
          try {
            c = NearestConcept(c, *ctx.alter_with, *ctx.lex);
          } catch (const NotEmbeddable&) {
            // Keep the original concept.
          }
        }
      }
    }
    const ConstraintSet set =
        cfg.constraints && mode != GenerationMode::kNoConstraints
            ? *cfg.constraints
            : BuildCnf(concepts, cfg.include_capitalized);

    Prompt prompt;
    if (mode == GenerationMode::kNeutralPrefix) {
      prompt = PromptNeutralPrefix(ex.text, *ctx.scorer, *ctx.lex);
      if (prompt.kind == PromptKind::kNone) {
        out.skip = concepts.empty() ? "no concepts" : "no neutral prefix";
        return out;
      }
    } else {
      prompt = PromptUnigram(ex.text);
    }
    if (cfg.lowercase) prompt.tokens = ToLower(prompt.tokens);

    const Polarity target = Opposite(ex.label);
    const LanguageModel& lm = ctx.lms->For(target);
    const Vocabulary& vocab = lm.vocabulary();

    // Clauses no generable token sequence can satisfy.
    const ConstraintState start = StateAfter(set, prompt.tokens);
    for (std::size_t c = 0; c < set.size(); ++c) {
      if (start.satisfied[c]) continue;
      bool possible = false;
      std::vector<std::string> texts;
      for (const auto& p : set.clauses()[c].predicates) {
        texts.push_back(Detokenize(p.phrase));
        possible |= std::all_of(p.phrase.begin(), p.phrase.end(),
                                [&](const Token& t) {
                                  auto id = vocab.Find(t);
                                  return id && Vocabulary::IsGenerable(*id) &&
                                         *id != Vocabulary::kEos;
                                });
      }
      if (!possible) out.unsatisfiable.push_back({ex.id, c, Join(texts, "|")});
    }

    auto gens = Decode(lm, prompt.tokens, set, cfg.decoder);
    if (gens.empty()) {
      out.failure = "decoder returned no generation";
      return out;
    }
    const Generation& top = gens.front();
    CFRecord r;
    r.source_id = ex.id;
    r.prompt_kind = prompt.kind;
    r.prompt_tokens = prompt.tokens;
    r.constraint_set = set;
    r.generation_tokens = top.tokens;
    r.logprob = top.logprob;
    r.objective = top.objective;
    r.satisfied_clauses = top.satisfied_clauses;
    r.steer_polarity = target;
    r.cf_label = target;
    r.config_fingerprint = fingerprint;
    r.length_penalty_alpha = cfg.decoder.length_penalty_alpha;
    if (cfg.verify_with_scorer) {
      r.scorer_label = ctx.scorer->Classify(Detokenize(r.Text()));
    }
    out.record = std::move(r);
  } catch (const Error& e) {
    out.failure = e.what();
  }
  return out;
}

// Runs `work(i)` for i in [0, n) on `jobs` threads.
template <typename Fn>
void ParallelFor(std::size_t n, int jobs, Fn&& work) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> threads;
  const std::size_t count = std::min<std::size_t>(jobs, n);
  for (std::size_t t = 0; t < count; ++t) {
    threads.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          work(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

struct Job {
  std::size_t example;
  PipelineConfig cfg;
  std::string fingerprint;
};

inline GenerationRun RunJobs(std::span<const LabeledExample> examples,
                             const std::vector<Job>& jobs,
                             const RunContext& ctx, const PipelineConfig& cfg,
                             GenerationMode mode,
                             const std::string& run_fingerprint) {
  std::vector<ExampleOutcome> outcomes(jobs.size());
  ParallelFor(jobs.size(), cfg.jobs, [&](std::size_t i) {
    const Job& job = jobs[i];
    outcomes[i] = GenerateOne(examples[job.example], ctx, job.cfg, mode,
                              job.fingerprint);
  });
  GenerationRun run;
  run.manifest.mode = std::string(GenerationModeName(mode));
  run.manifest.config_fingerprint = run_fingerprint;
  run.manifest.inputs = examples.size();
  std::set<std::string> skipped_ids, failed_ids, flagged_ids;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    auto& o = outcomes[i];
    const std::string& id = examples[jobs[i].example].id;
    if (o.record) run.records.push_back(std::move(*o.record));
    if (o.skip && skipped_ids.insert(id).second) {
      run.manifest.skipped.push_back({id, *o.skip});
    }
    if (o.failure) run.manifest.failures.push_back({id, *o.failure});
    if (flagged_ids.insert(id).second) {
      for (auto& u : o.unsatisfiable) {
        run.manifest.unsatisfiable.push_back(std::move(u));
      }
    }
  }
  run.manifest.records = run.records.size();
  return run;
}

}  // namespace internal

// One counterfactual per example (the top-ranked generation), in input
// order. Examples without a usable prompt are listed as skipped in the
// manifest; per-example failures are recorded and the run continues.
// With `alter_with`, every concept is first replaced by its nearest
// lexicon neighbour.
inline GenerationRun GenerateCfs(std::span<const LabeledExample> examples,
                                 const SteerModels& lms,
                                 const ConceptLexicon& lex,
                                 const PolarityScorer& scorer,
                                 const PipelineConfig& cfg,
                                 GenerationMode mode,
                                 const EmbeddingTable* alter_with = nullptr) {
  cfg.Validate();
  auto ctx = internal::MakeContext(lms, lex, scorer, alter_with);
  const std::string fp = internal::Fingerprint(ctx, cfg, mode);
  std::vector<internal::Job> jobs;
  for (std::size_t i = 0; i < examples.size(); ++i) jobs.push_back({i, cfg, fp});
  return internal::RunJobs(examples, jobs, ctx, cfg, mode, fp);
}

// Concept-altered constraints: identical to GenerateCfs except that each
// concept is swapped for its nearest neighbour in `emb`; concepts that
// cannot be embedded are kept.
inline GenerationRun ConceptAlteredRun(std::span<const LabeledExample> examples,
                                       const SteerModels& lms,
                                       const ConceptLexicon& lex,
                                       const PolarityScorer& scorer,
                                       const PipelineConfig& cfg,
                                       GenerationMode mode,
                                       const EmbeddingTable& emb) {
  return GenerateCfs(examples, lms, lex, scorer, cfg, mode, &emb);
}

// Four candidates per example, one per length penalty in kSweepAlphas,
// everything else fixed. Records are example-major, penalty ascending.
inline GenerationRun SweepCandidates(std::span<const LabeledExample> examples,
                                     const SteerModels& lms,
                                     const ConceptLexicon& lex,
                                     const PolarityScorer& scorer,
                                     const PipelineConfig& cfg,
                                     GenerationMode mode =
                                         GenerationMode::kNeutralPrefix) {
  cfg.Validate();
  auto ctx = internal::MakeContext(lms, lex, scorer, nullptr);
  std::vector<internal::Job> jobs;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    for (double alpha : kSweepAlphas) {
      PipelineConfig c = cfg;
      c.decoder.length_penalty_alpha = alpha;
      jobs.push_back({i, c, internal::Fingerprint(ctx, c, mode)});
    }
  }
  std::string run_fp = HexDigest(Fnv1a64(
      "sweep;" + internal::Fingerprint(ctx, cfg, mode)));
  return internal::RunJobs(examples, jobs, ctx, cfg, mode, run_fp);
}

enum class SelectMode { kLoose, kTight };

inline std::optional<SelectMode> ParseSelectMode(std::string_view s) {
  if (s == "loose") return SelectMode::kLoose;
  if (s == "tight") return SelectMode::kTight;
  return std::nullopt;
}

// Tokens a candidate is compared against when it stands for `original`.
inline TokenList ReferenceTokens(const LabeledExample& original,
                                 bool lowercase = true) {
  return Tokenize(original.text, lowercase ? Casing::kLower : Casing::kPreserve);
}

// loose: least similar to `reference` by mover_sim; tight: most similar.
// Ties go to the lower length penalty, then the lexicographically smaller
// text. Candidates with no embeddable token are passed over.
inline CFRecord SelectVariant(std::span<const CFRecord> candidates,
                              const TokenList& reference,
                              const EmbeddingTable& emb, SelectMode mode) {
  if (candidates.empty()) throw ContractError("select: no candidates");
  const CFRecord* best = nullptr;
  double best_sim = 0.0;
  TokenList best_text;
  for (const auto& c : candidates) {
    double sim;
    try {
      sim = MoverSim(c.Text(), reference, emb);
    } catch (const ContractError&) {
      continue;
    }
    TokenList text = c.Text();
    bool better;
    if (!best) {
      better = true;
    } else if (sim != best_sim) {
      better = mode == SelectMode::kLoose ? sim < best_sim : sim > best_sim;
    } else if (c.length_penalty_alpha != best->length_penalty_alpha) {
      better = c.length_penalty_alpha < best->length_penalty_alpha;
    } else {
      better = text < best_text;
    }
    if (better) {
      best = &c;
      best_sim = sim;
      best_text = std::move(text);
    }
  }
  if (!best) {
    throw ContractError("select: no candidate for '" +
                        candidates.front().source_id + "' is embeddable");
  }
  return *best;
}

// Groups candidates by source_id (first-appearance order) and selects one
// per group. By default the reference is the original text; with
// `prior`, it is that source's earlier generation.
inline std::vector<CFRecord> SelectVariants(
    std::span<const CFRecord> candidates,
    std::span<const LabeledExample> originals, const EmbeddingTable& emb,
    SelectMode mode, bool lowercase = true,
    const std::vector<CFRecord>* prior = nullptr) {
  std::map<std::string, const LabeledExample*> by_id;
  for (const auto& ex : originals) by_id[ex.id] = &ex;
  std::map<std::string, const CFRecord*> prior_by_id;
  if (prior) {
    for (const auto& r : *prior) prior_by_id.emplace(r.source_id, &r);
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<CFRecord>> groups;
  for (const auto& c : candidates) {
    if (!groups.count(c.source_id)) order.push_back(c.source_id);
    groups[c.source_id].push_back(c);
  }
  std::vector<CFRecord> out;
  for (const auto& id : order) {
    TokenList reference;
    if (prior) {
      auto it = prior_by_id.find(id);
      if (it == prior_by_id.end()) {
        throw ContractError("select: no prior generation for '" + id + "'");
      }
      reference = it->second->Text();
    } else {
      auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw ContractError("select: unknown source_id '" + id + "'");
      }
      reference = ReferenceTokens(*it->second, lowercase);
    }
    out.push_back(SelectVariant(groups[id], reference, emb, mode));
  }
  return out;
}

struct AugmentedDataset {
  std::vector<LabeledExample> examples;  // originals, then sampled CFs
  nlohmann::ordered_json manifest;
};

// Originals followed by a uniform sample (without replacement, input order
// kept) of `downsample_to` counterfactuals, or all of them. CF examples get
// id `<source_id>-cf` (suffixed with a counter when a source has several).
inline AugmentedDataset Augment(std::span<const LabeledExample> originals,
                                std::span<const CFRecord> cfs,
                                std::optional<std::size_t> downsample_to,
                                std::uint64_t seed) {
  std::map<std::string, const LabeledExample*> by_id;
  for (const auto& ex : originals) by_id[ex.id] = &ex;
  std::vector<std::string> unknown;
  for (const auto& c : cfs) {
    if (!by_id.count(c.source_id)) unknown.push_back(c.source_id);
  }
  if (!unknown.empty()) {
    throw ContractError("augment: counterfactuals with unknown source ids: " +
                        Join(unknown, ", "));
  }
  if (downsample_to && *downsample_to > cfs.size()) {
    throw ContractError("augment: downsample_to " +
                        std::to_string(*downsample_to) + " exceeds " +
                        std::to_string(cfs.size()) + " counterfactuals");
  }
  std::vector<std::size_t> picked(cfs.size());
  for (std::size_t i = 0; i < cfs.size(); ++i) picked[i] = i;
  if (downsample_to) {
    std::vector<std::size_t> sample;
    std::mt19937_64 rng(seed);
    std::sample(picked.begin(), picked.end(), std::back_inserter(sample),
                *downsample_to, rng);
    picked = std::move(sample);
  }

  AugmentedDataset out;
  out.examples.assign(originals.begin(), originals.end());
  std::set<std::string> used;
  for (const auto& ex : originals) used.insert(ex.id);
  std::map<std::string, std::size_t> per_kind;
  for (std::size_t i : picked) {
    const CFRecord& c = cfs[i];
    std::string id = c.source_id + "-cf";
    for (int k = 2; used.count(id); ++k) {
      id = c.source_id + "-cf" + std::to_string(k);
    }
    used.insert(id);
    out.examples.push_back({id, Detokenize(c.Text()), c.cf_label});
    ++per_kind[std::string(PromptKindName(c.prompt_kind))];
  }
  auto& m = out.manifest;
  m["seed"] = seed;
  m["downsample_to"] = downsample_to ? nlohmann::ordered_json(*downsample_to)
                                     : nlohmann::ordered_json(nullptr);
  m["counts"] = {{"originals", originals.size()},
                 {"cfs_available", cfs.size()},
                 {"cfs_selected", picked.size()},
                 {"total", out.examples.size()}};
  m["per_source"] = {{"original", originals.size()},
                     {"counterfactual", picked.size()}};
  nlohmann::ordered_json kinds = nlohmann::ordered_json::object();
  for (const auto& [k, n] : per_kind) kinds[k] = n;
  m["per_prompt_kind"] = kinds;
  return out;
}

struct PairMetrics {
  std::string id;
  PromptKind kind = PromptKind::kNone;
  double bleu2 = 0.0;
  std::size_t levenshtein = 0;
  double mover_sim = 0.0;  // NaN when a side has no embeddable token
  double ppl = 0.0;
};

struct KindSummary {
  std::string kind;  // prompt kind name, or "all"
  std::size_t count = 0;
  double bleu2 = 0.0;
  double levenshtein = 0.0;
  double mover_sim = 0.0;  // mean over defined values; NaN if none
  double ppl = 0.0;
  double distinct2 = 0.0;  // NaN when the texts hold no bigram
};

struct MetricTable {
  EditUnit unit = EditUnit::kChar;
  std::vector<PairMetrics> rows;
  std::vector<KindSummary> means;

  const KindSummary* Mean(std::string_view kind) const {
    for (const auto& m : means) {
      if (m.kind == kind) return &m;
    }
    return nullptr;
  }

  std::string ToCsv() const {
    auto num = [](double v) {
      if (std::isnan(v)) return std::string("nan");
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.10g", v);
      return std::string(buf);
    };
    std::string unit_name(EditUnitName(unit));
    std::string out =
        "# bleu2, levenshtein, mover_sim and ppl are per pair; mean:<kind> "
        "rows average sentence-level scores; distinct2_corpus is computed "
        "over each group's texts\n";
    out += "id,bleu2,levenshtein,unit,mover_sim,ppl,distinct2_corpus\n";
    for (const auto& r : rows) {
      out += r.id + "," + num(r.bleu2) + "," + std::to_string(r.levenshtein) +
             "," + unit_name + "," + num(r.mover_sim) + "," + num(r.ppl) +
             ",\n";
    }
    for (const auto& m : means) {
      out += "mean:" + m.kind + "," + num(m.bleu2) + "," + num(m.levenshtein) +
             "," + unit_name + "," + num(m.mover_sim) + "," + num(m.ppl) +
             "," + num(m.distinct2) + "\n";
    }
    return out;
  }
};

// Per-pair similarity and fluency of each counterfactual against its
// original, with means per prompt kind and overall.
inline MetricTable Report(std::span<const LabeledExample> originals,
                          std::span<const CFRecord> cfs,
                          const LanguageModel& lm_for_ppl,
                          const EmbeddingTable& emb,
                          EditUnit unit = EditUnit::kChar,
                          bool lowercase = true) {
  std::map<std::string, const LabeledExample*> by_id;
  for (const auto& ex : originals) by_id[ex.id] = &ex;
  std::vector<std::string> unknown;
  for (const auto& c : cfs) {
    if (!by_id.count(c.source_id)) unknown.push_back(c.source_id);
  }
  if (!unknown.empty()) {
    throw ContractError("report: unmatched source ids: " + Join(unknown, ", "));
  }

  MetricTable table;
  table.unit = unit;
  std::map<std::string, std::vector<std::size_t>> by_kind;
  for (const auto& c : cfs) {
    const TokenList ref = ReferenceTokens(*by_id[c.source_id], lowercase);
    const TokenList cand = c.Text();
    PairMetrics p;
    p.id = c.source_id;
    p.kind = c.prompt_kind;
    p.bleu2 = Bleu2(cand, ref);
    p.levenshtein = Levenshtein(Detokenize(cand), Detokenize(ref), unit);
    try {
      p.mover_sim = MoverSim(cand, ref, emb);
    } catch (const ContractError&) {
      p.mover_sim = std::nan("");
    }
    auto ids = ToIdsOrUnk(lm_for_ppl.vocabulary(), cand);
    ids.push_back(Vocabulary::kEos);
    p.ppl = Perplexity(lm_for_ppl, std::span<const TokenId>(ids));
    by_kind[std::string(PromptKindName(p.kind))].push_back(table.rows.size());
    table.rows.push_back(std::move(p));
  }

  auto summarize = [&](const std::string& kind,
                       const std::vector<std::size_t>& idx) {
    KindSummary s;
    s.kind = kind;
    s.count = idx.size();
    std::size_t movers = 0;
    std::vector<TokenList> texts;
    for (std::size_t i : idx) {
      const auto& r = table.rows[i];
      s.bleu2 += r.bleu2;
      s.levenshtein += static_cast<double>(r.levenshtein);
      s.ppl += r.ppl;
      if (!std::isnan(r.mover_sim)) {
        s.mover_sim += r.mover_sim;
        ++movers;
      }
      texts.push_back(cfs[i].Text());
    }
    const double n = static_cast<double>(idx.size());
    s.bleu2 /= n;
    s.levenshtein /= n;
    s.ppl /= n;
    s.mover_sim = movers ? s.mover_sim / static_cast<double>(movers)
                         : std::nan("");
    try {
      s.distinct2 = Distinct2(texts);
    } catch (const ContractError&) {
      s.distinct2 = std::nan("");
    }
    return s;
  };
  for (const auto& [kind, idx] : by_kind) {
    table.means.push_back(summarize(kind, idx));
  }
  if (!cfs.empty()) {
    std::vector<std::size_t> all(cfs.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    table.means.push_back(summarize("all", all));
  }
  return table;
}

}  // namespace loosecf
