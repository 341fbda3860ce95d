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

// Command-line front end: one subcommand per pipeline operation.
//
//   loosecf <command> [--config FILE] [flags]
//
// Config files are flat key=value lines whose keys are flag names; flags
// given on the command line win over the file, which wins over defaults.
// Exit codes: 0 ok, 2 config error, 3 I/O error, 4 contract violation.

#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "loosecf/pipeline.hpp"

namespace loosecf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitContract = 4;

namespace internal {

inline void RequireReadable(const std::string& path) { OpenForRead(path); }

inline void RequireWritable(const std::string& path) {
  namespace fs = std::filesystem;
  fs::path dir = fs::path(path).parent_path();
  if (dir.empty()) dir = ".";
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    throw IoError("output directory '" + dir.string() + "' does not exist");
  }
  if (fs::is_directory(path, ec)) {
    throw IoError("output path '" + path + "' is a directory");
  }
}

inline std::string OneLine(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

// Effective settings as key -> value, in flag order.
inline nlohmann::ordered_json EffectiveConfig(const CLI::App& app) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& line : SplitString(app.config_to_str(true, false), '\n')) {
    auto eq = line.find('=');
    if (line.empty() || line[0] == '#' || eq == std::string::npos) continue;
    std::string value = line.substr(eq + 1);
    if (value.size() >= 2 && (value.front() == '\'' || value.front() == '"') &&
        value.back() == value.front()) {
      value = value.substr(1, value.size() - 2);
    }
    j[line.substr(0, eq)] = value;
  }
  return j;
}

inline void AddDecoderFlags(CLI::App& app, DecoderConfig& d,
                            std::string& form) {
  app.add_option("--beam-size", d.beam_size, "Beam size")
      ->capture_default_str();
  app.add_option("--length-penalty", d.length_penalty_alpha,
                 "Length penalty alpha")
      ->capture_default_str();
  app.add_option("--no-repeat-ngram", d.no_repeat_ngram,
                 "Block repeated n-grams of this size (0 disables)")
      ->capture_default_str();
  app.add_option("--beta", d.beta, "Partial-match reward")
      ->capture_default_str();
  app.add_option("--sat-tolerance", d.sat_tolerance,
                 "Satisfied-clause tolerance when grouping the beam")
      ->capture_default_str();
  app.add_option("--lambda", d.lambda, "Penalty per unsatisfied clause")
      ->capture_default_str();
  app.add_option("--max-len", d.max_len,
                 "Maximum prompt + generation length in tokens")
      ->capture_default_str();
  app.add_option("--length-penalty-form", form, "gnmt or power")
      ->check(CLI::IsMember({"gnmt", "power"}))
      ->capture_default_str();
  app.add_option("--length-penalty-in-search", d.length_penalty_in_search,
                 "Normalize scores while pruning")
      ->capture_default_str();
  app.add_option("--length-penalty-in-ranking", d.length_penalty_in_ranking,
                 "Normalize scores when ranking finished hypotheses")
      ->capture_default_str();
  app.add_option("--prompt-in-repeat-window", d.prompt_in_repeat_window,
                 "Count prompt n-grams when blocking repeats")
      ->capture_default_str();
}

inline LengthPenaltyForm ParseForm(const std::string& form) {
  return form == "power" ? LengthPenaltyForm::kPower : LengthPenaltyForm::kGnmt;
}

struct Command {
  std::string name;
  std::string description;
  // Registers flags on the app and returns the action run after parsing.
  std::function<std::function<void()>(CLI::App&, std::ostream&)> setup;
};

// ---- train-lm ----

inline std::function<void()> SetupTrainLm(CLI::App& app, std::ostream& out) {
  struct Opts {
    std::string corpus, polarity = "all", out;
    int order = 2;
    double alpha = 0.1;
    bool lowercase = true;
  };
  auto o = std::make_shared<Opts>();
  app.add_option("--corpus", o->corpus, "Labeled dataset (TSV or JSONL)")
      ->required();
  app.add_option("--polarity", o->polarity,
                 "Train on positive, negative or all examples")
      ->check(CLI::IsMember({"all", "positive", "negative"}))
      ->capture_default_str();
  app.add_option("--order", o->order, "N-gram order")->capture_default_str();
  app.add_option("--alpha", o->alpha, "Add-alpha smoothing")
      ->capture_default_str();
  app.add_option("--lowercase", o->lowercase, "Lowercase the corpus")
      ->capture_default_str();
  app.add_option("--out", o->out, "Model file")->required();
  return [o, &out] {
    RequireReadable(o->corpus);
    RequireWritable(o->out);
    auto examples = LoadDataset(o->corpus);
    const Casing casing = o->lowercase ? Casing::kLower : Casing::kPreserve;
    std::vector<TokenList> all, picked;
    for (const auto& ex : examples) {
      all.push_back(Tokenize(ex.text, casing));
      if (o->polarity == "all" ||
          o->polarity == PolarityName(ex.label)) {
        picked.push_back(all.back());
      }
    }
    // The vocabulary always spans the whole corpus so that models trained
    // on different splits can steer the same decoder.
    auto vocab =
        std::make_shared<const Vocabulary>(Vocabulary::FromCorpus(all));
    auto lm = NGramLM::Train(picked, vocab, o->order, o->alpha);
    lm.Save(o->out);
    out << "trained order-" << o->order << " model on " << picked.size()
        << " sentences -> " << o->out << "\n";
  };
}

// ---- extract ----

inline std::function<void()> SetupExtract(CLI::App& app, std::ostream& out) {
  struct Opts {
    std::string dataset, concepts, out;
  };
  auto o = std::make_shared<Opts>();
  app.add_option("--dataset", o->dataset, "Labeled dataset")->required();
  app.add_option("--concepts", o->concepts, "Concept lexicon")->required();
  app.add_option("--out", o->out, "Concept spans (JSONL)")->required();
  return [o, &out] {
    RequireReadable(o->dataset);
    RequireReadable(o->concepts);
    RequireWritable(o->out);
    auto examples = LoadDataset(o->dataset);
    auto lex = ConceptLexicon::Load(o->concepts);
    std::string text;
    for (const auto& ex : examples) {
      nlohmann::ordered_json j;
      j["id"] = ex.id;
      auto spans = nlohmann::ordered_json::array();
      for (const auto& s : ExtractConcepts(ex.text, lex)) {
        spans.push_back(
            {{"phrase", Join(s.phrase, " ")}, {"start", s.start}, {"end", s.end}});
      }
      j["concepts"] = spans;
      text += j.dump() + "\n";
    }
    WriteFile(o->out, text);
    out << "extracted concepts for " << examples.size() << " examples -> "
        << o->out << "\n";
  };
}

// ---- generate / sweep ----

struct GenerateOpts {
  std::string dataset, positive_lm, negative_lm, concepts, sentiment_lexicon,
      scorer_command, constraints, embeddings, mode = "np", out, manifest;
  std::string form = "gnmt";
  bool alter_concepts = false;
  PipelineConfig cfg;
  PolarityThresholds thresholds;
};

inline void AddGenerateFlags(CLI::App& app, GenerateOpts& o, bool sweep) {
  app.add_option("--dataset", o.dataset, "Labeled dataset")->required();
  app.add_option("--positive-lm", o.positive_lm, "Positive steer model")
      ->required();
  app.add_option("--negative-lm", o.negative_lm, "Negative steer model")
      ->required();
  app.add_option("--concepts", o.concepts, "Concept lexicon")->required();
  app.add_option("--sentiment-lexicon", o.sentiment_lexicon,
                 "Word polarity lexicon used for neutral prefixes");
  app.add_option("--scorer-command", o.scorer_command,
                 "External polarity scorer (one text per line in, one score "
                 "per line out); replaces the lexicon");
  app.add_option("--neg-threshold", o.thresholds.negative,
                 "Scores below this are negative")
      ->capture_default_str();
  app.add_option("--pos-threshold", o.thresholds.positive,
                 "Scores above this are positive")
      ->capture_default_str();
  app.add_option("--mode", o.mode, "Prompt mode: np, 1g or no_constraints")
      ->check(CLI::IsMember({"np", "1g", "no_constraints"}))
      ->capture_default_str();
  app.add_option("--constraints", o.constraints,
                 "Constraint file used for every example instead of the "
                 "extracted concepts");
  if (!sweep) {
    app.add_option("--embeddings", o.embeddings,
                   "Embedding table for --alter-concepts");
    app.add_flag("--alter-concepts", o.alter_concepts,
                 "Replace each concept by its nearest lexicon neighbour");
  }
  AddDecoderFlags(app, o.cfg.decoder, o.form);
  app.add_option("--lowercase", o.cfg.lowercase,
                 "Lowercase prompts before decoding")
      ->capture_default_str();
  app.add_option("--include-capitalized", o.cfg.include_capitalized,
                 "Allow the capitalized form of each concept")
      ->capture_default_str();
  app.add_option("--jobs", o.cfg.jobs, "Worker threads")->capture_default_str();
  app.add_flag("--verify-with-scorer", o.cfg.verify_with_scorer,
               "Annotate records with the scorer's label");
  app.add_option("--out", o.out, "Counterfactual records (JSONL)")->required();
  app.add_option("--manifest", o.manifest,
                 "Run manifest (default: <out>.manifest.json)");
}

inline void RunGenerate(const CLI::App& app, GenerateOpts& o, bool sweep,
                        std::ostream& out) {
  auto mode = *ParseGenerationMode(o.mode);
  o.cfg.decoder.length_penalty_form = ParseForm(o.form);
  if (o.manifest.empty()) o.manifest = o.out + ".manifest.json";
  if (o.sentiment_lexicon.empty() && o.scorer_command.empty()) {
    throw ConfigError("one of --sentiment-lexicon or --scorer-command is "
                      "required");
  }
  if (o.alter_concepts && o.embeddings.empty()) {
    throw ConfigError("--alter-concepts requires --embeddings");
  }
  if (!o.constraints.empty() && mode == GenerationMode::kNoConstraints) {
    throw ConfigError("--constraints cannot be combined with "
                      "--mode no_constraints");
  }
  o.cfg.Validate();
  for (const auto* p : {&o.dataset, &o.positive_lm, &o.negative_lm,
                        &o.concepts, &o.sentiment_lexicon, &o.constraints,
                        &o.embeddings}) {
    if (!p->empty()) RequireReadable(*p);
  }
  RequireWritable(o.out);
  RequireWritable(o.manifest);

  auto examples = LoadDataset(o.dataset);
  SteerModels lms{std::make_shared<NGramLM>(NGramLM::Load(o.positive_lm)),
                  std::make_shared<NGramLM>(NGramLM::Load(o.negative_lm))};
  auto lex = ConceptLexicon::Load(o.concepts);
  std::unique_ptr<PolarityScorer> scorer;
  if (!o.scorer_command.empty()) {
    scorer = std::make_unique<SubprocessScorer>(o.scorer_command, o.thresholds);
  } else {
    scorer = std::make_unique<LexiconScorer>(
        SentimentLexicon::Load(o.sentiment_lexicon), o.thresholds);
  }
  if (!o.constraints.empty()) {
    o.cfg.constraints = ConstraintSet::FromText(ReadLines(o.constraints));
  }
  std::optional<EmbeddingTable> emb;
  if (o.alter_concepts) emb = EmbeddingTable::Load(o.embeddings);

  GenerationRun run =
      sweep ? SweepCandidates(examples, lms, lex, *scorer, o.cfg, mode)
            : GenerateCfs(examples, lms, lex, *scorer, o.cfg, mode,
                          emb ? &*emb : nullptr);
  WriteCfRecords(o.out, run.records);
  auto manifest = run.manifest.ToJson();
  manifest["command"] = sweep ? "sweep" : "generate";
  manifest["config"] = EffectiveConfig(app);
  WriteFile(o.manifest, manifest.dump(2) + "\n");
  out << run.records.size() << " records, " << run.manifest.skipped.size()
      << " skipped, " << run.manifest.failures.size() << " failed -> "
      << o.out << "\n";
}

inline std::function<void()> SetupGenerate(CLI::App& app, std::ostream& out,
                                           bool sweep) {
  auto o = std::make_shared<GenerateOpts>();
  AddGenerateFlags(app, *o, sweep);
  return [o, &app, &out, sweep] { RunGenerate(app, *o, sweep, out); };
}

// ---- select ----

inline std::function<void()> SetupSelect(CLI::App& app, std::ostream& out) {
  struct Opts {
    std::string candidates, dataset, embeddings, mode = "loose",
        anchor = "original", prior, out;
    bool lowercase = true;
  };
  auto o = std::make_shared<Opts>();
  app.add_option("--candidates", o->candidates, "Sweep records (JSONL)")
      ->required();
  app.add_option("--dataset", o->dataset, "Original labeled dataset")
      ->required();
  app.add_option("--embeddings", o->embeddings, "Embedding table")->required();
  app.add_option("--mode", o->mode, "loose (least similar) or tight")
      ->check(CLI::IsMember({"loose", "tight"}))
      ->capture_default_str();
  app.add_option("--anchor", o->anchor,
                 "Compare against the original text or a prior generation")
      ->check(CLI::IsMember({"original", "prior"}))
      ->capture_default_str();
  app.add_option("--prior", o->prior,
                 "Earlier records (JSONL) used with --anchor prior");
  app.add_option("--lowercase", o->lowercase, "Lowercase original texts")
      ->capture_default_str();
  app.add_option("--out", o->out, "Selected records (JSONL)")->required();
  return [o, &out] {
    const bool use_prior = o->anchor == "prior";
    if (use_prior && o->prior.empty()) {
      throw ConfigError("--anchor prior requires --prior");
    }
    for (const auto* p : {&o->candidates, &o->dataset, &o->embeddings}) {
      RequireReadable(*p);
    }
    if (use_prior) RequireReadable(o->prior);
    RequireWritable(o->out);
    auto candidates = ReadCfRecords(o->candidates);
    auto originals = LoadDataset(o->dataset);
    auto emb = EmbeddingTable::Load(o->embeddings);
    std::vector<CFRecord> prior;
    if (use_prior) prior = ReadCfRecords(o->prior);
    auto picked =
        SelectVariants(candidates, originals, emb, *ParseSelectMode(o->mode),
                       o->lowercase, use_prior ? &prior : nullptr);
    WriteCfRecords(o->out, picked);
    out << "selected " << picked.size() << " of " << candidates.size()
        << " candidates -> " << o->out << "\n";
  };
}

// ---- augment ----

inline std::function<void()> SetupAugment(CLI::App& app, std::ostream& out) {
  struct Opts {
    std::string dataset, cfs, out, manifest;
    std::optional<std::size_t> downsample;
    std::uint64_t seed = 0;
  };
  auto o = std::make_shared<Opts>();
  app.add_option("--dataset", o->dataset, "Original labeled dataset")
      ->required();
  app.add_option("--cfs", o->cfs, "Counterfactual records (JSONL)")
      ->required();
  app.add_option("--downsample", o->downsample,
                 "Keep this many counterfactuals, sampled uniformly");
  app.add_option("--seed", o->seed, "Sampling seed")->capture_default_str();
  app.add_option("--out", o->out,
                 "Augmented dataset (.jsonl for JSONL, TSV otherwise)")
      ->required();
  app.add_option("--manifest", o->manifest,
                 "Count manifest (default: <out>.manifest.json)");
  return [o, &app, &out] {
    if (o->manifest.empty()) o->manifest = o->out + ".manifest.json";
    RequireReadable(o->dataset);
    RequireReadable(o->cfs);
    RequireWritable(o->out);
    RequireWritable(o->manifest);
    auto originals = LoadDataset(o->dataset);
    auto cfs = ReadCfRecords(o->cfs);
    auto aug = Augment(originals, cfs, o->downsample, o->seed);
    SaveDataset(o->out, aug.examples);
    aug.manifest["command"] = "augment";
    aug.manifest["config"] = EffectiveConfig(app);
    WriteFile(o->manifest, aug.manifest.dump(2) + "\n");
    out << aug.examples.size() << " examples (" << originals.size()
        << " original + " << aug.examples.size() - originals.size()
        << " counterfactual) -> " << o->out << "\n";
  };
}

// ---- report ----

inline std::function<void()> SetupReport(CLI::App& app, std::ostream& out) {
  struct Opts {
    std::string dataset, cfs, lm, embeddings, unit = "char", out;
    bool lowercase = true;
  };
  auto o = std::make_shared<Opts>();
  app.add_option("--dataset", o->dataset, "Original labeled dataset")
      ->required();
  app.add_option("--cfs", o->cfs, "Counterfactual records (JSONL)")
      ->required();
  app.add_option("--lm", o->lm, "Model used for perplexity")->required();
  app.add_option("--embeddings", o->embeddings, "Embedding table")->required();
  app.add_option("--unit", o->unit, "Levenshtein unit: char or token")
      ->check(CLI::IsMember({"char", "token"}))
      ->capture_default_str();
  app.add_option("--lowercase", o->lowercase, "Lowercase original texts")
      ->capture_default_str();
  app.add_option("--out", o->out, "Metrics (CSV)")->required();
  return [o, &out] {
    for (const auto* p : {&o->dataset, &o->cfs, &o->lm, &o->embeddings}) {
      RequireReadable(*p);
    }
    RequireWritable(o->out);
    auto originals = LoadDataset(o->dataset);
    auto cfs = ReadCfRecords(o->cfs);
    auto lm = NGramLM::Load(o->lm);
    auto emb = EmbeddingTable::Load(o->embeddings);
    auto table =
        Report(originals, cfs, lm, emb,
               o->unit == "token" ? EditUnit::kToken : EditUnit::kChar,
               o->lowercase);
    WriteFile(o->out, table.ToCsv());
    out << "scored " << table.rows.size() << " pairs -> " << o->out << "\n";
  };
}

inline const std::vector<Command>& Commands() {
  static const std::vector<Command> commands = {
      {"train-lm", "Train an add-alpha n-gram steer on a dataset split",
       SetupTrainLm},
      {"extract", "Write the concepts found in each example", SetupExtract},
      {"generate", "Generate one counterfactual per example",
       [](CLI::App& a, std::ostream& o) { return SetupGenerate(a, o, false); }},
      {"sweep", "Generate one candidate per length penalty in {0.1,0.3,0.5,0.7}",
       [](CLI::App& a, std::ostream& o) { return SetupGenerate(a, o, true); }},
      {"select", "Pick one candidate per example by mover similarity",
       SetupSelect},
      {"augment", "Concatenate originals with (sampled) counterfactuals",
       SetupAugment},
      {"report", "Similarity, fluency and diversity metrics as CSV",
       SetupReport},
  };
  return commands;
}

inline std::string Usage() {
  std::string s = "usage: loosecf <command> [--config FILE] [flags]\n\n"
                  "commands:\n";
  for (const auto& c : Commands()) {
    s += "  " + c.name + std::string(12 - c.name.size(), ' ') +
         c.description + "\n";
  }
  s += "\nRun 'loosecf <command> --help' for the flags of a command.\n";
  return s;
}

// --config must name a readable file; CLI11 would otherwise report it as a
// parse error.
inline void CheckConfigPath(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      RequireReadable(args[i + 1]);
    } else if (args[i].starts_with("--config=")) {
      RequireReadable(args[i].substr(9));
    }
  }
}

}  // namespace internal

// Runs one command; returns the process exit code. Diagnostics are a single
// line on `err`.
inline int Run(const std::vector<std::string>& args, std::ostream& out,
               std::ostream& err) {
  if (args.empty() || args[0] == "--help" || args[0] == "-h" ||
      args[0] == "help") {
    out << internal::Usage();
    return args.empty() ? kExitConfig : kExitOk;
  }
  const auto& commands = internal::Commands();
  auto it = std::find_if(commands.begin(), commands.end(),
                         [&](const auto& c) { return c.name == args[0]; });
  if (it == commands.end()) {
    err << "loosecf: error: unknown command '" << args[0] << "'\n";
    return kExitConfig;
  }
  const std::string prefix = "loosecf " + it->name + ": error: ";
  CLI::App app{it->description, "loosecf " + it->name};
  app.set_config("--config", "", "Flat key=value file; keys are flag names");
  app.allow_config_extras(false);
  app.get_formatter()->column_width(36);
  try {
    auto action = it->setup(app, out);
    std::vector<std::string> rest(args.begin() + 1, args.end());
    internal::CheckConfigPath(rest);
    std::reverse(rest.begin(), rest.end());  // CLI11 consumes from the back
    try {
      app.parse(rest);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err << prefix << internal::OneLine(e.what()) << "\n";
      return kExitConfig;
    }
    action();
    return kExitOk;
  } catch (const ConfigError& e) {
    err << prefix << internal::OneLine(e.what()) << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << prefix << internal::OneLine(e.what()) << "\n";
    return kExitIo;
  } catch (const Error& e) {
    err << prefix << internal::OneLine(e.what()) << "\n";
    return kExitContract;
  }
}

inline int Run(int argc, const char* const* argv, std::ostream& out,
               std::ostream& err) {
  return Run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace loosecf::cli
