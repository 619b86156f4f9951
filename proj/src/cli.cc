#include "fairlm/cli.h"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "fairlm/checkpoint.h"
#include "fairlm/config.h"
#include "fairlm/corpus.h"
#include "fairlm/errors.h"
#include "fairlm/generation.h"
#include "fairlm/log.h"
#include "fairlm/lstm.h"
#include "fairlm/metrics.h"
#include "fairlm/trainer.h"
#include "json.hpp"

namespace fairlm {
namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string UtcNow() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void WriteFile(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write output file: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed: " + path.string());
}

void RequireInput(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw MissingInputError(path.string());
}

// Provenance record written next to a command's main output, also when the
// command fails.
class RunManifest {
 public:
  RunManifest(std::string command, fs::path path)
      : path_(std::move(path)) {
    json_["command"] = std::move(command);
    json_["tool_version"] = kToolVersion;
    json_["started_at"] = UtcNow();
    json_["seed"] = nullptr;
    json_["config"] = Json::object();
    json_["inputs"] = Json::array();
  }

  void SetSeed(std::uint64_t seed) { json_["seed"] = seed; }
  void SetConfig(const std::string& key, Json value) {
    json_["config"][key] = std::move(value);
  }
  // Digest is taken immediately, before the command reads the file.
  void AddInput(const std::string& role, const fs::path& path) {
    Json entry;
    entry["role"] = role;
    entry["path"] = path.string();
    entry["sha256"] = fs::is_regular_file(path)
                          ? Json(FileSha256(path.string()))
                          : Json(nullptr);
    json_["inputs"].push_back(std::move(entry));
  }

  void Write(const std::string& status, const std::string& error = {}) {
    json_["finished_at"] = UtcNow();
    json_["status"] = status;
    if (!error.empty()) json_["error"] = error;
    try {
      WriteFile(path_, json_.dump(2) + "\n");
    } catch (const std::exception& e) {
      spdlog::error("could not write manifest {}: {}", path_.string(), e.what());
    }
  }

 private:
  fs::path path_;
  Json json_;
};

fs::path ManifestPath(const fs::path& out) {
  return fs::path(out.string() + ".manifest.json");
}

// Runs `body`, recording success or the failure message in the manifest.
void WithManifest(RunManifest& manifest, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    manifest.Write("failed", e.what());
    throw;
  }
  manifest.Write("ok");
}

// ---------------------------------------------------------------------------

struct AugmentOptions {
  std::string in;
  std::string pairs;
  std::string out;
};

void CmdAugment(const AugmentOptions& opt) {
  RunManifest manifest("augment", ManifestPath(opt.out));
  manifest.AddInput("corpus", opt.in);
  manifest.AddInput("pairs", opt.pairs);
  manifest.SetConfig("in", opt.in);
  manifest.SetConfig("pairs", opt.pairs);
  manifest.SetConfig("out", opt.out);
  WithManifest(manifest, [&] {
    RequireInput(opt.in);
    RequireInput(opt.pairs);
    const auto lines = ReadTokenizedLines(opt.in);
    std::vector<std::string> all;
    for (const auto& line : lines) all.insert(all.end(), line.begin(), line.end());
    const Vocabulary vocab = BuildVocab(all, 1);
    const GenderLexicon lexicon = LoadGenderPairs(opt.pairs, vocab);
    const TokenStream augmented =
        CdaAugment(EncodeLines(lines, vocab), lexicon);
    WriteFile(opt.out, DecodeLines(augmented, vocab));
    spdlog::info("augmented {} tokens into {} tokens", all.size(),
                 2 * all.size());
  });
}

// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void CmdTrain(const TrainOptions& opt) {
  std::optional<KeyValueFile> kv;
  try {
    RequireInput(opt.config);
    kv = KeyValueFile::Load(opt.config);
  } catch (const Error&) {
    if (opt.out.empty()) throw;
  }
  if (kv) {
    if (opt.seed) kv->Set("seed", std::to_string(*opt.seed));
    if (!opt.out.empty()) kv->Set("out", fs::absolute(opt.out).string());
  }
  const fs::path base = fs::absolute(opt.config).parent_path();
  fs::path out_path = opt.out;
  if (out_path.empty()) {
    if (!kv->Has("out")) {
      throw ValidationError("invalid configuration:\n  out: required (set it "
                            "in the config or pass --out)");
    }
    out_path = fs::path(kv->entries().at("out"));
    if (out_path.is_relative()) out_path = base / out_path;
  }

  RunManifest manifest("train", ManifestPath(out_path));
  manifest.AddInput("config", opt.config);
  if (kv) {
    for (const auto& [k, v] : kv->entries()) manifest.SetConfig(k, v);
  }

  WithManifest(manifest, [&] {
    if (!kv) {
      RequireInput(opt.config);
      kv = KeyValueFile::Load(opt.config);
    }
    const TrainJob job = ParseTrainJob(*kv, base);
    manifest.SetSeed(job.train.seed);
    manifest.AddInput("corpus", job.corpus);
    if (!job.valid_corpus.empty()) manifest.AddInput("valid_corpus", job.valid_corpus);
    if (!job.pairs.empty()) manifest.AddInput("pairs", job.pairs);
    if (!job.occupations.empty()) manifest.AddInput("occupations", job.occupations);
    if (!job.embeddings.empty()) manifest.AddInput("embeddings", job.embeddings);

    RequireInput(job.corpus);
    // Flatten to strings with explicit end-of-line markers so the held-out
    // split can happen before the vocabulary is built.
    std::vector<std::string> train_tokens;
    for (const auto& line : ReadTokenizedLines(job.corpus)) {
      train_tokens.insert(train_tokens.end(), line.begin(), line.end());
      train_tokens.emplace_back(Vocabulary::kEosToken);
    }
    std::vector<std::string> valid_tokens;
    if (job.valid_corpus.empty()) {
      const auto held = static_cast<std::size_t>(
          std::llround(job.valid_fraction * static_cast<double>(train_tokens.size())));
      const std::size_t cut = train_tokens.size() - held;
      valid_tokens.assign(train_tokens.begin() + static_cast<std::ptrdiff_t>(cut),
                          train_tokens.end());
      train_tokens.resize(cut);
    } else {
      RequireInput(job.valid_corpus);
      for (const auto& line : ReadTokenizedLines(job.valid_corpus)) {
        valid_tokens.insert(valid_tokens.end(), line.begin(), line.end());
        valid_tokens.emplace_back(Vocabulary::kEosToken);
      }
    }
    const Vocabulary vocab = BuildVocab(train_tokens, job.min_count, job.max_vocab);
    const TokenStream train{vocab.Encode(train_tokens), StreamSource::kRaw};
    const TokenStream valid{vocab.Encode(valid_tokens), StreamSource::kRaw};

    std::optional<GenderLexicon> lexicon;
    if (!job.pairs.empty()) {
      RequireInput(job.pairs);
      lexicon = LoadGenderPairs(job.pairs, vocab);
    }
    LossTerms terms;
    if (lexicon) terms.lexicon = &*lexicon;
    if (job.train.effective_reg_coeff() > 0.0) {
      if (job.reg_targets == "neutral") {
        terms.reg_targets = lexicon->neutral();
      } else {
        RequireInput(job.occupations);
        for (const auto& w : ReadWordList(job.occupations)) {
          if (vocab.Contains(w) && lexicon->IsNeutral(vocab.Lookup(w))) {
            terms.reg_targets.push_back(vocab.Lookup(w));
          } else {
            spdlog::warn("REG target '{}' skipped (not a neutral vocabulary "
                         "word)", w);
          }
        }
      }
    }

    ModelParams init = InitParams(job.hyper, vocab.size(), job.train.seed);
    if (!job.embeddings.empty()) {
      RequireInput(job.embeddings);
      const std::size_t n = OverlayEmbeddings(job.embeddings, vocab, init);
      spdlog::info("initialized {} embedding rows from {}", n,
                   job.embeddings.string());
    }

    std::string log_text =
        "epoch\tce\tbias\treg\ttotal\tvalid_ppl\tlr\n";
    const FitResult fit = Fit(std::move(init), train, valid, job.train,
                              job.hyper, terms, [&](const EpochLog& e) {
                                log_text += FormatEpochLog(e) + "\n";
                              });
    SaveCheckpoint(fit.params, job.hyper, vocab, job.out);
    WriteFile(job.out.string() + ".log", log_text);
    spdlog::info("best epoch {} of {}; checkpoint written to {}", fit.best_epoch,
                 fit.log.size(), job.out.string());
  });
}

// ---------------------------------------------------------------------------

struct GenerateOptions {
  std::string checkpoint;
  std::string config;
  std::optional<int> num_docs;
  std::optional<int> doc_len;
  std::optional<double> temperature;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void CmdGenerate(const GenerateOptions& opt) {
  KeyValueFile kv;
  if (!opt.config.empty()) {
    RequireInput(opt.config);
    kv = KeyValueFile::Load(opt.config);
  }
  if (opt.num_docs) kv.Set("num_docs", std::to_string(*opt.num_docs));
  if (opt.doc_len) kv.Set("doc_len", std::to_string(*opt.doc_len));
  if (opt.temperature) {
    std::ostringstream t;
    t.precision(17);
    t << *opt.temperature;
    kv.Set("temperature", t.str());
  }
  if (opt.seed) kv.Set("seed", std::to_string(*opt.seed));
  const GenerationConfig config = ParseGenerationConfig(kv);

  RunManifest manifest("generate", ManifestPath(opt.out));
  manifest.SetSeed(config.seed);
  for (const auto& [k, v] : kv.entries()) manifest.SetConfig(k, v);
  manifest.AddInput("checkpoint", opt.checkpoint);
  if (!opt.config.empty()) manifest.AddInput("config", opt.config);
  WithManifest(manifest, [&] {
    const Checkpoint ckpt = LoadCheckpoint(opt.checkpoint);
    const auto docs = Generate(ckpt.params, ckpt.vocab, config);
    WriteFile(opt.out, FormatDocuments(docs, ckpt.vocab));
  });
}

// ---------------------------------------------------------------------------

struct EvaluateOptions {
  std::string checkpoint;
  std::string generated;
  std::string heldout;
  std::string pairs;
  std::string occupations;
  std::string templates;
  std::string name = "model";
  int window = 10;
  long long threshold = 20;
  std::string out;
};

// Returns true when at least one requested metric was computed.
bool CmdEvaluate(const EvaluateOptions& opt) {
  RunManifest manifest("evaluate", ManifestPath(opt.out));
  manifest.SetConfig("name", opt.name);
  manifest.SetConfig("window", opt.window);
  manifest.SetConfig("threshold", opt.threshold);
  for (const auto& [role, path] :
       {std::pair{"checkpoint", opt.checkpoint}, {"generated", opt.generated},
        {"heldout", opt.heldout}, {"pairs", opt.pairs},
        {"occupations", opt.occupations}, {"templates", opt.templates}}) {
    if (!path.empty()) manifest.AddInput(role, path);
  }
  bool any_defined = false;
  WithManifest(manifest, [&] {
    if (opt.checkpoint.empty() && opt.generated.empty()) {
      throw ValidationError("evaluate needs --checkpoint, --generated or both");
    }
    if (opt.window < 1) throw ValidationError("--window must be >= 1");
    if (opt.threshold < 0) throw ValidationError("--threshold must be >= 0");
    RequireInput(opt.pairs);
    for (const auto* p : {&opt.checkpoint, &opt.generated, &opt.heldout,
                          &opt.occupations, &opt.templates}) {
      if (!p->empty()) RequireInput(*p);
    }

    std::optional<Checkpoint> ckpt;
    if (!opt.checkpoint.empty()) ckpt = LoadCheckpoint(opt.checkpoint);
    std::vector<std::vector<std::string>> generated_lines;
    if (!opt.generated.empty()) generated_lines = ReadTokenizedLines(opt.generated);

    Vocabulary vocab;
    if (ckpt) {
      vocab = ckpt->vocab;
    } else {
      std::vector<std::string> all;
      for (const auto& l : generated_lines) all.insert(all.end(), l.begin(), l.end());
      vocab = BuildVocab(all, 1);
    }
    const GenderLexicon lexicon = LoadGenderPairs(opt.pairs, vocab);

    MetricsReport report;
    Json& meta = report.meta;
    meta["model"] = opt.name;
    meta["vocab_size"] = vocab.size();
    meta["num_pairs"] = lexicon.size();
    meta["dropped_pairs"] = lexicon.dropped();
    meta["window"] = opt.window;
    meta["threshold"] = opt.threshold;
    meta["errors"] = Json::object();
    std::vector<std::string> requested;

    auto attempt = [&](const char* key, std::optional<double>& slot,
                       const std::function<double()>& compute) {
      requested.emplace_back(key);
      try {
        slot = compute();
        any_defined = true;
      } catch (const UndefinedMetricError& e) {
        meta["errors"][key] = e.what();
      } catch (const ValidationError& e) {
        meta["errors"][key] = e.what();
      }
    };

    if (!opt.generated.empty()) {
      const auto docs = EncodeDocuments(generated_lines, vocab,
                                        StreamSource::kGenerated);
      std::size_t tokens = 0;
      for (const auto& d : docs) tokens += d.ids.size();
      meta["documents"] = docs.size();
      meta["tokens"] = tokens;
      const CooccurrenceTable table = CountCooccurrence(docs, lexicon, opt.window);
      const RetainedWords retained = SelectRetained(table, opt.threshold);
      meta["retained_words"] = retained.kept.size();
      meta["one_sided_words"] = retained.one_sided.size();
      meta["male_tokens"] = table.total(Gender::kMale);
      meta["female_tokens"] = table.total(Gender::kFemale);
      attempt("b_n", report.b_n, [&] { return FixedBias(table, opt.threshold); });
      attempt("b_c_n", report.b_c_n,
              [&] { return ConditionalBias(table, opt.threshold); });
      attempt("gr", report.gr, [&] { return GenderRatio(docs, lexicon); });
    }

    if (ckpt) {
      const LstmOracle oracle(ckpt->params, ckpt->hyper.seq_len);
      std::vector<std::string> occupation_words;
      if (!opt.occupations.empty()) occupation_words = ReadWordList(opt.occupations);
      const std::vector<Template> templates = opt.templates.empty()
                                                  ? DefaultTemplates()
                                                  : LoadTemplates(opt.templates);
      meta["num_occupations"] = occupation_words.size();
      Json tmpl_json = Json::array();
      for (const auto& t : templates) tmpl_json.push_back(t.text);
      meta["templates"] = tmpl_json;

      std::optional<TemplateSet> set;
      std::string set_error;
      try {
        if (occupation_words.empty()) {
          throw UndefinedMetricError("no occupation list given (--occupations)");
        }
        set = MakeTemplateSet(templates, occupation_words, vocab, lexicon);
      } catch (const Error& e) {
        set_error = e.what();
      }
      auto with_set = [&](const std::function<double(const TemplateSet&)>& f) {
        return [&, f] {
          if (!set) throw UndefinedMetricError(set_error);
          return f(*set);
        };
      };
      attempt("cb_g", report.cb_g, with_set([&](const TemplateSet& s) {
                return CausalBiasGivenGender(oracle, s, lexicon);
              }));
      attempt("cb_o", report.cb_o, with_set([&](const TemplateSet& s) {
                return CausalBiasGivenOccupation(oracle, s, lexicon);
              }));
      attempt("eb_d", report.eb_d, with_set([&](const TemplateSet& s) {
                return EmbeddingBias(ckpt->params.embedding, lexicon,
                                     s.occupations);
              }));

      // Held-out text if given, otherwise the generated documents; the
      // stream starts at a sentence boundary.
      const std::string& ppl_path = opt.heldout.empty() ? opt.generated : opt.heldout;
      if (!ppl_path.empty()) {
        const auto lines = ppl_path == opt.generated ? generated_lines
                                                     : ReadTokenizedLines(ppl_path);
        TokenStream stream = EncodeLines(lines, vocab);
        stream.ids.insert(stream.ids.begin(), vocab.eos_id());
        meta["perplexity_source"] = opt.heldout.empty() ? "generated" : "heldout";
        attempt("perplexity", report.perplexity,
                [&] { return Perplexity(oracle, stream.ids); });
      }
    }

    meta["requested"] = requested;
    WriteFile(opt.out, report.ToJson().dump(2) + "\n");
    if (!any_defined) {
      throw UndefinedMetricError("every requested metric is undefined");
    }
  });
  return any_defined;
}

// ---------------------------------------------------------------------------

struct CompareOptions {
  std::vector<std::string> reports;
  std::string merged;
  std::string out;
};

void CmdCompare(const CompareOptions& opt) {
  std::vector<NamedReport> incoming;
  for (const auto& path : opt.reports) {
    RequireInput(path);
    std::ifstream in(path);
    Json j;
    try {
      j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("cannot parse report " + path + ": " + e.what());
    }
    if (j.is_object() && j.contains("models") && j["models"].is_array()) {
      // A previously merged file.
      for (const auto& entry : j["models"]) {
        incoming.push_back({entry.at("name").get<std::string>(),
                            MetricsReport::FromJson(entry.at("report"))});
      }
      continue;
    }
    MetricsReport r = MetricsReport::FromJson(j);
    std::string name = r.meta.contains("model") && r.meta["model"].is_string()
                           ? r.meta["model"].get<std::string>()
                           : fs::path(path).stem().string();
    incoming.push_back({std::move(name), std::move(r)});
  }
  const auto merged = MergeReports({}, incoming);
  WriteFile(opt.out, FormatComparisonTable(merged));
  if (!opt.merged.empty()) {
    Json j;
    j["models"] = Json::array();
    for (const auto& m : merged) {
      j["models"].push_back({{"name", m.name}, {"report", m.report.ToJson()}});
    }
    WriteFile(opt.merged, j.dump(2) + "\n");
  }
}

int ExitCodeFor(const std::exception& e) {
  if (dynamic_cast<const MissingInputError*>(&e)) return kExitMissingInput;
  if (dynamic_cast<const CheckpointError*>(&e)) return kExitCorruptArtifact;
  if (dynamic_cast<const UndefinedMetricError*>(&e)) return kExitUndefinedMetric;
  return kExitValidation;
}

}  // namespace

std::string FileSha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError(path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* kHex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

int RunCli(const std::vector<std::string>& args) {
  ConfigureLoggingFromEnv();
  CLI::App app{"Bias-aware recurrent language model toolkit", "fairlm"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  AugmentOptions augment;
  auto* augment_cmd =
      app.add_subcommand("augment", "Append a gender-swapped copy of a corpus");
  augment_cmd->add_option("--in", augment.in, "Input text corpus")->required();
  augment_cmd->add_option("--pairs", augment.pairs, "Gender pair file")->required();
  augment_cmd->add_option("--out", augment.out, "Augmented corpus")->required();

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train a language model");
  train_cmd->add_option("--config", train.config, "key = value config")->required();
  train_cmd->add_option("--seed", train.seed, "Override the config seed");
  train_cmd->add_option("--out", train.out, "Override the checkpoint path");

  GenerateOptions gen;
  auto* gen_cmd = app.add_subcommand("generate", "Sample documents from a model");
  gen_cmd->add_option("--checkpoint", gen.checkpoint, "Model checkpoint")->required();
  gen_cmd->add_option("--config", gen.config, "Generation config file");
  gen_cmd->add_option("--num-docs", gen.num_docs, "Number of documents");
  gen_cmd->add_option("--doc-len", gen.doc_len, "Tokens per document");
  gen_cmd->add_option("--temperature", gen.temperature, "Sampling temperature (0 = greedy)");
  gen_cmd->add_option("--seed", gen.seed, "Sampling seed");
  gen_cmd->add_option("--out", gen.out, "Generated corpus")->required();

  EvaluateOptions eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Compute the bias metric report");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Model checkpoint");
  eval_cmd->add_option("--generated", eval.generated, "Generated or reference text, one document per line");
  eval_cmd->add_option("--heldout", eval.heldout, "Held-out text for perplexity");
  eval_cmd->add_option("--pairs", eval.pairs, "Gender pair file")->required();
  eval_cmd->add_option("--occupations", eval.occupations, "Occupation word list");
  eval_cmd->add_option("--templates", eval.templates, "Template file");
  eval_cmd->add_option("--name", eval.name, "Model name recorded in the report");
  eval_cmd->add_option("--window", eval.window, "Co-occurrence window per side");
  eval_cmd->add_option("--threshold", eval.threshold, "Minimum co-occurrence count (exclusive)");
  eval_cmd->add_option("--out", eval.out, "Report JSON")->required();

  CompareOptions compare;
  auto* compare_cmd = app.add_subcommand("compare", "Merge reports into a comparison table");
  compare_cmd->add_option("reports", compare.reports, "Report JSON files")->required();
  compare_cmd->add_option("--merged", compare.merged, "Write merged reports JSON");
  compare_cmd->add_option("--out", compare.out, "Markdown table")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*augment_cmd) CmdAugment(augment);
    if (*train_cmd) CmdTrain(train);
    if (*gen_cmd) CmdGenerate(gen);
    if (*eval_cmd) CmdEvaluate(eval);
    if (*compare_cmd) CmdCompare(compare);
  } catch (const std::exception& e) {
    std::cerr << "fairlm: " << e.what() << "\n";
    return ExitCodeFor(e);
  }
  return kExitOk;
}

}  // namespace fairlm
