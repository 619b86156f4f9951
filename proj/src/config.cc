#include "fairlm/config.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "fairlm/errors.h"

namespace fairlm {
namespace {

std::string Trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

// Collects typed fields and every problem encountered while reading them.
class FieldReader {
 public:
  explicit FieldReader(const KeyValueFile& kv) : kv_(kv) {}

  template <typename T>
  void Number(const std::string& key, T& out) {
    known_.insert(key);
    auto it = kv_.entries().find(key);
    if (it == kv_.entries().end()) return;
    const std::string& text = it->second;
    T value{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) {
      problems_.push_back(key + ": cannot parse '" + text + "'");
      return;
    }
    out = value;
  }

  void String(const std::string& key, std::string& out) {
    known_.insert(key);
    auto it = kv_.entries().find(key);
    if (it != kv_.entries().end()) out = it->second;
  }

  void Path(const std::string& key, std::filesystem::path& out,
            const std::filesystem::path& base) {
    std::string s;
    String(key, s);
    if (s.empty()) return;
    std::filesystem::path p(s);
    out = p.is_absolute() ? p : base / p;
  }

  void Custom(const std::string& key,
              const std::function<void(const std::string&)>& parse) {
    known_.insert(key);
    auto it = kv_.entries().find(key);
    if (it == kv_.entries().end()) return;
    try {
      parse(it->second);
    } catch (const ValidationError& e) {
      problems_.push_back(e.what());
    }
  }

  void Problem(std::string p) { problems_.push_back(std::move(p)); }

  void Check(const std::function<void()>& validate) {
    try {
      validate();
    } catch (const ValidationError& e) {
      problems_.push_back(e.what());
    }
  }

  // Throws with every collected problem plus unknown keys.
  void Finish() {
    for (const auto& [key, value] : kv_.entries()) {
      if (!known_.contains(key)) problems_.push_back("unknown key '" + key + "'");
    }
    if (problems_.empty()) return;
    std::string msg = "invalid configuration:";
    for (const auto& p : problems_) msg += "\n  " + p;
    throw ValidationError(msg);
  }

 private:
  const KeyValueFile& kv_;
  std::set<std::string> known_;
  std::vector<std::string> problems_;
};

}  // namespace

KeyValueFile KeyValueFile::Parse(std::string_view text) {
  KeyValueFile kv;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string trimmed = Trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(line_no) +
                            ": expected 'key = value'");
    }
    std::string key = Trim(trimmed.substr(0, eq));
    std::string value = Trim(trimmed.substr(eq + 1));
    if (key.empty()) {
      throw ValidationError("config line " + std::to_string(line_no) +
                            ": empty key");
    }
    if (kv.entries_.contains(key)) {
      throw ValidationError("config line " + std::to_string(line_no) +
                            ": repeated key '" + key + "'");
    }
    kv.entries_.emplace(std::move(key), std::move(value));
  }
  return kv;
}

KeyValueFile KeyValueFile::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError(path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return Parse(buf.str());
}

std::string KeyValueFile::ToString() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

TrainJob ParseTrainJob(const KeyValueFile& kv,
                       const std::filesystem::path& base_dir) {
  TrainJob job;
  FieldReader r(kv);
  r.Number("lambda", job.train.lambda);
  r.Number("lr", job.train.lr);
  r.Number("anneal_lo", job.train.anneal_lo);
  r.Number("anneal_hi", job.train.anneal_hi);
  r.Number("clip", job.train.clip);
  r.Number("batch_size", job.train.batch_size);
  r.Number("max_epochs", job.train.max_epochs);
  r.Number("patience", job.train.patience);
  r.Number("reg_coeff", job.train.reg_coeff);
  r.Number("seed", job.train.seed);
  r.Custom("mode", [&](const std::string& v) { job.train.mode = ParseTrainMode(v); });
  r.Number("embed_dim", job.hyper.embed_dim);
  r.Number("hidden_units", job.hyper.hidden_units);
  r.Number("num_layers", job.hyper.num_layers);
  r.Number("seq_len", job.hyper.seq_len);
  r.Number("dropout", job.hyper.dropout);
  r.Path("corpus", job.corpus, base_dir);
  r.Path("valid_corpus", job.valid_corpus, base_dir);
  r.Path("pairs", job.pairs, base_dir);
  r.Path("occupations", job.occupations, base_dir);
  r.Path("embeddings", job.embeddings, base_dir);
  r.Path("out", job.out, base_dir);
  r.String("reg_targets", job.reg_targets);
  r.Number("min_count", job.min_count);
  r.Number("max_vocab", job.max_vocab);
  r.Number("valid_fraction", job.valid_fraction);

  r.Check([&] { job.train.Validate(); });
  r.Check([&] { job.hyper.Validate(); });
  if (job.corpus.empty()) r.Problem("corpus: required");
  if (job.min_count < 1) r.Problem("min_count must be >= 1");
  if (!(job.valid_fraction > 0.0 && job.valid_fraction < 1.0)) {
    r.Problem("valid_fraction must be in (0, 1)");
  }
  if (job.reg_targets != "occupations" && job.reg_targets != "neutral") {
    r.Problem("reg_targets: expected 'occupations' or 'neutral', got '" +
              job.reg_targets + "'");
  }
  const bool needs_pairs = job.train.effective_lambda() > 0.0 ||
                           job.train.effective_reg_coeff() > 0.0;
  if (needs_pairs && job.pairs.empty()) {
    r.Problem("pairs: required when the bias loss or REG is active");
  }
  if (job.train.effective_reg_coeff() > 0.0 &&
      job.reg_targets == "occupations" && job.occupations.empty()) {
    r.Problem("occupations: required for REG with reg_targets = occupations");
  }
  if (job.train.mode == TrainMode::kCdaPreAugmented && job.valid_corpus.empty()) {
    r.Problem("valid_corpus: required in cda_pre_augmented mode (validation "
              "text must not come from the augmented stream)");
  }
  r.Finish();
  return job;
}

GenerationConfig ParseGenerationConfig(const KeyValueFile& kv) {
  GenerationConfig config;
  FieldReader r(kv);
  r.Number("num_docs", config.num_docs);
  r.Number("doc_len", config.doc_len);
  r.Number("temperature", config.temperature);
  r.Number("seed", config.seed);
  r.Check([&] { config.Validate(); });
  r.Finish();
  return config;
}

}  // namespace fairlm
