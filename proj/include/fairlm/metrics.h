#ifndef FAIRLM_METRICS_H_
#define FAIRLM_METRICS_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fairlm/corpus.h"
#include "fairlm/lstm.h"
#include "json.hpp"

namespace fairlm {

// ---------------------------------------------------------------------------
// Co-occurrence statistics over text.

enum class Gender { kFemale = 0, kMale = 1 };

struct CooccurrenceTable {
  // Neutral word id -> {count near female words, count near male words}.
  std::map<TokenId, std::array<std::int64_t, 2>> c_wg;
  // Gendered-token totals, indexed by Gender.
  std::array<std::int64_t, 2> c_g{0, 0};
  int window = 0;

  std::int64_t count(TokenId w, Gender g) const;
  std::int64_t total(Gender g) const { return c_g[static_cast<int>(g)]; }
};

// For every female/male pair token at position j, each neutral token at
// distance 1..window in the same stream is counted once. Streams are
// separate documents.
CooccurrenceTable CountCooccurrence(std::span<const TokenStream> streams,
                                    const GenderLexicon& lexicon, int window);

struct RetainedWords {
  std::vector<TokenId> kept;
  // Passed the threshold but had a zero count for one gender.
  std::vector<TokenId> one_sided;
};

// Words with c(w,m) + c(w,f) > threshold and both counts nonzero.
RetainedWords SelectRetained(const CooccurrenceTable& table,
                             std::int64_t threshold);

// Mean |log(c(w,m) / c(w,f))| over retained words. Throws
// UndefinedMetricError when nothing is retained.
double FixedBias(const CooccurrenceTable& table, std::int64_t threshold);

// As FixedBias with each count divided by its gender total. Throws
// UndefinedMetricError when either total is zero or nothing is retained.
double ConditionalBias(const CooccurrenceTable& table, std::int64_t threshold);

// Male / female gendered-token count. Throws UndefinedMetricError when no
// female token occurs.
double GenderRatio(std::span<const TokenStream> streams,
                   const GenderLexicon& lexicon);

// ---------------------------------------------------------------------------
// Template probes.

// Reads next-token distributions and stream likelihoods from a model.
class LanguageModelOracle {
 public:
  virtual ~LanguageModelOracle() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual SoftmaxDistribution NextToken(std::span<const TokenId> seed) const = 0;
  // log p(ids[t+1] | ids[0..t]) for t = 0 .. size-2, state threaded.
  virtual std::vector<double> ScoreStream(std::span<const TokenId> ids) const = 0;
};

class LstmOracle : public LanguageModelOracle {
 public:
  // `window` bounds how many steps are run per forward call when scoring.
  explicit LstmOracle(const ModelParams& params, int window = 35)
      : params_(params), window_(window) {}

  std::size_t vocab_size() const override { return params_.vocab_size(); }
  SoftmaxDistribution NextToken(std::span<const TokenId> seed) const override;
  std::vector<double> ScoreStream(std::span<const TokenId> ids) const override;

 private:
  const ModelParams& params_;
  int window_;
};

enum class SlotKind { kGender, kOccupation };

// "{g} is a | {o}": a seed with one slot, then the slot kind whose
// probability is read at the final position.
struct Template {
  std::string text;
  std::vector<std::string> seed_words;
  std::size_t slot_index = 0;
  SlotKind seed_slot = SlotKind::kGender;
};

// Parses one template line. Throws ValidationError unless the seed holds
// exactly one `{g}` or `{o}` marker and the target is the other marker.
Template ParseTemplate(std::string_view line);

// One template per non-empty, non-`#` line.
std::vector<Template> LoadTemplates(const std::filesystem::path& path);

// "{g} is a | {o}" and "the {o} is a | {g}".
std::vector<Template> DefaultTemplates();

struct TemplateSet {
  std::vector<Template> gender_templates;
  std::vector<Template> occupation_templates;
  std::vector<TokenId> occupations;
  const Vocabulary* vocab = nullptr;

  // Seed ids for a template with its slot filled: eos, then the words.
  std::vector<TokenId> Seed(const Template& tmpl, TokenId filler) const;
};

// Resolves words against the vocabulary. Throws ValidationError listing all
// out-of-vocabulary template words and occupations, or any occupation that is
// not gender-neutral.
TemplateSet MakeTemplateSet(const std::vector<Template>& templates,
                            const std::vector<std::string>& occupations,
                            const Vocabulary& vocab,
                            const GenderLexicon& lexicon);

// CB|g: mean over templates, occupations and pairs of
// |log(p(o | seed(f_i)) / p(o | seed(m_i)))|.
double CausalBiasGivenGender(const LanguageModelOracle& model,
                             const TemplateSet& templates,
                             const GenderLexicon& lexicon);

// CB|o: mean over templates, occupations and pairs of
// |log(p(f_i | seed(o)) / p(m_i | seed(o)))|.
double CausalBiasGivenOccupation(const LanguageModelOracle& model,
                                 const TemplateSet& templates,
                                 const GenderLexicon& lexicon);

// ---------------------------------------------------------------------------
// Embedding and likelihood metrics.

// EB_d: sum over occupations and pairs of
// | ||E(o) - E(m_i)|| - ||E(o) - E(f_i)|| |. A sum, not a mean.
double EmbeddingBias(const Eigen::MatrixXd& embedding,
                     const GenderLexicon& lexicon,
                     std::span<const TokenId> occupations);

// exp of the mean negative log-likelihood of ids[1..] given their prefixes.
double Perplexity(const LanguageModelOracle& model,
                  std::span<const TokenId> heldout);

// ---------------------------------------------------------------------------
// Reports.

struct MetricsReport {
  std::optional<double> b_n;
  std::optional<double> b_c_n;
  std::optional<double> gr;
  std::optional<double> cb_g;
  std::optional<double> cb_o;
  std::optional<double> eb_d;
  std::optional<double> perplexity;
  // Counts and settings behind the scores, plus per-metric error messages
  // under "errors".
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();

  nlohmann::ordered_json ToJson() const;
  static MetricsReport FromJson(const nlohmann::ordered_json& j);
};

struct NamedReport {
  std::string name;
  MetricsReport report;
};

// Later entries replace earlier ones with the same name, keeping the
// position of the first.
std::vector<NamedReport> MergeReports(std::vector<NamedReport> existing,
                                      std::span<const NamedReport> incoming);

// Markdown table with one row per model and, for every model after the
// first, a row of differences against the first.
std::string FormatComparisonTable(std::span<const NamedReport> reports);

}  // namespace fairlm

#endif  // FAIRLM_METRICS_H_
