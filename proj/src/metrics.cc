#include "fairlm/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fairlm/errors.h"

namespace fairlm {
namespace {

constexpr std::string_view kGenderMarker = "{g}";
constexpr std::string_view kOccupationMarker = "{o}";

std::string TrimCopy(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

double LogRatioMean(const CooccurrenceTable& table,
                    const std::vector<TokenId>& kept, double male_norm,
                    double female_norm) {
  double sum = 0.0;
  for (TokenId w : kept) {
    const double m = static_cast<double>(table.count(w, Gender::kMale)) / male_norm;
    const double f =
        static_cast<double>(table.count(w, Gender::kFemale)) / female_norm;
    sum += std::abs(std::log(m / f));
  }
  return sum / static_cast<double>(kept.size());
}

void CheckIds(std::span<const TokenId> ids, std::size_t vocab_size) {
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
      throw ValidationError("token id out of range: " + std::to_string(id));
    }
  }
}

nlohmann::ordered_json OptionalToJson(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> OptionalFromJson(const nlohmann::ordered_json& j,
                                       const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::int64_t CooccurrenceTable::count(TokenId w, Gender g) const {
  auto it = c_wg.find(w);
  return it == c_wg.end() ? 0 : it->second[static_cast<int>(g)];
}

CooccurrenceTable CountCooccurrence(std::span<const TokenStream> streams,
                                    const GenderLexicon& lexicon, int window) {
  if (window < 1) throw ValidationError("co-occurrence window must be >= 1");
  CooccurrenceTable table;
  table.window = window;
  for (const auto& stream : streams) {
    CheckIds(stream.ids, lexicon.vocab_size());
    const auto n = static_cast<std::ptrdiff_t>(stream.ids.size());
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      const TokenId g_id = stream.ids[j];
      int g;
      if (lexicon.IsFemale(g_id)) {
        g = static_cast<int>(Gender::kFemale);
      } else if (lexicon.IsMale(g_id)) {
        g = static_cast<int>(Gender::kMale);
      } else {
        continue;
      }
      ++table.c_g[g];
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, j - window);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, j + window);
      for (std::ptrdiff_t i = lo; i <= hi; ++i) {
        if (i == j) continue;
        const TokenId w = stream.ids[i];
        if (lexicon.IsNeutral(w)) ++table.c_wg[w][g];
      }
    }
  }
  return table;
}

RetainedWords SelectRetained(const CooccurrenceTable& table,
                             std::int64_t threshold) {
  RetainedWords out;
  for (const auto& [w, counts] : table.c_wg) {
    const std::int64_t f = counts[static_cast<int>(Gender::kFemale)];
    const std::int64_t m = counts[static_cast<int>(Gender::kMale)];
    if (f + m <= threshold) continue;
    if (f > 0 && m > 0) {
      out.kept.push_back(w);
    } else {
      out.one_sided.push_back(w);
    }
  }
  return out;
}

double FixedBias(const CooccurrenceTable& table, std::int64_t threshold) {
  const RetainedWords retained = SelectRetained(table, threshold);
  if (retained.kept.empty()) {
    throw UndefinedMetricError("B^N undefined: no neutral word co-occurs with "
                               "both genders above the threshold");
  }
  return LogRatioMean(table, retained.kept, 1.0, 1.0);
}

double ConditionalBias(const CooccurrenceTable& table, std::int64_t threshold) {
  if (table.total(Gender::kMale) == 0 || table.total(Gender::kFemale) == 0) {
    throw UndefinedMetricError(
        "B_c^N undefined: one gender never occurs in the text");
  }
  const RetainedWords retained = SelectRetained(table, threshold);
  if (retained.kept.empty()) {
    throw UndefinedMetricError("B_c^N undefined: no neutral word co-occurs "
                               "with both genders above the threshold");
  }
  return LogRatioMean(table, retained.kept,
                      static_cast<double>(table.total(Gender::kMale)),
                      static_cast<double>(table.total(Gender::kFemale)));
}

double GenderRatio(std::span<const TokenStream> streams,
                   const GenderLexicon& lexicon) {
  std::int64_t male = 0;
  std::int64_t female = 0;
  for (const auto& stream : streams) {
    CheckIds(stream.ids, lexicon.vocab_size());
    for (TokenId id : stream.ids) {
      if (lexicon.IsMale(id)) ++male;
      if (lexicon.IsFemale(id)) ++female;
    }
  }
  if (female == 0) {
    throw UndefinedMetricError("GR undefined: no female word in the text");
  }
  return static_cast<double>(male) / static_cast<double>(female);
}

SoftmaxDistribution LstmOracle::NextToken(std::span<const TokenId> seed) const {
  return NextTokenDistribution(params_, seed);
}

std::vector<double> LstmOracle::ScoreStream(std::span<const TokenId> ids) const {
  std::vector<double> out;
  if (ids.size() < 2) return out;
  out.reserve(ids.size() - 1);
  HiddenState state = HiddenState::Zero(InferHyper(params_), 1);
  const std::size_t predictions = ids.size() - 1;
  const auto window = static_cast<std::size_t>(std::max(1, window_));
  for (std::size_t start = 0; start < predictions; start += window) {
    const std::size_t steps = std::min(window, predictions - start);
    const Eigen::MatrixXd logits =
        ForwardSequence(params_, ids.subspan(start, steps), state);
    for (std::size_t t = 0; t < steps; ++t) {
      out.push_back(Softmax(logits.row(t).transpose()).log_p[ids[start + t + 1]]);
    }
  }
  return out;
}

Template ParseTemplate(std::string_view line) {
  const auto bar = line.find('|');
  if (bar == std::string_view::npos ||
      line.find('|', bar + 1) != std::string_view::npos) {
    throw ValidationError("template needs exactly one '|': '" +
                          std::string(line) + "'");
  }
  Template tmpl;
  tmpl.text = TrimCopy(line);
  std::istringstream seed(std::string(line.substr(0, bar)));
  std::string word;
  int markers = 0;
  while (seed >> word) {
    if (word == kGenderMarker || word == kOccupationMarker) {
      ++markers;
      tmpl.slot_index = tmpl.seed_words.size();
      tmpl.seed_slot =
          word == kGenderMarker ? SlotKind::kGender : SlotKind::kOccupation;
      tmpl.seed_words.push_back(word);
      continue;
    }
    for (auto& t : Tokenize(word)) tmpl.seed_words.push_back(std::move(t));
  }
  if (markers != 1) {
    throw ValidationError("template seed must contain exactly one {g} or {o} "
                          "slot: '" + tmpl.text + "'");
  }
  const std::string target = TrimCopy(line.substr(bar + 1));
  const std::string_view expected = tmpl.seed_slot == SlotKind::kGender
                                        ? kOccupationMarker
                                        : kGenderMarker;
  if (target != expected) {
    throw ValidationError("template target must be '" + std::string(expected) +
                          "': '" + tmpl.text + "'");
  }
  return tmpl;
}

std::vector<Template> LoadTemplates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError(path.string());
  std::vector<Template> out;
  std::string line;
  while (std::getline(in, line)) {
    const std::string trimmed = TrimCopy(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    out.push_back(ParseTemplate(trimmed));
  }
  return out;
}

std::vector<Template> DefaultTemplates() {
  return {ParseTemplate("{g} is a | {o}"), ParseTemplate("the {o} is a | {g}")};
}

std::vector<TokenId> TemplateSet::Seed(const Template& tmpl,
                                       TokenId filler) const {
  std::vector<TokenId> ids{vocab->eos_id()};
  for (std::size_t i = 0; i < tmpl.seed_words.size(); ++i) {
    ids.push_back(i == tmpl.slot_index ? filler
                                       : vocab->Lookup(tmpl.seed_words[i]));
  }
  return ids;
}

TemplateSet MakeTemplateSet(const std::vector<Template>& templates,
                            const std::vector<std::string>& occupations,
                            const Vocabulary& vocab,
                            const GenderLexicon& lexicon) {
  TemplateSet set;
  set.vocab = &vocab;
  std::vector<std::string> missing;
  auto note_missing = [&](const std::string& w) {
    if (std::find(missing.begin(), missing.end(), w) == missing.end()) {
      missing.push_back(w);
    }
  };
  for (const auto& tmpl : templates) {
    for (std::size_t i = 0; i < tmpl.seed_words.size(); ++i) {
      if (i != tmpl.slot_index && !vocab.Contains(tmpl.seed_words[i])) {
        note_missing(tmpl.seed_words[i]);
      }
    }
    (tmpl.seed_slot == SlotKind::kGender ? set.gender_templates
                                         : set.occupation_templates)
        .push_back(tmpl);
  }
  std::vector<std::string> gendered;
  for (const auto& o : occupations) {
    if (!vocab.Contains(o)) {
      note_missing(o);
      continue;
    }
    const TokenId id = vocab.Lookup(o);
    if (!lexicon.IsNeutral(id)) {
      gendered.push_back(o);
      continue;
    }
    if (std::find(set.occupations.begin(), set.occupations.end(), id) ==
        set.occupations.end()) {
      set.occupations.push_back(id);
    }
  }
  std::string problems;
  if (!missing.empty()) {
    problems = "template/occupation words not in vocabulary:";
    for (const auto& w : missing) problems += " " + w;
  }
  if (!gendered.empty()) {
    if (!problems.empty()) problems += "; ";
    problems += "occupations must be gender-neutral:";
    for (const auto& w : gendered) problems += " " + w;
  }
  if (!problems.empty()) throw ValidationError(problems);
  return set;
}

double CausalBiasGivenGender(const LanguageModelOracle& model,
                             const TemplateSet& templates,
                             const GenderLexicon& lexicon) {
  if (templates.gender_templates.empty()) {
    throw UndefinedMetricError("CB|g undefined: no gender-slot templates");
  }
  if (templates.occupations.empty() || lexicon.size() == 0) {
    throw UndefinedMetricError("CB|g undefined: no occupations or no pairs");
  }
  double total = 0.0;
  for (const auto& tmpl : templates.gender_templates) {
    double sum = 0.0;
    for (const auto& pair : lexicon.pairs()) {
      const SoftmaxDistribution female =
          model.NextToken(templates.Seed(tmpl, pair.female));
      const SoftmaxDistribution male =
          model.NextToken(templates.Seed(tmpl, pair.male));
      for (TokenId o : templates.occupations) {
        sum += std::abs(female.log_p[o] - male.log_p[o]);
      }
    }
    total += sum / (static_cast<double>(templates.occupations.size()) *
                    static_cast<double>(lexicon.size()));
  }
  return total / static_cast<double>(templates.gender_templates.size());
}

double CausalBiasGivenOccupation(const LanguageModelOracle& model,
                                 const TemplateSet& templates,
                                 const GenderLexicon& lexicon) {
  if (templates.occupation_templates.empty()) {
    throw UndefinedMetricError("CB|o undefined: no occupation-slot templates");
  }
  if (templates.occupations.empty() || lexicon.size() == 0) {
    throw UndefinedMetricError("CB|o undefined: no occupations or no pairs");
  }
  double total = 0.0;
  for (const auto& tmpl : templates.occupation_templates) {
    double sum = 0.0;
    for (TokenId o : templates.occupations) {
      const SoftmaxDistribution dist = model.NextToken(templates.Seed(tmpl, o));
      for (const auto& pair : lexicon.pairs()) {
        sum += std::abs(dist.log_p[pair.female] - dist.log_p[pair.male]);
      }
    }
    total += sum / (static_cast<double>(templates.occupations.size()) *
                    static_cast<double>(lexicon.size()));
  }
  return total / static_cast<double>(templates.occupation_templates.size());
}

double EmbeddingBias(const Eigen::MatrixXd& embedding,
                     const GenderLexicon& lexicon,
                     std::span<const TokenId> occupations) {
  CheckIds(occupations, static_cast<std::size_t>(embedding.rows()));
  double sum = 0.0;
  for (TokenId o : occupations) {
    for (const auto& pair : lexicon.pairs()) {
      const double to_male = (embedding.row(o) - embedding.row(pair.male)).norm();
      const double to_female =
          (embedding.row(o) - embedding.row(pair.female)).norm();
      sum += std::abs(to_male - to_female);
    }
  }
  return sum;
}

double Perplexity(const LanguageModelOracle& model,
                  std::span<const TokenId> heldout) {
  if (heldout.size() < 2) {
    throw ValidationError("perplexity needs at least two held-out tokens");
  }
  CheckIds(heldout, model.vocab_size());
  const std::vector<double> log_probs = model.ScoreStream(heldout);
  double nll = 0.0;
  for (double lp : log_probs) nll -= lp;
  return std::exp(nll / static_cast<double>(log_probs.size()));
}

nlohmann::ordered_json MetricsReport::ToJson() const {
  nlohmann::ordered_json j;
  j["b_n"] = OptionalToJson(b_n);
  j["b_c_n"] = OptionalToJson(b_c_n);
  j["gr"] = OptionalToJson(gr);
  j["cb_g"] = OptionalToJson(cb_g);
  j["cb_o"] = OptionalToJson(cb_o);
  j["eb_d"] = OptionalToJson(eb_d);
  j["perplexity"] = OptionalToJson(perplexity);
  j["meta"] = meta;
  return j;
}

MetricsReport MetricsReport::FromJson(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw ValidationError("report is not a JSON object");
  MetricsReport r;
  try {
    r.b_n = OptionalFromJson(j, "b_n");
    r.b_c_n = OptionalFromJson(j, "b_c_n");
    r.gr = OptionalFromJson(j, "gr");
    r.cb_g = OptionalFromJson(j, "cb_g");
    r.cb_o = OptionalFromJson(j, "cb_o");
    r.eb_d = OptionalFromJson(j, "eb_d");
    r.perplexity = OptionalFromJson(j, "perplexity");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
  if (j.contains("meta")) r.meta = j.at("meta");
  return r;
}

std::vector<NamedReport> MergeReports(std::vector<NamedReport> existing,
                                      std::span<const NamedReport> incoming) {
  for (const auto& r : incoming) {
    auto it = std::find_if(existing.begin(), existing.end(),
                           [&](const NamedReport& e) { return e.name == r.name; });
    if (it == existing.end()) {
      existing.push_back(r);
    } else {
      it->report = r.report;
    }
  }
  return existing;
}

std::string FormatComparisonTable(std::span<const NamedReport> reports) {
  using Field = std::optional<double> MetricsReport::*;
  struct Column {
    const char* head;
    Field field;
  };
  // Column order follows the usual results table layout.
  const Column columns[] = {
      {"B^N", &MetricsReport::b_n},   {"B_c^N", &MetricsReport::b_c_n},
      {"GR", &MetricsReport::gr},     {"Ppl.", &MetricsReport::perplexity},
      {"CB|o", &MetricsReport::cb_o}, {"CB|g", &MetricsReport::cb_g},
      {"EB_d", &MetricsReport::eb_d},
  };
  auto cell = [](const std::optional<double>& v, bool signed_value) {
    if (!v) return std::string("-");
    char buf[64];
    std::snprintf(buf, sizeof buf, signed_value ? "%+.3f" : "%.3f", *v);
    return std::string(buf);
  };
  std::string out = "| Model |";
  for (const auto& c : columns) out += std::string(" ") + c.head + " |";
  out += "\n|---|";
  for (std::size_t i = 0; i < std::size(columns); ++i) out += "---|";
  out += "\n";
  for (std::size_t r = 0; r < reports.size(); ++r) {
    out += "| " + reports[r].name + " |";
    for (const auto& c : columns) out += " " + cell(reports[r].report.*c.field, false) + " |";
    out += "\n";
    if (r == 0) continue;
    out += "| delta " + reports[r].name + " vs " + reports[0].name + " |";
    for (const auto& c : columns) {
      const auto& a = reports[r].report.*c.field;
      const auto& b = reports[0].report.*c.field;
      out += " " + cell(a && b ? std::optional<double>(*a - *b) : std::nullopt, true) +
             " |";
    }
    out += "\n";
  }
  return out;
}

}  // namespace fairlm
