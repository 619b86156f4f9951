#include "fairlm/metrics.h"

#include <cmath>
#include <random>
#include <vector>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "fairlm/errors.h"
#include "oracles.h"
#include "test_util.h"

namespace fairlm {
namespace {

using ::testing::HasSubstr;
using testing::PairLexicon;
using testing::WordVocab;

class CooccurrenceTest : public ::testing::Test {
 protected:
  TokenStream Stream(const std::string& text) {
    return {vocab_.Encode(Tokenize(text))};
  }
  // ids: he 2, she 3, math 4, art 5
  Vocabulary vocab_ = WordVocab({"he", "she", "math", "art"});
  GenderLexicon lex_ = PairLexicon(vocab_, {{"she", "he"}});
  TokenId math_ = 4;
};

TEST_F(CooccurrenceTest, SixTokenExample) {
  const std::vector<TokenStream> s{Stream("he math he math she math")};
  const CooccurrenceTable t = CountCooccurrence(s, lex_, 10);
  EXPECT_EQ(t.count(math_, Gender::kMale), 6);
  EXPECT_EQ(t.count(math_, Gender::kFemale), 3);
  EXPECT_EQ(t.total(Gender::kMale), 2);
  EXPECT_EQ(t.total(Gender::kFemale), 1);
  EXPECT_NEAR(FixedBias(t, 0), std::log(2.0), 1e-12);
  EXPECT_NEAR(ConditionalBias(t, 0), 0.0, 1e-12);
}

TEST_F(CooccurrenceTest, NoGenderedTokens) {
  const std::vector<TokenStream> s{Stream("math art math")};
  const CooccurrenceTable t = CountCooccurrence(s, lex_, 10);
  EXPECT_TRUE(t.c_wg.empty());
  EXPECT_THROW(FixedBias(t, 0), UndefinedMetricError);
  EXPECT_THROW(ConditionalBias(t, 0), UndefinedMetricError);
}

TEST_F(CooccurrenceTest, WindowOne) {
  const std::vector<TokenStream> s{Stream("math he math")};
  EXPECT_EQ(CountCooccurrence(s, lex_, 1).count(math_, Gender::kMale), 2);
  EXPECT_THROW(CountCooccurrence(s, lex_, 0), ValidationError);
}

TEST_F(CooccurrenceTest, DocumentsDoNotShareWindows) {
  const std::vector<TokenStream> split{Stream("he"), Stream("math")};
  EXPECT_TRUE(CountCooccurrence(split, lex_, 10).c_wg.empty());
}

TEST_F(CooccurrenceTest, MatchesBruteForceOnRandomCorpora) {
  const Vocabulary vocab = testing::NumberedVocab(15);
  const GenderLexicon lex =
      PairLexicon(vocab, {{"w2", "w3"}, {"w4", "w5"}});
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<TokenId> pick(0, 14);
  std::uniform_int_distribution<int> length(0, 400);
  std::uniform_int_distribution<int> num_docs(1, 4);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<TokenStream> docs(num_docs(rng));
    for (auto& d : docs) {
      const int n = length(rng);
      for (int i = 0; i < n; ++i) d.ids.push_back(pick(rng));
    }
    for (int window : {1, 2, 5, 10}) {
      const auto expected = testing::BruteForceCooccurrence(docs, lex, window);
      const auto got = CountCooccurrence(docs, lex, window);
      EXPECT_EQ(got.c_wg, expected.c_wg);
      EXPECT_EQ(got.c_g, expected.c_g);
    }
  }
}

TEST_F(CooccurrenceTest, ThresholdAndOneSidedWords) {
  CooccurrenceTable t;
  t.c_wg[4] = {5, 20};
  t.c_wg[5] = {0, 30};
  t.c_wg[6] = {2, 3};
  t.c_g = {10, 20};
  const RetainedWords r = SelectRetained(t, 20);
  EXPECT_EQ(r.kept, std::vector<TokenId>{4});
  EXPECT_EQ(r.one_sided, std::vector<TokenId>{5});
  EXPECT_NEAR(FixedBias(t, 20), std::log(4.0), 1e-12);
  EXPECT_NEAR(ConditionalBias(t, 20), std::log(2.0), 1e-12);
  EXPECT_THROW(FixedBias(t, 25), UndefinedMetricError);
}

TEST_F(CooccurrenceTest, BalancedCountsGiveZero) {
  CooccurrenceTable t;
  t.c_wg[4] = {7, 7};
  t.c_wg[5] = {3, 3};
  t.c_g = {4, 4};
  EXPECT_EQ(FixedBias(t, 0), 0.0);
  EXPECT_EQ(ConditionalBias(t, 0), 0.0);
}

TEST_F(CooccurrenceTest, SwappingGendersPreservesBias) {
  std::mt19937_64 rng(5);
  std::discrete_distribution<TokenId> pick({0, 0, 3, 1, 4, 4});
  TokenStream s;
  for (int i = 0; i < 3000; ++i) s.ids.push_back(pick(rng));
  TokenStream swapped;
  for (TokenId id : s.ids) swapped.ids.push_back(lex_.Swap(id));
  const std::vector<TokenStream> a{s}, b{swapped};
  const auto ta = CountCooccurrence(a, lex_, 5);
  const auto tb = CountCooccurrence(b, lex_, 5);
  EXPECT_NEAR(FixedBias(ta, 20), FixedBias(tb, 20), 1e-12);
  EXPECT_NEAR(ConditionalBias(ta, 20), ConditionalBias(tb, 20), 1e-12);
  EXPECT_NEAR(GenderRatio(a, lex_) * GenderRatio(b, lex_), 1.0, 1e-12);
}

TEST_F(CooccurrenceTest, GenderRatio) {
  const std::vector<TokenStream> s{Stream("he he she")};
  EXPECT_DOUBLE_EQ(GenderRatio(s, lex_), 2.0);
  const std::vector<TokenStream> none{Stream("he math")};
  EXPECT_THROW(GenderRatio(none, lex_), UndefinedMetricError);
}

TEST_F(CooccurrenceTest, AugmentedCorpusIsBalanced) {
  const TokenStream s = Stream("he math he art she math he he art math");
  const TokenStream joined = CdaAugment(s, lex_);
  const std::vector<TokenStream> aug = SplitAugmented(joined);
  ASSERT_EQ(aug.size(), 2u);
  EXPECT_EQ(aug[0].ids, s.ids);
  EXPECT_EQ(GenderRatio(aug, lex_), 1.0);
  EXPECT_EQ(FixedBias(CountCooccurrence(aug, lex_, 10), 0), 0.0);
  // Windows spanning the seam between original and copy break the symmetry.
  const std::vector<TokenStream> one{joined};
  EXPECT_GT(FixedBias(CountCooccurrence(one, lex_, 10), 0), 0.0);
}

TEST(TemplateTest, Parsing) {
  const Template g = ParseTemplate("{g} is a | {o}");
  EXPECT_EQ(g.seed_slot, SlotKind::kGender);
  EXPECT_EQ(g.seed_words, (std::vector<std::string>{"{g}", "is", "a"}));
  EXPECT_EQ(g.slot_index, 0u);
  const Template o = ParseTemplate("The {o} is a | {g}");
  EXPECT_EQ(o.seed_slot, SlotKind::kOccupation);
  EXPECT_EQ(o.slot_index, 1u);
  EXPECT_EQ(o.seed_words[0], "the");
  EXPECT_THROW(ParseTemplate("{g} is a {o}"), ValidationError);
  EXPECT_THROW(ParseTemplate("is a | {o}"), ValidationError);
  EXPECT_THROW(ParseTemplate("{g} {o} | {o}"), ValidationError);
  EXPECT_THROW(ParseTemplate("{g} is a | {g}"), ValidationError);
}

TEST(TemplateTest, LoadsShippedFile) {
  const auto t = LoadTemplates(std::filesystem::path(FAIRLM_DATA_DIR) / "templates.txt");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_THROW(LoadTemplates("/nonexistent/templates.txt"), MissingInputError);
}

class CausalBiasTest : public ::testing::Test {
 protected:
  // ids: she 2, he 3, woman 4, man 5, is 6, a 7, the 8, doctor 9
  Vocabulary vocab_ = WordVocab({"she", "he", "woman", "man", "is", "a", "the",
                                 "doctor"});
  GenderLexicon one_ = PairLexicon(vocab_, {{"she", "he"}});
  GenderLexicon two_ = PairLexicon(vocab_, {{"she", "he"}, {"woman", "man"}});

  Eigen::VectorXd Uniform() const { return Eigen::VectorXd::Constant(10, 0.1); }
  Eigen::VectorXd With(TokenId id, double p, TokenId id2 = -1, double p2 = 0) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(10);
    const int others = 10 - 1 - (id2 >= 0 ? 1 : 0);
    v.setConstant((1.0 - p - p2) / others);
    v[id] = p;
    if (id2 >= 0) v[id2] = p2;
    return v;
  }
};

TEST_F(CausalBiasTest, IdenticalDistributionsGiveZero) {
  const auto ts = MakeTemplateSet(DefaultTemplates(), {"doctor"}, vocab_, two_);
  const testing::FixedOracle oracle(With(9, 0.3));
  EXPECT_EQ(CausalBiasGivenGender(oracle, ts, two_), 0.0);
  EXPECT_EQ(CausalBiasGivenOccupation(testing::FixedOracle(Uniform()), ts, two_),
            0.0);
}

TEST_F(CausalBiasTest, GivenGenderAnalytic) {
  const auto ts =
      MakeTemplateSet({ParseTemplate("{g} is a | {o}")}, {"doctor"}, vocab_, one_);
  const testing::KeywordOracle oracle(10, {{2, With(9, 0.01)}, {3, With(9, 0.02)}});
  EXPECT_NEAR(CausalBiasGivenGender(oracle, ts, one_), std::log(2.0), 1e-12);
  EXPECT_THROW(CausalBiasGivenOccupation(oracle, ts, one_), UndefinedMetricError);
}

TEST_F(CausalBiasTest, GivenOccupationAnalytic) {
  const auto ts = MakeTemplateSet({ParseTemplate("the {o} is a | {g}")},
                                  {"doctor"}, vocab_, one_);
  const testing::KeywordOracle oracle(10, {{9, With(3, 0.04, 2, 0.01)}});
  EXPECT_NEAR(CausalBiasGivenOccupation(oracle, ts, one_), std::log(4.0), 1e-12);
}

TEST_F(CausalBiasTest, SeedsStartWithEos) {
  const auto ts = MakeTemplateSet(DefaultTemplates(), {"doctor"}, vocab_, one_);
  EXPECT_EQ(ts.Seed(ts.gender_templates[0], 2),
            (std::vector<TokenId>{1, 2, 6, 7}));
  EXPECT_EQ(ts.Seed(ts.occupation_templates[0], 9),
            (std::vector<TokenId>{1, 8, 9, 6, 7}));
}

TEST_F(CausalBiasTest, RelabelingPairsLeavesScoresUnchanged) {
  const auto ts = MakeTemplateSet(DefaultTemplates(), {"doctor"}, vocab_, two_);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  std::map<TokenId, Eigen::VectorXd> table;
  for (TokenId key : {2, 3, 4, 5, 9}) {
    Eigen::VectorXd v(10);
    for (auto& x : v) x = unit(rng);
    table[key] = v / v.sum();
  }
  const testing::KeywordOracle oracle(10, table);
  const GenderLexicon reversed = PairLexicon(vocab_, {{"he", "she"}, {"man", "woman"}});
  const GenderLexicon reordered = PairLexicon(vocab_, {{"woman", "man"}, {"she", "he"}});
  const double g = CausalBiasGivenGender(oracle, ts, two_);
  const double o = CausalBiasGivenOccupation(oracle, ts, two_);
  EXPECT_GT(g, 0.0);
  EXPECT_NEAR(CausalBiasGivenGender(oracle, ts, reversed), g, 1e-12);
  EXPECT_NEAR(CausalBiasGivenOccupation(oracle, ts, reversed), o, 1e-12);
  EXPECT_NEAR(CausalBiasGivenGender(oracle, ts, reordered), g, 1e-12);
  EXPECT_NEAR(CausalBiasGivenOccupation(oracle, ts, reordered), o, 1e-12);
}

TEST_F(CausalBiasTest, TemplateSetValidation) {
  try {
    MakeTemplateSet({ParseTemplate("{g} works as a | {o}")}, {"doctor", "pilot", "he"},
                    vocab_, one_);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_THAT(e.what(), HasSubstr("works"));
    EXPECT_THAT(e.what(), HasSubstr("pilot"));
    EXPECT_THAT(e.what(), HasSubstr("gender-neutral: he"));
  }
}

TEST(EmbeddingBiasTest, Examples) {
  const Vocabulary vocab = WordVocab({"she", "he", "doctor"});
  const GenderLexicon lex = PairLexicon(vocab, {{"she", "he"}});
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(5, 2);
  e.row(2) << 0, 1;
  e.row(3) << 1, 0;
  const std::vector<TokenId> occ{4};
  EXPECT_NEAR(EmbeddingBias(e, lex, occ), 0.0, 1e-15);
  e.row(3) << 2, 0;
  EXPECT_NEAR(EmbeddingBias(e, lex, occ), 1.0, 1e-15);
}

TEST(EmbeddingBiasTest, SumsOverOccupationsAndPairs) {
  const Vocabulary vocab = WordVocab({"she", "he", "woman", "man", "x", "y"});
  const GenderLexicon lex = PairLexicon(vocab, {{"she", "he"}, {"woman", "man"}});
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(8, 2);
  e.row(3) << 2, 0;  // he
  e.row(2) << 0, 1;  // she
  e.row(5) << 2, 0;  // man
  e.row(4) << 0, 1;  // woman
  const std::vector<TokenId> occ{6, 7};
  EXPECT_NEAR(EmbeddingBias(e, lex, occ), 4.0, 1e-15);
}

TEST(EmbeddingBiasTest, InvariantUnderIsometries) {
  const Vocabulary vocab = testing::NumberedVocab(12);
  const GenderLexicon lex = PairLexicon(vocab, {{"w2", "w3"}, {"w4", "w5"}});
  const std::vector<TokenId> occ{6, 7, 8, 9};
  std::mt19937_64 rng(12);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd e(12, 6), a(6, 6);
    for (auto& x : e.reshaped()) x = normal(rng);
    for (auto& x : a.reshaped()) x = normal(rng);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
    Eigen::RowVectorXd shift(6);
    for (auto& x : shift) x = 10 * normal(rng);
    const Eigen::MatrixXd moved = (e * q).rowwise() + shift;
    EXPECT_NEAR(EmbeddingBias(moved, lex, occ), EmbeddingBias(e, lex, occ), 1e-9);
  }
}

TEST(PerplexityTest, UniformModelScoresVocabularySize) {
  ModelHyper h;
  h.embed_dim = 4;
  h.hidden_units = 4;
  h.num_layers = 2;
  const ModelParams zero = ModelParams::Zeros(h, 37);
  const LstmOracle oracle(zero, 7);
  std::vector<TokenId> text;
  for (int i = 0; i < 100; ++i) text.push_back((i * 11) % 37);
  EXPECT_NEAR(Perplexity(oracle, text), 37.0, 1e-9);
}

TEST(PerplexityTest, CertainModelScoresOne) {
  Eigen::VectorXd p = Eigen::VectorXd::Constant(4, 1e-300);
  p[2] = 1.0;
  const testing::FixedOracle oracle(p);
  const std::vector<TokenId> text{2, 2, 2, 2};
  EXPECT_NEAR(Perplexity(oracle, text), 1.0, 1e-12);
  EXPECT_THROW(Perplexity(oracle, std::vector<TokenId>{2}), ValidationError);
  EXPECT_THROW(Perplexity(oracle, std::vector<TokenId>{2, 9}), ValidationError);
}

TEST(PerplexityTest, StateIsThreadedAcrossWindows) {
  ModelHyper h;
  h.embed_dim = 4;
  h.hidden_units = 5;
  h.num_layers = 1;
  const ModelParams p = InitParams(h, 9, 3);
  std::vector<TokenId> text;
  for (int i = 0; i < 50; ++i) text.push_back((i * 5 + 1) % 9);
  EXPECT_NEAR(Perplexity(LstmOracle(p, 3), text), Perplexity(LstmOracle(p, 100), text),
              1e-10);
}

TEST(ReportTest, JsonRoundTrip) {
  MetricsReport r;
  r.b_n = 0.5;
  r.perplexity = 12.0;
  r.meta["window"] = 10;
  const MetricsReport back = MetricsReport::FromJson(r.ToJson());
  EXPECT_EQ(back.b_n, 0.5);
  EXPECT_FALSE(back.gr.has_value());
  EXPECT_EQ(back.perplexity, 12.0);
  EXPECT_EQ(back.meta["window"], 10);
  EXPECT_TRUE(r.ToJson()["gr"].is_null());
  EXPECT_THROW(MetricsReport::FromJson(nlohmann::ordered_json::array()),
               ValidationError);
  nlohmann::ordered_json bad = r.ToJson();
  bad["gr"] = "high";
  EXPECT_THROW(MetricsReport::FromJson(bad), ValidationError);
}

TEST(ReportTest, MergeReplacesByName) {
  MetricsReport a, b, c;
  a.gr = 1.0;
  b.gr = 2.0;
  c.gr = 3.0;
  std::vector<NamedReport> merged = MergeReports({{"base", a}, {"l1", b}}, {});
  const std::vector<NamedReport> incoming{{"base", c}, {"cda", a}};
  merged = MergeReports(merged, incoming);
  ASSERT_EQ(merged.size(), 3u);
  EXPECT_EQ(merged[0].name, "base");
  EXPECT_EQ(merged[0].report.gr, 3.0);
  EXPECT_EQ(merged[2].name, "cda");
}

TEST(ReportTest, ComparisonTableHasRowsAndDeltas) {
  MetricsReport base, debiased;
  base.cb_g = 2.0;
  base.perplexity = 100.0;
  debiased.cb_g = 0.5;
  debiased.perplexity = 104.0;
  const std::vector<NamedReport> reports{{"baseline", base}, {"lambda1", debiased}};
  const std::string table = FormatComparisonTable(reports);
  EXPECT_THAT(table, HasSubstr("| Model | B^N | B_c^N | GR | Ppl. | CB|o | CB|g | EB_d |"));
  EXPECT_THAT(table, HasSubstr("| baseline | - | - | - | 100.000 | - | 2.000 | - |"));
  EXPECT_THAT(table, HasSubstr("| lambda1 |"));
  EXPECT_THAT(table, HasSubstr("| delta lambda1 vs baseline | - | - | - | +4.000 | - | -1.500 | - |"));
}

}  // namespace
}  // namespace fairlm
