#include "fairlm/config.h"

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "fairlm/errors.h"
#include "test_util.h"

namespace fairlm {
namespace {

using ::testing::HasSubstr;

std::string ErrorOf(const std::string& text) {
  try {
    ParseTrainJob(KeyValueFile::Parse(text), "/base");
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

TEST(KeyValueFileTest, ParsesCommentsAndWhitespace) {
  const auto kv = KeyValueFile::Parse("# comment\n\n  lr =  20 \nmode=bias_loss\n");
  EXPECT_EQ(kv.entries().at("lr"), "20");
  EXPECT_EQ(kv.entries().at("mode"), "bias_loss");
  EXPECT_EQ(kv.ToString(), "lr = 20\nmode = bias_loss\n");
}

TEST(KeyValueFileTest, Errors) {
  EXPECT_THROW(KeyValueFile::Parse("lr 20\n"), ValidationError);
  EXPECT_THROW(KeyValueFile::Parse("lr = 1\nlr = 2\n"), ValidationError);
  EXPECT_THROW(KeyValueFile::Parse(" = 2\n"), ValidationError);
  EXPECT_THROW(KeyValueFile::Load("/nonexistent/train.cfg"), MissingInputError);
}

TEST(TrainJobTest, DefaultsAndOverrides) {
  const TrainJob job = ParseTrainJob(
      KeyValueFile::Parse("corpus = data/train.txt\nmode = bias_loss\n"
                          "lambda = 0.5\npairs = /abs/pairs.tsv\n"
                          "embed_dim = 16\nseed = 9\nmax_vocab = 1000\n"),
      "/base");
  EXPECT_EQ(job.corpus, "/base/data/train.txt");
  EXPECT_EQ(job.pairs, "/abs/pairs.tsv");
  EXPECT_EQ(job.train.mode, TrainMode::kBiasLoss);
  EXPECT_EQ(job.train.lambda, 0.5);
  EXPECT_EQ(job.train.seed, 9u);
  EXPECT_EQ(job.train.lr, 20.0);
  EXPECT_EQ(job.hyper.embed_dim, 16);
  EXPECT_EQ(job.hyper.hidden_units, 300);
  EXPECT_EQ(job.max_vocab, 1000u);
  EXPECT_EQ(job.reg_targets, "occupations");
}

TEST(TrainJobTest, InvalidModeNamesTheField) {
  EXPECT_THAT(ErrorOf("corpus = c.txt\nmode = magic\n"), HasSubstr("mode"));
}

TEST(TrainJobTest, ListsEveryProblemAtOnce) {
  const std::string err = ErrorOf(
      "lr = fast\nbatch_size = 0\ncolour = blue\ndropout = 1.5\n"
      "reg_targets = all\n");
  EXPECT_THAT(err, HasSubstr("lr: cannot parse 'fast'"));
  EXPECT_THAT(err, HasSubstr("batch_size"));
  EXPECT_THAT(err, HasSubstr("unknown key 'colour'"));
  EXPECT_THAT(err, HasSubstr("dropout"));
  EXPECT_THAT(err, HasSubstr("corpus: required"));
  EXPECT_THAT(err, HasSubstr("reg_targets"));
}

TEST(TrainJobTest, ModeDependentRequirements) {
  EXPECT_THAT(ErrorOf("corpus = c\nmode = bias_loss\nlambda = 1\n"),
              HasSubstr("pairs: required"));
  EXPECT_EQ(ErrorOf("corpus = c\nmode = baseline\nlambda = 1\n"), "");
  EXPECT_THAT(ErrorOf("corpus = c\nmode = reg\nreg_coeff = 1\npairs = p\n"),
              HasSubstr("occupations: required"));
  EXPECT_EQ(ErrorOf("corpus = c\nmode = reg\nreg_coeff = 1\npairs = p\n"
                    "reg_targets = neutral\n"),
            "");
  EXPECT_THAT(ErrorOf("corpus = c\nmode = cda_pre_augmented\n"),
              HasSubstr("valid_corpus"));
}

TEST(TrainJobTest, TrailingGarbageIsRejected) {
  EXPECT_THAT(ErrorOf("corpus = c\nlr = 20x\n"), HasSubstr("lr"));
  EXPECT_THAT(ErrorOf("corpus = c\nseed = -1\n"), HasSubstr("seed"));
}

TEST(GenerationConfigTest, Parses) {
  const auto c = ParseGenerationConfig(
      KeyValueFile::Parse("num_docs = 10\ndoc_len = 50\ntemperature = 0\n"));
  EXPECT_EQ(c.num_docs, 10);
  EXPECT_EQ(c.doc_len, 50);
  EXPECT_EQ(c.temperature, 0.0);
  EXPECT_EQ(c.seed, 1u);
  EXPECT_THROW(ParseGenerationConfig(KeyValueFile::Parse("num_docs = 0\n")),
               ValidationError);
  EXPECT_THROW(ParseGenerationConfig(KeyValueFile::Parse("lambda = 1\n")),
               ValidationError);
}

}  // namespace
}  // namespace fairlm
