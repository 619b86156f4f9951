#include "fairlm/lstm.h"

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

ModelHyper TinyHyper(int layers = 1) {
  ModelHyper h;
  h.embed_dim = 6;
  h.hidden_units = 5;
  h.num_layers = layers;
  h.seq_len = 4;
  h.dropout = 0.0;
  return h;
}

TEST(SoftmaxTest, UniformFromEqualLogits) {
  const auto d = Softmax(Eigen::VectorXd::Zero(4));
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(d.p[i], 0.25);
}

TEST(SoftmaxTest, AnalyticTwoWay) {
  Eigen::VectorXd logits(2);
  logits << std::log(2.0), 0.0;
  const auto d = Softmax(logits);
  EXPECT_NEAR(d.p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(d.p[1], 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxTest, LargeLogitsDoNotOverflow) {
  Eigen::VectorXd logits(2);
  logits << 1000.0, 0.0;
  const auto d = Softmax(logits);
  EXPECT_TRUE(d.p.allFinite());
  EXPECT_NEAR(d.p[0], 1.0, 1e-15);
  EXPECT_NEAR(d.log_p[1], -1000.0, 1e-9);
}

TEST(SoftmaxTest, RandomLogitsSumToOneAndAreShiftInvariant) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 5.0);
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::VectorXd logits(1 + trial % 37);
    for (auto& x : logits) x = normal(rng);
    const auto d = Softmax(logits);
    EXPECT_NEAR(d.p.sum(), 1.0, 1e-12);
    EXPECT_GT(d.p.minCoeff(), 0.0);
    const auto shifted = Softmax((logits.array() + 123.0).matrix());
    EXPECT_LT((shifted.p - d.p).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((d.log_p.array().exp().matrix() - d.p).cwiseAbs().maxCoeff(),
              1e-12);
  }
}

TEST(InitTest, ShapesAndDeterminism) {
  ModelHyper h = TinyHyper(2);
  h.embed_dim = 8;
  const ModelParams a = InitParams(h, 10, 42);
  EXPECT_EQ(a.embedding.rows(), 10);
  EXPECT_EQ(a.embedding.cols(), 8);
  EXPECT_EQ(a.layers[0].w_input.rows(), 20);
  EXPECT_EQ(a.layers[0].w_input.cols(), 8);
  EXPECT_EQ(a.layers[1].w_input.cols(), 5);
  EXPECT_EQ(a.out_weight.rows(), 10);
  EXPECT_TRUE(a == InitParams(h, 10, 42));
  EXPECT_FALSE(a == InitParams(h, 10, 43));
  EXPECT_NO_THROW(a.CheckShape(h, 10));
  EXPECT_THROW(a.CheckShape(h, 11), ValidationError);
}

TEST(InitTest, Ranges) {
  ModelHyper h = TinyHyper();
  h.hidden_units = 16;
  const ModelParams p = InitParams(h, 50, 1);
  EXPECT_LE(p.embedding.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_LE(p.out_weight.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_LE(p.layers[0].w_hidden.cwiseAbs().maxCoeff(), 0.25);
  EXPECT_EQ(p.layers[0].bias.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(p.out_bias.cwiseAbs().maxCoeff(), 0.0);
}

TEST(InitTest, HyperValidation) {
  ModelHyper h = TinyHyper();
  h.hidden_units = 0;
  h.dropout = 1.0;
  try {
    h.Validate();
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_THAT(e.what(), ::testing::HasSubstr("hidden_units"));
    EXPECT_THAT(e.what(), ::testing::HasSubstr("dropout"));
  }
}

TEST(OverlayTest, ReplacesKnownRows) {
  const auto dir = testing::MakeTempDir("overlay");
  const Vocabulary vocab = testing::WordVocab({"he", "she"});
  ModelHyper h = TinyHyper();
  h.embed_dim = 3;
  ModelParams p = InitParams(h, vocab.size(), 1);
  testing::WriteText(dir / "vec.txt", "he 0.5 -1 2\nzebra 1 1 1\n");
  EXPECT_EQ(OverlayEmbeddings(dir / "vec.txt", vocab, p), 1u);
  EXPECT_EQ(p.embedding.row(vocab.Lookup("he")),
            Eigen::RowVector3d(0.5, -1.0, 2.0));
  testing::WriteText(dir / "bad.txt", "he 1 2\n");
  EXPECT_THROW(OverlayEmbeddings(dir / "bad.txt", vocab, p), ValidationError);
  EXPECT_THROW(OverlayEmbeddings(dir / "none.txt", vocab, p),
               MissingInputError);
}

TEST(ForwardTest, ZeroWeightsGiveUniformLogits) {
  const ModelHyper h = TinyHyper(2);
  const ModelParams p = ModelParams::Zeros(h, 9);
  HiddenState state = HiddenState::Zero(h);
  const std::vector<TokenId> ids{3, 1, 4, 1, 5};
  const Eigen::MatrixXd logits = ForwardSequence(p, ids, state);
  EXPECT_EQ(logits.cwiseAbs().maxCoeff(), 0.0);
  const auto d = NextTokenDistribution(p, ids);
  for (Eigen::Index i = 0; i < d.p.size(); ++i) EXPECT_NEAR(d.p[i], 1.0 / 9, 1e-15);
}

TEST(ForwardTest, StateThreadingMatchesOnePass) {
  const ModelHyper h = TinyHyper(2);
  const ModelParams p = InitParams(h, 12, 5);
  const std::vector<TokenId> ids{2, 7, 3, 11, 0, 5};
  HiddenState whole = HiddenState::Zero(h);
  const Eigen::MatrixXd all = ForwardSequence(p, ids, whole);

  HiddenState split = HiddenState::Zero(h);
  const std::span<const TokenId> view(ids);
  const Eigen::MatrixXd first = ForwardSequence(p, view.subspan(0, 2), split);
  const Eigen::MatrixXd second = ForwardSequence(p, view.subspan(2), split);
  EXPECT_EQ(first, all.topRows(2));
  EXPECT_EQ(second, all.bottomRows(4));
  for (int l = 0; l < 2; ++l) {
    EXPECT_EQ(split.h[l], whole.h[l]);
    EXPECT_EQ(split.c[l], whole.c[l]);
  }
}

TEST(ForwardTest, BatchColumnsAreIndependent) {
  const ModelHyper h = TinyHyper();
  const ModelParams p = InitParams(h, 8, 2);
  BatchInput in{3, 2, {2, 5, 3, 6, 4, 7}};
  HiddenState state = HiddenState::Zero(h, 2);
  const ForwardTrace trace = Forward(p, in, state);
  for (int b = 0; b < 2; ++b) {
    std::vector<TokenId> col;
    for (int t = 0; t < 3; ++t) col.push_back(in.at(t, b));
    HiddenState single = HiddenState::Zero(h);
    const Eigen::MatrixXd logits = ForwardSequence(p, col, single);
    for (int t = 0; t < 3; ++t) {
      EXPECT_LT((trace.logits()[t].col(b) - logits.row(t).transpose())
                    .cwiseAbs()
                    .maxCoeff(),
                1e-14);
    }
  }
}

TEST(ForwardTest, RecurrentWeightOnlyAffectsLaterSteps) {
  const ModelHyper h = TinyHyper();
  ModelParams p = InitParams(h, 8, 3);
  const std::vector<TokenId> ids{2, 3, 4};
  HiddenState s1 = HiddenState::Zero(h);
  const Eigen::MatrixXd before = ForwardSequence(p, ids, s1);
  p.layers[0].w_hidden(0, 0) += 1e-3;
  HiddenState s2 = HiddenState::Zero(h);
  const Eigen::MatrixXd after = ForwardSequence(p, ids, s2);
  EXPECT_EQ(before.row(0), after.row(0));
  EXPECT_GT((before.row(1) - after.row(1)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT((before.row(2) - after.row(2)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ForwardTest, RejectsBadInput) {
  const ModelHyper h = TinyHyper();
  const ModelParams p = InitParams(h, 8, 3);
  HiddenState state = HiddenState::Zero(h);
  const std::vector<TokenId> bad{2, 8};
  EXPECT_THROW(ForwardSequence(p, bad, state), ValidationError);
  HiddenState wrong = HiddenState::Zero(h, 2);
  const std::vector<TokenId> good{2, 3};
  EXPECT_THROW(ForwardSequence(p, good, wrong), ValidationError);
  EXPECT_THROW(NextTokenDistribution(p, {}), ValidationError);
}

TEST(ForwardTest, DropoutOnlyInTrainingMode) {
  ModelHyper h = TinyHyper(2);
  const ModelParams p = InitParams(h, 8, 3);
  const std::vector<TokenId> ids{2, 3, 4};
  HiddenState a = HiddenState::Zero(h);
  HiddenState b = HiddenState::Zero(h);
  const Eigen::MatrixXd eval = ForwardSequence(p, ids, a, {0.5, nullptr});
  std::mt19937_64 rng(9);
  const Eigen::MatrixXd train = ForwardSequence(p, ids, b, {0.5, &rng});
  EXPECT_EQ(eval, ForwardSequence(p, ids, a = HiddenState::Zero(h)));
  EXPECT_NE(eval, train);
}

TEST(ForwardTest, InferHyperFromShapes) {
  ModelHyper h = TinyHyper(3);
  const ModelHyper inferred = InferHyper(InitParams(h, 8, 1));
  EXPECT_EQ(inferred.embed_dim, h.embed_dim);
  EXPECT_EQ(inferred.hidden_units, h.hidden_units);
  EXPECT_EQ(inferred.num_layers, 3);
}

// Backward against central differences of sum_t <w_t, logits_t> for random
// weights w_t, two layers, batch of two, with and without dropout.
class BackwardTest : public ::testing::TestWithParam<double> {};

TEST_P(BackwardTest, MatchesFiniteDifferences) {
  const double rate = GetParam();
  const ModelHyper h = TinyHyper(2);
  const std::size_t vocab = 7;
  ModelParams p = InitParams(h, vocab, 17);
  std::mt19937_64 init_rng(4);
  std::normal_distribution<double> normal(0.0, 0.3);
  p.ForEachTensor([&](std::string_view, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += normal(init_rng);
  });
  const BatchInput in{4, 2, {2, 3, 4, 5, 6, 2, 1, 0}};
  std::vector<Eigen::MatrixXd> weights;
  for (int t = 0; t < in.steps; ++t) {
    Eigen::MatrixXd w(vocab, in.batch);
    for (auto& x : w.reshaped()) x = normal(init_rng);
    weights.push_back(w);
  }
  HiddenState start = HiddenState::Zero(h, 2);
  start.h[0].setConstant(0.1);
  start.c[1].setConstant(-0.2);

  auto objective = [&](const ModelParams& params) {
    std::mt19937_64 rng(99);
    HiddenState s = start;
    const ForwardTrace trace = Forward(params, in, s, {rate, &rng});
    double total = 0.0;
    for (int t = 0; t < in.steps; ++t) {
      total += trace.logits()[t].cwiseProduct(weights[t]).sum();
    }
    return total;
  };
  std::mt19937_64 rng(99);
  HiddenState s = start;
  const ForwardTrace trace = Forward(p, in, s, {rate, &rng});
  const ModelParams grad = Backward(p, trace, weights);
  const auto errors = testing::FiniteDifferenceCheck(p, grad, objective);
  for (const auto& e : errors) EXPECT_LT(e.rel_error, 1e-6) << e.name;
}

INSTANTIATE_TEST_SUITE_P(DropoutRates, BackwardTest,
                         ::testing::Values(0.0, 0.3));

TEST(ParamsTest, Arithmetic) {
  const ModelHyper h = TinyHyper();
  ModelParams a = InitParams(h, 6, 1);
  const double norm = a.SquaredNorm();
  a.Scale(2.0);
  EXPECT_NEAR(a.SquaredNorm(), 4.0 * norm, 1e-12);
  a.AddScaled(a, -1.0);
  EXPECT_EQ(a.SquaredNorm(), 0.0);
  EXPECT_TRUE(a.AllFinite());
  a.out_bias[0] = std::nan("");
  EXPECT_FALSE(a.AllFinite());
}

}  // namespace
}  // namespace fairlm
