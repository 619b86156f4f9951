#ifndef FAIRLM_LOSS_H_
#define FAIRLM_LOSS_H_

#include <span>

#include <Eigen/Dense>

#include "fairlm/corpus.h"
#include "fairlm/lstm.h"

namespace fairlm {

struct LossBreakdown {
  double ce = 0.0;
  double bias = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

// -log p[truth], natural log.
double CrossEntropy(const SoftmaxDistribution& dist, TokenId truth);

// Mean over gender pairs of |log(p[female] / p[male])|. Throws
// ValidationError when the lexicon has no pairs.
double BiasLoss(const SoftmaxDistribution& dist, const GenderLexicon& lexicon);

// Gradient of BiasLoss with respect to the pre-softmax logits:
// (1/G) sum_i sign(log p[f_i] - log p[m_i]) (e_{f_i} - e_{m_i}). The log
// ratio equals the logit difference, so only gendered coordinates are
// nonzero. An exactly tied pair contributes 0.
Eigen::VectorXd BiasLossGradLogits(const SoftmaxDistribution& dist,
                                   const GenderLexicon& lexicon);

struct StepPrediction {
  SoftmaxDistribution dist;
  TokenId truth;
};

// Mean over the window of CE(t) + lambda * L^B(t). `reg` is left at zero.
// With lambda == 0 the lexicon is not consulted.
LossBreakdown CombinedLoss(std::span<const StepPrediction> window,
                           const GenderLexicon& lexicon, double lambda);

// Unit gender direction: normalized mean over pairs of E[male] - E[female].
// Throws ValidationError if that mean is the zero vector.
Eigen::VectorXd GenderDirection(const Eigen::MatrixXd& embedding,
                                const GenderLexicon& lexicon);

// Mean over `targets` of the squared projection of E[w] on the gender
// direction.
double RegLoss(const Eigen::MatrixXd& embedding, const GenderLexicon& lexicon,
               std::span<const TokenId> targets);

// d RegLoss / d embedding, including the dependence of the gender direction
// on the gendered rows.
Eigen::MatrixXd RegLossGrad(const Eigen::MatrixXd& embedding,
                            const GenderLexicon& lexicon,
                            std::span<const TokenId> targets);

}  // namespace fairlm

#endif  // FAIRLM_LOSS_H_
