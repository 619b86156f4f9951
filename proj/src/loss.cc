#include "fairlm/loss.h"

#include <cmath>
#include <string>

#include "fairlm/errors.h"

namespace fairlm {
namespace {

void RequirePairs(const GenderLexicon& lexicon) {
  if (lexicon.size() == 0) {
    throw ValidationError("gender lexicon has no pairs in the vocabulary");
  }
}

void CheckTargets(const Eigen::MatrixXd& embedding,
                  std::span<const TokenId> targets) {
  if (targets.empty()) throw ValidationError("REG target word set is empty");
  for (TokenId w : targets) {
    if (w < 0 || w >= embedding.rows()) {
      throw ValidationError("REG target id out of range: " + std::to_string(w));
    }
  }
}

}  // namespace

double CrossEntropy(const SoftmaxDistribution& dist, TokenId truth) {
  if (truth < 0 || static_cast<std::size_t>(truth) >= dist.size()) {
    throw ValidationError("truth id out of range: " + std::to_string(truth));
  }
  return -dist.log_p[truth];
}

double BiasLoss(const SoftmaxDistribution& dist, const GenderLexicon& lexicon) {
  RequirePairs(lexicon);
  double sum = 0.0;
  for (const auto& pair : lexicon.pairs()) {
    sum += std::abs(dist.log_p[pair.female] - dist.log_p[pair.male]);
  }
  return sum / static_cast<double>(lexicon.size());
}

Eigen::VectorXd BiasLossGradLogits(const SoftmaxDistribution& dist,
                                   const GenderLexicon& lexicon) {
  RequirePairs(lexicon);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(dist.p.size());
  const double scale = 1.0 / static_cast<double>(lexicon.size());
  for (const auto& pair : lexicon.pairs()) {
    const double diff = dist.log_p[pair.female] - dist.log_p[pair.male];
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    grad[pair.female] += sign * scale;
    grad[pair.male] -= sign * scale;
  }
  return grad;
}

LossBreakdown CombinedLoss(std::span<const StepPrediction> window,
                           const GenderLexicon& lexicon, double lambda) {
  if (window.empty()) throw ValidationError("loss window is empty");
  LossBreakdown out;
  double total = 0.0;
  for (const auto& step : window) {
    const double ce = CrossEntropy(step.dist, step.truth);
    const double bias = lambda != 0.0 ? BiasLoss(step.dist, lexicon) : 0.0;
    out.ce += ce;
    out.bias += bias;
    total += ce + lambda * bias;
  }
  const double n = static_cast<double>(window.size());
  out.ce /= n;
  out.bias /= n;
  out.total = total / n;
  return out;
}

Eigen::VectorXd GenderDirection(const Eigen::MatrixXd& embedding,
                                const GenderLexicon& lexicon) {
  RequirePairs(lexicon);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(embedding.cols());
  for (const auto& pair : lexicon.pairs()) {
    d += (embedding.row(pair.male) - embedding.row(pair.female)).transpose();
  }
  d /= static_cast<double>(lexicon.size());
  const double norm = d.norm();
  if (!(norm > 0.0)) {
    throw ValidationError("degenerate gender direction: male and female "
                          "embeddings coincide on average");
  }
  return d / norm;
}

double RegLoss(const Eigen::MatrixXd& embedding, const GenderLexicon& lexicon,
               std::span<const TokenId> targets) {
  CheckTargets(embedding, targets);
  const Eigen::VectorXd g = GenderDirection(embedding, lexicon);
  double sum = 0.0;
  for (TokenId w : targets) {
    const double proj = embedding.row(w).dot(g);
    sum += proj * proj;
  }
  return sum / static_cast<double>(targets.size());
}

Eigen::MatrixXd RegLossGrad(const Eigen::MatrixXd& embedding,
                            const GenderLexicon& lexicon,
                            std::span<const TokenId> targets) {
  CheckTargets(embedding, targets);
  RequirePairs(lexicon);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(embedding.cols());
  for (const auto& pair : lexicon.pairs()) {
    d += (embedding.row(pair.male) - embedding.row(pair.female)).transpose();
  }
  d /= static_cast<double>(lexicon.size());
  const double norm = d.norm();
  if (!(norm > 0.0)) {
    throw ValidationError("degenerate gender direction: male and female "
                          "embeddings coincide on average");
  }
  const Eigen::VectorXd g = d / norm;
  const double inv_n = 1.0 / static_cast<double>(targets.size());

  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(embedding.rows(), embedding.cols());
  // d/dd of (x . d/|d|)^2 = 2 (x.g) (x - (x.g) g) / |d|
  Eigen::VectorXd d_direction = Eigen::VectorXd::Zero(embedding.cols());
  for (TokenId w : targets) {
    const Eigen::VectorXd x = embedding.row(w).transpose();
    const double proj = x.dot(g);
    grad.row(w) += (2.0 * proj * inv_n) * g.transpose();
    d_direction += (2.0 * proj * inv_n / norm) * (x - proj * g);
  }
  const double per_pair = 1.0 / static_cast<double>(lexicon.size());
  for (const auto& pair : lexicon.pairs()) {
    grad.row(pair.male) += per_pair * d_direction.transpose();
    grad.row(pair.female) -= per_pair * d_direction.transpose();
  }
  return grad;
}

}  // namespace fairlm
