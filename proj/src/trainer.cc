#include "fairlm/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "fairlm/errors.h"
#include "fairlm/log.h"

namespace fairlm {
namespace {

// Separates the dropout stream from the initialization stream when both are
// derived from the same config seed.
constexpr std::uint64_t kDropoutSeedSalt = 0x9e3779b97f4a7c15ULL;

void CheckTerms(const ModelParams& params, const LossTerms& terms,
                double lambda, double reg_coeff) {
  if (lambda > 0.0 || reg_coeff > 0.0) {
    if (terms.lexicon == nullptr || terms.lexicon->size() == 0) {
      throw ValidationError(
          "bias loss and REG need a gender lexicon with at least one pair");
    }
    if (terms.lexicon->vocab_size() != params.vocab_size()) {
      throw ValidationError("gender lexicon and model disagree on vocabulary "
                            "size");
    }
  }
  if (reg_coeff > 0.0) {
    if (terms.reg_targets.empty()) {
      throw ValidationError("REG mode needs a non-empty target word set");
    }
    for (TokenId w : terms.reg_targets) {
      if (w < 0 || static_cast<std::size_t>(w) >= params.vocab_size() ||
          !terms.lexicon->IsNeutral(w)) {
        throw ValidationError("REG target words must be gender-neutral "
                              "vocabulary words (offending id " +
                              std::to_string(w) + ")");
      }
    }
  }
}

}  // namespace

std::string_view ToString(TrainMode mode) {
  switch (mode) {
    case TrainMode::kBaseline:
      return "baseline";
    case TrainMode::kBiasLoss:
      return "bias_loss";
    case TrainMode::kReg:
      return "reg";
    case TrainMode::kCdaPreAugmented:
      return "cda_pre_augmented";
  }
  return "unknown";
}

TrainMode ParseTrainMode(std::string_view name) {
  for (TrainMode m : {TrainMode::kBaseline, TrainMode::kBiasLoss,
                      TrainMode::kReg, TrainMode::kCdaPreAugmented}) {
    if (name == ToString(m)) return m;
  }
  throw ValidationError("mode: unknown training mode '" + std::string(name) +
                        "' (expected baseline, bias_loss, reg or "
                        "cda_pre_augmented)");
}

double TrainConfig::effective_lambda() const {
  return mode == TrainMode::kBiasLoss || mode == TrainMode::kCdaPreAugmented
             ? lambda
             : 0.0;
}

double TrainConfig::effective_reg_coeff() const {
  return mode == TrainMode::kReg ? reg_coeff : 0.0;
}

void TrainConfig::Validate() const {
  std::vector<std::string> problems;
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    problems.push_back("lambda must be a finite value >= 0");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) problems.push_back("lr must be > 0");
  if (!(anneal_lo > 0.0 && anneal_lo <= 1.0)) {
    problems.push_back("anneal_lo must be in (0, 1]");
  }
  if (!(anneal_hi > 0.0 && anneal_hi <= 1.0)) {
    problems.push_back("anneal_hi must be in (0, 1]");
  }
  if (anneal_lo > anneal_hi) {
    problems.push_back("anneal_lo must not exceed anneal_hi");
  }
  if (!(clip > 0.0)) problems.push_back("clip must be > 0");
  if (batch_size < 1) problems.push_back("batch_size must be >= 1");
  if (max_epochs < 1) problems.push_back("max_epochs must be >= 1");
  if (patience < 1) problems.push_back("patience must be >= 1");
  if (!(reg_coeff >= 0.0) || !std::isfinite(reg_coeff)) {
    problems.push_back("reg_coeff must be a finite value >= 0");
  }
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
    throw ValidationError(msg);
  }
}

WindowLoss LossAndGradient(const ModelParams& params, const BatchInput& inputs,
                           const BatchInput& targets, HiddenState& state,
                           const LossTerms& terms, double lambda,
                           double reg_coeff, const DropoutSampler& dropout) {
  if (targets.steps != inputs.steps || targets.batch != inputs.batch) {
    throw ValidationError("targets and inputs differ in shape");
  }
  CheckTerms(params, terms, lambda, reg_coeff);
  const ForwardTrace trace = Forward(params, inputs, state, dropout);
  const double positions =
      static_cast<double>(inputs.steps) * static_cast<double>(inputs.batch);
  const double inv_n = 1.0 / positions;

  WindowLoss out;
  std::vector<Eigen::MatrixXd> dlogits(inputs.steps);
  for (int t = 0; t < inputs.steps; ++t) {
    const Eigen::MatrixXd& logits = trace.logits()[t];
    dlogits[t].resize(logits.rows(), logits.cols());
    for (int b = 0; b < inputs.batch; ++b) {
      const SoftmaxDistribution dist = Softmax(logits.col(b));
      const TokenId truth = targets.at(t, b);
      out.loss.ce += CrossEntropy(dist, truth);
      Eigen::VectorXd d = dist.p;
      d[truth] -= 1.0;
      if (lambda != 0.0) {
        out.loss.bias += BiasLoss(dist, *terms.lexicon);
        d += lambda * BiasLossGradLogits(dist, *terms.lexicon);
      }
      dlogits[t].col(b) = d * inv_n;
    }
  }
  out.loss.ce *= inv_n;
  out.loss.bias *= inv_n;
  out.grad = Backward(params, trace, dlogits);
  if (reg_coeff != 0.0) {
    out.loss.reg = RegLoss(params.embedding, *terms.lexicon, terms.reg_targets);
    out.grad.embedding +=
        reg_coeff *
        RegLossGrad(params.embedding, *terms.lexicon, terms.reg_targets);
  }
  out.loss.total = out.loss.ce + lambda * out.loss.bias + reg_coeff * out.loss.reg;
  return out;
}

double ClipGradNorm(ModelParams& grad, double max_norm) {
  const double norm = std::sqrt(grad.SquaredNorm());
  if (norm > max_norm) grad.Scale(max_norm / norm);
  return norm;
}

double AnnealFactor(const TrainConfig& config, int trigger) {
  if (config.patience <= 1) return config.anneal_lo;
  const double progress =
      std::min(1.0, static_cast<double>(trigger) / (config.patience - 1));
  return config.anneal_lo + (config.anneal_hi - config.anneal_lo) * progress;
}

LossBreakdown EvaluateStream(const ModelParams& params,
                             std::span<const TokenId> ids, int window,
                             const LossTerms& terms, double lambda,
                             double reg_coeff) {
  if (ids.size() < 2) {
    throw ValidationError("evaluation stream needs at least two tokens");
  }
  if (window < 1) throw ValidationError("evaluation window must be >= 1");
  CheckTerms(params, terms, lambda, reg_coeff);
  HiddenState state = HiddenState::Zero(InferHyper(params), 1);
  LossBreakdown out;
  const std::size_t predictions = ids.size() - 1;
  for (std::size_t start = 0; start < predictions; start += window) {
    const std::size_t steps = std::min<std::size_t>(window, predictions - start);
    const Eigen::MatrixXd logits =
        ForwardSequence(params, ids.subspan(start, steps), state);
    for (std::size_t t = 0; t < steps; ++t) {
      const SoftmaxDistribution dist = Softmax(logits.row(t).transpose());
      out.ce += CrossEntropy(dist, ids[start + t + 1]);
      if (lambda != 0.0) out.bias += BiasLoss(dist, *terms.lexicon);
    }
  }
  out.ce /= static_cast<double>(predictions);
  out.bias /= static_cast<double>(predictions);
  if (reg_coeff != 0.0) {
    out.reg = RegLoss(params.embedding, *terms.lexicon, terms.reg_targets);
  }
  out.total = out.ce + lambda * out.bias + reg_coeff * out.reg;
  return out;
}

std::string FormatEpochLog(const EpochLog& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d\t%.6f\t%.6f\t%.6f\t%.6f\t%.4f\t%.6g",
                e.epoch, e.train.ce, e.train.bias, e.train.reg, e.train.total,
                e.valid_perplexity, e.lr);
  return buf;
}

FitResult Fit(ModelParams init, const TokenStream& corpus,
              const TokenStream& validation, const TrainConfig& config,
              const ModelHyper& hyper, const LossTerms& terms,
              const std::function<void(const EpochLog&)>& on_epoch) {
  config.Validate();
  hyper.Validate();
  init.CheckShape(hyper, init.vocab_size());
  const double lambda = config.effective_lambda();
  const double reg_coeff = config.effective_reg_coeff();
  CheckTerms(init, terms, lambda, reg_coeff);

  const std::size_t n = corpus.ids.size();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const auto seq_len = static_cast<std::size_t>(hyper.seq_len);
  if (n <= seq_len * batch) {
    throw ValidationError("training corpus too small: " + std::to_string(n) +
                          " tokens, need more than seq_len * batch_size = " +
                          std::to_string(seq_len * batch));
  }
  if (validation.ids.size() < 2) {
    throw ValidationError("validation stream needs at least two tokens");
  }
  const auto vocab = static_cast<TokenId>(init.vocab_size());
  for (const auto* s : {&corpus, &validation}) {
    for (TokenId id : s->ids) {
      if (id < 0 || id >= vocab) {
        throw ValidationError("token id " + std::to_string(id) +
                              " out of range for the model vocabulary");
      }
    }
  }

  // Contiguous streams, one per batch column.
  const std::size_t per_stream = n / batch;
  auto stream_at = [&](std::size_t b, std::size_t pos) {
    return corpus.ids[b * per_stream + pos];
  };

  std::mt19937_64 dropout_rng(config.seed ^ kDropoutSeedSalt);
  const DropoutSampler dropout{hyper.dropout, &dropout_rng};

  FitResult result;
  ModelParams params = std::move(init);
  result.params = params;
  double lr = config.lr;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  int triggers = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    HiddenState state = HiddenState::Zero(hyper, config.batch_size);
    LossBreakdown sum;
    double weight = 0.0;
    for (std::size_t start = 0; start + 1 < per_stream; start += seq_len) {
      const int steps =
          static_cast<int>(std::min(seq_len, per_stream - 1 - start));
      BatchInput inputs{steps, config.batch_size, {}};
      BatchInput targets{steps, config.batch_size, {}};
      inputs.ids.reserve(static_cast<std::size_t>(steps) * batch);
      targets.ids.reserve(static_cast<std::size_t>(steps) * batch);
      for (int t = 0; t < steps; ++t) {
        for (std::size_t b = 0; b < batch; ++b) {
          inputs.ids.push_back(stream_at(b, start + t));
          targets.ids.push_back(stream_at(b, start + t + 1));
        }
      }
      WindowLoss wl = LossAndGradient(params, inputs, targets, state, terms,
                                      lambda, reg_coeff, dropout);
      ClipGradNorm(wl.grad, config.clip);
      params.AddScaled(wl.grad, -lr);

      const double w = static_cast<double>(steps);
      sum.ce += w * wl.loss.ce;
      sum.bias += w * wl.loss.bias;
      sum.reg += w * wl.loss.reg;
      sum.total += w * wl.loss.total;
      weight += w;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train = {sum.ce / weight, sum.bias / weight, sum.reg / weight,
                   sum.total / weight};
    entry.validation = EvaluateStream(params, validation.ids, hyper.seq_len,
                                      terms, lambda, reg_coeff);
    entry.valid_perplexity = std::exp(entry.validation.ce);
    entry.lr = lr;
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    spdlog::info("epoch {}: train total {:.4f}, valid total {:.4f}, valid ppl "
                 "{:.3f}, lr {:.4g}",
                 epoch, entry.train.total, entry.validation.total,
                 entry.valid_perplexity, lr);

    if (entry.validation.total < best) {
      best = entry.validation.total;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
      lr *= AnnealFactor(config, triggers++);
      if (since_best >= config.patience) {
        spdlog::info("early stop after epoch {} (best epoch {})", epoch,
                     result.best_epoch);
        break;
      }
    }
  }
  return result;
}

}  // namespace fairlm
