#ifndef FAIRLM_TRAINER_H_
#define FAIRLM_TRAINER_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fairlm/corpus.h"
#include "fairlm/loss.h"
#include "fairlm/lstm.h"

namespace fairlm {

enum class TrainMode { kBaseline, kBiasLoss, kReg, kCdaPreAugmented };

std::string_view ToString(TrainMode mode);
// Throws ValidationError for unknown names.
TrainMode ParseTrainMode(std::string_view name);

struct TrainConfig {
  double lambda = 0.0;
  double lr = 20.0;
  double anneal_lo = 0.25;
  double anneal_hi = 0.95;
  // Ceiling on the global gradient norm.
  double clip = 0.25;
  int batch_size = 48;
  int max_epochs = 150;
  int patience = 5;
  double reg_coeff = 0.0;
  TrainMode mode = TrainMode::kBaseline;
  std::uint64_t seed = 1;

  // Bias-loss weight actually applied: lambda in bias_loss and
  // cda_pre_augmented modes, zero otherwise.
  double effective_lambda() const;
  // REG weight actually applied: reg_coeff in reg mode, zero otherwise.
  double effective_reg_coeff() const;

  // Throws ValidationError listing every bad field.
  void Validate() const;
};

// Lexicon and REG word set the loss terms read. Either may be absent when the
// corresponding coefficient is zero.
struct LossTerms {
  const GenderLexicon* lexicon = nullptr;
  std::vector<TokenId> reg_targets;
};

struct WindowLoss {
  LossBreakdown loss;
  ModelParams grad;
};

// Mean over all positions of CE + lambda * L^B, plus reg_coeff * REG, and its
// exact gradient. `targets` has the same layout as `inputs`.
WindowLoss LossAndGradient(const ModelParams& params, const BatchInput& inputs,
                           const BatchInput& targets, HiddenState& state,
                           const LossTerms& terms, double lambda,
                           double reg_coeff,
                           const DropoutSampler& dropout = {});

// Scales `grad` so its global L2 norm is at most `max_norm`. Returns the norm
// before clipping.
double ClipGradNorm(ModelParams& grad, double max_norm);

// Multiplier applied to the learning rate on the `trigger`-th (0-based) epoch
// without validation improvement. Starts at anneal_lo and rises linearly to
// anneal_hi over patience - 1 triggers, then stays there.
double AnnealFactor(const TrainConfig& config, int trigger);

// Evaluation-mode loss over one stream, predicting ids[t+1] from ids[..t]
// with the hidden state threaded through windows of `window` steps.
LossBreakdown EvaluateStream(const ModelParams& params,
                             std::span<const TokenId> ids, int window,
                             const LossTerms& terms, double lambda,
                             double reg_coeff);

struct EpochLog {
  int epoch = 0;
  LossBreakdown train;
  LossBreakdown validation;
  double valid_perplexity = 0.0;
  double lr = 0.0;
};

// Tab-separated: epoch, mean CE, mean L^B, reg term, total, validation
// perplexity, learning rate.
std::string FormatEpochLog(const EpochLog& entry);

struct FitResult {
  ModelParams params;  // parameters of the best validation epoch
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

// Truncated-BPTT SGD with global-norm clipping, annealing on validation
// plateaus and early stopping. Starts from `init`. `on_epoch`, when given,
// sees each log entry as it is produced.
FitResult Fit(ModelParams init, const TokenStream& corpus,
              const TokenStream& validation, const TrainConfig& config,
              const ModelHyper& hyper, const LossTerms& terms,
              const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace fairlm

#endif  // FAIRLM_TRAINER_H_
