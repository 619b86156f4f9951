#ifndef FAIRLM_LSTM_H_
#define FAIRLM_LSTM_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fairlm/corpus.h"

namespace fairlm {

struct ModelHyper {
  int embed_dim = 300;
  int hidden_units = 300;
  int num_layers = 2;
  // Truncated-backprop window.
  int seq_len = 35;
  double dropout = 0.25;

  // Throws ValidationError listing every bad field.
  void Validate() const;

  friend bool operator==(const ModelHyper&, const ModelHyper&) = default;
};

struct LstmLayer {
  // Gate blocks are stacked input, forget, cell, output: 4H rows.
  Eigen::MatrixXd w_input;   // 4H x in
  Eigen::MatrixXd w_hidden;  // 4H x H
  Eigen::VectorXd bias;      // 4H
};

// Trainable tensors. Also used as the gradient container.
struct ModelParams {
  Eigen::MatrixXd embedding;  // |V| x embed_dim, input word vectors
  std::vector<LstmLayer> layers;
  Eigen::MatrixXd out_weight;  // |V| x H
  Eigen::VectorXd out_bias;    // |V|

  static ModelParams Zeros(const ModelHyper& hyper, std::size_t vocab_size);

  std::size_t vocab_size() const {
    return static_cast<std::size_t>(embedding.rows());
  }

  // Visits each tensor in checkpoint order: embedding, then per layer
  // w_input, w_hidden, bias, then out_weight, out_bias.
  template <typename F>
  void ForEachTensor(F&& f) {
    f(std::string_view("embedding"), embedding);
    for (auto& layer : layers) {
      f(std::string_view("w_input"), layer.w_input);
      f(std::string_view("w_hidden"), layer.w_hidden);
      f(std::string_view("bias"), layer.bias);
    }
    f(std::string_view("out_weight"), out_weight);
    f(std::string_view("out_bias"), out_bias);
  }
  template <typename F>
  void ForEachTensor(F&& f) const {
    const_cast<ModelParams*>(this)->ForEachTensor(
        [&](std::string_view name, const auto& t) { f(name, t); });
  }

  // Throws ValidationError on any mismatch.
  void CheckShape(const ModelHyper& hyper, std::size_t vocab_size) const;
  bool AllFinite() const;
  double SquaredNorm() const;
  void Scale(double factor);
  // this += factor * other
  void AddScaled(const ModelParams& other, double factor);

  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

// Per-layer (h, c), each H x batch.
struct HiddenState {
  std::vector<Eigen::MatrixXd> h;
  std::vector<Eigen::MatrixXd> c;

  static HiddenState Zero(const ModelHyper& hyper, int batch = 1);
  bool AllFinite() const;
};

// Softmax output with its log, kept separately so log-probabilities stay
// finite where probabilities underflow.
struct SoftmaxDistribution {
  Eigen::VectorXd p;
  Eigen::VectorXd log_p;

  // Builds from explicit probabilities (which must be positive).
  static SoftmaxDistribution FromProbabilities(const Eigen::VectorXd& p);
  std::size_t size() const { return static_cast<std::size_t>(p.size()); }
};

// Max-subtracted exponential normalization.
SoftmaxDistribution Softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);

// Uniform [-0.1, 0.1] embeddings and projection; uniform [-1/sqrt(H),
// 1/sqrt(H)] recurrent weights; zero biases. Bit-identical for equal inputs.
ModelParams InitParams(const ModelHyper& hyper, std::size_t vocab_size,
                       std::uint64_t seed);

// Overwrites embedding rows from a `token v1 ... vd` text file for tokens in
// `vocab`. Returns the number of rows replaced.
std::size_t OverlayEmbeddings(const std::filesystem::path& path,
                              const Vocabulary& vocab, ModelParams& params);

// Time-major batch: the id for step t of stream b is ids[t * batch + b].
struct BatchInput {
  int steps = 0;
  int batch = 0;
  std::vector<TokenId> ids;

  TokenId at(int t, int b) const {
    return ids[static_cast<std::size_t>(t) * batch + b];
  }
};

// Dropout applied to the input of every LSTM layer and to the top layer
// output. A null rng means evaluation mode (no dropout).
struct DropoutSampler {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;

  bool active() const { return rng != nullptr && rate > 0.0; }
};

// Activations kept for backpropagation.
class ForwardTrace {
 public:
  // Logits per step, |V| x batch.
  const std::vector<Eigen::MatrixXd>& logits() const { return logits_; }
  int steps() const { return static_cast<int>(logits_.size()); }
  int batch() const { return input_.batch; }

 private:
  friend ForwardTrace Forward(const ModelParams&, const BatchInput&,
                              HiddenState&, const DropoutSampler&);
  friend ModelParams Backward(const ModelParams&, const ForwardTrace&,
                              std::span<const Eigen::MatrixXd>);

  struct LayerStep {
    Eigen::MatrixXd x;       // layer input after dropout
    Eigen::MatrixXd mask;    // scaled keep mask, empty without dropout
    Eigen::MatrixXd h_prev;
    Eigen::MatrixXd c_prev;
    Eigen::MatrixXd gates;   // post-activation i, f, g, o
    Eigen::MatrixXd tanh_c;
  };

  BatchInput input_;
  std::vector<std::vector<LayerStep>> layers_;  // [layer][step]
  std::vector<Eigen::MatrixXd> top_;            // top output after dropout
  std::vector<Eigen::MatrixXd> top_mask_;
  std::vector<Eigen::MatrixXd> logits_;
};

// Runs the stacked LSTM over `input`, advancing `state` in place. Throws
// ValidationError for ids outside the vocabulary or a mis-shaped state.
ForwardTrace Forward(const ModelParams& params, const BatchInput& input,
                     HiddenState& state, const DropoutSampler& dropout = {});

// Exact gradients of sum_t <dlogits[t], logits[t]> with respect to every
// parameter. The incoming state is treated as a constant (truncated BPTT).
ModelParams Backward(const ModelParams& params, const ForwardTrace& trace,
                     std::span<const Eigen::MatrixXd> dlogits);

// Single-stream convenience: returns a steps x |V| logit matrix.
Eigen::MatrixXd ForwardSequence(const ModelParams& params,
                                std::span<const TokenId> ids,
                                HiddenState& state,
                                const DropoutSampler& dropout = {});

// Softmax at the last position after reading `seed_ids` from a zero state in
// evaluation mode. Throws ValidationError on an empty seed.
SoftmaxDistribution NextTokenDistribution(const ModelParams& params,
                                          std::span<const TokenId> seed_ids);

// Hyperparameters implied by the tensor shapes (seq_len and dropout keep
// their defaults).
ModelHyper InferHyper(const ModelParams& params);

}  // namespace fairlm

#endif  // FAIRLM_LSTM_H_
