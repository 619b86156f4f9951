#include "fairlm/lstm.h"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "fairlm/errors.h"

namespace fairlm {
namespace {

Eigen::MatrixXd Sigmoid(const Eigen::MatrixXd& a) {
  return (1.0 + (-a.array()).exp()).inverse().matrix();
}

// Scaled keep mask: 0 with probability `rate`, else 1 / (1 - rate).
Eigen::MatrixXd SampleMask(Eigen::Index rows, Eigen::Index cols,
                           const DropoutSampler& dropout) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - dropout.rate);
  Eigen::MatrixXd mask(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      mask(r, c) = unit(*dropout.rng) < dropout.rate ? 0.0 : keep_scale;
    }
  }
  return mask;
}

template <typename T>
void FillUniform(T& tensor, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  // Row-major fill so the sequence of draws matches checkpoint order.
  for (Eigen::Index r = 0; r < tensor.rows(); ++r) {
    for (Eigen::Index c = 0; c < tensor.cols(); ++c) tensor(r, c) = dist(rng);
  }
}

}  // namespace

void ModelHyper::Validate() const {
  std::string problems;
  auto complain = [&](const std::string& msg) {
    if (!problems.empty()) problems += "; ";
    problems += msg;
  };
  if (embed_dim < 1) complain("embed_dim must be >= 1");
  if (hidden_units < 1) complain("hidden_units must be >= 1");
  if (num_layers < 1) complain("num_layers must be >= 1");
  if (seq_len < 1) complain("seq_len must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) complain("dropout must be in [0, 1)");
  if (!problems.empty()) throw ValidationError(problems);
}

ModelParams ModelParams::Zeros(const ModelHyper& hyper,
                               std::size_t vocab_size) {
  hyper.Validate();
  const auto v = static_cast<Eigen::Index>(vocab_size);
  const Eigen::Index h = hyper.hidden_units;
  ModelParams p;
  p.embedding = Eigen::MatrixXd::Zero(v, hyper.embed_dim);
  for (int l = 0; l < hyper.num_layers; ++l) {
    const Eigen::Index in = l == 0 ? hyper.embed_dim : h;
    p.layers.push_back({Eigen::MatrixXd::Zero(4 * h, in),
                        Eigen::MatrixXd::Zero(4 * h, h),
                        Eigen::VectorXd::Zero(4 * h)});
  }
  p.out_weight = Eigen::MatrixXd::Zero(v, h);
  p.out_bias = Eigen::VectorXd::Zero(v);
  return p;
}

void ModelParams::CheckShape(const ModelHyper& hyper,
                             std::size_t vocab_size) const {
  const ModelParams expected = Zeros(hyper, vocab_size);
  if (layers.size() != expected.layers.size()) {
    throw ValidationError("parameter shape mismatch: expected " +
                          std::to_string(expected.layers.size()) +
                          " layers, got " + std::to_string(layers.size()));
  }
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  expected.ForEachTensor([&](std::string_view, const auto& t) {
    shapes.emplace_back(t.rows(), t.cols());
  });
  std::size_t i = 0;
  ForEachTensor([&](std::string_view name, const auto& t) {
    const auto [rows, cols] = shapes[i++];
    if (t.rows() != rows || t.cols() != cols) {
      throw ValidationError("parameter shape mismatch for " +
                            std::string(name) + ": expected " +
                            std::to_string(rows) + "x" + std::to_string(cols) +
                            ", got " + std::to_string(t.rows()) + "x" +
                            std::to_string(t.cols()));
    }
  });
}

bool ModelParams::AllFinite() const {
  bool finite = true;
  ForEachTensor([&](std::string_view, const auto& t) {
    finite = finite && t.allFinite();
  });
  return finite;
}

double ModelParams::SquaredNorm() const {
  double total = 0.0;
  ForEachTensor(
      [&](std::string_view, const auto& t) { total += t.squaredNorm(); });
  return total;
}

void ModelParams::Scale(double factor) {
  ForEachTensor([&](std::string_view, auto& t) { t *= factor; });
}

void ModelParams::AddScaled(const ModelParams& other, double factor) {
  std::vector<const double*> sources;
  other.ForEachTensor(
      [&](std::string_view, const auto& t) { sources.push_back(t.data()); });
  std::size_t i = 0;
  ForEachTensor([&](std::string_view, auto& t) {
    const double* src = sources[i++];
    for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] += factor * src[k];
  });
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  std::vector<const Eigen::MatrixXd*> mats;
  std::vector<const Eigen::VectorXd*> vecs;
  b.ForEachTensor([&](std::string_view, const auto& t) {
    if constexpr (std::is_same_v<std::decay_t<decltype(t)>, Eigen::MatrixXd>) {
      mats.push_back(&t);
    } else {
      vecs.push_back(&t);
    }
  });
  bool equal = true;
  std::size_t mi = 0;
  std::size_t vi = 0;
  a.ForEachTensor([&](std::string_view, const auto& t) {
    if constexpr (std::is_same_v<std::decay_t<decltype(t)>, Eigen::MatrixXd>) {
      const auto& o = *mats[mi++];
      equal = equal && t.rows() == o.rows() && t.cols() == o.cols() && t == o;
    } else {
      const auto& o = *vecs[vi++];
      equal = equal && t.size() == o.size() && t == o;
    }
  });
  return equal;
}

HiddenState HiddenState::Zero(const ModelHyper& hyper, int batch) {
  HiddenState s;
  for (int l = 0; l < hyper.num_layers; ++l) {
    s.h.push_back(Eigen::MatrixXd::Zero(hyper.hidden_units, batch));
    s.c.push_back(Eigen::MatrixXd::Zero(hyper.hidden_units, batch));
  }
  return s;
}

bool HiddenState::AllFinite() const {
  for (std::size_t l = 0; l < h.size(); ++l) {
    if (!h[l].allFinite() || !c[l].allFinite()) return false;
  }
  return true;
}

SoftmaxDistribution SoftmaxDistribution::FromProbabilities(
    const Eigen::VectorXd& p) {
  return {p, p.array().log().matrix()};
}

SoftmaxDistribution Softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double max = logits.maxCoeff();
  const Eigen::ArrayXd shifted = logits.array() - max;
  const Eigen::ArrayXd e = shifted.exp();
  const double sum = e.sum();
  SoftmaxDistribution d;
  d.p = (e / sum).matrix();
  d.log_p = (shifted - std::log(sum)).matrix();
  return d;
}

ModelParams InitParams(const ModelHyper& hyper, std::size_t vocab_size,
                       std::uint64_t seed) {
  ModelParams p = ModelParams::Zeros(hyper, vocab_size);
  std::mt19937_64 rng(seed);
  const double recurrent_bound = 1.0 / std::sqrt(hyper.hidden_units);
  FillUniform(p.embedding, 0.1, rng);
  for (auto& layer : p.layers) {
    FillUniform(layer.w_input, recurrent_bound, rng);
    FillUniform(layer.w_hidden, recurrent_bound, rng);
  }
  FillUniform(p.out_weight, 0.1, rng);
  return p;
}

std::size_t OverlayEmbeddings(const std::filesystem::path& path,
                              const Vocabulary& vocab, ModelParams& params) {
  std::ifstream in(path);
  if (!in) throw MissingInputError(path.string());
  const Eigen::Index dim = params.embedding.cols();
  std::size_t applied = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> values;
    std::string value;
    while (fields >> value) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(value, &used));
        if (used != value.size()) throw std::invalid_argument(value);
      } catch (const std::exception&) {
        throw ValidationError("embedding file line " + std::to_string(line_no) +
                              ": not a number: '" + value + "'");
      }
    }
    if (static_cast<Eigen::Index>(values.size()) != dim) {
      throw ValidationError(
          "embedding file line " + std::to_string(line_no) + ": expected " +
          std::to_string(dim) + " values, got " + std::to_string(values.size()));
    }
    if (!vocab.Contains(token)) continue;
    const TokenId id = vocab.Lookup(token);
    for (Eigen::Index k = 0; k < dim; ++k) params.embedding(id, k) = values[k];
    ++applied;
  }
  return applied;
}

ForwardTrace Forward(const ModelParams& params, const BatchInput& input,
                     HiddenState& state, const DropoutSampler& dropout) {
  const auto vocab = static_cast<TokenId>(params.vocab_size());
  const std::size_t num_layers = params.layers.size();
  if (input.ids.size() !=
      static_cast<std::size_t>(input.steps) * static_cast<std::size_t>(input.batch)) {
    throw ValidationError("batch input size does not match steps x batch");
  }
  for (TokenId id : input.ids) {
    if (id < 0 || id >= vocab) {
      throw ValidationError("token id " + std::to_string(id) +
                            " out of range for vocabulary of size " +
                            std::to_string(vocab));
    }
  }
  if (state.h.size() != num_layers || state.c.size() != num_layers) {
    throw ValidationError("hidden state has wrong number of layers");
  }
  for (std::size_t l = 0; l < num_layers; ++l) {
    const Eigen::Index h = params.layers[l].w_hidden.cols();
    if (state.h[l].rows() != h || state.h[l].cols() != input.batch ||
        state.c[l].rows() != h || state.c[l].cols() != input.batch) {
      throw ValidationError("hidden state shape does not match model/batch");
    }
  }

  ForwardTrace trace;
  trace.input_ = input;
  trace.layers_.assign(num_layers, {});
  const bool use_dropout = dropout.active();

  for (int t = 0; t < input.steps; ++t) {
    Eigen::MatrixXd x(params.embedding.cols(), input.batch);
    for (int b = 0; b < input.batch; ++b) {
      x.col(b) = params.embedding.row(input.at(t, b)).transpose();
    }
    for (std::size_t l = 0; l < num_layers; ++l) {
      const LstmLayer& layer = params.layers[l];
      const Eigen::Index h = layer.w_hidden.cols();
      ForwardTrace::LayerStep step;
      if (use_dropout) {
        step.mask = SampleMask(x.rows(), x.cols(), dropout);
        step.x = x.cwiseProduct(step.mask);
      } else {
        step.x = std::move(x);
      }
      step.h_prev = state.h[l];
      step.c_prev = state.c[l];
      Eigen::MatrixXd a = layer.w_input * step.x + layer.w_hidden * step.h_prev;
      a.colwise() += layer.bias;
      step.gates.resize(4 * h, input.batch);
      step.gates.topRows(2 * h) = Sigmoid(a.topRows(2 * h));
      step.gates.middleRows(2 * h, h) = a.middleRows(2 * h, h).array().tanh().matrix();
      step.gates.bottomRows(h) = Sigmoid(a.bottomRows(h));
      const auto i_gate = step.gates.topRows(h).array();
      const auto f_gate = step.gates.middleRows(h, h).array();
      const auto g_gate = step.gates.middleRows(2 * h, h).array();
      const auto o_gate = step.gates.bottomRows(h).array();
      state.c[l] = (f_gate * step.c_prev.array() + i_gate * g_gate).matrix();
      step.tanh_c = state.c[l].array().tanh().matrix();
      state.h[l] = (o_gate * step.tanh_c.array()).matrix();
      x = state.h[l];
      trace.layers_[l].push_back(std::move(step));
    }
    Eigen::MatrixXd top_mask;
    if (use_dropout) {
      top_mask = SampleMask(x.rows(), x.cols(), dropout);
      x = x.cwiseProduct(top_mask);
    }
    Eigen::MatrixXd logits = params.out_weight * x;
    logits.colwise() += params.out_bias;
    trace.top_.push_back(std::move(x));
    trace.top_mask_.push_back(std::move(top_mask));
    trace.logits_.push_back(std::move(logits));
  }
  return trace;
}

ModelParams Backward(const ModelParams& params, const ForwardTrace& trace,
                     std::span<const Eigen::MatrixXd> dlogits) {
  const int steps = trace.steps();
  const int batch = trace.batch();
  if (static_cast<int>(dlogits.size()) != steps) {
    throw ValidationError("dlogits length does not match forward steps");
  }
  const std::size_t num_layers = params.layers.size();
  ModelParams grad;
  grad.embedding = Eigen::MatrixXd::Zero(params.embedding.rows(),
                                         params.embedding.cols());
  for (const auto& layer : params.layers) {
    grad.layers.push_back(
        {Eigen::MatrixXd::Zero(layer.w_input.rows(), layer.w_input.cols()),
         Eigen::MatrixXd::Zero(layer.w_hidden.rows(), layer.w_hidden.cols()),
         Eigen::VectorXd::Zero(layer.bias.size())});
  }
  grad.out_weight = Eigen::MatrixXd::Zero(params.out_weight.rows(),
                                          params.out_weight.cols());
  grad.out_bias = Eigen::VectorXd::Zero(params.out_bias.size());

  // Gradient arriving at each layer's output from above, per step.
  std::vector<Eigen::MatrixXd> d_above(steps);
  for (int t = 0; t < steps; ++t) {
    grad.out_weight.noalias() += dlogits[t] * trace.top_[t].transpose();
    grad.out_bias += dlogits[t].rowwise().sum();
    d_above[t] = params.out_weight.transpose() * dlogits[t];
    if (trace.top_mask_[t].size() > 0) {
      d_above[t] = d_above[t].cwiseProduct(trace.top_mask_[t]);
    }
  }

  for (std::size_t li = num_layers; li-- > 0;) {
    const LstmLayer& layer = params.layers[li];
    LstmLayer& g = grad.layers[li];
    const Eigen::Index h = layer.w_hidden.cols();
    Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(h, batch);
    Eigen::MatrixXd dc_next = Eigen::MatrixXd::Zero(h, batch);
    Eigen::MatrixXd da(4 * h, batch);
    for (int t = steps; t-- > 0;) {
      const auto& step = trace.layers_[li][t];
      const auto i_gate = step.gates.topRows(h).array();
      const auto f_gate = step.gates.middleRows(h, h).array();
      const auto g_gate = step.gates.middleRows(2 * h, h).array();
      const auto o_gate = step.gates.bottomRows(h).array();
      const Eigen::ArrayXXd dh = (d_above[t] + dh_next).array();
      const Eigen::ArrayXXd tanh_c = step.tanh_c.array();
      const Eigen::ArrayXXd dc =
          dh * o_gate * (1.0 - tanh_c.square()) + dc_next.array();
      da.topRows(h) = (dc * g_gate * i_gate * (1.0 - i_gate)).matrix();
      da.middleRows(h, h) =
          (dc * step.c_prev.array() * f_gate * (1.0 - f_gate)).matrix();
      da.middleRows(2 * h, h) = (dc * i_gate * (1.0 - g_gate.square())).matrix();
      da.bottomRows(h) = (dh * tanh_c * o_gate * (1.0 - o_gate)).matrix();
      dc_next = (dc * f_gate).matrix();

      g.w_input.noalias() += da * step.x.transpose();
      g.w_hidden.noalias() += da * step.h_prev.transpose();
      g.bias += da.rowwise().sum();
      dh_next.noalias() = layer.w_hidden.transpose() * da;
      Eigen::MatrixXd dx = layer.w_input.transpose() * da;
      if (step.mask.size() > 0) dx = dx.cwiseProduct(step.mask);
      if (li > 0) {
        d_above[t] = std::move(dx);
      } else {
        for (int b = 0; b < batch; ++b) {
          grad.embedding.row(trace.input_.at(t, b)) += dx.col(b).transpose();
        }
      }
    }
  }
  return grad;
}

Eigen::MatrixXd ForwardSequence(const ModelParams& params,
                                std::span<const TokenId> ids,
                                HiddenState& state,
                                const DropoutSampler& dropout) {
  BatchInput input{static_cast<int>(ids.size()), 1,
                   std::vector<TokenId>(ids.begin(), ids.end())};
  const ForwardTrace trace = Forward(params, input, state, dropout);
  Eigen::MatrixXd out(input.steps, static_cast<Eigen::Index>(params.vocab_size()));
  for (int t = 0; t < input.steps; ++t) {
    out.row(t) = trace.logits()[t].col(0).transpose();
  }
  return out;
}

SoftmaxDistribution NextTokenDistribution(const ModelParams& params,
                                          std::span<const TokenId> seed_ids) {
  if (seed_ids.empty()) throw ValidationError("seed sequence is empty");
  HiddenState state = HiddenState::Zero(InferHyper(params), 1);
  const Eigen::MatrixXd logits = ForwardSequence(params, seed_ids, state);
  return Softmax(logits.row(logits.rows() - 1).transpose());
}

ModelHyper InferHyper(const ModelParams& params) {
  ModelHyper hyper;
  hyper.embed_dim = static_cast<int>(params.embedding.cols());
  hyper.num_layers = static_cast<int>(params.layers.size());
  hyper.hidden_units = static_cast<int>(params.out_weight.cols());
  return hyper;
}

}  // namespace fairlm
