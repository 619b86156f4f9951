#include "fairlm/generation.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fairlm/errors.h"

namespace fairlm {

void GenerationConfig::Validate() const {
  std::string problems;
  auto complain = [&](const char* msg) {
    problems += problems.empty() ? msg : std::string("; ") + msg;
  };
  if (num_docs < 1) complain("num_docs must be >= 1");
  if (doc_len < 1) complain("doc_len must be >= 1");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    complain("temperature must be a finite value >= 0");
  }
  if (!problems.empty()) throw ValidationError(problems);
}

TokenId SampleToken(const Eigen::Ref<const Eigen::VectorXd>& logits,
                    double temperature, std::span<const TokenId> excluded,
                    std::mt19937_64& rng) {
  const auto n = static_cast<TokenId>(logits.size());
  std::vector<bool> allowed(static_cast<std::size_t>(n), true);
  for (TokenId id : excluded) {
    if (id >= 0 && id < n) allowed[static_cast<std::size_t>(id)] = false;
  }
  double max = -std::numeric_limits<double>::infinity();
  TokenId argmax = -1;
  for (TokenId i = 0; i < n; ++i) {
    if (allowed[i] && logits[i] > max) {
      max = logits[i];
      argmax = i;
    }
  }
  if (argmax < 0) throw ValidationError("no token is eligible for sampling");
  if (temperature == 0.0) return argmax;

  std::vector<double> weights(static_cast<std::size_t>(n), 0.0);
  double total = 0.0;
  for (TokenId i = 0; i < n; ++i) {
    if (!allowed[i]) continue;
    weights[i] = std::exp((logits[i] - max) / temperature);
    total += weights[i];
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double u = unit(rng) * total;
  TokenId last = argmax;
  for (TokenId i = 0; i < n; ++i) {
    if (weights[i] <= 0.0) continue;
    last = i;
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return last;
}

std::vector<TokenStream> Generate(const ModelParams& params,
                                  const Vocabulary& vocab,
                                  const GenerationConfig& config) {
  config.Validate();
  if (params.vocab_size() != vocab.size()) {
    throw ValidationError("model and vocabulary sizes differ");
  }
  const ModelHyper hyper = InferHyper(params);
  const TokenId excluded[] = {vocab.unk_id(), vocab.eos_id()};
  std::vector<TokenStream> docs(static_cast<std::size_t>(config.num_docs));
  for (int d = 0; d < config.num_docs; ++d) {
    std::mt19937_64 rng(config.seed + static_cast<std::uint64_t>(d));
    HiddenState state = HiddenState::Zero(hyper, 1);
    TokenStream& doc = docs[static_cast<std::size_t>(d)];
    doc.source = StreamSource::kGenerated;
    doc.ids.reserve(static_cast<std::size_t>(config.doc_len));
    TokenId current = vocab.eos_id();
    for (int t = 0; t < config.doc_len; ++t) {
      const TokenId input[] = {current};
      const Eigen::MatrixXd logits = ForwardSequence(params, input, state);
      current = SampleToken(logits.row(0).transpose(), config.temperature,
                            excluded, rng);
      doc.ids.push_back(current);
    }
  }
  return docs;
}

std::string FormatDocuments(std::span<const TokenStream> docs,
                            const Vocabulary& vocab) {
  std::string out;
  for (const auto& doc : docs) {
    for (std::size_t i = 0; i < doc.ids.size(); ++i) {
      if (i > 0) out.push_back(' ');
      out += vocab.Token(doc.ids[i]);
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace fairlm
