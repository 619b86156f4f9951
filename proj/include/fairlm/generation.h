#ifndef FAIRLM_GENERATION_H_
#define FAIRLM_GENERATION_H_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fairlm/corpus.h"
#include "fairlm/lstm.h"

namespace fairlm {

struct GenerationConfig {
  int num_docs = 10000;
  int doc_len = 500;
  // 0 selects greedy (argmax) decoding.
  double temperature = 1.0;
  std::uint64_t seed = 1;

  void Validate() const;
};

// Draws one id from softmax(logits / temperature) restricted to ids not in
// `excluded`; temperature 0 returns the allowed argmax (lowest id on ties).
TokenId SampleToken(const Eigen::Ref<const Eigen::VectorXd>& logits,
                    double temperature, std::span<const TokenId> excluded,
                    std::mt19937_64& rng);

// Each document starts from a zero state fed the eos token and is sampled
// ancestrally for doc_len tokens; unk and eos are never emitted. Document i
// uses its own generator seeded with seed + i.
std::vector<TokenStream> Generate(const ModelParams& params,
                                  const Vocabulary& vocab,
                                  const GenerationConfig& config);

// One document per line, space-joined.
std::string FormatDocuments(std::span<const TokenStream> docs,
                            const Vocabulary& vocab);

}  // namespace fairlm

#endif  // FAIRLM_GENERATION_H_
