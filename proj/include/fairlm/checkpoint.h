#ifndef FAIRLM_CHECKPOINT_H_
#define FAIRLM_CHECKPOINT_H_

#include <filesystem>

#include "fairlm/corpus.h"
#include "fairlm/lstm.h"

namespace fairlm {

struct Checkpoint {
  ModelParams params;
  ModelHyper hyper;
  Vocabulary vocab;
};

// Binary layout, all integers 32-bit little-endian unsigned, all reals 64-bit
// little-endian IEEE doubles:
//
//   "FLM1"
//   vocab_size, embed_dim, hidden_units, num_layers
//   tensors, row-major, in ModelParams::ForEachTensor order
//   token count, then per token: byte length, bytes
//   trailer: min_count, seq_len, dropout (double)
//
// Throws CheckpointError::kShape if params, hyper and vocab disagree.
void SaveCheckpoint(const ModelParams& params, const ModelHyper& hyper,
                    const Vocabulary& vocab, const std::filesystem::path& path);

// Throws CheckpointError with kind kVersion (magic mismatch), kTruncated
// (file ends early) or kShape (inconsistent sizes), or MissingInputError.
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace fairlm

#endif  // FAIRLM_CHECKPOINT_H_
