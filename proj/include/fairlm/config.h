#ifndef FAIRLM_CONFIG_H_
#define FAIRLM_CONFIG_H_

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fairlm/generation.h"
#include "fairlm/lstm.h"
#include "fairlm/trainer.h"

namespace fairlm {

// Line-based `key = value` file. `#` starts a comment line.
class KeyValueFile {
 public:
  // Throws ValidationError naming the line for a line without '=' or a
  // repeated key.
  static KeyValueFile Parse(std::string_view text);
  static KeyValueFile Load(const std::filesystem::path& path);

  const std::map<std::string, std::string>& entries() const { return entries_; }
  bool Has(const std::string& key) const { return entries_.contains(key); }
  void Set(const std::string& key, const std::string& value) {
    entries_[key] = value;
  }
  // Canonical `key = value` text, keys sorted.
  std::string ToString() const;

 private:
  std::map<std::string, std::string> entries_;
};

// Everything `fairlm train` needs.
struct TrainJob {
  TrainConfig train;
  ModelHyper hyper;
  std::filesystem::path corpus;
  // Optional; without it the last valid_fraction of the corpus is held out.
  std::filesystem::path valid_corpus;
  std::filesystem::path pairs;
  // Occupation list; default REG target set.
  std::filesystem::path occupations;
  // REG targets: "occupations" or "neutral".
  std::string reg_targets = "occupations";
  std::filesystem::path embeddings;
  std::filesystem::path out;
  int min_count = 1;
  std::size_t max_vocab = 0;
  double valid_fraction = 0.05;
};

// Relative paths resolve against `base_dir`. Throws ValidationError listing
// every unknown key, unparsable value and out-of-range field at once.
TrainJob ParseTrainJob(const KeyValueFile& kv,
                       const std::filesystem::path& base_dir);

// Keys: num_docs, doc_len, temperature, seed.
GenerationConfig ParseGenerationConfig(const KeyValueFile& kv);

}  // namespace fairlm

#endif  // FAIRLM_CONFIG_H_
