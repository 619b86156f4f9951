#ifndef FAIRLM_CORPUS_H_
#define FAIRLM_CORPUS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace fairlm {

using TokenId = std::int32_t;

// Lowercases ASCII letters, splits on whitespace and emits every ASCII
// punctuation character as its own token. Bytes >= 0x80 are word characters,
// so UTF-8 sequences stay intact.
std::vector<std::string> Tokenize(std::string_view text);

// Space-joins tokens. Tokenize(Detokenize(Tokenize(s))) == Tokenize(s).
std::string Detokenize(std::span<const std::string> tokens);

// Bidirectional token <-> id map. Ids 0 and 1 are always the reserved
// unknown and end-of-sequence tokens.
class Vocabulary {
 public:
  static constexpr TokenId kUnkId = 0;
  static constexpr TokenId kEosId = 1;
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::string_view kEosToken = "<eos>";

  // Reserved tokens only.
  Vocabulary();

  // `tokens` must begin with the two reserved tokens, in order. Throws
  // ValidationError on duplicates, empty tokens or tokens with whitespace.
  static Vocabulary FromTokens(std::vector<std::string> tokens,
                               int min_count = 1);

  // Unknown strings resolve to kUnkId.
  TokenId Lookup(std::string_view token) const;
  bool Contains(std::string_view token) const;
  const std::string& Token(TokenId id) const;

  std::vector<TokenId> Encode(std::span<const std::string> tokens) const;
  std::vector<std::string> Decode(std::span<const TokenId> ids) const;

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  TokenId unk_id() const { return kUnkId; }
  TokenId eos_id() const { return kEosId; }
  int min_count() const { return min_count_; }

  // One token per line; line number is the id.
  void Save(const std::filesystem::path& path) const;
  static Vocabulary Load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.min_count_ == b.min_count_;
  }

 private:
  Vocabulary(std::vector<std::string> tokens, int min_count, int);

  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const {
      return std::hash<std::string_view>{}(s);
    }
  };

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId, StringHash, std::equal_to<>> ids_;
  int min_count_ = 1;
};

// Tokens seen at least `min_count` times get ids, ordered by descending
// frequency with lexicographic tie-break. `max_size` (0 = unlimited) caps the
// total vocabulary size including the reserved tokens.
Vocabulary BuildVocab(std::span<const std::string> tokens, int min_count,
                      std::size_t max_size = 0);

enum class StreamSource { kRaw, kAugmented, kGenerated };

std::string_view ToString(StreamSource source);

struct TokenStream {
  std::vector<TokenId> ids;
  StreamSource source = StreamSource::kRaw;
};

struct GenderPair {
  TokenId female;
  TokenId male;
};

// Gender-pair dictionary restricted to a vocabulary.
class GenderLexicon {
 public:
  enum class Role : std::uint8_t { kNeutral, kFemale, kMale, kSwapOnly,
                                   kReserved };

  struct Entry {
    std::string from;
    std::string to;
    int line = 0;
  };

  // `pairs` are (female, male) surface forms; `swap_only` are one-directional
  // extra swap entries. Entries with a word missing from `vocab` are dropped
  // and listed in dropped().
  static GenderLexicon Build(const Vocabulary& vocab,
                             std::span<const Entry> pairs,
                             std::span<const Entry> swap_only);

  const std::vector<GenderPair>& pairs() const { return pairs_; }
  std::size_t size() const { return pairs_.size(); }
  std::size_t vocab_size() const { return roles_.size(); }

  Role role(TokenId id) const { return roles_.at(static_cast<std::size_t>(id)); }
  bool IsNeutral(TokenId id) const { return role(id) == Role::kNeutral; }
  bool IsFemale(TokenId id) const { return role(id) == Role::kFemale; }
  bool IsMale(TokenId id) const { return role(id) == Role::kMale; }
  bool IsGendered(TokenId id) const {
    const Role r = role(id);
    return r == Role::kFemale || r == Role::kMale || r == Role::kSwapOnly;
  }

  // Identity outside the swap domain.
  TokenId Swap(TokenId id) const;
  bool InSwapDomain(TokenId id) const { return swap_.contains(id); }
  const std::unordered_map<TokenId, TokenId>& swap_map() const { return swap_; }

  // Sorted ids of all gender-neutral vocabulary words.
  const std::vector<TokenId>& neutral() const { return neutral_; }

  // Human-readable description of each dictionary entry that was dropped.
  const std::vector<std::string>& dropped() const { return dropped_; }

 private:
  std::vector<GenderPair> pairs_;
  std::unordered_map<TokenId, TokenId> swap_;
  std::vector<Role> roles_;
  std::vector<TokenId> neutral_;
  std::vector<std::string> dropped_;
};

// Reads a `female<TAB>male` dictionary. `#` lines are comments; a line
// `[swap-only]` starts the one-directional `from<TAB>to` section.
GenderLexicon LoadGenderPairs(const std::filesystem::path& pair_file,
                              const Vocabulary& vocab);

// Appends a copy of `stream` with every id in the swap domain replaced by its
// partner. The result is exactly twice as long.
TokenStream CdaAugment(const TokenStream& stream, const GenderLexicon& lexicon);

// The original and the swapped copy of a CdaAugment result as two documents,
// so no co-occurrence window spans the seam. Throws ValidationError unless
// `augmented` is an augmented stream of even length.
std::vector<TokenStream> SplitAugmented(const TokenStream& augmented);

// Tokenized non-empty lines of a UTF-8 text file.
std::vector<std::vector<std::string>> ReadTokenizedLines(
    const std::filesystem::path& path);

// Concatenates the lines into one stream, each line terminated by eos.
TokenStream EncodeLines(std::span<const std::vector<std::string>> lines,
                        const Vocabulary& vocab,
                        StreamSource source = StreamSource::kRaw);

// One stream per line, no eos.
std::vector<TokenStream> EncodeDocuments(
    std::span<const std::vector<std::string>> lines, const Vocabulary& vocab,
    StreamSource source = StreamSource::kRaw);

// Inverse of EncodeLines: splits at eos and space-joins each line.
std::string DecodeLines(const TokenStream& stream, const Vocabulary& vocab);

// Reads `#`-commented, one-token-per-line word lists (occupation files).
std::vector<std::string> ReadWordList(const std::filesystem::path& path);

}  // namespace fairlm

#endif  // FAIRLM_CORPUS_H_
