#include "fairlm/corpus.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "fairlm/errors.h"
#include "fairlm/log.h"

namespace fairlm {
namespace {

bool IsAsciiSpace(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

bool IsAsciiPunct(unsigned char c) {
  return c < 0x80 && std::ispunct(c) != 0;
}

std::string Trim(std::string_view s) {
  std::size_t begin = 0;
  std::size_t end = s.size();
  while (begin < end && IsAsciiSpace(static_cast<unsigned char>(s[begin]))) {
    ++begin;
  }
  while (end > begin && IsAsciiSpace(static_cast<unsigned char>(s[end - 1]))) {
    --end;
  }
  return std::string(s.substr(begin, end - begin));
}

std::string AsciiLower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

void CheckTokenString(const std::string& token) {
  if (token.empty()) throw ValidationError("vocabulary token is empty");
  for (char c : token) {
    if (IsAsciiSpace(static_cast<unsigned char>(c))) {
      throw ValidationError("vocabulary token contains whitespace: '" +
                            token + "'");
    }
  }
}

std::ifstream OpenInput(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError(path.string());
  return in;
}

}  // namespace

std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&]() {
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (IsAsciiSpace(c)) {
      flush();
    } else if (IsAsciiPunct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else if (c >= 'A' && c <= 'Z') {
      current.push_back(static_cast<char>(c - 'A' + 'a'));
    } else {
      current.push_back(ch);
    }
  }
  flush();
  return tokens;
}

std::string Detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

Vocabulary::Vocabulary()
    : Vocabulary(FromTokens({std::string(kUnkToken), std::string(kEosToken)})) {}

Vocabulary Vocabulary::FromTokens(std::vector<std::string> tokens,
                                  int min_count) {
  if (tokens.size() < 2 || tokens[0] != kUnkToken || tokens[1] != kEosToken) {
    throw ValidationError("vocabulary must start with " +
                          std::string(kUnkToken) + " and " +
                          std::string(kEosToken));
  }
  if (min_count < 1) throw ValidationError("min_count must be >= 1");
  Vocabulary vocab(std::move(tokens), min_count, 0);
  return vocab;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, int min_count, int)
    : tokens_(std::move(tokens)), min_count_(min_count) {
  ids_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    CheckTokenString(tokens_[i]);
    if (!ids_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw ValidationError("duplicate vocabulary token: '" + tokens_[i] + "'");
    }
  }
}

TokenId Vocabulary::Lookup(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocabulary::Contains(std::string_view token) const {
  return ids_.find(token) != ids_.end();
}

const std::string& Vocabulary::Token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ValidationError("token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::Encode(
    std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(Lookup(t));
  return ids;
}

std::vector<std::string> Vocabulary::Decode(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(Token(id));
  return out;
}

void Vocabulary::Save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write vocabulary file: " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::Load(const std::filesystem::path& path) {
  std::ifstream in = OpenInput(path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return FromTokens(std::move(tokens));
}

Vocabulary BuildVocab(std::span<const std::string> tokens, int min_count,
                      std::size_t max_size) {
  if (min_count < 1) throw ValidationError("min_count must be >= 1");
  std::unordered_map<std::string_view, long long> counts;
  for (const auto& t : tokens) {
    if (t.empty() || t == Vocabulary::kUnkToken ||
        t == Vocabulary::kEosToken) {
      continue;
    }
    ++counts[t];
  }
  std::vector<std::pair<std::string_view, long long>> kept;
  for (const auto& [token, count] : counts) {
    if (count >= min_count) kept.emplace_back(token, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> ordered{std::string(Vocabulary::kUnkToken),
                                   std::string(Vocabulary::kEosToken)};
  for (const auto& [token, count] : kept) {
    if (max_size > 0 && ordered.size() >= max_size) break;
    ordered.emplace_back(token);
  }
  return Vocabulary::FromTokens(std::move(ordered), min_count);
}

std::string_view ToString(StreamSource source) {
  switch (source) {
    case StreamSource::kRaw:
      return "raw";
    case StreamSource::kAugmented:
      return "augmented";
    case StreamSource::kGenerated:
      return "generated";
  }
  return "unknown";
}

GenderLexicon GenderLexicon::Build(const Vocabulary& vocab,
                                   std::span<const Entry> pairs,
                                   std::span<const Entry> swap_only) {
  GenderLexicon lex;
  lex.roles_.assign(vocab.size(), Role::kNeutral);
  lex.roles_[Vocabulary::kUnkId] = Role::kReserved;
  lex.roles_[Vocabulary::kEosId] = Role::kReserved;

  // Duplicates are checked on surface forms, before vocabulary filtering, so
  // a dictionary is either valid or not independent of the corpus.
  std::unordered_map<std::string, int> seen;
  auto claim = [&](const std::string& word, int line) {
    auto [it, inserted] = seen.emplace(word, line);
    if (!inserted) {
      throw ValidationError("gender pair file line " + std::to_string(line) +
                            ": '" + word + "' already appears on line " +
                            std::to_string(it->second));
    }
  };
  for (const auto& e : pairs) {
    if (e.from == e.to) {
      throw ValidationError("gender pair file line " + std::to_string(e.line) +
                            ": word paired with itself: '" + e.from + "'");
    }
    claim(e.from, e.line);
    claim(e.to, e.line);
  }

  for (const auto& e : pairs) {
    if (!vocab.Contains(e.from) || !vocab.Contains(e.to)) {
      lex.dropped_.push_back(e.from + "\t" + e.to);
      continue;
    }
    const TokenId f = vocab.Lookup(e.from);
    const TokenId m = vocab.Lookup(e.to);
    if (lex.roles_[f] == Role::kReserved || lex.roles_[m] == Role::kReserved) {
      throw ValidationError("gender pair file line " + std::to_string(e.line) +
                            ": reserved token in pair");
    }
    lex.pairs_.push_back({f, m});
    lex.roles_[f] = Role::kFemale;
    lex.roles_[m] = Role::kMale;
    lex.swap_[f] = m;
    lex.swap_[m] = f;
  }

  for (const auto& e : swap_only) {
    if (seen.contains(e.from)) {
      throw ValidationError("gender pair file line " + std::to_string(e.line) +
                            ": swap-only source '" + e.from +
                            "' already has a mapping (line " +
                            std::to_string(seen[e.from]) + ")");
    }
    seen.emplace(e.from, e.line);
    if (e.from == e.to) {
      throw ValidationError("gender pair file line " + std::to_string(e.line) +
                            ": swap-only entry maps a word to itself");
    }
    if (!vocab.Contains(e.from) || !vocab.Contains(e.to)) {
      lex.dropped_.push_back(e.from + "\t" + e.to + " (swap-only)");
      continue;
    }
    const TokenId from = vocab.Lookup(e.from);
    const TokenId to = vocab.Lookup(e.to);
    lex.swap_[from] = to;
    if (!lex.swap_.contains(to)) lex.swap_[to] = from;
    for (TokenId id : {from, to}) {
      if (lex.roles_[id] == Role::kNeutral) lex.roles_[id] = Role::kSwapOnly;
    }
    if (lex.Swap(lex.Swap(from)) != from) {
      throw ValidationError("gender pair file line " + std::to_string(e.line) +
                            ": swap-only entry '" + e.from + "' -> '" + e.to +
                            "' breaks swap symmetry");
    }
  }

  for (std::size_t id = 0; id < lex.roles_.size(); ++id) {
    if (lex.roles_[id] == Role::kNeutral) {
      lex.neutral_.push_back(static_cast<TokenId>(id));
    }
  }
  return lex;
}

TokenId GenderLexicon::Swap(TokenId id) const {
  auto it = swap_.find(id);
  return it == swap_.end() ? id : it->second;
}

GenderLexicon LoadGenderPairs(const std::filesystem::path& pair_file,
                              const Vocabulary& vocab) {
  std::ifstream in = OpenInput(pair_file);
  std::vector<GenderLexicon::Entry> pairs;
  std::vector<GenderLexicon::Entry> swap_only;
  bool in_swap_section = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string trimmed = Trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    if (trimmed == "[swap-only]") {
      if (in_swap_section) {
        throw ValidationError("gender pair file line " +
                              std::to_string(line_no) +
                              ": repeated [swap-only] section");
      }
      in_swap_section = true;
      continue;
    }
    const auto tab = trimmed.find('\t');
    if (tab == std::string::npos ||
        trimmed.find('\t', tab + 1) != std::string::npos) {
      throw ValidationError("gender pair file line " + std::to_string(line_no) +
                            ": expected exactly two tab-separated fields");
    }
    GenderLexicon::Entry entry{AsciiLower(Trim(trimmed.substr(0, tab))),
                               AsciiLower(Trim(trimmed.substr(tab + 1))),
                               line_no};
    if (entry.from.empty() || entry.to.empty()) {
      throw ValidationError("gender pair file line " + std::to_string(line_no) +
                            ": empty field");
    }
    for (const auto& w : {entry.from, entry.to}) {
      if (w.find_first_of(" \t") != std::string::npos) {
        throw ValidationError("gender pair file line " +
                              std::to_string(line_no) +
                              ": multi-token entry '" + w + "'");
      }
    }
    (in_swap_section ? swap_only : pairs).push_back(std::move(entry));
  }
  GenderLexicon lex = GenderLexicon::Build(vocab, pairs, swap_only);
  for (const auto& d : lex.dropped()) {
    spdlog::warn("gender pair dropped (not in vocabulary): {}", d);
  }
  spdlog::info("loaded {} gender pairs from {} ({} dropped)", lex.size(),
               pair_file.string(), lex.dropped().size());
  return lex;
}

TokenStream CdaAugment(const TokenStream& stream,
                       const GenderLexicon& lexicon) {
  TokenStream out;
  out.source = StreamSource::kAugmented;
  out.ids.reserve(stream.ids.size() * 2);
  out.ids = stream.ids;
  for (TokenId id : stream.ids) out.ids.push_back(lexicon.Swap(id));
  return out;
}

std::vector<TokenStream> SplitAugmented(const TokenStream& augmented) {
  if (augmented.source != StreamSource::kAugmented || augmented.ids.size() % 2 != 0) {
    throw ValidationError("not an augmented stream");
  }
  const auto mid = augmented.ids.begin() + augmented.ids.size() / 2;
  return {TokenStream{{augmented.ids.begin(), mid}, StreamSource::kAugmented},
          TokenStream{{mid, augmented.ids.end()}, StreamSource::kAugmented}};
}

std::vector<std::vector<std::string>> ReadTokenizedLines(
    const std::filesystem::path& path) {
  std::ifstream in = OpenInput(path);
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) {
    auto tokens = Tokenize(line);
    if (!tokens.empty()) lines.push_back(std::move(tokens));
  }
  return lines;
}

TokenStream EncodeLines(std::span<const std::vector<std::string>> lines,
                        const Vocabulary& vocab, StreamSource source) {
  TokenStream stream;
  stream.source = source;
  for (const auto& line : lines) {
    for (const auto& t : line) stream.ids.push_back(vocab.Lookup(t));
    stream.ids.push_back(vocab.eos_id());
  }
  return stream;
}

std::vector<TokenStream> EncodeDocuments(
    std::span<const std::vector<std::string>> lines, const Vocabulary& vocab,
    StreamSource source) {
  std::vector<TokenStream> docs;
  docs.reserve(lines.size());
  for (const auto& line : lines) {
    docs.push_back({vocab.Encode(line), source});
  }
  return docs;
}

std::string DecodeLines(const TokenStream& stream, const Vocabulary& vocab) {
  std::string out;
  bool line_open = false;
  for (TokenId id : stream.ids) {
    if (id == vocab.eos_id()) {
      out.push_back('\n');
      line_open = false;
      continue;
    }
    if (line_open) out.push_back(' ');
    out += vocab.Token(id);
    line_open = true;
  }
  if (line_open) out.push_back('\n');
  return out;
}

std::vector<std::string> ReadWordList(const std::filesystem::path& path) {
  std::ifstream in = OpenInput(path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    const std::string trimmed = Trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    words.push_back(AsciiLower(trimmed));
  }
  return words;
}

}  // namespace fairlm
