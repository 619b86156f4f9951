#include "fairlm/checkpoint.h"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "fairlm/errors.h"

namespace fairlm {
namespace {

constexpr std::array<char, 4> kMagic = {'F', 'L', 'M', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void U32(std::uint32_t v) { Raw(&v, sizeof v); }
  void F64(double v) { Raw(&v, sizeof v); }
  void Bytes(const std::string& s) { Raw(s.data(), s.size()); }
  const std::string& data() const { return buf_; }

 private:
  void Raw(const void* p, std::size_t n) {
    buf_.append(static_cast<const char*>(p), n);
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  std::uint32_t U32() {
    std::uint32_t v;
    Raw(&v, sizeof v);
    return v;
  }
  double F64() {
    double v;
    Raw(&v, sizeof v);
    return v;
  }
  std::string Bytes(std::size_t n) {
    Need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void Need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Kind::kTruncated,
                            "checkpoint truncated at byte " +
                                std::to_string(pos_));
    }
  }
  void Raw(void* p, std::size_t n) {
    Need(n);
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }

  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

void SaveCheckpoint(const ModelParams& params, const ModelHyper& hyper,
                    const Vocabulary& vocab,
                    const std::filesystem::path& path) {
  try {
    params.CheckShape(hyper, vocab.size());
  } catch (const ValidationError& e) {
    throw CheckpointError(CheckpointError::Kind::kShape, e.what());
  }
  Writer w;
  w.Bytes(std::string(kMagic.begin(), kMagic.end()));
  w.U32(static_cast<std::uint32_t>(vocab.size()));
  w.U32(static_cast<std::uint32_t>(hyper.embed_dim));
  w.U32(static_cast<std::uint32_t>(hyper.hidden_units));
  w.U32(static_cast<std::uint32_t>(hyper.num_layers));
  params.ForEachTensor([&](std::string_view, const auto& t) {
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) w.F64(t(r, c));
    }
  });
  w.U32(static_cast<std::uint32_t>(vocab.size()));
  for (const auto& token : vocab.tokens()) {
    w.U32(static_cast<std::uint32_t>(token.size()));
    w.Bytes(token);
  }
  w.U32(static_cast<std::uint32_t>(vocab.min_count()));
  w.U32(static_cast<std::uint32_t>(hyper.seq_len));
  w.F64(hyper.dropout);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw CheckpointError(CheckpointError::Kind::kIo,
                          "cannot write checkpoint: " + path.string());
  }
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out) {
    throw CheckpointError(CheckpointError::Kind::kIo,
                          "write failed: " + path.string());
  }
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError(path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));

  if (r.remaining() < kMagic.size() ||
      r.Bytes(kMagic.size()) != std::string(kMagic.begin(), kMagic.end())) {
    throw CheckpointError(CheckpointError::Kind::kVersion,
                          "not a version-1 checkpoint (bad magic): " +
                              path.string());
  }
  const std::uint32_t vocab_size = r.U32();
  ModelHyper hyper;
  hyper.embed_dim = static_cast<int>(r.U32());
  hyper.hidden_units = static_cast<int>(r.U32());
  hyper.num_layers = static_cast<int>(r.U32());

  constexpr std::uint32_t kMaxDim = 1u << 24;
  if (vocab_size < 2 || vocab_size > kMaxDim || hyper.embed_dim < 1 ||
      hyper.embed_dim > static_cast<int>(kMaxDim) || hyper.hidden_units < 1 ||
      hyper.hidden_units > static_cast<int>(kMaxDim) || hyper.num_layers < 1 ||
      hyper.num_layers > 1024) {
    throw CheckpointError(CheckpointError::Kind::kShape,
                          "checkpoint header has implausible dimensions");
  }

  // Tensor byte count is known from the header; a short file is truncated
  // rather than mis-shaped.
  const double v = vocab_size;
  const double e = hyper.embed_dim;
  const double h = hyper.hidden_units;
  const double tensor_values = v * e + 4 * h * (e + h + 1) +
                               (hyper.num_layers - 1) * 4 * h * (2 * h + 1) +
                               v * h + v;
  if (tensor_values * 8 > static_cast<double>(r.remaining())) {
    throw CheckpointError(CheckpointError::Kind::kTruncated,
                          "checkpoint truncated inside tensor data: " +
                              path.string());
  }

  ModelParams params = ModelParams::Zeros(hyper, vocab_size);
  params.ForEachTensor([&](std::string_view, auto& t) {
    for (Eigen::Index row = 0; row < t.rows(); ++row) {
      for (Eigen::Index col = 0; col < t.cols(); ++col) t(row, col) = r.F64();
    }
  });

  const std::uint32_t token_count = r.U32();
  if (token_count != vocab_size) {
    throw CheckpointError(CheckpointError::Kind::kShape,
                          "checkpoint vocabulary has " +
                              std::to_string(token_count) +
                              " tokens but tensors are sized for " +
                              std::to_string(vocab_size));
  }
  std::vector<std::string> tokens;
  tokens.reserve(token_count);
  for (std::uint32_t i = 0; i < token_count; ++i) {
    const std::uint32_t len = r.U32();
    tokens.push_back(r.Bytes(len));
  }
  const std::uint32_t min_count = r.U32();
  hyper.seq_len = static_cast<int>(r.U32());
  hyper.dropout = r.F64();

  Vocabulary vocab;
  try {
    vocab = Vocabulary::FromTokens(std::move(tokens),
                                   static_cast<int>(min_count));
    hyper.Validate();
  } catch (const ValidationError& err) {
    throw CheckpointError(CheckpointError::Kind::kShape,
                          std::string("invalid checkpoint contents: ") +
                              err.what());
  }
  return {std::move(params), hyper, std::move(vocab)};
}

}  // namespace fairlm
