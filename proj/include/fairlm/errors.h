#ifndef FAIRLM_ERRORS_H_
#define FAIRLM_ERRORS_H_

#include <stdexcept>
#include <string>

namespace fairlm {

// Base of every error the library throws. The CLI maps each subclass to a
// distinct process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration, malformed input file contents, violated precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A required input path does not exist or cannot be opened.
class MissingInputError : public Error {
 public:
  explicit MissingInputError(const std::string& path)
      : Error("cannot open input file: " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// A metric whose defining ratio has an empty numerator or denominator.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

// Checkpoint decoding failures. Each kind is reported separately so callers
// can tell a foreign file from a damaged one.
class CheckpointError : public Error {
 public:
  enum class Kind { kVersion, kTruncated, kShape, kIo };
  CheckpointError(Kind kind, const std::string& what)
      : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace fairlm

#endif  // FAIRLM_ERRORS_H_
