#ifndef FAIRLM_CLI_H_
#define FAIRLM_CLI_H_

#include <string>
#include <vector>

namespace fairlm {

inline constexpr const char* kToolVersion = "0.1.0";

// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 1,
  kExitMissingInput = 2,
  kExitCorruptArtifact = 3,
  kExitUndefinedMetric = 4,
};

// Entry point of the `fairlm` tool. `args` excludes the program name.
// Subcommands: augment, train, generate, evaluate, compare.
int RunCli(const std::vector<std::string>& args);

// Lowercase hex SHA-256 of a file's bytes.
std::string FileSha256(const std::string& path);

}  // namespace fairlm

#endif  // FAIRLM_CLI_H_
