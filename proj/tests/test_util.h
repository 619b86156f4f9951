#ifndef FAIRLM_TESTS_TEST_UTIL_H_
#define FAIRLM_TESTS_TEST_UTIL_H_

#include <filesystem>
#include <string>
#include <vector>

namespace fairlm::testing {

// Fresh empty directory under the system temp dir.
std::filesystem::path MakeTempDir(const std::string& prefix);

void WriteText(const std::filesystem::path& path, const std::string& text);
std::string ReadText(const std::filesystem::path& path);

// Runs the fairlm binary with `args` and returns its exit code. Stderr is
// captured into `err` when given, discarded otherwise.
int RunTool(const std::vector<std::string>& args, std::string* err = nullptr);

}  // namespace fairlm::testing

#endif  // FAIRLM_TESTS_TEST_UTIL_H_
