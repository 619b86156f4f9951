#include "fairlm/log.h"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>

namespace fairlm {

void ConfigureLoggingFromEnv() {
  static bool installed = false;
  if (!installed) {
    auto logger = spdlog::stderr_logger_mt("fairlm");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    installed = true;
  }
  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("FAIRLM_LOG"); env != nullptr && *env) {
    level = spdlog::level::from_str(env);
  }
  spdlog::set_level(level);
}

}  // namespace fairlm
