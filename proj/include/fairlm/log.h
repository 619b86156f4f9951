#ifndef FAIRLM_LOG_H_
#define FAIRLM_LOG_H_

#include <spdlog/spdlog.h>

namespace fairlm {

// Applies the FAIRLM_LOG environment variable (trace, debug, info, warn,
// error, off) to the default logger. Defaults to warn.
void ConfigureLoggingFromEnv();

}  // namespace fairlm

#endif  // FAIRLM_LOG_H_
