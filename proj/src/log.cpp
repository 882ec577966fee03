#include "fgcl/log.hpp"

#include <spdlog/sinks/stdout_sinks.h>

#include <cstdlib>
#include <mutex>
#include <string>

namespace fgcl::log {

void init_from_env() {
  static std::once_flag once;
  std::call_once(once, [] {
    auto logger = spdlog::stderr_logger_st("fgcl");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    const char* env = std::getenv("FGCL_LOG_LEVEL");
    const std::string level = env ? env : "warn";
    if (level == "error")
      spdlog::set_level(spdlog::level::err);
    else if (level == "info")
      spdlog::set_level(spdlog::level::info);
    else if (level == "debug")
      spdlog::set_level(spdlog::level::debug);
    else
      spdlog::set_level(spdlog::level::warn);
  });
}

}  // namespace fgcl::log
