#pragma once

// Thin logging front end. Level comes from FGCL_LOG_LEVEL (error|warn|info|debug), default warn.

#include <spdlog/spdlog.h>

#include <utility>

namespace fgcl::log {

/// Reads FGCL_LOG_LEVEL once; later calls are no-ops.
void init_from_env();

template <typename... Args>
void error(fmt::format_string<Args...> fmt, Args&&... args) {
  init_from_env();
  spdlog::error(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void warn(fmt::format_string<Args...> fmt, Args&&... args) {
  init_from_env();
  spdlog::warn(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void info(fmt::format_string<Args...> fmt, Args&&... args) {
  init_from_env();
  spdlog::info(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void debug(fmt::format_string<Args...> fmt, Args&&... args) {
  init_from_env();
  spdlog::debug(fmt, std::forward<Args>(args)...);
}

}  // namespace fgcl::log
