#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace gf::log {

enum class Level { kError = 0, kInfo = 1, kDebug = 2 };

// Level comes from GARMENTFORGE_LOG (error|info|debug), default info.
inline Level level() {
  static const Level lvl = [] {
    const char* e = std::getenv("GARMENTFORGE_LOG");
    if (e == nullptr) return Level::kInfo;
    if (std::strcmp(e, "error") == 0) return Level::kError;
    if (std::strcmp(e, "debug") == 0) return Level::kDebug;
    return Level::kInfo;
  }();
  return lvl;
}

template <typename... Args>
void emit(const char* tag, const char* fmt, Args... args) {
  std::fputs(tag, stderr);
  if constexpr (sizeof...(Args) == 0) {
    std::fputs(fmt, stderr);
  } else {
    std::fprintf(stderr, fmt, args...);
  }
  std::fputc('\n', stderr);
}

template <typename... Args>
void error(const char* fmt, Args... args) {
  emit("[error] ", fmt, args...);
}

template <typename... Args>
void info(const char* fmt, Args... args) {
  if (level() >= Level::kInfo) emit("[info] ", fmt, args...);
}

template <typename... Args>
void debug(const char* fmt, Args... args) {
  if (level() >= Level::kDebug) emit("[debug] ", fmt, args...);
}

}  // namespace gf::log
