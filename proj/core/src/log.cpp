#include "conure/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace conure {

namespace {

LogLevel parse_env() {
  const char* v = std::getenv("CONURE_LOG");
  if (v == nullptr) return LogLevel::info;
  if (std::strcmp(v, "debug") == 0) return LogLevel::debug;
  if (std::strcmp(v, "info") == 0) return LogLevel::info;
  if (std::strcmp(v, "warn") == 0) return LogLevel::warn;
  if (std::strcmp(v, "error") == 0) return LogLevel::error;
  if (std::strcmp(v, "off") == 0) return LogLevel::off;
  return LogLevel::info;
}

LogLevel& threshold_ref() {
  static LogLevel level = parse_env();
  return level;
}

const char* tag(LogLevel level) {
  switch (level) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warn: return "warn";
    case LogLevel::error: return "error";
    default: return "?";
  }
}

}  // namespace

LogLevel log_threshold() { return threshold_ref(); }

void set_log_threshold(LogLevel level) { threshold_ref() = level; }

void log_message(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) < static_cast<int>(threshold_ref())) return;
  std::fprintf(stderr, "[conure %s] %s\n", tag(level), msg.c_str());
}

}  // namespace conure
