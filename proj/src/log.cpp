// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtl/log.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "mtl/error.hpp"

namespace mtl {

namespace {

std::optional<LogLevel>& level_slot() {
  static std::optional<LogLevel> level;
  return level;
}

void emit(std::string_view tag, std::string_view msg) { std::cerr << "[mtl " << tag << "] " << msg << '\n'; }

}  // namespace

LogLevel parse_log_level(std::string_view s) {
  if (s == "quiet") return LogLevel::Quiet;
  if (s == "info") return LogLevel::Info;
  if (s == "debug") return LogLevel::Debug;
  throw ConfigError("unknown log level '" + std::string(s) + "' (expected quiet, info or debug)");
}

LogLevel log_level() {
  auto& slot = level_slot();
  if (!slot) {
    const char* env = std::getenv("MTL_LOG");
    slot = LogLevel::Info;
    if (env != nullptr && *env != '\0') {
      try {
        slot = parse_log_level(env);
      } catch (const ConfigError&) {
        emit("warn", "ignoring MTL_LOG=" + std::string(env));
      }
    }
  }
  return *slot;
}

void set_log_level(LogLevel level) { level_slot() = level; }

void log_warn(std::string_view msg) {
  if (log_level() != LogLevel::Quiet) emit("warn", msg);
}

void log_info(std::string_view msg) {
  if (log_level() != LogLevel::Quiet) emit("info", msg);
}

void log_debug(std::string_view msg) {
  if (log_level() == LogLevel::Debug) emit("debug", msg);
}

}  // namespace mtl
