// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>

namespace mtl {

enum class LogLevel { Quiet, Info, Debug };

/// Current level; initialized from MTL_LOG (quiet | info | debug, default info).
LogLevel log_level();
void set_log_level(LogLevel level);
/// Parses quiet | info | debug; throws ConfigError otherwise.
LogLevel parse_log_level(std::string_view s);

/// Warnings are shown at info and debug.
void log_warn(std::string_view msg);
void log_info(std::string_view msg);
void log_debug(std::string_view msg);

}  // namespace mtl
