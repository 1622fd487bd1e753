// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace mtl {

/// Whole file as bytes. Throws IoError.
std::string read_file(const std::filesystem::path& path);

/// Writes to `path`.tmp then renames over `path`, creating parent
/// directories. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace mtl
