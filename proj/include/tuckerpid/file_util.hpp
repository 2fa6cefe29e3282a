#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace tuckerpid {

/// Writes `contents` to a sibling temporary file and renames it over `path`,
/// so readers never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Whole-file read. Throws DataError naming the path when it cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Fixed six-decimal rendering used for every numeric CSV field.
std::string format_fixed6(double value);

}  // namespace tuckerpid
