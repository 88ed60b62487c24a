#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace hscls {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path);

/// Writes to a sibling temp file, flushes it to disk, then renames over
/// `path`. Readers observe either the old or the new content.
void write_file_atomic(const fs::path& path, std::string_view content);

}  // namespace hscls
