#pragma once

#include <string>
#include <string_view>

namespace mfrnet {

// Writes `contents` to a temporary sibling and renames it over `path`, so
// readers never observe a partially written file. Creates parent directories.
void atomic_write_file(const std::string& path, std::string_view contents);

std::string read_file(const std::string& path);

}  // namespace mfrnet
