#pragma once

#include <string>

namespace lazydit {

// Shortest decimal representation that round-trips to the same double.
std::string format_double(double x);

// Writes `contents` to `path` via a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

}  // namespace lazydit
