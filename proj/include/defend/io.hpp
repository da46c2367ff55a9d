#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace defend {

// Writes to a sibling temp file, then renames over the destination.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);

// Strict parse of a full token; throws DataError naming `what` on failure.
double parse_double(std::string_view token, std::string_view what);
long long parse_int(std::string_view token, std::string_view what);

}  // namespace defend
