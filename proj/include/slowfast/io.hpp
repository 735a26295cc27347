#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace slowfast {

/// Shortest round-trip decimal rendering ('.' separator, locale independent).
std::string format_double(double x);

/// Comma-separated row terminated by '\n'.
std::string csv_row(const std::vector<double>& values);

/// Writes `content` to `path`, throwing Error on I/O failure.
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace slowfast
