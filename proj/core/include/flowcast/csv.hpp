#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace flowcast::csv {

/// Formats a double so that parsing the text recovers the exact bit pattern
/// (finite values, %.17g).
std::string format_double(double value);

/// Strict double parser; `context` names the file/field for error messages.
double parse_double(const std::string& text, const std::string& context);

long parse_long(const std::string& text, const std::string& context);

std::vector<std::string> split_line(const std::string& line);

/// Reads all non-empty lines; throws if the file cannot be opened.
std::vector<std::string> read_lines(const std::filesystem::path& path);

void write_file(const std::filesystem::path& path, const std::string& contents);

} // namespace flowcast::csv
