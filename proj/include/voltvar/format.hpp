#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace voltvar {

/// Renders with 17 significant digits ("%.17g"); every double round-trips exactly.
std::string format_real(double value);

/// Splits one CSV record on commas, trimming surrounding whitespace.
std::vector<std::string> split_csv(std::string_view line);

/// Parses a real field; throws an input error naming `context` on failure.
double parse_real(const std::string& field, const std::string& context);
int parse_int(const std::string& field, const std::string& context);

/// Writes `content` to `path`, throwing an input error if the file cannot be opened.
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

} // namespace voltvar
