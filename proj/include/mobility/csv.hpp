#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mobility::csv {

/// Reads one line, accepting \n and \r\n endings. Returns false at EOF.
bool read_line(std::istream& in, std::string& line);

/// Splits on commas. No quoting; fields are taken verbatim.
std::vector<std::string> split(std::string_view line);

// Locale-independent numeric parsing. Each returns nullopt when the field is
// not fully consumed as a number of the requested kind.
std::optional<double> parse_double(std::string_view field);
std::optional<std::int64_t> parse_int(std::string_view field);

/// Shortest round-trip formatting (to_chars); NaN becomes an empty field.
std::string format_double(double value);
std::string format_int(std::int64_t value);

}  // namespace mobility::csv
