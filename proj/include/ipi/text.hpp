#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ipi::text {

std::string trim(std::string_view s);
std::string lower(std::string_view s);

/// Lowercase, punctuation replaced by spaces, whitespace collapsed, trimmed.
std::string normalize(std::string_view s);

bool contains(std::string_view haystack, std::string_view needle);
bool starts_with_word(std::string_view s, std::string_view word);

/// Splits on every occurrence of `sep` (exact match).
std::vector<std::string> split(std::string_view s, std::string_view sep);

/// Renders an integer count of hundredths, e.g. 2893 -> "28.93".
std::string format_hundredths(long long hundredths);

/// Shortest decimal that round-trips the double (used for CSV/logs).
std::string format_double(double value);

std::string base64_encode(std::string_view bytes);

}  // namespace ipi::text
