#pragma once

#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace grouprec {

/// Shortest decimal text that parses back to the same value ('.' radix).
std::string format_number(double v);
std::string format_number(float v);

std::optional<double> parse_double(std::string_view s) noexcept;
std::optional<float> parse_float(std::string_view s) noexcept;
std::optional<unsigned long long> parse_uint(std::string_view s) noexcept;

std::vector<std::string_view> split(std::string_view s, char sep);
std::string_view trim(std::string_view s) noexcept;

}  // namespace grouprec
