#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace govq::util {

std::uint64_t fnv1a64(std::string_view data);
/// 16 lowercase hex digits of fnv1a64.
std::string hash_hex(std::string_view data);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
/// Lowercases and collapses runs of whitespace to one space.
std::string normalize_space(std::string_view s);
bool is_identifier(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
/// Lowercase alphanumeric tokens.
std::vector<std::string> word_tokens(std::string_view s);
std::size_t edit_distance(std::string_view a, std::string_view b);
bool contains(std::string_view haystack, std::string_view needle);

}  // namespace govq::util
