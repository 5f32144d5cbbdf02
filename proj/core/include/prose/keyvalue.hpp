#pragma once

// Flat `key = value` text: one pair per line, `#` starts a comment, blank
// lines ignored. Used for config files and the text blobs in binary
// containers.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace prose {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues parse_key_values(const std::string& text);
std::string format_key_values(const KeyValues& pairs);

double parse_double(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);

// Shortest text that parses back to the identical double.
std::string format_double(double v);

}  // namespace prose
