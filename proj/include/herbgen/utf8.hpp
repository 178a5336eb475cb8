#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace herbgen::utf8 {

// Splits a UTF-8 string into codepoint-sized chunks. Bytes that do not form
// a valid UTF-8 sequence are passed through one byte at a time so that
// downstream lookups turn them into [UNK] instead of corrupting neighbours.
std::vector<std::string> split_codepoints(std::string_view text);

// Number of codepoints in a UTF-8 string.
std::size_t codepoint_count(std::string_view text);

}  // namespace herbgen::utf8
