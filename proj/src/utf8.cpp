#include "herbgen/utf8.hpp"

namespace herbgen::utf8 {

namespace {

// Returns the length in bytes of the UTF-8 sequence starting at text[pos],
// or 1 if the bytes there are not well formed.
std::size_t sequence_length(std::string_view text, std::size_t pos) {
  const auto lead = static_cast<unsigned char>(text[pos]);
  std::size_t len = 0;
  if (lead < 0x80) {
    return 1;
  } else if ((lead >> 5) == 0x6) {
    len = 2;
  } else if ((lead >> 4) == 0xe) {
    len = 3;
  } else if ((lead >> 3) == 0x1e) {
    len = 4;
  } else {
    return 1;  // stray continuation or invalid lead byte
  }
  if (pos + len > text.size()) return 1;
  for (std::size_t i = 1; i < len; ++i) {
    const auto cont = static_cast<unsigned char>(text[pos + i]);
    if ((cont >> 6) != 0x2) return 1;
  }
  return len;
}

}  // namespace

std::vector<std::string> split_codepoints(std::string_view text) {
  std::vector<std::string> out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t len = sequence_length(text, pos);
    out.emplace_back(text.substr(pos, len));
    pos += len;
  }
  return out;
}

std::size_t codepoint_count(std::string_view text) {
  std::size_t count = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    pos += sequence_length(text, pos);
    ++count;
  }
  return count;
}

}  // namespace herbgen::utf8
