#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace herbgen {

// FNV-1a 64-bit content digest, used for manifest entries and
// determinism checks.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string digest_hex(std::string_view bytes);
std::string digest_file(const std::string& path);

}  // namespace herbgen
