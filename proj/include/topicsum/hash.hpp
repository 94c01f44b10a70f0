#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace topicsum {

// 64-bit FNV-1a. Used for vocabulary, config and test-set fingerprints.
constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 14695981039346656037ULL) {
  for (char c : bytes) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v);

}  // namespace topicsum
