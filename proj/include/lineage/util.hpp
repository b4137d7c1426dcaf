#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace lineage {

/// 64-bit FNV-1a; stable across platforms, used to derive seeds from ids.
constexpr std::uint64_t fnv1a(std::string_view data,
                              std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string base64_encode(std::string_view bytes);
/// Throws InvalidInput on malformed input.
std::string base64_decode(std::string_view text);

/// Fixed-point with `decimals` digits, "C" locale.
std::string format_fixed(double value, int decimals);

/// Writes to a sibling temp file then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace lineage
