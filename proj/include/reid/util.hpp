#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>

namespace reid {

constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v);

std::string read_file(const std::filesystem::path& p);
/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
void write_file(const std::filesystem::path& p, std::string_view contents);

/// Shortest round-trippable decimal form of a double.
std::string format_double(double v);

/// Uniform double in [0, 1) built from the raw engine bits, so sequences are
/// identical across standard libraries.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace reid
