#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace relex {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

// Stable 64-bit FNV-1a, used to derive per-query seeds.
std::uint64_t fnv1a64(std::string_view data);

}  // namespace relex
