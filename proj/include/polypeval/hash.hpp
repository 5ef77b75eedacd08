#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace polypeval {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

std::string to_hex(std::span<const std::uint8_t> bytes);

}  // namespace polypeval
