#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cex {

std::string sha256_hex(std::string_view data);
std::string sha256_hex(std::span<const std::uint8_t> data);

std::string base64_encode(std::span<const std::uint8_t> data);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// Shortest decimal form of value rounded to 9 significant digits. Used for
// every number that enters a canonical serialization.
std::string canonical_number(double value);
double round_significant(double value, int digits = 9);

}  // namespace cex
