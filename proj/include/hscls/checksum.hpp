#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace hscls {

/// CRC-32C (Castagnoli, reflected polynomial 0x82F63B78).
std::uint32_t crc32c(std::span<const std::uint8_t> bytes, std::uint32_t crc = 0);
std::uint32_t crc32c(std::string_view bytes);

/// 64-bit FNV-1a; used for content hashes (vocabulary, configs, weights).
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

std::string to_hex(std::uint64_t v);
std::string to_hex32(std::uint32_t v);

}  // namespace hscls
