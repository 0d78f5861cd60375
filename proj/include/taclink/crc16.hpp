#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace taclink {

// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xor-out.
namespace detail {
inline constexpr std::array<std::uint16_t, 256> make_crc16_table() {
  std::array<std::uint16_t, 256> t{};
  for (unsigned i = 0; i < 256; ++i) {
    std::uint16_t r = static_cast<std::uint16_t>(i << 8);
    for (int b = 0; b < 8; ++b)
      r = static_cast<std::uint16_t>((r & 0x8000) ? (r << 1) ^ 0x1021 : (r << 1));
    t[i] = r;
  }
  return t;
}
inline constexpr auto kCrc16Table = make_crc16_table();
}  // namespace detail

inline constexpr std::uint16_t kCrc16Init = 0xFFFF;

inline std::uint16_t crc16(std::span<const std::uint8_t> bytes, std::uint16_t crc = kCrc16Init) {
  for (std::uint8_t b : bytes)
    crc = static_cast<std::uint16_t>((crc << 8) ^ detail::kCrc16Table[((crc >> 8) ^ b) & 0xFF]);
  return crc;
}

}  // namespace taclink
