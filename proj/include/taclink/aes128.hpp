#pragma once

// AES-128 block encryption (FIPS-197) and CTR keystream. Only the forward
// cipher is needed: CTR decryption is the same operation.

#include <array>
#include <cstdint>
#include <span>

namespace taclink::aes {

using Block = std::array<std::uint8_t, 16>;
using Key = std::array<std::uint8_t, 16>;

namespace detail {

inline constexpr std::uint8_t kSbox[256] = {
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16};

inline constexpr std::uint8_t kRcon[10] = {0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36};

constexpr std::uint8_t xtime(std::uint8_t x) {
  return static_cast<std::uint8_t>((x << 1) ^ ((x & 0x80) ? 0x1b : 0x00));
}

}  // namespace detail

class Aes128 {
public:
  explicit Aes128(const Key& key) { expand(key); }

  Block encrypt_block(const Block& in) const {
    Block s = in;
    add_round_key(s, 0);
    for (int round = 1; round < 10; ++round) {
      sub_bytes(s);
      shift_rows(s);
      mix_columns(s);
      add_round_key(s, round);
    }
    sub_bytes(s);
    shift_rows(s);
    add_round_key(s, 10);
    return s;
  }

private:
  std::array<std::uint8_t, 176> round_keys_{};

  void expand(const Key& key) {
    for (int i = 0; i < 16; ++i) round_keys_[i] = key[i];
    for (int i = 4; i < 44; ++i) {
      std::uint8_t t[4];
      for (int j = 0; j < 4; ++j) t[j] = round_keys_[(i - 1) * 4 + j];
      if (i % 4 == 0) {
        const std::uint8_t first = t[0];
        t[0] = static_cast<std::uint8_t>(detail::kSbox[t[1]] ^ detail::kRcon[i / 4 - 1]);
        t[1] = detail::kSbox[t[2]];
        t[2] = detail::kSbox[t[3]];
        t[3] = detail::kSbox[first];
      }
      for (int j = 0; j < 4; ++j)
        round_keys_[i * 4 + j] = static_cast<std::uint8_t>(round_keys_[(i - 4) * 4 + j] ^ t[j]);
    }
  }

  void add_round_key(Block& s, int round) const {
    for (int i = 0; i < 16; ++i) s[i] ^= round_keys_[round * 16 + i];
  }

  static void sub_bytes(Block& s) {
    for (auto& b : s) b = detail::kSbox[b];
  }

  // State is column-major: byte index = 4*column + row.
  static void shift_rows(Block& s) {
    Block t = s;
    for (int r = 1; r < 4; ++r)
      for (int c = 0; c < 4; ++c) s[4 * c + r] = t[4 * ((c + r) % 4) + r];
  }

  static void mix_columns(Block& s) {
    for (int c = 0; c < 4; ++c) {
      std::uint8_t* col = &s[4 * c];
      const std::uint8_t a0 = col[0], a1 = col[1], a2 = col[2], a3 = col[3];
      const std::uint8_t all = a0 ^ a1 ^ a2 ^ a3;
      col[0] = static_cast<std::uint8_t>(a0 ^ all ^ detail::xtime(a0 ^ a1));
      col[1] = static_cast<std::uint8_t>(a1 ^ all ^ detail::xtime(a1 ^ a2));
      col[2] = static_cast<std::uint8_t>(a2 ^ all ^ detail::xtime(a2 ^ a3));
      col[3] = static_cast<std::uint8_t>(a3 ^ all ^ detail::xtime(a3 ^ a0));
    }
  }
};

/// XORs `data` in place with the AES-CTR keystream. The counter block is
/// the 96-bit nonce followed by a 32-bit big-endian block counter from 0.
inline void ctr_xor(const Aes128& cipher, std::span<const std::uint8_t, 12> nonce, std::span<std::uint8_t> data) {
  Block counter{};
  for (int i = 0; i < 12; ++i) counter[i] = nonce[i];
  std::uint32_t block_index = 0;
  for (std::size_t off = 0; off < data.size(); off += 16, ++block_index) {
    counter[12] = static_cast<std::uint8_t>(block_index >> 24);
    counter[13] = static_cast<std::uint8_t>(block_index >> 16);
    counter[14] = static_cast<std::uint8_t>(block_index >> 8);
    counter[15] = static_cast<std::uint8_t>(block_index);
    const Block ks = cipher.encrypt_block(counter);
    for (std::size_t i = 0; i < 16 && off + i < data.size(); ++i) data[off + i] ^= ks[i];
  }
}

}  // namespace taclink::aes
