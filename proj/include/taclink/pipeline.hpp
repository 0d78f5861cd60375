#pragma once

// Transmit/receive signal chain: VOX gating, codec bitrate model, packet
// framing with CRC-16 and AES-128-CTR encryption.
//
// Wire layout (big-endian):
//   [0]      version (high nibble) | flags (low nibble)
//   [1]      ciphertext length
//   [2..3]   seq
//   [4..15]  nonce = session_salt (8 bytes) || seq zero-extended (4 bytes)
//   [16..]   ciphertext
//   [last 2] CRC-16/CCITT-FALSE over every preceding byte
//
// CRC-16 detects corruption only; it is not a cryptographic integrity check.

#include <array>
#include <bitset>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "taclink/aes128.hpp"
#include "taclink/crc16.hpp"
#include "taclink/error.hpp"
#include "taclink/phy.hpp"
#include "taclink/rng.hpp"

namespace taclink::pipeline {

// ---------------------------------------------------------------------------
// VOX

struct VoxConfig {
  double threshold = 0.1;
  double hangover_ms = 200.0;

  friend bool operator==(const VoxConfig&, const VoxConfig&) = default;
};

inline void validate(const VoxConfig& cfg) {
  if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0))
    throw ConfigError("vox.threshold", "must be in (0, 1)");
  if (!(cfg.hangover_ms >= 0.0)) throw ConfigError("vox.hangover_ms", "must be >= 0");
}

/// Gate state per sample. The gate opens at the first sample whose energy
/// reaches the threshold and stays open through `hangover_ms` after the
/// last such sample (a sample `hangover_ms` later is still open).
inline std::vector<bool> vox_gate(std::span<const double> energy, const VoxConfig& cfg,
                                  double sample_period_ms) {
  validate(cfg);
  if (!(sample_period_ms > 0)) throw DomainError("vox_gate: sample period must be > 0");
  // Integer number of trailing samples covered by the hangover.
  const auto hang = static_cast<long long>(std::floor(cfg.hangover_ms / sample_period_ms + 1e-9));
  std::vector<bool> out(energy.size(), false);
  long long last_active = -1;
  for (std::size_t i = 0; i < energy.size(); ++i) {
    if (energy[i] >= cfg.threshold) last_active = static_cast<long long>(i);
    out[i] = last_active >= 0 && static_cast<long long>(i) - last_active <= hang;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Codec model

/// Bitrate/latency model of the voice codec and the processing delays that
/// make up the end-to-end latency sum.
struct CodecProfile {
  std::uint32_t bitrate_bps = 2400;
  std::uint32_t frame_ms = 40;
  double encode_delay_ms = 25.0;
  double decode_delay_ms = 15.0;
  double encrypt_delay_ms = 2.0;
  double decrypt_delay_ms = 2.0;

  friend bool operator==(const CodecProfile&, const CodecProfile&) = default;
};

inline void validate(const CodecProfile& c) {
  if (c.bitrate_bps == 0) throw ConfigError("codec.bitrate_bps", "must be > 0");
  if (c.frame_ms == 0) throw ConfigError("codec.frame_ms", "must be > 0");
  if (c.encode_delay_ms < 0) throw ConfigError("codec.encode_delay_ms", "must be >= 0");
  if (c.decode_delay_ms < 0) throw ConfigError("codec.decode_delay_ms", "must be >= 0");
  if (c.encrypt_delay_ms < 0) throw ConfigError("codec.encrypt_delay_ms", "must be >= 0");
  if (c.decrypt_delay_ms < 0) throw ConfigError("codec.decrypt_delay_ms", "must be >= 0");
}

struct AudioFrame {
  std::uint16_t seq = 0;
  std::uint32_t duration_ms = 0;
  double pcm_energy = 0.0;
  std::uint32_t payload_bits = 0;
  std::vector<std::uint8_t> payload;
  double encode_delay_ms = 0.0;  // set on the transmit side
  double decode_delay_ms = 0.0;  // decrypt + decode, set on the receive side
};

/// ceil(bitrate * duration / 8000) bytes.
inline std::size_t frame_payload_bytes(std::uint32_t bitrate_bps, std::uint32_t duration_ms) {
  const std::uint64_t bits_x1000 = std::uint64_t{bitrate_bps} * duration_ms;
  return static_cast<std::size_t>((bits_x1000 + 7999) / 8000);
}

namespace detail {
inline std::uint64_t hash_window(std::span<const double> window) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the sample bit patterns
  for (double v : window) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}
}  // namespace detail

inline AudioFrame encode_frame(std::span<const double> window, std::uint16_t seq, std::uint32_t bitrate_bps,
                               std::uint32_t duration_ms, double encode_delay_ms = 0.0) {
  if (bitrate_bps == 0) throw DomainError("encode_frame: bitrate must be > 0");
  if (duration_ms == 0) throw DomainError("encode_frame: duration must be > 0");
  AudioFrame f;
  f.seq = seq;
  f.duration_ms = duration_ms;
  f.encode_delay_ms = encode_delay_ms;
  double sum = 0;
  for (double v : window) sum += v;
  f.pcm_energy = window.empty() ? 0.0 : sum / static_cast<double>(window.size());
  f.payload.resize(frame_payload_bytes(bitrate_bps, duration_ms));
  f.payload_bits = static_cast<std::uint32_t>(f.payload.size() * 8);
  std::uint64_t state = detail::hash_window(window) ^ (std::uint64_t{seq} << 48);
  for (std::size_t i = 0; i < f.payload.size(); i += 8) {
    const std::uint64_t word = splitmix64(state);
    for (std::size_t k = 0; k < 8 && i + k < f.payload.size(); ++k)
      f.payload[i + k] = static_cast<std::uint8_t>(word >> (8 * k));
  }
  return f;
}

inline AudioFrame encode_frame(std::span<const double> window, std::uint16_t seq, const CodecProfile& codec) {
  return encode_frame(window, seq, codec.bitrate_bps, codec.frame_ms, codec.encode_delay_ms);
}

// ---------------------------------------------------------------------------
// Keys

using Nonce = std::array<std::uint8_t, 12>;

struct SessionKey {
  aes::Key key{};
  std::uint64_t session_salt = 0;

  /// Parses exactly 32 hex characters.
  static SessionKey from_hex(std::string_view hex, std::uint64_t salt = 0) {
    if (hex.size() != 32) throw ConfigError("key", "expected 32 hex characters, got " + std::to_string(hex.size()));
    SessionKey k;
    k.session_salt = salt;
    auto nibble = [](char c) -> int {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      if (c >= 'A' && c <= 'F') return c - 'A' + 10;
      return -1;
    };
    for (std::size_t i = 0; i < 16; ++i) {
      const int hi = nibble(hex[2 * i]), lo = nibble(hex[2 * i + 1]);
      if (hi < 0 || lo < 0) throw ConfigError("key", "non-hex character");
      k.key[i] = static_cast<std::uint8_t>(hi << 4 | lo);
    }
    return k;
  }
};

inline Nonce make_nonce(std::uint64_t salt, std::uint16_t seq) {
  Nonce n{};
  for (int i = 0; i < 8; ++i) n[i] = static_cast<std::uint8_t>(salt >> (56 - 8 * i));
  n[10] = static_cast<std::uint8_t>(seq >> 8);
  n[11] = static_cast<std::uint8_t>(seq);
  return n;
}

// ---------------------------------------------------------------------------
// Packets

inline constexpr std::uint8_t kPacketVersion = 1;
inline constexpr std::uint8_t kFlagEncrypted = 0x1;
inline constexpr std::uint8_t kFlagVoice = 0x2;
inline constexpr std::size_t kHeaderBytes = 16;
inline constexpr std::size_t kPacketOverheadBytes = kHeaderBytes + 2;
inline constexpr std::size_t kMaxCiphertextBytes = phy::kMaxPayloadBytes - kPacketOverheadBytes;

struct VoicePacket {
  std::uint8_t version = kPacketVersion;
  std::uint8_t flags = kFlagEncrypted | kFlagVoice;
  std::uint16_t seq = 0;
  Nonce nonce{};
  std::vector<std::uint8_t> ciphertext;
  std::uint16_t crc16 = 0;

  std::size_t serialized_size() const { return kPacketOverheadBytes + ciphertext.size(); }

  friend bool operator==(const VoicePacket&, const VoicePacket&) = default;
};

namespace detail {
inline void write_header(const VoicePacket& p, std::vector<std::uint8_t>& out) {
  out.push_back(static_cast<std::uint8_t>((p.version & 0x0F) << 4 | (p.flags & 0x0F)));
  out.push_back(static_cast<std::uint8_t>(p.ciphertext.size()));
  out.push_back(static_cast<std::uint8_t>(p.seq >> 8));
  out.push_back(static_cast<std::uint8_t>(p.seq));
  out.insert(out.end(), p.nonce.begin(), p.nonce.end());
  out.insert(out.end(), p.ciphertext.begin(), p.ciphertext.end());
}
}  // namespace detail

/// CRC over header and ciphertext, i.e. the value `crc16` should hold.
inline std::uint16_t compute_crc(const VoicePacket& p) {
  std::vector<std::uint8_t> body;
  body.reserve(p.serialized_size());
  detail::write_header(p, body);
  return crc16(body);
}

inline std::vector<std::uint8_t> serialize(const VoicePacket& p) {
  if (p.ciphertext.size() > kMaxCiphertextBytes)
    throw PacketError(PacketErrc::payload_too_large, std::to_string(p.ciphertext.size()) + " bytes");
  std::vector<std::uint8_t> out;
  out.reserve(p.serialized_size());
  detail::write_header(p, out);
  out.push_back(static_cast<std::uint8_t>(p.crc16 >> 8));
  out.push_back(static_cast<std::uint8_t>(p.crc16));
  return out;
}

/// Structural decode. Does not check the CRC; decrypt_packet does.
inline VoicePacket parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPacketOverheadBytes)
    throw PacketError(PacketErrc::length_malformed, "short buffer of " + std::to_string(bytes.size()) + " bytes");
  VoicePacket p;
  p.version = bytes[0] >> 4;
  if (p.version != kPacketVersion)
    throw PacketError(PacketErrc::bad_version, "version " + std::to_string(p.version));
  p.flags = bytes[0] & 0x0F;
  const std::size_t len = bytes[1];
  if (bytes.size() != kPacketOverheadBytes + len)
    throw PacketError(PacketErrc::length_malformed, "declared " + std::to_string(len) + " ciphertext bytes in a " +
                                                        std::to_string(bytes.size()) + "-byte buffer");
  p.seq = static_cast<std::uint16_t>(bytes[2] << 8 | bytes[3]);
  std::copy(bytes.begin() + 4, bytes.begin() + 16, p.nonce.begin());
  p.ciphertext.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  p.crc16 = static_cast<std::uint16_t>(bytes[16 + len] << 8 | bytes[17 + len]);
  return p;
}

/// Stateless encryption. Callers must not reuse `frame.seq` under the same
/// key and salt; Session enforces that.
inline VoicePacket encrypt_packet(const AudioFrame& frame, const SessionKey& key) {
  if (frame.payload.size() > kMaxCiphertextBytes)
    throw PacketError(PacketErrc::payload_too_large, std::to_string(frame.payload.size()) + " bytes");
  VoicePacket p;
  p.seq = frame.seq;
  p.nonce = make_nonce(key.session_salt, frame.seq);
  p.ciphertext = frame.payload;
  aes::ctr_xor(aes::Aes128(key.key), p.nonce, p.ciphertext);
  p.crc16 = compute_crc(p);
  return p;
}

/// Verifies the CRC, then decrypts with the nonce carried in the packet.
inline AudioFrame decrypt_packet(const VoicePacket& pkt, const SessionKey& key, const CodecProfile& codec = {}) {
  if (pkt.ciphertext.size() > kMaxCiphertextBytes) throw PacketError(PacketErrc::length_malformed);
  if (pkt.version != kPacketVersion) throw PacketError(PacketErrc::bad_version);
  if (compute_crc(pkt) != pkt.crc16) throw PacketError(PacketErrc::crc_mismatch);
  AudioFrame f;
  f.seq = pkt.seq;
  f.duration_ms = codec.frame_ms;
  f.payload = pkt.ciphertext;
  if (pkt.flags & kFlagEncrypted) aes::ctr_xor(aes::Aes128(key.key), pkt.nonce, f.payload);
  f.payload_bits = static_cast<std::uint32_t>(f.payload.size() * 8);
  f.decode_delay_ms = codec.decrypt_delay_ms + codec.decode_delay_ms;
  return f;
}

/// Transmit-side session: owns the key and refuses to encrypt a sequence
/// number twice, so a 16-bit seq wrap surfaces as a nonce-reuse error.
class Session {
public:
  explicit Session(SessionKey key) : key_(key), cipher_(key.key), used_(std::make_unique<std::bitset<65536>>()) {}

  const SessionKey& key() const { return key_; }
  std::size_t packets_sealed() const { return sealed_; }

  VoicePacket encrypt(const AudioFrame& frame) {
    if (used_->test(frame.seq))
      throw PacketError(PacketErrc::nonce_reuse, "seq " + std::to_string(frame.seq) + " already used");
    if (frame.payload.size() > kMaxCiphertextBytes)
      throw PacketError(PacketErrc::payload_too_large, std::to_string(frame.payload.size()) + " bytes");
    used_->set(frame.seq);
    ++sealed_;
    VoicePacket p;
    p.seq = frame.seq;
    p.nonce = make_nonce(key_.session_salt, frame.seq);
    p.ciphertext = frame.payload;
    aes::ctr_xor(cipher_, p.nonce, p.ciphertext);
    p.crc16 = compute_crc(p);
    return p;
  }

private:
  SessionKey key_;
  aes::Aes128 cipher_;
  std::unique_ptr<std::bitset<65536>> used_;
  std::size_t sealed_ = 0;
};

}  // namespace taclink::pipeline
