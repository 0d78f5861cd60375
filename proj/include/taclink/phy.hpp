#pragma once

// LoRa physical-layer timing: symbol duration, packet time-on-air and
// effective bitrate for a given modem configuration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "taclink/error.hpp"

namespace taclink::phy {

inline constexpr std::size_t kMaxPayloadBytes = 255;

struct PhyConfig {
  int spreading_factor = 7;
  std::uint32_t bandwidth_hz = 125000;
  int coding_rate_denominator = 5;  // 4/5 .. 4/8
  int preamble_symbols = 8;
  bool explicit_header = true;
  bool crc_on = true;
  // Empty means derive from symbol duration (see uses_ldro).
  std::optional<bool> low_data_rate_optimize;

  friend bool operator==(const PhyConfig&, const PhyConfig&) = default;
};

inline bool valid_bandwidth(std::uint32_t bw) {
  return bw == 125000 || bw == 250000 || bw == 500000;
}

inline void validate(const PhyConfig& phy) {
  if (phy.spreading_factor < 7 || phy.spreading_factor > 12)
    throw ConfigError("spreading_factor", "must be in [7, 12], got " +
                                              std::to_string(phy.spreading_factor));
  if (!valid_bandwidth(phy.bandwidth_hz))
    throw ConfigError("bandwidth_hz", "must be 125000, 250000 or 500000, got " +
                                          std::to_string(phy.bandwidth_hz));
  if (phy.coding_rate_denominator < 5 || phy.coding_rate_denominator > 8)
    throw ConfigError("coding_rate_denominator",
                      "must be in [5, 8], got " + std::to_string(phy.coding_rate_denominator));
  if (phy.preamble_symbols < 0)
    throw ConfigError("preamble_symbols", "must be non-negative");
}

/// Symbol duration 2^SF / BW, in milliseconds.
inline double symbol_duration_ms(const PhyConfig& phy) {
  validate(phy);
  return std::ldexp(1000.0, phy.spreading_factor) / static_cast<double>(phy.bandwidth_hz);
}

// Transceivers force low-data-rate optimisation on once a symbol lasts
// longer than 16 ms (SF11 and SF12 at 125 kHz).
inline constexpr double kLdroSymbolThresholdMs = 16.0;

inline bool uses_ldro(const PhyConfig& phy) {
  if (phy.low_data_rate_optimize) return *phy.low_data_rate_optimize;
  return symbol_duration_ms(phy) > kLdroSymbolThresholdMs;
}

struct AirtimeBreakdown {
  double symbol_time_ms = 0;
  double preamble_ms = 0;
  int payload_symbols = 0;
  double payload_ms = 0;
  double total_ms = 0;

  friend bool operator==(const AirtimeBreakdown&, const AirtimeBreakdown&) = default;
};

// Terms of the standard LoRa packet-duration expression (Semtech AN1200.13):
//   n_payload = 8 + max(ceil((8*PL - 4*SF + 28 + 16*CRC - 20*IH) / (4*(SF - 2*DE))) * (CR + 4), 0)
// +28 is the fixed bit offset of the first 8-symbol block, +16 the payload
// CRC, and -20 removes the header bits when the header is implicit.
inline constexpr int kSyncAndHeaderBits = 28;
inline constexpr int kPayloadCrcBits = 16;
inline constexpr int kExplicitHeaderBits = 20;
inline constexpr int kMinPayloadSymbols = 8;
// Preamble carries 4.25 symbols of sync word and start-of-frame on top of
// the programmed preamble length.
inline constexpr double kPreambleExtraSymbols = 4.25;

inline AirtimeBreakdown time_on_air(const PhyConfig& phy, std::size_t payload_bytes) {
  validate(phy);
  if (payload_bytes > kMaxPayloadBytes)
    throw PacketError(PacketErrc::payload_too_large,
                      std::to_string(payload_bytes) + " bytes exceeds single LoRa frame");

  const int sf = phy.spreading_factor;
  const int de = uses_ldro(phy) ? 1 : 0;
  const int ih = phy.explicit_header ? 0 : 1;
  const int crc = phy.crc_on ? 1 : 0;

  const double numerator = 8.0 * static_cast<double>(payload_bytes) - 4.0 * sf + kSyncAndHeaderBits +
                           kPayloadCrcBits * crc - kExplicitHeaderBits * ih;
  const double denominator = 4.0 * (sf - 2 * de);
  const double blocks = std::max(std::ceil(numerator / denominator), 0.0);

  AirtimeBreakdown out;
  out.symbol_time_ms = symbol_duration_ms(phy);
  out.payload_symbols = kMinPayloadSymbols + static_cast<int>(blocks) * phy.coding_rate_denominator;
  out.preamble_ms = (phy.preamble_symbols + kPreambleExtraSymbols) * out.symbol_time_ms;
  out.payload_ms = out.payload_symbols * out.symbol_time_ms;
  out.total_ms = out.preamble_ms + out.payload_ms;
  return out;
}

/// Raw modem bitrate SF * BW / 2^SF * 4/CR, in bits per second.
inline double effective_bitrate_bps(const PhyConfig& phy) {
  validate(phy);
  const double symbols_per_s = static_cast<double>(phy.bandwidth_hz) / std::ldexp(1.0, phy.spreading_factor);
  return phy.spreading_factor * symbols_per_s * (4.0 / phy.coding_rate_denominator);
}

}  // namespace taclink::phy
