#pragma once

// Independent reference implementations used only by tests. None of these
// share code with the library paths they check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>

namespace oracle {

/// Bit-at-a-time polynomial division, MSB first, poly 0x1021, init 0xFFFF.
inline std::uint16_t crc16_bitwise(std::span<const std::uint8_t> data) {
  std::uint32_t reg = 0xFFFF;
  for (std::uint8_t byte : data) {
    for (int i = 7; i >= 0; --i) {
      const std::uint32_t in = (byte >> i) & 1u;
      const std::uint32_t top = (reg >> 15) & 1u;
      reg = (reg << 1) & 0xFFFF;
      if (top ^ in) reg ^= 0x1021;
    }
  }
  return static_cast<std::uint16_t>(reg);
}

struct Airtime {
  long long payload_symbols;
  double preamble_ms;
  double total_ms;
};

/// Literal transcription of the LoRa packet-duration formula in integer
/// arithmetic: symbol time as an exact rational 2^SF * 1000 / BW ms.
inline Airtime lora_airtime(int sf, long long bw, int cr_den, long long payload, int preamble, bool explicit_header,
                            bool crc, bool ldro) {
  const long long num = 8 * payload - 4 * sf + 28 + 16 * (crc ? 1 : 0) - 20 * (explicit_header ? 0 : 1);
  const long long den = 4 * (sf - 2 * (ldro ? 1 : 0));
  // ceil division for possibly negative numerators
  long long q = num / den;
  if (num % den != 0 && ((num > 0) == (den > 0))) ++q;
  long long blocks = q * cr_den;
  if (blocks < 0) blocks = 0;
  const long long symbols = 8 + blocks;
  // Quarter-symbol units keep the preamble's 4.25 exact.
  const long long quarter_symbols = 4LL * preamble + 17 + 4 * symbols;
  const double sym_ms = std::ldexp(1000.0, sf) / static_cast<double>(bw);
  return {symbols, (4.0 * preamble + 17.0) / 4.0 * sym_ms, static_cast<double>(quarter_symbols) / 4.0 * sym_ms};
}

/// Root of a monotone decreasing function by bisection on [lo, hi].
inline double bisect_decreasing(const std::function<double(double)>& f, double lo, double hi, int iters = 200) {
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) >= 0) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// Long-hand free-space loss: log10 via natural log.
inline double fspl_longhand(double d_km, double f_mhz) {
  return 20.0 * (std::log(d_km) / std::log(10.0)) + 20.0 * (std::log(f_mhz) / std::log(10.0)) + 32.44;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace oracle
