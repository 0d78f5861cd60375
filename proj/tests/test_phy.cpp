#include <gtest/gtest.h>

#include "oracles.hpp"
#include "taclink/error.hpp"
#include "taclink/phy.hpp"

using namespace taclink;
using namespace taclink::phy;

namespace {

PhyConfig make(int sf, std::uint32_t bw = 125000, int cr = 5) {
  PhyConfig c;
  c.spreading_factor = sf;
  c.bandwidth_hz = bw;
  c.coding_rate_denominator = cr;
  return c;
}

}  // namespace

TEST(Airtime, Sf7ThirtyTwoBytes) {
  const auto a = time_on_air(make(7), 32);
  EXPECT_DOUBLE_EQ(a.symbol_time_ms, 1.024);
  EXPECT_NEAR(a.preamble_ms, 12.544, 1e-9);
  EXPECT_EQ(a.payload_symbols, 58);
  EXPECT_NEAR(a.payload_ms, 59.392, 1e-9);
  EXPECT_NEAR(a.total_ms, 71.936, 1e-9);
}

TEST(Airtime, TabulatedCases) {
  struct Case {
    PhyConfig cfg;
    std::size_t payload;
    int symbols;
    double total_ms;
  };
  const Case cases[] = {
      {make(7), 0, 13, 25.856},
      {make(12), 30, 38, 1646.592},
      {make(9), 30, 43, 226.304},
      {make(11, 125000, 8), 255, 464, 7802.88},
      {make(7, 500000), 10, 28, 10.304},
  };
  for (const auto& c : cases) {
    const auto a = time_on_air(c.cfg, c.payload);
    EXPECT_EQ(a.payload_symbols, c.symbols) << "SF" << c.cfg.spreading_factor;
    EXPECT_NEAR(a.total_ms, c.total_ms, 1e-9) << "SF" << c.cfg.spreading_factor;
  }
}

TEST(Airtime, MinimumSymbolClamp) {
  auto c = make(12);
  c.explicit_header = false;
  c.crc_on = false;
  EXPECT_EQ(time_on_air(c, 0).payload_symbols, 8);
}

TEST(Airtime, FullGridMatchesIntegerTranscription) {
  for (int sf = 7; sf <= 12; ++sf)
    for (std::uint32_t bw : {125000u, 250000u, 500000u})
      for (int cr = 5; cr <= 8; ++cr)
        for (int hdr = 0; hdr < 2; ++hdr)
          for (int crc = 0; crc < 2; ++crc)
            for (std::size_t pl = 0; pl <= 255; pl += 7) {
              auto c = make(sf, bw, cr);
              c.explicit_header = hdr;
              c.crc_on = crc;
              const auto a = time_on_air(c, pl);
              const auto o = oracle::lora_airtime(sf, bw, cr, static_cast<long long>(pl), 8, hdr, crc, uses_ldro(c));
              ASSERT_EQ(a.payload_symbols, o.payload_symbols) << sf << "/" << bw << "/" << cr << "/" << pl;
              ASSERT_NEAR(a.total_ms, o.total_ms, 1e-9 * o.total_ms);
              ASSERT_NEAR(a.preamble_ms, o.preamble_ms, 1e-9 * o.preamble_ms);
              ASSERT_NEAR(a.preamble_ms + a.payload_ms, a.total_ms, 1e-9 * a.total_ms);
            }
}

TEST(Airtime, MonotoneInPayload) {
  for (int sf = 7; sf <= 12; ++sf) {
    double prev = 0;
    for (std::size_t pl = 0; pl <= 255; ++pl) {
      const double t = time_on_air(make(sf), pl).total_ms;
      EXPECT_GE(t, prev);
      prev = t;
    }
  }
}

TEST(Airtime, SymbolTimeDoublesPerSpreadingFactor) {
  for (int sf = 7; sf < 12; ++sf)
    EXPECT_DOUBLE_EQ(symbol_duration_ms(make(sf + 1)), 2 * symbol_duration_ms(make(sf)));
  EXPECT_DOUBLE_EQ(symbol_duration_ms(make(7, 250000)), symbol_duration_ms(make(7)) / 2);
}

TEST(Airtime, AirtimeGrowsWithSpreadingFactor) {
  for (std::size_t pl : {0u, 10u, 32u, 100u, 255u}) {
    double prev = 0;
    for (int sf = 7; sf <= 12; ++sf) {
      const double t = time_on_air(make(sf), pl).total_ms;
      EXPECT_GT(t, prev);
      prev = t;
    }
  }
}

TEST(Airtime, LowDataRateOptimizeSelection) {
  EXPECT_FALSE(uses_ldro(make(10)));
  EXPECT_TRUE(uses_ldro(make(11)));
  EXPECT_TRUE(uses_ldro(make(12)));
  EXPECT_FALSE(uses_ldro(make(12, 500000)));
  auto forced = make(7);
  forced.low_data_rate_optimize = true;
  EXPECT_TRUE(uses_ldro(forced));
  EXPECT_GT(time_on_air(forced, 64).payload_symbols, time_on_air(make(7), 64).payload_symbols);
}

TEST(Airtime, RejectsInvalidConfig) {
  EXPECT_THROW(time_on_air(make(6), 10), ConfigError);
  EXPECT_THROW(time_on_air(make(13), 10), ConfigError);
  EXPECT_THROW(time_on_air(make(7, 100000), 10), ConfigError);
  EXPECT_THROW(time_on_air(make(7, 125000, 9), 10), ConfigError);
  try {
    time_on_air(make(7), 256);
    FAIL();
  } catch (const PacketError& e) {
    EXPECT_EQ(e.code(), PacketErrc::payload_too_large);
  }
}

TEST(Bitrate, KnownValues) {
  EXPECT_NEAR(effective_bitrate_bps(make(7)), 5468.75, 1e-9);
  EXPECT_NEAR(effective_bitrate_bps(make(12)), 292.96875, 1e-9);
  EXPECT_NEAR(effective_bitrate_bps(make(9)), 1757.8125, 1e-9);
}
