// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "taclink/json_io.hpp"
#include "taclink/taclink.hpp"

using namespace taclink;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond) ok = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (cond ? "" : " [x]");
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

linkbudget::LinkParams reference_link() {
  linkbudget::LinkParams p;
  p.tx_power_dbm = 17;
  p.tx_gain_dbi = 2;
  p.rx_gain_dbi = 2;
  p.system_loss_db = 5;
  p.carrier_freq_mhz = 868;
  p.distance_km = 1.5;
  p.rx_sensitivity_dbm = -120;
  return p;
}

Check link_budget() {
  Check c;
  const auto r = linkbudget::evaluate(reference_link(), phy::PhyConfig{});
  c.expect(std::abs(r.path_loss_db - 94.73) <= 0.05, "L_p " + fmt("%.4f", r.path_loss_db) + " dB");
  c.expect(std::abs(r.rx_power_dbm - -78.73) <= 0.05, "P_r " + fmt("%.4f", r.rx_power_dbm) + " dBm");
  c.expect(std::abs(r.link_margin_db - 41.27) <= 0.5 && std::abs(r.link_margin_db - 41.0) <= 0.5,
           "margin " + fmt("%.4f", r.link_margin_db) + " dB");
  return c;
}

Check range() {
  Check c;
  const auto p = reference_link();
  const double at_margin = linkbudget::max_range_km(p, phy::PhyConfig{}, 41.27);
  c.expect(std::abs(at_margin - 1.5) <= 0.001, "range@41.27dB " + fmt("%.6f", at_margin) + " km");
  const double at_zero = linkbudget::max_range_km(p, phy::PhyConfig{}, 0.0);
  c.expect(at_zero > 1.5, "range@0dB " + fmt("%.2f", at_zero) + " km");
  return c;
}

Check latency() {
  Check c;
  for (int sf : {7, 8, 9, 12}) {
    auto s = sim::default_scenario();
    s.phy.spreading_factor = sf;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = sim::run(s).report;
    const double secs = seconds_since(t0);
    const std::string tag = "SF" + std::to_string(sf);
    if (sf == 12)
      c.expect(r.latency_p50_ms > 300.0, tag + " p50 " + fmt("%.1f", r.latency_p50_ms) + " ms");
    else
      c.expect(r.latency_p95_ms <= 300.0 && r.delivered > 0, tag + " p95 " + fmt("%.1f", r.latency_p95_ms) + " ms");
    c.expect(secs < 10.0, tag + " run " + fmt("%.2f", secs) + " s");
  }
  return c;
}

Check endurance() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto base = sim::run(sim::default_scenario()).report;
  c.expect(base.battery_life_h >= 12.0 && base.battery_life_h <= 16.0,
           "life " + fmt("%.2f", base.battery_life_h) + " h");
  c.expect(seconds_since(t0) < 10.0, "run " + fmt("%.2f", seconds_since(t0)) + " s");
  double prev_duty = -1, prev_life = 1e300;
  bool monotone = true;
  for (double talk : {1000.0, 2000.0, 3000.0, 4000.0, 5000.0}) {
    auto s = sim::default_scenario();
    for (auto& sp : s.speech) sp.talk_ms = talk;
    const auto r = sim::run(s).report;
    monotone = monotone && r.duty_cycle_max > prev_duty && r.battery_life_h < prev_life;
    prev_duty = r.duty_cycle_max;
    prev_life = r.battery_life_h;
  }
  c.expect(monotone, "life decreasing in duty cycle");
  return c;
}

Check crypto() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  aes::Key key{};
  for (int i = 0; i < 16; ++i) key[i] = static_cast<std::uint8_t>(i);
  const aes::Block pt = {0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77,
                         0x88, 0x99, 0xaa, 0xbb, 0xcc, 0xdd, 0xee, 0xff};
  const aes::Block mine = aes::Aes128(key).encrypt_block(pt);
  aes::Block ref{};
  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  EVP_EncryptInit_ex(ctx, EVP_aes_128_ecb(), nullptr, key.data(), nullptr);
  EVP_CIPHER_CTX_set_padding(ctx, 0);
  int n = 0;
  EVP_EncryptUpdate(ctx, ref.data(), &n, pt.data(), 16);
  EVP_CIPHER_CTX_free(ctx);
  const aes::Block fips = {0x69, 0xc4, 0xe0, 0xd8, 0x6a, 0x7b, 0x04, 0x30,
                           0xd8, 0xcd, 0xb7, 0x80, 0x70, 0xb4, 0xc5, 0x5a};
  c.expect(mine == ref && mine == fips, "known-answer block");

  std::mt19937_64 gen(20240601);
  const auto skey = pipeline::SessionKey::from_hex("2b7e151628aed2a6abf7158809cf4f3c", gen());
  pipeline::Session session(skey);
  int ok = 0;
  for (int i = 0; i < 10000; ++i) {
    pipeline::AudioFrame f;
    f.seq = static_cast<std::uint16_t>(i);
    f.payload.resize(gen() % (pipeline::kMaxCiphertextBytes + 1));
    for (auto& b : f.payload) b = static_cast<std::uint8_t>(gen());
    const auto got = pipeline::decrypt_packet(pipeline::parse(pipeline::serialize(session.encrypt(f))), skey);
    ok += got.payload == f.payload && got.seq == f.seq;
  }
  c.expect(ok == 10000, std::to_string(ok) + "/10000 round trips");

  pipeline::Session wrap(skey);
  pipeline::AudioFrame f;
  f.payload = {1, 2, 3};
  for (std::uint32_t i = 0; i < 65536; ++i) {
    f.seq = static_cast<std::uint16_t>(i);
    wrap.encrypt(f);
  }
  bool reuse_detected = false;
  try {
    f.seq = 0;
    wrap.encrypt(f);
  } catch (const PacketError& e) {
    reuse_detected = e.code() == PacketErrc::nonce_reuse;
  }
  c.expect(reuse_detected, "nonce reuse at seq wrap");
  c.expect(seconds_since(t0) < 5.0, fmt("%.2f", seconds_since(t0)) + " s");
  return c;
}

Check crc() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  const std::string check = "123456789";
  const std::vector<std::uint8_t> cb(check.begin(), check.end());
  c.expect(crc16(cb) == 0x29B1 && oracle::crc16_bitwise(cb) == 0x29B1, "check value 0x29B1");

  std::mt19937 gen(64);
  const auto key = pipeline::SessionKey::from_hex("000102030405060708090a0b0c0d0e0f", 7);
  std::size_t flips = 0, detected = 0;
  for (int trial = 0; trial < 16; ++trial) {
    pipeline::AudioFrame f;
    f.seq = static_cast<std::uint16_t>(trial);
    f.payload.resize(64 - pipeline::kPacketOverheadBytes);
    for (auto& b : f.payload) b = static_cast<std::uint8_t>(gen());
    const auto wire = pipeline::serialize(pipeline::encrypt_packet(f, key));
    if (wire.size() != 64) {
      c.expect(false, "packet size");
      return c;
    }
    for (std::size_t bit = 0; bit < wire.size() * 8; ++bit) {
      auto w = wire;
      w[bit / 8] ^= static_cast<std::uint8_t>(0x80u >> (bit % 8));
      ++flips;
      try {
        pipeline::decrypt_packet(pipeline::parse(w), key);
      } catch (const PacketError&) {
        ++detected;
      }
    }
    // Raw CRC over 64 arbitrary bytes as well.
    std::vector<std::uint8_t> raw(64);
    for (auto& b : raw) b = static_cast<std::uint8_t>(gen());
    const auto ref = crc16(raw);
    for (std::size_t bit = 0; bit < raw.size() * 8; ++bit) {
      raw[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      ++flips;
      detected += crc16(raw) != ref;
      raw[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    }
  }
  c.expect(detected == flips, std::to_string(detected) + "/" + std::to_string(flips) + " single-bit flips detected");
  c.expect(seconds_since(t0) < 30.0, fmt("%.2f", seconds_since(t0)) + " s");
  return c;
}

Check channel() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  const double sigma = 6.0;
  const int trials = 100000;
  for (double m : {-6.0, 0.0, 6.0}) {
    sim::ChannelModel ch;
    ch.shadowing_sigma_db = sigma;
    ch.link.rx_sensitivity_dbm = linkbudget::received_power_dbm(ch.link) - m;
    Rng root(static_cast<std::uint64_t>(1000 + m));
    int delivered = 0;
    for (int i = 0; i < trials; ++i) {
      Rng r = root.split(static_cast<std::uint64_t>(i));
      delivered += sim::apply_channel(ch, phy::PhyConfig{}, r).outcome == sim::Delivery::delivered;
    }
    const double ratio = static_cast<double>(delivered) / trials;
    const double expected = oracle::normal_cdf(m / sigma);
    c.expect(std::abs(ratio - expected) <= 0.01,
             "m=" + fmt("%+.0f", m) + " " + fmt("%.4f", ratio) + " vs " + fmt("%.4f", expected));
  }
  c.expect(seconds_since(t0) < 30.0, fmt("%.2f", seconds_since(t0)) + " s");
  return c;
}

std::string serialize_run(const sim::Scenario& s) {
  const auto r = sim::run(s);
  std::ostringstream os;
  os << json_io::to_json(r.report).dump() << '\n';
  json_io::write_jsonl(os, r.events);
  return os.str();
}

Check determinism() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<sim::Scenario> cases;
  cases.push_back(sim::default_scenario());
  auto stressed = sim::default_scenario();
  stressed.channel.shadowing_sigma_db = 8;
  stressed.channel.link.system_loss_db = 45;
  stressed.channel.bit_error_rate = 1e-4;
  cases.push_back(stressed);
  auto colliding = sim::default_scenario();
  colliding.duration_s = 60;
  for (auto& sp : colliding.speech) sp.offset_ms = sp.jitter_ms = 0;
  cases.push_back(colliding);

  bool identical = true, partition = true, eq_sum = true, accum = true;
  std::size_t delivered = 0;
  for (const auto& s : cases) {
    identical = identical && serialize_run(s) == serialize_run(s);
    const auto r = sim::run(s).report;
    partition = partition && r.delivered + r.lost_channel + r.lost_collision + r.lost_crc == r.packets_sent &&
                r.packets.size() == r.packets_sent;
    for (const auto& p : r.packets) {
      if (p.disposition != sim::Disposition::delivered) continue;
      ++delivered;
      eq_sum = eq_sum && p.t_total == p.sum_of_components();
    }
    for (const auto& n : r.nodes) accum = accum && n.tx_us + n.listen_us + n.sleep_us == n.elapsed_us;
  }
  c.expect(identical, "byte-identical reruns");
  c.expect(partition, "dispositions partition packets_sent");
  c.expect(eq_sum && delivered > 0, "latency sum identity over " + std::to_string(delivered) + " packets");
  c.expect(accum, "accumulators sum to elapsed");
  c.expect(seconds_since(t0) < 60.0, fmt("%.2f", seconds_since(t0)) + " s");
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Check()>>> criteria = {
      {"1 link-budget reproduction", link_budget},
      {"2 range feasibility", range},
      {"3 latency by spreading factor", latency},
      {"4 endurance", endurance},
      {"5 crypto correctness", crypto},
      {"6 crc correctness", crc},
      {"7 channel statistics", channel},
      {"8 determinism and conservation", determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Check c;
    try {
      c = fn();
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = std::string("exception: ") + e.what();
    }
    std::cout << (c.ok ? "PASS " : "FAIL ") << name << ": " << c.detail << std::endl;
    failed += !c.ok;
  }
  return failed == 0 ? 0 : 1;
}
