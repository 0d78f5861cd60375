#pragma once

// Command-line front end. `dispatch` is the whole program minus main(), so
// tests can drive it in-process.
//
// Exit status: 0 success, 1 runtime failure, 2 configuration/usage error.

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "taclink/energy.hpp"
#include "taclink/error.hpp"
#include "taclink/json_io.hpp"
#include "taclink/linkbudget.hpp"
#include "taclink/phy.hpp"
#include "taclink/pipeline.hpp"
#include "taclink/sim.hpp"
#include "taclink/trace.hpp"

namespace taclink::cli {

using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

inline constexpr const char* kKeyEnv = "TACLINK_KEY";

/// Environment lookup, injectable for tests.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Reference reproduction of the 868 MHz / 1.5 km worked example.

struct ReproRow {
  std::string quantity;
  std::string unit;
  double computed = 0;
  double reference = 0;
  double tolerance = 0;
  bool pass = false;
};

inline linkbudget::LinkParams reference_link() {
  linkbudget::LinkParams p;
  p.tx_power_dbm = 17.0;
  p.tx_gain_dbi = 2.0;
  p.rx_gain_dbi = 2.0;
  p.system_loss_db = 5.0;
  p.carrier_freq_mhz = 868.0;
  p.distance_km = 1.5;
  p.rx_sensitivity_dbm = -120.0;
  return p;
}

inline std::vector<ReproRow> reference_repro() {
  const auto p = reference_link();
  const auto r = linkbudget::evaluate(p, phy::PhyConfig{});
  std::vector<ReproRow> rows = {
      {"path_loss", "dB", r.path_loss_db, 94.73, 0.05, false},
      {"rx_power", "dBm", r.rx_power_dbm, -78.73, 0.05, false},
      {"link_margin", "dB", r.link_margin_db, 41.0, 0.5, false},
  };
  for (auto& row : rows) row.pass = std::abs(row.computed - row.reference) <= row.tolerance;
  return rows;
}

// ---------------------------------------------------------------------------

namespace detail {

inline json read_json_file(const std::string& path, const std::string& field) {
  std::ifstream in(path);
  if (!in) throw ConfigError(field, "cannot open " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError(field, std::string("invalid JSON: ") + e.what());
  }
}

inline sim::Scenario load_scenario(const std::string& path) {
  return json_io::scenario_from_json(read_json_file(path, "scenario"));
}

template <typename T>
T require(const std::optional<T>& v, const std::string& field) {
  if (!v) throw ConfigError(field, "required but not provided");
  return *v;
}

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  for (auto b : bytes) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 0xF]);
  }
  return s;
}

inline std::vector<std::uint8_t> from_hex(const std::string& hex, const std::string& field) {
  if (hex.size() % 2) throw ConfigError(field, "odd number of hex digits");
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    unsigned v = 0;
    auto res = std::from_chars(hex.data() + i, hex.data() + i + 2, v, 16);
    if (res.ec != std::errc{} || res.ptr != hex.data() + i + 2) throw ConfigError(field, "invalid hex");
    out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

inline pipeline::SessionKey load_key(const std::optional<std::string>& key_file, const EnvLookup& env,
                                     std::uint64_t salt) {
  if (key_file) {
    std::ifstream in(*key_file);
    if (!in) throw ConfigError("key", "cannot open key file " + *key_file);
    std::string hex;
    std::getline(in, hex);
    return pipeline::SessionKey::from_hex(trim(hex), salt);
  }
  if (auto v = env(kKeyEnv)) return pipeline::SessionKey::from_hex(trim(*v), salt);
  throw ConfigError("key", std::string("set ") + kKeyEnv + " or pass --key-file");
}

inline std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("values", "not a number: " + item);
    }
  }
  if (out.empty()) throw ConfigError("values", "no values given");
  return out;
}

inline void emit(std::ostream& out, const json& j) { out << j.dump(2) << '\n'; }

}  // namespace detail

/// Runs the CLI. `argv[0]` is the program name.
inline int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
                    const EnvLookup& env = process_env) {
  CLI::App app{"LoRa secure-voice link engineering and simulation toolkit", "taclink"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  // link-budget
  auto* lb = app.add_subcommand("link-budget", "Free-space link budget and margin");
  std::optional<double> lb_distance, lb_freq, lb_tx, lb_txg, lb_rxg, lb_loss, lb_sens;
  std::optional<std::string> lb_scenario;
  int lb_sf = 7;
  std::uint32_t lb_bw = 125000;
  double lb_threshold = 0.0;
  bool lb_override = false, lb_max_range = false;
  lb->add_option("--distance-km", lb_distance, "Link distance (km)");
  lb->add_option("--freq-mhz", lb_freq, "Carrier frequency (MHz)");
  lb->add_option("--tx-dbm", lb_tx, "Transmit power (dBm)");
  lb->add_option("--tx-gain", lb_txg, "Transmit antenna gain (dBi)");
  lb->add_option("--rx-gain", lb_rxg, "Receive antenna gain (dBi)");
  lb->add_option("--loss-db", lb_loss, "System losses (dB)");
  lb->add_option("--sensitivity", lb_sens, "Receiver sensitivity (dBm); default: table value for --sf/--bw");
  lb->add_option("--sf", lb_sf, "Spreading factor for the sensitivity table");
  lb->add_option("--bw", lb_bw, "Bandwidth (Hz) for the sensitivity table");
  lb->add_option("--margin-threshold", lb_threshold, "Margin required for feasibility (dB)");
  lb->add_option("--scenario", lb_scenario, "Scenario JSON supplying channel.link and phy");
  lb->add_flag("--allow-out-of-envelope", lb_override, "Permit transmit power outside [0, 30] dBm");
  lb->add_flag("--max-range", lb_max_range, "Also report the maximum range at the margin threshold");

  // airtime
  auto* at = app.add_subcommand("airtime", "LoRa time-on-air");
  phy::PhyConfig at_phy;
  std::optional<std::size_t> at_payload;
  bool at_implicit = false, at_no_crc = false, at_sweep = false;
  std::string at_ldro = "auto", at_format = "json";
  at->add_option("--sf", at_phy.spreading_factor, "Spreading factor (7-12)");
  at->add_option("--bw", at_phy.bandwidth_hz, "Bandwidth in Hz (125000|250000|500000)");
  at->add_option("--cr", at_phy.coding_rate_denominator, "Coding rate denominator (5-8)");
  at->add_option("--payload", at_payload, "Payload bytes (0-255)");
  at->add_option("--preamble", at_phy.preamble_symbols, "Preamble symbols");
  at->add_flag("--implicit-header", at_implicit, "Implicit header mode");
  at->add_flag("--no-crc", at_no_crc, "Disable payload CRC");
  at->add_option("--ldro", at_ldro, "Low-data-rate optimisation: auto|on|off")
      ->check(CLI::IsMember({"auto", "on", "off"}));
  at->add_flag("--sweep", at_sweep, "Tabulate SF7-SF12 instead of a single SF");
  at->add_option("--format", at_format, "json|csv")->check(CLI::IsMember({"json", "csv"}));

  // energy
  auto* en = app.add_subcommand("energy", "Average power and battery life");
  std::optional<double> en_duty;
  std::optional<std::string> en_events, en_scenario;
  energy::PowerProfile en_profile;
  en->add_option("--duty-cycle", en_duty, "Transmit duty cycle D in [0, 1]");
  en->add_option("--events", en_events, "Event log (JSON Lines) from simulate --events");
  en->add_option("--scenario", en_scenario, "Scenario JSON supplying the power profile");
  auto* o_ptx = en->add_option("--p-tx-mw", en_profile.p_tx_mw, "Transmit power draw (mW)");
  auto* o_pl = en->add_option("--p-listen-mw", en_profile.p_listen_mw, "Listen power draw (mW)");
  auto* o_ps = en->add_option("--p-sleep-mw", en_profile.p_sleep_mw, "Sleep power draw (mW)");
  auto* o_cap = en->add_option("--battery-capacity-mah", en_profile.battery_capacity_mah, "Battery capacity (mAh)");
  auto* o_v = en->add_option("--battery-voltage-v", en_profile.battery_voltage_v, "Battery voltage (V)");

  // packet
  auto* pk = app.add_subcommand("packet", "Encode/decode VoicePacket hex dumps");
  pk->require_subcommand(1);
  std::optional<std::string> pk_key_file;
  auto* pk_enc = pk->add_subcommand("encode", "Encrypt and frame a payload");
  std::uint16_t pk_seq = 0;
  std::uint64_t pk_salt = 0;
  std::string pk_payload;
  pk_enc->add_option("--seq", pk_seq, "Sequence number")->required();
  pk_enc->add_option("--salt", pk_salt, "64-bit session salt");
  pk_enc->add_option("--payload-hex", pk_payload, "Plaintext payload as hex")->required();
  pk_enc->add_option("--key-file", pk_key_file, "File holding the 32-hex-char key (default: $TACLINK_KEY)");
  auto* pk_dec = pk->add_subcommand("decode", "Parse, CRC-check and decrypt a packet");
  std::string pk_hex;
  pk_dec->add_option("--hex", pk_hex, "Serialized packet as hex")->required();
  pk_dec->add_option("--key-file", pk_key_file, "File holding the 32-hex-char key (default: $TACLINK_KEY)");

  // simulate
  auto* sm = app.add_subcommand("simulate", "Run the two-node simulation");
  std::optional<std::string> sm_scenario, sm_events;
  std::optional<std::uint64_t> sm_seed;
  std::string sm_format = "json";
  bool sm_no_packets = false;
  sm->add_option("--scenario", sm_scenario, "Scenario JSON");
  sm->add_option("--seed", sm_seed, "Override scenario seed and channel RNG seed");
  sm->add_option("--events", sm_events, "Write the MAC event log as JSON Lines to this path");
  sm->add_option("--format", sm_format, "json|text")->check(CLI::IsMember({"json", "text"}));
  sm->add_flag("--no-packets", sm_no_packets, "Omit per-packet records from the JSON report");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Parameter sweep, one run per value, CSV output");
  std::optional<std::string> sw_scenario, sw_axis, sw_values;
  std::optional<std::uint64_t> sw_seed;
  sw->add_option("--scenario", sw_scenario, "Scenario JSON");
  sw->add_option("--axis", sw_axis, "sf|distance|tx_power|payload");
  sw->add_option("--values", sw_values, "Comma-separated axis values");
  sw->add_option("--seed", sw_seed, "Override scenario seed and channel RNG seed");

  // worked-example reproduction
  auto* pr = app.add_subcommand("paper-repro", "Reproduce the 868 MHz / 1.5 km link-budget worked example");
  std::string pr_format = "text";
  pr->add_option("--format", pr_format, "text|json")->check(CLI::IsMember({"text", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    if (*lb) {
      linkbudget::LinkParams p;
      phy::PhyConfig cfg;
      bool from_file = false;
      if (lb_scenario) {
        const auto s = detail::load_scenario(*lb_scenario);
        p = s.channel.link;
        cfg = s.phy;
        from_file = true;
      }
      cfg.spreading_factor = lb->count("--sf") ? lb_sf : cfg.spreading_factor;
      cfg.bandwidth_hz = lb->count("--bw") ? lb_bw : cfg.bandwidth_hz;
      auto pick = [&](const std::optional<double>& flag, double& field, const char* name) {
        if (flag) field = *flag;
        else if (!from_file) throw ConfigError(name, "required but not provided");
      };
      pick(lb_distance, p.distance_km, "distance_km");
      pick(lb_freq, p.carrier_freq_mhz, "carrier_freq_mhz");
      pick(lb_tx, p.tx_power_dbm, "tx_power_dbm");
      pick(lb_txg, p.tx_gain_dbi, "tx_gain_dbi");
      pick(lb_rxg, p.rx_gain_dbi, "rx_gain_dbi");
      pick(lb_loss, p.system_loss_db, "system_loss_db");
      if (lb_sens) p.rx_sensitivity_dbm = *lb_sens;
      if (lb_override) p.allow_out_of_envelope = true;
      try {
        linkbudget::validate(p);
      } catch (const DomainError& e) {
        throw ConfigError("link", e.what());
      }
      json j = json_io::to_json(linkbudget::evaluate(p, cfg, lb_threshold));
      if (lb_max_range) j["max_range_km"] = linkbudget::max_range_km(p, cfg, lb_threshold);
      detail::emit(out, j);
      return kExitOk;
    }

    if (*at) {
      at_phy.explicit_header = !at_implicit;
      at_phy.crc_on = !at_no_crc;
      if (at_ldro != "auto") at_phy.low_data_rate_optimize = at_ldro == "on";
      const std::size_t payload = detail::require(at_payload, "payload");
      if (payload > phy::kMaxPayloadBytes) throw ConfigError("payload", "must be <= 255 bytes");
      phy::validate(at_phy);
      std::vector<int> sfs;
      if (at_sweep) sfs = {7, 8, 9, 10, 11, 12};
      else sfs = {at_phy.spreading_factor};
      if (at_format == "csv") {
        out << "spreading_factor,bandwidth_hz,coding_rate_denominator,payload_bytes,symbol_time_ms,preamble_ms,"
               "payload_symbols,payload_ms,total_ms,effective_bitrate_bps\n";
        out << std::setprecision(10);
        for (int sf : sfs) {
          auto c = at_phy;
          c.spreading_factor = sf;
          const auto a = phy::time_on_air(c, payload);
          out << sf << ',' << c.bandwidth_hz << ',' << c.coding_rate_denominator << ',' << payload << ','
              << a.symbol_time_ms << ',' << a.preamble_ms << ',' << a.payload_symbols << ',' << a.payload_ms << ','
              << a.total_ms << ',' << phy::effective_bitrate_bps(c) << '\n';
        }
      } else if (at_sweep) {
        json arr = json::array();
        for (int sf : sfs) {
          auto c = at_phy;
          c.spreading_factor = sf;
          json j = json_io::to_json(phy::time_on_air(c, payload));
          j["spreading_factor"] = sf;
          arr.push_back(j);
        }
        detail::emit(out, arr);
      } else {
        detail::emit(out, json_io::to_json(phy::time_on_air(at_phy, payload)));
      }
      return kExitOk;
    }

    if (*en) {
      energy::PowerProfile prof;
      if (en_scenario) prof = detail::load_scenario(*en_scenario).power;
      if (*o_ptx) prof.p_tx_mw = en_profile.p_tx_mw;
      if (*o_pl) prof.p_listen_mw = en_profile.p_listen_mw;
      if (*o_ps) prof.p_sleep_mw = en_profile.p_sleep_mw;
      if (*o_cap) prof.battery_capacity_mah = en_profile.battery_capacity_mah;
      if (*o_v) prof.battery_voltage_v = en_profile.battery_voltage_v;
      energy::validate(prof);
      if (en_duty.has_value() == en_events.has_value())
        throw ConfigError("duty_cycle", "give exactly one of --duty-cycle or --events");
      if (en_duty) {
        if (!(*en_duty >= 0 && *en_duty <= 1)) throw ConfigError("duty_cycle", "must be in [0, 1]");
        const double p = energy::average_power_mw(*en_duty, prof);
        detail::emit(out, {{"duty_cycle", *en_duty},
                           {"avg_power_mw", p},
                           {"battery_life_hours", energy::battery_life_hours(p, prof)}});
        return kExitOk;
      }
      std::ifstream in(*en_events);
      if (!in) throw ConfigError("events", "cannot open " + *en_events);
      const auto events = json_io::read_jsonl(in);
      const auto states = trace::integrate_states(events);
      if (states.empty()) throw ConfigError("events", "no events");
      json nodes = json::array();
      double worst = -1;
      for (const auto& [node, t] : states) {
        const double p = t.average_power_mw(prof);
        nodes.push_back({{"node", node},
                         {"duty_cycle", t.duty_cycle()},
                         {"avg_power_mw", p},
                         {"battery_life_hours", energy::battery_life_hours(p, prof)}});
        worst = std::max(worst, p);
      }
      detail::emit(out, {{"avg_power_mw", worst},
                         {"battery_life_hours", energy::battery_life_hours(worst, prof)},
                         {"nodes", nodes}});
      return kExitOk;
    }

    if (*pk) {
      if (*pk_enc) {
        const auto key = detail::load_key(pk_key_file, env, pk_salt);
        pipeline::AudioFrame f;
        f.seq = pk_seq;
        f.payload = detail::from_hex(pk_payload, "payload_hex");
        f.payload_bits = static_cast<std::uint32_t>(f.payload.size() * 8);
        const auto pkt = pipeline::encrypt_packet(f, key);
        const auto bytes = pipeline::serialize(pkt);
        detail::emit(out, {{"hex", detail::to_hex(bytes)}, {"length", bytes.size()}, {"crc16", pkt.crc16}});
        return kExitOk;
      }
      const auto key = detail::load_key(pk_key_file, env, 0);
      const auto bytes = detail::from_hex(pk_hex, "hex");
      const auto pkt = pipeline::parse(bytes);
      const auto frame = pipeline::decrypt_packet(pkt, key);
      detail::emit(out, {{"version", pkt.version},
                         {"flags", pkt.flags},
                         {"seq", pkt.seq},
                         {"nonce_hex", detail::to_hex(pkt.nonce)},
                         {"crc16", pkt.crc16},
                         {"payload_hex", detail::to_hex(frame.payload)}});
      return kExitOk;
    }

    if (*sm) {
      auto s = detail::load_scenario(detail::require(sm_scenario, "scenario"));
      if (sm_seed) s.seed = s.channel.rng_seed = *sm_seed;
      const auto result = sim::run(s);
      if (sm_events) {
        std::ofstream ev(*sm_events);
        if (!ev) throw ConfigError("events", "cannot write " + *sm_events);
        json_io::write_jsonl(ev, result.events);
      }
      const auto& r = result.report;
      if (sm_format == "text") {
        out << std::fixed << std::setprecision(2);
        out << "packets sent " << r.packets_sent << ", delivered " << r.delivered << ", lost channel "
            << r.lost_channel << ", collision " << r.lost_collision << ", crc " << r.lost_crc << ", queue drops "
            << r.frames_dropped << '\n';
        out << "latency p50 " << r.latency_p50_ms << " ms, p95 " << r.latency_p95_ms << " ms, max "
            << r.latency_max_ms << " ms\n";
        for (const auto& n : r.nodes)
          out << "node " << n.node_id << ": duty cycle " << n.duty_cycle << ", " << n.avg_power_mw << " mW, "
              << n.battery_life_h << " h\n";
        if (!r.throughput_sustainable)
          out << "warning: codec bitrate " << r.codec_bitrate_bps << " bps exceeds modem bitrate "
              << r.modem_bitrate_bps << " bps\n";
      } else {
        detail::emit(out, json_io::to_json(r, !sm_no_packets));
      }
      return kExitOk;
    }

    if (*sw) {
      auto s = detail::load_scenario(detail::require(sw_scenario, "scenario"));
      if (sw_seed) s.seed = s.channel.rng_seed = *sw_seed;
      const auto axis_name = detail::require(sw_axis, "axis");
      const auto axis = sim::sweep_axis_from_string(axis_name);
      if (!axis) throw ConfigError("axis", "unknown axis " + axis_name);
      const auto values = detail::parse_values(detail::require(sw_values, "values"));
      json_io::write_sweep_csv(out, *axis, sim::sweep(s, *axis, values));
      return kExitOk;
    }

    if (*pr) {
      const auto rows = reference_repro();
      bool all = true;
      for (const auto& r : rows) all = all && r.pass;
      if (pr_format == "json") {
        json arr = json::array();
        for (const auto& r : rows)
          arr.push_back({{"quantity", r.quantity},
                         {"unit", r.unit},
                         {"computed", r.computed},
                         {"reference", r.reference},
                         {"tolerance", r.tolerance},
                         {"pass", r.pass}});
        detail::emit(out, {{"rows", arr}, {"pass", all}});
      } else {
        out << std::fixed << std::setprecision(2);
        for (const auto& r : rows)
          out << std::left << std::setw(12) << r.quantity << std::right << std::setw(9) << r.computed << ' '
              << std::left << std::setw(4) << r.unit << " reference " << std::right << std::setw(7) << r.reference
              << " +/-" << r.tolerance << "  " << (r.pass ? "PASS" : "FAIL") << '\n';
      }
      return all ? kExitOk : kExitRuntime;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const PacketError& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace taclink::cli
