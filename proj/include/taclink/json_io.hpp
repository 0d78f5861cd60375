#pragma once

// JSON encodings: scenario documents (schema_version 1), reports, and MAC
// event logs as JSON Lines. Unknown scenario keys are rejected so typos
// surface as configuration errors naming the field.

#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "taclink/error.hpp"
#include "taclink/linkbudget.hpp"
#include "taclink/mac.hpp"
#include "taclink/phy.hpp"
#include "taclink/sim.hpp"

namespace taclink::json_io {

using nlohmann::json;

namespace detail {

class Reader {
public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field(key), "wrong type");
    }
  }

  template <typename T>
  void get_optional(const char* key, std::optional<T>& out) {
    seen_.push_back(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (it->is_null()) {
      out.reset();
      return;
    }
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field(key), "wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.push_back(key);
    auto it = obj_.find(key);
    return it == obj_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void reject_unknown() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
        throw ConfigError(field(it.key()), "unknown key");
  }

private:
  const json& obj_;
  std::string path_;
  std::vector<std::string> seen_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Parameters

inline json to_json(const phy::PhyConfig& p) {
  return {{"spreading_factor", p.spreading_factor},
          {"bandwidth_hz", p.bandwidth_hz},
          {"coding_rate_denominator", p.coding_rate_denominator},
          {"preamble_symbols", p.preamble_symbols},
          {"explicit_header", p.explicit_header},
          {"crc_on", p.crc_on},
          {"low_data_rate_optimize", p.low_data_rate_optimize ? json(*p.low_data_rate_optimize) : json(nullptr)}};
}

inline void read_into(const json& j, const std::string& path, phy::PhyConfig& p) {
  detail::Reader r(j, path);
  r.get("spreading_factor", p.spreading_factor);
  r.get("bandwidth_hz", p.bandwidth_hz);
  r.get("coding_rate_denominator", p.coding_rate_denominator);
  r.get("preamble_symbols", p.preamble_symbols);
  r.get("explicit_header", p.explicit_header);
  r.get("crc_on", p.crc_on);
  r.get_optional("low_data_rate_optimize", p.low_data_rate_optimize);
  r.reject_unknown();
}

inline json to_json(const linkbudget::LinkParams& p) {
  return {{"tx_power_dbm", p.tx_power_dbm},
          {"tx_gain_dbi", p.tx_gain_dbi},
          {"rx_gain_dbi", p.rx_gain_dbi},
          {"system_loss_db", p.system_loss_db},
          {"carrier_freq_mhz", p.carrier_freq_mhz},
          {"distance_km", p.distance_km},
          {"rx_sensitivity_dbm", p.rx_sensitivity_dbm ? json(*p.rx_sensitivity_dbm) : json(nullptr)},
          {"allow_out_of_envelope", p.allow_out_of_envelope}};
}

inline void read_into(const json& j, const std::string& path, linkbudget::LinkParams& p) {
  detail::Reader r(j, path);
  r.get("tx_power_dbm", p.tx_power_dbm);
  r.get("tx_gain_dbi", p.tx_gain_dbi);
  r.get("rx_gain_dbi", p.rx_gain_dbi);
  r.get("system_loss_db", p.system_loss_db);
  r.get("carrier_freq_mhz", p.carrier_freq_mhz);
  r.get("distance_km", p.distance_km);
  r.get_optional("rx_sensitivity_dbm", p.rx_sensitivity_dbm);
  r.get("allow_out_of_envelope", p.allow_out_of_envelope);
  r.reject_unknown();
}

inline json to_json(const energy::PowerProfile& p) {
  return {{"p_tx_mw", p.p_tx_mw},
          {"p_listen_mw", p.p_listen_mw},
          {"p_sleep_mw", p.p_sleep_mw},
          {"battery_capacity_mah", p.battery_capacity_mah},
          {"battery_voltage_v", p.battery_voltage_v}};
}

inline void read_into(const json& j, const std::string& path, energy::PowerProfile& p) {
  detail::Reader r(j, path);
  r.get("p_tx_mw", p.p_tx_mw);
  r.get("p_listen_mw", p.p_listen_mw);
  r.get("p_sleep_mw", p.p_sleep_mw);
  r.get("battery_capacity_mah", p.battery_capacity_mah);
  r.get("battery_voltage_v", p.battery_voltage_v);
  r.reject_unknown();
}

inline json to_json(const phy::AirtimeBreakdown& a) {
  return {{"symbol_time_ms", a.symbol_time_ms},
          {"preamble_ms", a.preamble_ms},
          {"payload_symbols", a.payload_symbols},
          {"payload_ms", a.payload_ms},
          {"total_ms", a.total_ms}};
}

inline json to_json(const linkbudget::BudgetResult& b) {
  return {{"path_loss_db", b.path_loss_db},
          {"rx_power_dbm", b.rx_power_dbm},
          {"link_margin_db", b.link_margin_db},
          {"feasible", b.feasible}};
}

// ---------------------------------------------------------------------------
// Scenario

inline json to_json(const sim::Scenario& s) {
  json speech = json::array();
  for (const auto& sp : s.speech)
    speech.push_back(
        {{"talk_ms", sp.talk_ms}, {"silence_ms", sp.silence_ms}, {"offset_ms", sp.offset_ms}, {"jitter_ms", sp.jitter_ms}});
  json table = json::array();
  for (const auto& [k, dbm] : s.sensitivity.rows())
    table.push_back({{"spreading_factor", k.first}, {"bandwidth_hz", k.second}, {"sensitivity_dbm", dbm}});
  return {
      {"schema_version", sim::kSchemaVersion},
      {"duration_s", s.duration_s},
      {"seed", s.seed},
      {"phy", to_json(s.phy)},
      {"vox", {{"threshold", s.vox.threshold}, {"hangover_ms", s.vox.hangover_ms}}},
      {"vox_sample_ms", s.vox_sample_ms},
      {"codec",
       {{"bitrate_bps", s.codec.bitrate_bps},
        {"frame_ms", s.codec.frame_ms},
        {"encode_delay_ms", s.codec.encode_delay_ms},
        {"decode_delay_ms", s.codec.decode_delay_ms},
        {"encrypt_delay_ms", s.codec.encrypt_delay_ms},
        {"decrypt_delay_ms", s.codec.decrypt_delay_ms}}},
      {"mcu", {{"throughput_bps", s.mcu.throughput_bps}, {"scheduling_overhead_ms", s.mcu.scheduling_overhead_ms}}},
      {"mac",
       {{"carrier_sense_ms", mac::ticks_to_ms(s.mac.carrier_sense)},
        {"idle_timeout_ms", mac::ticks_to_ms(s.mac.idle_timeout)},
        {"queue_capacity", s.mac.queue_capacity}}},
      {"power", to_json(s.power)},
      {"channel",
       {{"link", to_json(s.channel.link)},
        {"shadowing_sigma_db", s.channel.shadowing_sigma_db},
        {"rng_seed", s.channel.rng_seed},
        {"bit_error_rate", s.channel.bit_error_rate}}},
      {"sensitivity_table", table},
      {"speech", speech},
      {"key_hex", s.key_hex},
      {"strict_throughput", s.strict_throughput},
  };
}

/// Reads a scenario document; absent keys keep their defaults.
inline sim::Scenario scenario_from_json(const json& j) {
  sim::Scenario s;
  detail::Reader r(j, "");
  int version = sim::kSchemaVersion;
  r.get("schema_version", version);
  if (version != sim::kSchemaVersion)
    throw ConfigError("schema_version", "unsupported version " + std::to_string(version));
  r.get("duration_s", s.duration_s);
  r.get("seed", s.seed);
  if (auto* c = r.child("phy")) read_into(*c, "phy", s.phy);
  if (auto* c = r.child("vox")) {
    detail::Reader v(*c, "vox");
    v.get("threshold", s.vox.threshold);
    v.get("hangover_ms", s.vox.hangover_ms);
    v.reject_unknown();
  }
  r.get("vox_sample_ms", s.vox_sample_ms);
  if (auto* c = r.child("codec")) {
    detail::Reader v(*c, "codec");
    v.get("bitrate_bps", s.codec.bitrate_bps);
    v.get("frame_ms", s.codec.frame_ms);
    v.get("encode_delay_ms", s.codec.encode_delay_ms);
    v.get("decode_delay_ms", s.codec.decode_delay_ms);
    v.get("encrypt_delay_ms", s.codec.encrypt_delay_ms);
    v.get("decrypt_delay_ms", s.codec.decrypt_delay_ms);
    v.reject_unknown();
  }
  if (auto* c = r.child("mcu")) {
    detail::Reader v(*c, "mcu");
    v.get("throughput_bps", s.mcu.throughput_bps);
    v.get("scheduling_overhead_ms", s.mcu.scheduling_overhead_ms);
    v.reject_unknown();
  }
  if (auto* c = r.child("mac")) {
    detail::Reader v(*c, "mac");
    double cs = mac::ticks_to_ms(s.mac.carrier_sense), idle = mac::ticks_to_ms(s.mac.idle_timeout);
    v.get("carrier_sense_ms", cs);
    v.get("idle_timeout_ms", idle);
    v.get("queue_capacity", s.mac.queue_capacity);
    v.reject_unknown();
    s.mac.carrier_sense = mac::ms_to_ticks(cs);
    s.mac.idle_timeout = mac::ms_to_ticks(idle);
  }
  if (auto* c = r.child("power")) read_into(*c, "power", s.power);
  if (auto* c = r.child("channel")) {
    detail::Reader v(*c, "channel");
    if (auto* l = v.child("link")) read_into(*l, "channel.link", s.channel.link);
    v.get("shadowing_sigma_db", s.channel.shadowing_sigma_db);
    v.get("rng_seed", s.channel.rng_seed);
    v.get("bit_error_rate", s.channel.bit_error_rate);
    v.reject_unknown();
  }
  if (auto* c = r.child("sensitivity_table")) {
    if (!c->is_array()) throw ConfigError("sensitivity_table", "expected an array");
    linkbudget::SensitivityTable t;
    for (std::size_t i = 0; i < c->size(); ++i) {
      const std::string path = "sensitivity_table[" + std::to_string(i) + "]";
      detail::Reader v((*c)[i], path);
      int sf = 0;
      std::uint32_t bw = 0;
      std::optional<double> dbm;
      v.get("spreading_factor", sf);
      v.get("bandwidth_hz", bw);
      v.get_optional("sensitivity_dbm", dbm);
      v.reject_unknown();
      if (!dbm) throw ConfigError(path + ".sensitivity_dbm", "required");
      t.set(sf, bw, *dbm);
    }
    s.sensitivity = t;
  }
  if (auto* c = r.child("speech")) {
    if (!c->is_array() || c->size() != sim::kNodeCount) throw ConfigError("speech", "expected an array of 2 patterns");
    for (std::size_t i = 0; i < c->size(); ++i) {
      detail::Reader v((*c)[i], "speech[" + std::to_string(i) + "]");
      v.get("talk_ms", s.speech[i].talk_ms);
      v.get("silence_ms", s.speech[i].silence_ms);
      v.get("offset_ms", s.speech[i].offset_ms);
      v.get("jitter_ms", s.speech[i].jitter_ms);
      v.reject_unknown();
    }
  }
  r.get("key_hex", s.key_hex);
  r.get("strict_throughput", s.strict_throughput);
  r.reject_unknown();
  return s;
}

inline sim::Scenario scenario_from_stream(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("<scenario>", std::string("invalid JSON: ") + e.what());
  }
  return scenario_from_json(j);
}

// ---------------------------------------------------------------------------
// Report

inline json to_json(const sim::PacketRecord& p) {
  return {{"packet_id", p.packet_id},
          {"src", p.src},
          {"seq", p.seq},
          {"bytes", p.bytes},
          {"tx_start_ms", p.tx_start_ms},
          {"disposition", sim::to_string(p.disposition)},
          {"rx_power_dbm", p.rx_power_dbm},
          {"margin_db", p.margin_db},
          {"t_encoding", p.t_encoding},
          {"t_encryption", p.t_encryption},
          {"t_packetization", p.t_packetization},
          {"t_airtime", p.t_airtime},
          {"t_decoding", p.t_decoding},
          {"t_total", p.t_total},
          {"queue_wait_ms", p.queue_wait_ms}};
}

inline json to_json(const sim::SimReport& r, bool include_packets = true) {
  json nodes = json::array();
  for (const auto& n : r.nodes)
    nodes.push_back({{"node_id", n.node_id},
                     {"tx_us", n.tx_us},
                     {"listen_us", n.listen_us},
                     {"sleep_us", n.sleep_us},
                     {"elapsed_us", n.elapsed_us},
                     {"duty_cycle", n.duty_cycle},
                     {"avg_power_mw", n.avg_power_mw},
                     {"avg_power_two_state_mw", n.avg_power_two_state_mw},
                     {"battery_life_h", n.battery_life_h},
                     {"frames_encoded", n.frames_encoded},
                     {"frames_dropped", n.frames_dropped},
                     {"session_rekeys", n.session_rekeys}});
  json out = {{"packets_sent", r.packets_sent},
              {"delivered", r.delivered},
              {"lost_channel", r.lost_channel},
              {"lost_collision", r.lost_collision},
              {"lost_crc", r.lost_crc},
              {"frames_dropped", r.frames_dropped},
              {"elapsed_ms", r.elapsed_ms},
              {"latency_p50_ms", r.latency_p50_ms},
              {"latency_p95_ms", r.latency_p95_ms},
              {"latency_max_ms", r.latency_max_ms},
              {"duty_cycle_max", r.duty_cycle_max},
              {"avg_power_mw", r.avg_power_mw},
              {"battery_life_h", r.battery_life_h},
              {"codec_bitrate_bps", r.codec_bitrate_bps},
              {"modem_bitrate_bps", r.modem_bitrate_bps},
              {"throughput_sustainable", r.throughput_sustainable},
              {"nodes", nodes}};
  if (include_packets) {
    json packets = json::array();
    for (const auto& p : r.packets) packets.push_back(to_json(p));
    out["packets"] = packets;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Events

inline json to_json(const mac::MacEvent& e) {
  return {{"time_us", e.time},
          {"node", e.node},
          {"kind", mac::to_string(e.kind)},
          {"packet", e.packet ? json(*e.packet) : json(nullptr)}};
}

inline void write_jsonl(std::ostream& out, const std::vector<mac::MacEvent>& events) {
  for (const auto& e : events) out << to_json(e).dump() << '\n';
}

inline std::vector<mac::MacEvent> read_jsonl(std::istream& in) {
  std::vector<mac::MacEvent> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "events line " + std::to_string(lineno);
    try {
      const json j = json::parse(line);
      mac::MacEvent e;
      e.time = j.at("time_us").get<mac::Ticks>();
      e.node = j.at("node").get<int>();
      const auto kind = mac::event_kind_from_string(j.at("kind").get<std::string>());
      if (!kind) throw ConfigError(where, "unknown event kind");
      e.kind = *kind;
      if (j.contains("packet") && !j.at("packet").is_null()) e.packet = j.at("packet").get<std::uint32_t>();
      events.push_back(e);
    } catch (const json::exception& ex) {
      throw ConfigError(where, ex.what());
    }
  }
  return events;
}

// ---------------------------------------------------------------------------
// Sweep CSV

inline void write_sweep_csv(std::ostream& out, sim::SweepAxis axis, const std::vector<sim::SweepRow>& rows) {
  out << "axis,value,packets_sent,delivered,lost_channel,lost_collision,lost_crc,delivery_ratio,"
         "latency_p50_ms,latency_p95_ms,airtime_p50_ms,mean_margin_db,duty_cycle_max,avg_power_mw,battery_life_h\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    std::vector<double> air;
    double margin_sum = 0;
    for (const auto& p : r.packets) {
      air.push_back(p.t_airtime);
      margin_sum += p.margin_db;
    }
    std::sort(air.begin(), air.end());
    const double ratio = r.packets_sent ? static_cast<double>(r.delivered) / r.packets_sent : 0.0;
    const double mean_margin = r.packets.empty() ? 0.0 : margin_sum / static_cast<double>(r.packets.size());
    std::ostringstream line;
    line.precision(10);
    line << sim::to_string(axis) << ',' << row.value << ',' << r.packets_sent << ',' << r.delivered << ','
         << r.lost_channel << ',' << r.lost_collision << ',' << r.lost_crc << ',' << ratio << ','
         << r.latency_p50_ms << ',' << r.latency_p95_ms << ',' << sim::percentile_sorted(air, 0.5) << ','
         << mean_margin << ',' << r.duty_cycle_max << ',' << r.avg_power_mw << ',' << r.battery_life_h;
    out << line.str() << '\n';
  }
}

}  // namespace taclink::json_io
