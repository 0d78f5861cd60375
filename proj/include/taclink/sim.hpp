#pragma once

// Deterministic two-node discrete-event simulator.
//
// Each node runs the full transmit chain on a synthetic speech envelope:
// VOX gate -> codec frame -> AES-CTR packet -> MAC queue -> LoRa airtime.
// The peer receives through a link-budget channel with optional log-normal
// shadowing, verifies the CRC and decrypts. Per packet the simulator
// records the five processing/airtime latency components and their sum,
// along with queueing delay, which is reported separately.
//
// Time is kept in integer microsecond ticks. Pending events are ordered by
// (time, node, kind, insertion order), so a run is a pure function of its
// Scenario.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <future>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "taclink/energy.hpp"
#include "taclink/error.hpp"
#include "taclink/linkbudget.hpp"
#include "taclink/mac.hpp"
#include "taclink/phy.hpp"
#include "taclink/pipeline.hpp"
#include "taclink/rng.hpp"

namespace taclink::sim {

using mac::Ticks;

inline constexpr int kNodeCount = 2;
inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Configuration

struct ChannelModel {
  linkbudget::LinkParams link;
  double shadowing_sigma_db = 0.0;
  std::uint64_t rng_seed = 42;
  // Independent bit flips applied to delivered frames; surfaces as CRC loss.
  double bit_error_rate = 0.0;

  friend bool operator==(const ChannelModel&, const ChannelModel&) = default;
};

/// Alternating talk/silence schedule. Talk spurt k nominally starts at
/// offset + k * (talk + silence); its start is delayed by U(0, jitter) and
/// its length perturbed by U(-jitter, +jitter).
struct SpeechPattern {
  double talk_ms = 3000.0;
  double silence_ms = 12000.0;
  double offset_ms = 0.0;
  double jitter_ms = 500.0;

  friend bool operator==(const SpeechPattern&, const SpeechPattern&) = default;
};

/// Packetization cost: serialized bytes over the MCU path plus a fixed
/// scheduling overhead.
struct McuProfile {
  double throughput_bps = 1.0e6;
  double scheduling_overhead_ms = 1.0;

  friend bool operator==(const McuProfile&, const McuProfile&) = default;
};

struct Scenario {
  double duration_s = 300.0;
  std::uint64_t seed = 42;
  phy::PhyConfig phy;
  pipeline::VoxConfig vox;
  double vox_sample_ms = 10.0;
  pipeline::CodecProfile codec;
  McuProfile mcu;
  mac::MacConfig mac;
  energy::PowerProfile power;
  ChannelModel channel;
  linkbudget::SensitivityTable sensitivity = linkbudget::SensitivityTable::datasheet_default();
  std::array<SpeechPattern, kNodeCount> speech{SpeechPattern{}, SpeechPattern{3000.0, 12000.0, 7500.0, 500.0}};
  std::string key_hex = "000102030405060708090a0b0c0d0e0f";
  // Reject runs whose codec bitrate exceeds the modem bitrate.
  bool strict_throughput = false;
};

inline Scenario default_scenario() { return Scenario{}; }

inline void validate(const Scenario& s) {
  if (!(s.duration_s >= 0) || !std::isfinite(s.duration_s)) throw ConfigError("duration_s", "must be >= 0");
  phy::validate(s.phy);
  pipeline::validate(s.vox);
  pipeline::validate(s.codec);
  mac::validate(s.mac);
  energy::validate(s.power);
  if (!(s.vox_sample_ms > 0)) throw ConfigError("vox_sample_ms", "must be > 0");
  if (s.codec.frame_ms % static_cast<std::uint32_t>(std::max(1.0, s.vox_sample_ms)) != 0 ||
      std::floor(s.vox_sample_ms) != s.vox_sample_ms)
    throw ConfigError("vox_sample_ms", "must be a whole number of ms dividing codec.frame_ms");
  if (!(s.mcu.throughput_bps > 0)) throw ConfigError("mcu.throughput_bps", "must be > 0");
  if (!(s.mcu.scheduling_overhead_ms >= 0)) throw ConfigError("mcu.scheduling_overhead_ms", "must be >= 0");
  if (!(s.channel.shadowing_sigma_db >= 0)) throw ConfigError("channel.shadowing_sigma_db", "must be >= 0");
  if (!(s.channel.bit_error_rate >= 0 && s.channel.bit_error_rate <= 1))
    throw ConfigError("channel.bit_error_rate", "must be in [0, 1]");
  try {
    linkbudget::validate(s.channel.link);
  } catch (const DomainError& e) {
    throw ConfigError("channel.link", e.what());
  }
  (void)linkbudget::resolve_sensitivity(s.channel.link, s.phy, s.sensitivity);
  for (const auto& sp : s.speech)
    if (sp.talk_ms < 0 || sp.silence_ms < 0 || sp.offset_ms < 0 || sp.jitter_ms < 0)
      throw ConfigError("speech", "durations must be >= 0");
  const std::size_t payload = pipeline::frame_payload_bytes(s.codec.bitrate_bps, s.codec.frame_ms);
  if (payload > pipeline::kMaxCiphertextBytes)
    throw ConfigError("codec.bitrate_bps", "frame payload of " + std::to_string(payload) +
                                               " bytes does not fit a single LoRa frame");
  (void)pipeline::SessionKey::from_hex(s.key_hex);
  if (s.strict_throughput && s.codec.bitrate_bps > phy::effective_bitrate_bps(s.phy))
    throw ConfigError("codec.bitrate_bps", "codec bitrate " + std::to_string(s.codec.bitrate_bps) +
                                               " bps exceeds modem bitrate " +
                                               std::to_string(phy::effective_bitrate_bps(s.phy)) + " bps");
}

// ---------------------------------------------------------------------------
// Channel

enum class Delivery : std::uint8_t { delivered, lost };

struct ChannelSample {
  Delivery outcome = Delivery::lost;
  double rx_power_dbm = 0;
  double margin_db = 0;
};

/// Received power minus a N(0, sigma) shadowing draw, compared against the
/// sensitivity for `phy`. With sigma == 0 no random number is consumed.
inline ChannelSample apply_channel(const ChannelModel& ch, const phy::PhyConfig& phy,
                                   const linkbudget::SensitivityTable& table, Rng& rng) {
  ChannelSample s;
  s.rx_power_dbm = linkbudget::received_power_dbm(ch.link);
  if (ch.shadowing_sigma_db > 0) s.rx_power_dbm -= ch.shadowing_sigma_db * rng.normal();
  s.margin_db = linkbudget::link_margin_db(s.rx_power_dbm, linkbudget::resolve_sensitivity(ch.link, phy, table));
  s.outcome = s.margin_db >= 0.0 ? Delivery::delivered : Delivery::lost;
  return s;
}

inline ChannelSample apply_channel(const ChannelModel& ch, const phy::PhyConfig& phy, Rng& rng) {
  return apply_channel(ch, phy, linkbudget::SensitivityTable::datasheet_default(), rng);
}

// ---------------------------------------------------------------------------
// Report

enum class Disposition : std::uint8_t { delivered, lost_channel, lost_collision, lost_crc };

inline const char* to_string(Disposition d) {
  switch (d) {
    case Disposition::delivered: return "delivered";
    case Disposition::lost_channel: return "lost_channel";
    case Disposition::lost_collision: return "lost_collision";
    case Disposition::lost_crc: return "lost_crc";
  }
  return "?";
}

struct PacketRecord {
  std::uint32_t packet_id = 0;
  int src = 0;
  std::uint16_t seq = 0;
  std::size_t bytes = 0;
  double tx_start_ms = 0;
  Disposition disposition = Disposition::lost_channel;
  double rx_power_dbm = 0;
  double margin_db = 0;
  // Latency components, meaningful for delivered packets.
  double t_encoding = 0;
  double t_encryption = 0;
  double t_packetization = 0;
  double t_airtime = 0;
  double t_decoding = 0;
  double t_total = 0;
  double queue_wait_ms = 0;

  double sum_of_components() const { return t_encoding + t_encryption + t_packetization + t_airtime + t_decoding; }
};

struct NodeReport {
  int node_id = 0;
  Ticks tx_us = 0;
  Ticks listen_us = 0;
  Ticks sleep_us = 0;
  Ticks elapsed_us = 0;
  double duty_cycle = 0;
  double avg_power_mw = 0;            // tx/listen/sleep weighted
  double avg_power_two_state_mw = 0;  // D * P_tx + (1 - D) * P_sleep
  double battery_life_h = 0;
  std::uint32_t frames_encoded = 0;
  std::uint32_t frames_dropped = 0;
  std::uint32_t session_rekeys = 0;
};

struct SimReport {
  std::uint32_t packets_sent = 0;
  std::uint32_t delivered = 0;
  std::uint32_t lost_channel = 0;
  std::uint32_t lost_collision = 0;
  std::uint32_t lost_crc = 0;
  std::uint32_t frames_dropped = 0;
  double elapsed_ms = 0;
  double latency_p50_ms = 0;
  double latency_p95_ms = 0;
  double latency_max_ms = 0;
  double duty_cycle_max = 0;
  double avg_power_mw = 0;    // worst node
  double battery_life_h = 0;  // worst node
  double codec_bitrate_bps = 0;
  double modem_bitrate_bps = 0;
  bool throughput_sustainable = true;
  std::vector<NodeReport> nodes;
  std::vector<PacketRecord> packets;
};

struct RunResult {
  SimReport report;
  std::vector<mac::MacEvent> events;
};

/// Nearest-rank percentile of an already sorted sample, p in (0, 1].
inline double percentile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size())));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

struct LatencySummary {
  std::size_t count = 0;
  double mean_encoding = 0;
  double mean_encryption = 0;
  double mean_packetization = 0;
  double mean_airtime = 0;
  double mean_decoding = 0;
  double mean_total = 0;
  double mean_queue_wait = 0;
  double p50_total = 0;
  double p95_total = 0;
  double max_total = 0;
  double p50_airtime = 0;
};

/// Aggregates the latency components of delivered packets. Throws
/// DomainError when nothing was delivered and std::logic_error if any
/// packet's total is not exactly the sum of its components.
inline LatencySummary latency_breakdown(const SimReport& r) {
  LatencySummary s;
  std::vector<double> totals, airtimes;
  for (const auto& p : r.packets) {
    if (p.disposition != Disposition::delivered) continue;
    if (p.t_total != p.sum_of_components())
      throw std::logic_error("latency sum identity violated for packet " + std::to_string(p.packet_id));
    ++s.count;
    s.mean_encoding += p.t_encoding;
    s.mean_encryption += p.t_encryption;
    s.mean_packetization += p.t_packetization;
    s.mean_airtime += p.t_airtime;
    s.mean_decoding += p.t_decoding;
    s.mean_total += p.t_total;
    s.mean_queue_wait += p.queue_wait_ms;
    totals.push_back(p.t_total);
    airtimes.push_back(p.t_airtime);
  }
  if (s.count == 0) throw DomainError("latency_breakdown: no delivered packets");
  const double n = static_cast<double>(s.count);
  for (double* m : {&s.mean_encoding, &s.mean_encryption, &s.mean_packetization, &s.mean_airtime,
                    &s.mean_decoding, &s.mean_total, &s.mean_queue_wait})
    *m /= n;
  std::sort(totals.begin(), totals.end());
  std::sort(airtimes.begin(), airtimes.end());
  s.p50_total = percentile_sorted(totals, 0.50);
  s.p95_total = percentile_sorted(totals, 0.95);
  s.max_total = totals.back();
  s.p50_airtime = percentile_sorted(airtimes, 0.50);
  return s;
}

// ---------------------------------------------------------------------------
// Speech source

struct Interval {
  double start_ms = 0;
  double end_ms = 0;
};

inline std::vector<Interval> talk_spurts(const SpeechPattern& sp, double duration_ms, Rng rng) {
  std::vector<Interval> out;
  const double period = sp.talk_ms + sp.silence_ms;
  if (sp.talk_ms <= 0 || period <= 0) return out;
  for (int k = 0;; ++k) {
    const double nominal = sp.offset_ms + k * period;
    if (nominal >= duration_ms) break;
    const double start = nominal + rng.uniform(0.0, sp.jitter_ms);
    const double len = std::max(0.0, sp.talk_ms + rng.uniform(-sp.jitter_ms, sp.jitter_ms));
    out.push_back({start, std::min(start + len, duration_ms)});
  }
  return out;
}

/// Synthetic amplitude envelope: loud and fluctuating during talk spurts,
/// low background noise otherwise.
inline std::vector<double> speech_envelope(const std::vector<Interval>& spurts, double duration_ms,
                                           double sample_ms, Rng rng) {
  const auto n = static_cast<std::size_t>(std::floor(duration_ms / sample_ms + 1e-9));
  std::vector<double> env(n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * sample_ms;
    while (k < spurts.size() && spurts[k].end_ms <= t) ++k;
    const bool talking = k < spurts.size() && spurts[k].start_ms <= t && t < spurts[k].end_ms;
    const double u = rng.uniform();
    env[i] = talking ? 0.3 + 0.6 * u : 0.05 * u;
  }
  return env;
}

// ---------------------------------------------------------------------------
// Engine

namespace detail {

enum class Kind : std::uint8_t { tx_end, vox_change, frame_capture, enqueue, timer };

struct Pending {
  Ticks time;
  int node;
  Kind kind;
  std::uint64_t order;
  std::int64_t arg;  // vox state, frame index or packet id

  bool operator>(const Pending& o) const {
    if (time != o.time) return time > o.time;
    if (node != o.node) return node > o.node;
    if (kind != o.kind) return kind > o.kind;
    return order > o.order;
  }
};

struct InFlight {
  mac::Transmission tx;
  bool collided = false;
  bool heard = false;  // receiver locked on at TX_START
};

class Engine {
public:
  explicit Engine(const Scenario& s)
      : s_(s), codec_(s.codec), master_(s.seed), channel_rng_(s.channel.rng_seed) {}

  RunResult run() {
    const double duration_ms = s_.duration_s * 1000.0;
    const Ticks duration = mac::ms_to_ticks(duration_ms);
    const Ticks frame_ticks = mac::ms_to_ticks(static_cast<double>(codec_.frame_ms));
    const auto samples_per_frame = static_cast<std::size_t>(codec_.frame_ms / static_cast<std::uint32_t>(s_.vox_sample_ms));

    for (int n = 0; n < kNodeCount; ++n) {
      nodes_[n].node_id = n;
      Rng node_rng = master_.split(static_cast<std::uint64_t>(n));
      const auto spurts = talk_spurts(s_.speech[n], duration_ms, node_rng.split(1));
      envelope_[n] = speech_envelope(spurts, duration_ms, s_.vox_sample_ms, node_rng.split(2));
      gate_[n] = pipeline::vox_gate(envelope_[n], s_.vox, s_.vox_sample_ms);
      salt_[n] = node_rng.split(3).next_u64();
      sessions_[n].emplace(pipeline::SessionKey::from_hex(s_.key_hex, salt_[n]));

      bool prev = false;
      for (std::size_t i = 0; i < gate_[n].size(); ++i) {
        if (gate_[n][i] != prev) {
          push(mac::ms_to_ticks(static_cast<double>(i) * s_.vox_sample_ms), n, Kind::vox_change, gate_[n][i] ? 1 : 0);
          prev = gate_[n][i];
        }
      }
      for (std::size_t f = 0; (f + 1) * samples_per_frame <= gate_[n].size(); ++f) {
        const auto first = gate_[n].begin() + static_cast<std::ptrdiff_t>(f * samples_per_frame);
        if (std::any_of(first, first + static_cast<std::ptrdiff_t>(samples_per_frame), [](bool b) { return b; }))
          push(static_cast<Ticks>(f + 1) * frame_ticks, n, Kind::frame_capture, static_cast<std::int64_t>(f));
      }
    }

    Ticks now = 0;
    // Everything due at one instant is applied before the nodes decide, so
    // two nodes released at the same tick cannot hear each other.
    while (!queue_.empty()) {
      now = queue_.top().time;
      while (!queue_.empty() && queue_.top().time == now) {
        const Pending ev = queue_.top();
        queue_.pop();
        handle(ev);
      }
      settle(now);
    }

    const Ticks end = std::max(now, duration);
    for (auto& n : nodes_) {
      n = mac::advance(std::move(n), end);
      events_.push_back({end, n.node_id, mac::EventKind::end, std::nullopt});
    }
    return finish(end);
  }

private:
  const Scenario& s_;
  const pipeline::CodecProfile& codec_;
  Rng master_;
  Rng channel_rng_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue_;
  std::uint64_t order_ = 0;
  std::set<std::pair<int, Ticks>> timers_;

  std::array<mac::NodeState, kNodeCount> nodes_{};
  std::array<std::vector<double>, kNodeCount> envelope_;
  std::array<std::vector<bool>, kNodeCount> gate_;
  std::array<std::uint64_t, kNodeCount> salt_{};
  std::array<std::optional<pipeline::Session>, kNodeCount> sessions_;
  std::array<Ticks, kNodeCount> last_tx_end_{};
  std::array<bool, kNodeCount> has_transmitted_{};
  std::array<NodeReport, kNodeCount> node_stats_{};

  std::vector<std::vector<std::uint8_t>> wire_;  // serialized packet per id
  std::vector<PacketRecord> packets_;            // per id, filled progressively
  std::vector<Ticks> ready_at_;
  std::vector<bool> sent_flag_;
  std::vector<InFlight> in_flight_;
  std::vector<mac::MacEvent> events_;
  std::uint32_t sent_ = 0;

  void push(Ticks t, int node, Kind kind, std::int64_t arg) { queue_.push({t, node, kind, order_++, arg}); }

  void absorb(mac::StepResult&& r, int n) {
    nodes_[n] = std::move(r.node);
    events_.insert(events_.end(), r.events.begin(), r.events.end());
  }

  void handle(const Pending& ev) {
    const int n = ev.node;
    switch (ev.kind) {
      case Kind::tx_end:
      case Kind::timer:
        timers_.erase({n, ev.time});
        break;
      case Kind::vox_change:
        absorb(mac::set_vox(std::move(nodes_[n]), ev.time, ev.arg != 0), n);
        break;
      case Kind::frame_capture:
        capture(n, ev.time, static_cast<std::size_t>(ev.arg));
        break;
      case Kind::enqueue: {
        const auto id = static_cast<std::uint32_t>(ev.arg);
        const Ticks airtime = mac::ms_to_ticks(packets_[id].t_airtime);
        auto r = mac::enqueue(std::move(nodes_[n]), ev.time, {id, airtime, ev.time}, s_.mac);
        for (const auto& e : r.events)
          if (e.kind == mac::EventKind::drop) ++node_stats_[n].frames_dropped;
        absorb(std::move(r), n);
        break;
      }
    }
  }

  void capture(int n, Ticks now, std::size_t frame_index) {
    const auto spf = static_cast<std::size_t>(codec_.frame_ms / static_cast<std::uint32_t>(s_.vox_sample_ms));
    std::span<const double> window(envelope_[n].data() + frame_index * spf, spf);
    const std::uint16_t seq = nodes_[n].seq_counter++;
    const auto frame = pipeline::encode_frame(window, seq, codec_);
    pipeline::VoicePacket pkt;
    try {
      pkt = sessions_[n]->encrypt(frame);
    } catch (const PacketError& e) {
      if (e.code() != PacketErrc::nonce_reuse) throw;
      // Sequence space exhausted: start a fresh session under a new salt.
      salt_[n] = mix64(salt_[n]);
      sessions_[n].emplace(pipeline::SessionKey::from_hex(s_.key_hex, salt_[n]));
      ++node_stats_[n].session_rekeys;
      pkt = sessions_[n]->encrypt(frame);
    }
    ++node_stats_[n].frames_encoded;

    PacketRecord rec;
    rec.packet_id = static_cast<std::uint32_t>(packets_.size());
    rec.src = n;
    rec.seq = seq;
    rec.bytes = pkt.serialized_size();
    rec.t_encoding = frame.encode_delay_ms;
    rec.t_encryption = codec_.encrypt_delay_ms;
    rec.t_packetization =
        static_cast<double>(rec.bytes) * 8.0 / s_.mcu.throughput_bps * 1000.0 + s_.mcu.scheduling_overhead_ms;
    rec.t_airtime = phy::time_on_air(s_.phy, rec.bytes).total_ms;
    wire_.push_back(pipeline::serialize(pkt));
    packets_.push_back(rec);

    const double prep_ms = rec.t_encoding + rec.t_encryption + rec.t_packetization;
    const Ticks ready = now + static_cast<Ticks>(std::ceil(prep_ms * mac::kTicksPerMs - 1e-9));
    ready_at_.push_back(ready);
    sent_flag_.push_back(false);
    push(ready, n, Kind::enqueue, rec.packet_id);
  }

  bool busy_for(int n, Ticks now) const {
    const int other = 1 - n;
    if (nodes_[other].mode == mac::Mode::transmit) return true;
    return has_transmitted_[other] && last_tx_end_[other] + s_.mac.carrier_sense > now;
  }

  Ticks clear_at(int n) const {
    const int other = 1 - n;
    if (nodes_[other].mode == mac::Mode::transmit) return nodes_[other].tx_end + s_.mac.carrier_sense;
    return has_transmitted_[other] ? last_tx_end_[other] + s_.mac.carrier_sense : 0;
  }

  // Steps both nodes against the channel state at the start of each round
  // until nothing changes. Nodes that decide in the same round cannot hear
  // each other, so simultaneous starts collide.
  void settle(Ticks now) {
    for (;;) {
      std::array<bool, kNodeCount> busy{};
      for (int n = 0; n < kNodeCount; ++n) busy[n] = busy_for(n, now);
      std::array<mac::StepResult, kNodeCount> results;
      for (int n = 0; n < kNodeCount; ++n) results[n] = mac::step(std::move(nodes_[n]), now, busy[n], s_.mac);

      bool changed = false;
      std::vector<mac::MacEvent> starts, ends;
      for (int n = 0; n < kNodeCount; ++n) {
        for (const auto& e : results[n].events) {
          if (e.kind == mac::EventKind::tx_start) starts.push_back(e);
          if (e.kind == mac::EventKind::tx_end) ends.push_back(e);
        }
        changed = changed || !results[n].events.empty();
        absorb(std::move(results[n]), n);
      }
      for (const auto& e : ends) finish_transmission(e, now);
      for (const auto& e : starts) start_transmission(e, now);
      if (!changed) break;
    }
    for (int n = 0; n < kNodeCount; ++n) {
      auto t = mac::next_timer(nodes_[n], s_.mac, clear_at(n));
      if (t && *t > now && timers_.insert({n, *t}).second)
        push(*t, n, nodes_[n].mode == mac::Mode::transmit ? Kind::tx_end : Kind::timer, 0);
    }
  }

  void start_transmission(const mac::MacEvent& e, Ticks now) {
    const int src = e.node;
    const std::uint32_t id = *e.packet;
    ++sent_;
    sent_flag_[id] = true;
    packets_[id].tx_start_ms = mac::ticks_to_ms(now);
    packets_[id].queue_wait_ms = mac::ticks_to_ms(now - ready_at_[id]);
    InFlight f;
    f.tx = {id, src, now, nodes_[src].tx_end};

    std::vector<mac::Transmission> txs;
    for (const auto& other : in_flight_) txs.push_back(other.tx);
    txs.push_back(f.tx);
    const auto outcome = mac::collision_rule(txs);
    for (std::size_t i = 0; i + 1 < txs.size(); ++i) {
      if (outcome[i] == mac::Outcome::collided && !in_flight_[i].collided) {
        in_flight_[i].collided = true;
        events_.push_back({now, in_flight_[i].tx.node, mac::EventKind::collision, in_flight_[i].tx.packet_id});
      }
    }
    if (outcome.back() == mac::Outcome::collided) {
      f.collided = true;
      events_.push_back({now, src, mac::EventKind::collision, id});
    }

    const int dst = 1 - src;
    if (nodes_[dst].mode != mac::Mode::transmit && !nodes_[dst].receiving) {
      absorb(mac::begin_receive(std::move(nodes_[dst]), now, id), dst);
      f.heard = true;
    }
    in_flight_.push_back(f);
  }

  void finish_transmission(const mac::MacEvent& e, Ticks now) {
    const std::uint32_t id = *e.packet;
    const int src = e.node;
    const int dst = 1 - src;
    last_tx_end_[src] = now;
    has_transmitted_[src] = true;

    auto it = std::find_if(in_flight_.begin(), in_flight_.end(), [&](const InFlight& f) { return f.tx.packet_id == id; });
    const InFlight f = *it;
    in_flight_.erase(it);
    if (f.heard) absorb(mac::end_receive(std::move(nodes_[dst]), now, id), dst);

    PacketRecord& rec = packets_[id];
    Rng rng = channel_rng_.split(id);
    const ChannelSample cs = apply_channel(s_.channel, s_.phy, s_.sensitivity, rng);
    rec.rx_power_dbm = cs.rx_power_dbm;
    rec.margin_db = cs.margin_db;

    if (f.collided || !f.heard) {
      rec.disposition = Disposition::lost_collision;
      return;
    }
    if (cs.outcome == Delivery::lost) {
      rec.disposition = Disposition::lost_channel;
      return;
    }
    std::vector<std::uint8_t> bytes = wire_[id];
    if (s_.channel.bit_error_rate > 0)
      for (auto& b : bytes)
        for (int bit = 0; bit < 8; ++bit)
          if (rng.uniform() < s_.channel.bit_error_rate) b ^= static_cast<std::uint8_t>(1u << bit);
    try {
      const auto pkt = pipeline::parse(bytes);
      const auto frame = pipeline::decrypt_packet(pkt, sessions_[src]->key(), codec_);
      rec.t_decoding = frame.decode_delay_ms;
    } catch (const PacketError&) {
      rec.disposition = Disposition::lost_crc;
      return;
    }
    rec.disposition = Disposition::delivered;
    rec.t_total = rec.t_encoding + rec.t_encryption + rec.t_packetization + rec.t_airtime + rec.t_decoding;
  }

  RunResult finish(Ticks end) {
    RunResult out;
    SimReport& r = out.report;
    r.elapsed_ms = mac::ticks_to_ms(end);
    r.codec_bitrate_bps = codec_.bitrate_bps;
    r.modem_bitrate_bps = phy::effective_bitrate_bps(s_.phy);
    r.throughput_sustainable = r.codec_bitrate_bps <= r.modem_bitrate_bps;

    for (const auto& rec : packets_)
      if (sent_flag_[rec.packet_id]) r.packets.push_back(rec);
    for (const auto& p : r.packets) {
      switch (p.disposition) {
        case Disposition::delivered: ++r.delivered; break;
        case Disposition::lost_channel: ++r.lost_channel; break;
        case Disposition::lost_collision: ++r.lost_collision; break;
        case Disposition::lost_crc: ++r.lost_crc; break;
      }
    }
    r.packets_sent = sent_;

    std::vector<double> totals;
    for (const auto& p : r.packets)
      if (p.disposition == Disposition::delivered) totals.push_back(p.t_total);
    std::sort(totals.begin(), totals.end());
    r.latency_p50_ms = percentile_sorted(totals, 0.50);
    r.latency_p95_ms = percentile_sorted(totals, 0.95);
    r.latency_max_ms = totals.empty() ? 0.0 : totals.back();

    r.battery_life_h = 0;
    for (int n = 0; n < kNodeCount; ++n) {
      const auto& st = nodes_[n];
      NodeReport nr = node_stats_[n];
      nr.node_id = n;
      nr.tx_us = st.tx_time_accum;
      nr.listen_us = st.listen_time_accum;
      nr.sleep_us = st.sleep_time_accum;
      nr.elapsed_us = st.elapsed();
      if (nr.elapsed_us > 0) {
        const double el = static_cast<double>(nr.elapsed_us);
        nr.duty_cycle = mac::duty_cycle(st);
        nr.avg_power_mw = energy::average_power_mw(
            energy::StateFractions{static_cast<double>(nr.tx_us) / el, static_cast<double>(nr.listen_us) / el,
                                   static_cast<double>(nr.sleep_us) / el},
            s_.power);
      } else {
        nr.avg_power_mw = s_.power.p_sleep_mw;
      }
      nr.avg_power_two_state_mw = energy::average_power_mw(nr.duty_cycle, s_.power);
      nr.battery_life_h = nr.avg_power_mw > 0 ? energy::battery_life_hours(nr.avg_power_mw, s_.power) : 0.0;
      r.frames_dropped += nr.frames_dropped;
      r.duty_cycle_max = std::max(r.duty_cycle_max, nr.duty_cycle);
      if (n == 0 || nr.avg_power_mw > r.avg_power_mw) {
        r.avg_power_mw = nr.avg_power_mw;
        r.battery_life_h = nr.battery_life_h;
      }
      r.nodes.push_back(nr);
    }
    out.events = std::move(events_);
    return out;
  }
};

}  // namespace detail

/// Runs one scenario. Throws ConfigError before doing any work if the
/// scenario is inconsistent.
inline RunResult run(const Scenario& s) {
  validate(s);
  return detail::Engine(s).run();
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepAxis : std::uint8_t { sf, distance, tx_power, payload };

inline const char* to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::sf: return "sf";
    case SweepAxis::distance: return "distance";
    case SweepAxis::tx_power: return "tx_power";
    case SweepAxis::payload: return "payload";
  }
  return "?";
}

inline std::optional<SweepAxis> sweep_axis_from_string(const std::string& s) {
  for (auto a : {SweepAxis::sf, SweepAxis::distance, SweepAxis::tx_power, SweepAxis::payload})
    if (s == to_string(a)) return a;
  return std::nullopt;
}

/// Scenario with one axis set to `value`. `payload` sets the codec bitrate
/// so that each frame carries `value` bytes.
inline Scenario with_axis(Scenario s, SweepAxis axis, double value) {
  switch (axis) {
    case SweepAxis::sf: s.phy.spreading_factor = static_cast<int>(value); break;
    case SweepAxis::distance: s.channel.link.distance_km = value; break;
    case SweepAxis::tx_power: s.channel.link.tx_power_dbm = value; break;
    case SweepAxis::payload: {
      if (!(value >= 1)) throw ConfigError("payload", "must be >= 1 byte");
      const auto bytes = static_cast<std::size_t>(value);
      auto bitrate = static_cast<std::uint32_t>(bytes * 8000 / s.codec.frame_ms);
      while (pipeline::frame_payload_bytes(bitrate, s.codec.frame_ms) < bytes) ++bitrate;
      s.codec.bitrate_bps = bitrate;
      break;
    }
  }
  return s;
}

struct SweepRow {
  double value = 0;
  SimReport report;
};

/// Independent runs, one per value, dispatched in parallel. Errors are
/// rethrown as ConfigError annotated with the axis value.
inline std::vector<SweepRow> sweep(const Scenario& base, SweepAxis axis, const std::vector<double>& values) {
  std::vector<Scenario> scenarios;
  std::vector<std::future<SimReport>> jobs;
  scenarios.reserve(values.size());
  for (double v : values) scenarios.push_back(with_axis(base, axis, v));
  for (const auto& sc : scenarios)
    jobs.push_back(std::async(std::launch::async, [&sc] { return run(sc).report; }));
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    try {
      rows.push_back({values[i], jobs[i].get()});
    } catch (const ConfigError& e) {
      throw ConfigError(e.field(), std::string(to_string(axis)) + "=" + std::to_string(values[i]) + ": " + e.what());
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string(to_string(axis)) + "=" + std::to_string(values[i]) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace taclink::sim
