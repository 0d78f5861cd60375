#pragma once

// Half-duplex peer-to-peer MAC. Each node is a value-type state machine;
// every transition takes a state and returns the next state plus the
// events it emitted, so simulations and tests can drive it directly.

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "taclink/error.hpp"

namespace taclink::mac {

/// Simulation time in integer microseconds.
using Ticks = std::int64_t;
inline constexpr Ticks kTicksPerMs = 1000;

constexpr Ticks ms_to_ticks(double ms) { return static_cast<Ticks>(ms * kTicksPerMs + (ms >= 0 ? 0.5 : -0.5)); }
constexpr double ticks_to_ms(Ticks t) { return static_cast<double>(t) / kTicksPerMs; }

enum class Mode : std::uint8_t { sleep, listen, transmit };

// WAKE, SLEEP and END mark mode changes and the end of a run so that the
// per-state energy can be integrated from an exported log alone.
enum class EventKind : std::uint8_t {
  vox_open,
  vox_close,
  tx_start,
  tx_end,
  rx_start,
  rx_end,
  collision,
  drop,
  wake,
  sleep,
  end,
};

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::sleep: return "SLEEP";
    case Mode::listen: return "LISTEN";
    case Mode::transmit: return "TRANSMIT";
  }
  return "?";
}

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::vox_open: return "VOX_OPEN";
    case EventKind::vox_close: return "VOX_CLOSE";
    case EventKind::tx_start: return "TX_START";
    case EventKind::tx_end: return "TX_END";
    case EventKind::rx_start: return "RX_START";
    case EventKind::rx_end: return "RX_END";
    case EventKind::collision: return "COLLISION";
    case EventKind::drop: return "DROP";
    case EventKind::wake: return "WAKE";
    case EventKind::sleep: return "SLEEP";
    case EventKind::end: return "END";
  }
  return "?";
}

inline std::optional<EventKind> event_kind_from_string(std::string_view s) {
  for (int k = 0; k <= static_cast<int>(EventKind::end); ++k)
    if (to_string(static_cast<EventKind>(k)) == s) return static_cast<EventKind>(k);
  return std::nullopt;
}

struct MacEvent {
  Ticks time = 0;
  int node = 0;
  EventKind kind = EventKind::wake;
  std::optional<std::uint32_t> packet;

  friend bool operator==(const MacEvent&, const MacEvent&) = default;
};

struct MacConfig {
  Ticks carrier_sense = 5 * kTicksPerMs;
  Ticks idle_timeout = 2000 * kTicksPerMs;
  std::size_t queue_capacity = 16;

  friend bool operator==(const MacConfig&, const MacConfig&) = default;
};

inline void validate(const MacConfig& c) {
  if (c.carrier_sense < 0) throw ConfigError("mac.carrier_sense_ms", "must be >= 0");
  if (c.idle_timeout < 0) throw ConfigError("mac.idle_timeout_ms", "must be >= 0");
  if (c.queue_capacity == 0) throw ConfigError("mac.queue_capacity", "must be >= 1");
}

struct QueuedPacket {
  std::uint32_t packet_id = 0;
  Ticks airtime = 0;
  Ticks ready_at = 0;

  friend bool operator==(const QueuedPacket&, const QueuedPacket&) = default;
};

struct NodeState {
  int node_id = 0;
  Mode mode = Mode::sleep;
  bool vox_open = false;
  bool receiving = false;
  std::deque<QueuedPacket> tx_queue;
  std::uint16_t seq_counter = 0;
  Ticks clock = 0;
  Ticks tx_time_accum = 0;
  Ticks listen_time_accum = 0;
  Ticks sleep_time_accum = 0;
  Ticks tx_end = 0;          // valid while mode == transmit
  Ticks earliest_tx = 0;     // carrier-sense window end
  Ticks last_activity = 0;   // idle-timeout reference

  Ticks elapsed() const { return tx_time_accum + listen_time_accum + sleep_time_accum; }

  friend bool operator==(const NodeState&, const NodeState&) = default;
};

struct StepResult {
  NodeState node;
  std::vector<MacEvent> events;
};

/// Charges the time since the node's clock to its current mode.
inline NodeState advance(NodeState node, Ticks now) {
  if (now < node.clock) throw DomainError("mac: time went backwards");
  const Ticks dt = now - node.clock;
  switch (node.mode) {
    case Mode::transmit: node.tx_time_accum += dt; break;
    case Mode::listen: node.listen_time_accum += dt; break;
    case Mode::sleep: node.sleep_time_accum += dt; break;
  }
  node.clock = now;
  return node;
}

namespace detail {
inline void enter_listen(NodeState& n, Ticks now, Ticks holdoff) {
  n.mode = Mode::listen;
  n.earliest_tx = now + holdoff;
  n.last_activity = now;
}
}  // namespace detail

/// One transition at `now`.
///
/// `channel_busy` is the carrier-sense verdict: true if any other
/// transmission was on the air during the last carrier-sense window.
///
/// Rules:
///  - TRANSMIT -> LISTEN once the packet's airtime has elapsed (TX_END). The
///    node then holds off for two carrier-sense windows so a waiting peer
///    gets the next turn.
///  - SLEEP -> LISTEN when VOX opens, a frame is queued, or a preamble is
///    heard (channel busy).
///  - LISTEN -> TRANSMIT when the queue is non-empty, the node is not
///    receiving, the channel is clear, and it has sensed for a full window.
///  - LISTEN -> SLEEP after idle_timeout with VOX closed and nothing queued.
inline StepResult step(NodeState node, Ticks now, bool channel_busy, const MacConfig& cfg) {
  StepResult r;
  node = advance(std::move(node), now);

  if (node.mode == Mode::transmit && now >= node.tx_end) {
    r.events.push_back({now, node.node_id, EventKind::tx_end, node.tx_queue.front().packet_id});
    node.tx_queue.pop_front();
    detail::enter_listen(node, now, 2 * cfg.carrier_sense);
  }

  if (node.mode == Mode::sleep && (node.vox_open || channel_busy || !node.tx_queue.empty())) {
    detail::enter_listen(node, now, cfg.carrier_sense);
    r.events.push_back({now, node.node_id, EventKind::wake, std::nullopt});
  }

  if (node.mode == Mode::listen) {
    if (!node.tx_queue.empty() && !channel_busy && !node.receiving && now >= node.earliest_tx) {
      node.mode = Mode::transmit;
      node.tx_end = now + node.tx_queue.front().airtime;
      node.last_activity = now;
      r.events.push_back({now, node.node_id, EventKind::tx_start, node.tx_queue.front().packet_id});
    } else if (node.tx_queue.empty() && !node.vox_open && !node.receiving && !channel_busy &&
               now - node.last_activity >= cfg.idle_timeout) {
      node.mode = Mode::sleep;
      r.events.push_back({now, node.node_id, EventKind::sleep, std::nullopt});
    }
  }

  r.node = std::move(node);
  return r;
}

/// Earliest future instant at which `step` could change this node without
/// any external input, given when the channel next clears for it.
inline std::optional<Ticks> next_timer(const NodeState& n, const MacConfig& cfg, Ticks channel_clear_at) {
  switch (n.mode) {
    case Mode::transmit: return n.tx_end;
    case Mode::sleep: return std::nullopt;
    case Mode::listen:
      if (n.receiving) return std::nullopt;
      if (!n.tx_queue.empty()) return std::max(n.earliest_tx, channel_clear_at);
      if (!n.vox_open) return std::max(n.last_activity + cfg.idle_timeout, channel_clear_at);
      return std::nullopt;
  }
  return std::nullopt;
}

inline StepResult set_vox(NodeState node, Ticks now, bool open) {
  StepResult r;
  node = advance(std::move(node), now);
  if (node.vox_open != open) {
    node.vox_open = open;
    if (node.mode == Mode::listen) node.last_activity = now;
    r.events.push_back({now, node.node_id, open ? EventKind::vox_open : EventKind::vox_close, std::nullopt});
  }
  r.node = std::move(node);
  return r;
}

/// FIFO enqueue; a full queue drops the new packet.
inline StepResult enqueue(NodeState node, Ticks now, QueuedPacket pkt, const MacConfig& cfg) {
  StepResult r;
  node = advance(std::move(node), now);
  if (node.tx_queue.size() >= cfg.queue_capacity) {
    r.events.push_back({now, node.node_id, EventKind::drop, pkt.packet_id});
  } else {
    node.tx_queue.push_back(pkt);
  }
  r.node = std::move(node);
  return r;
}

inline StepResult begin_receive(NodeState node, Ticks now, std::uint32_t packet_id) {
  if (node.mode == Mode::transmit) throw DomainError("mac: half-duplex node cannot receive while transmitting");
  StepResult r;
  node = advance(std::move(node), now);
  if (node.mode == Mode::sleep) {
    node.mode = Mode::listen;
    node.earliest_tx = now;
    r.events.push_back({now, node.node_id, EventKind::wake, std::nullopt});
  }
  node.receiving = true;
  node.last_activity = now;
  r.events.push_back({now, node.node_id, EventKind::rx_start, packet_id});
  r.node = std::move(node);
  return r;
}

inline StepResult end_receive(NodeState node, Ticks now, std::uint32_t packet_id) {
  StepResult r;
  node = advance(std::move(node), now);
  node.receiving = false;
  node.last_activity = now;
  r.events.push_back({now, node.node_id, EventKind::rx_end, packet_id});
  r.node = std::move(node);
  return r;
}

/// Fraction of elapsed time spent transmitting.
inline double duty_cycle(const NodeState& n) {
  if (n.elapsed() <= 0) throw DomainError("duty_cycle: no elapsed time");
  return static_cast<double>(n.tx_time_accum) / static_cast<double>(n.elapsed());
}

// ---------------------------------------------------------------------------
// Collisions

struct Transmission {
  std::uint32_t packet_id = 0;
  int node = 0;
  Ticks start = 0;
  Ticks end = 0;  // exclusive
};

enum class Outcome : std::uint8_t { clear, collided };

/// Destructive collisions, no capture: any packet whose airtime overlaps
/// another's by at least one tick is lost.
inline std::vector<Outcome> collision_rule(std::span<const Transmission> txs) {
  std::vector<Outcome> out(txs.size(), Outcome::clear);
  for (std::size_t i = 0; i < txs.size(); ++i)
    for (std::size_t j = i + 1; j < txs.size(); ++j)
      if (txs[i].start < txs[j].end && txs[j].start < txs[i].end) {
        out[i] = Outcome::collided;
        out[j] = Outcome::collided;
      }
  return out;
}

}  // namespace taclink::mac
