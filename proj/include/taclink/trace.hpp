#pragma once

// Reconstructs per-node radio-state time from a MAC event log. Nodes start
// in SLEEP at t = 0; END closes a node's timeline.

#include <map>
#include <span>

#include "taclink/energy.hpp"
#include "taclink/error.hpp"
#include "taclink/mac.hpp"

namespace taclink::trace {

struct StateTimes {
  mac::Ticks tx = 0;
  mac::Ticks listen = 0;
  mac::Ticks sleep = 0;

  mac::Ticks elapsed() const { return tx + listen + sleep; }

  double duty_cycle() const {
    if (elapsed() <= 0) throw DomainError("duty cycle: empty timeline");
    return static_cast<double>(tx) / static_cast<double>(elapsed());
  }

  energy::StateFractions fractions() const {
    const double e = static_cast<double>(elapsed());
    if (e <= 0) throw DomainError("state fractions: empty timeline");
    return {static_cast<double>(tx) / e, static_cast<double>(listen) / e, static_cast<double>(sleep) / e};
  }

  /// Energy integral over the timeline divided by elapsed time.
  double average_power_mw(const energy::PowerProfile& p) const {
    const double e = static_cast<double>(elapsed());
    if (e <= 0) throw DomainError("average power: empty timeline");
    return (static_cast<double>(tx) * p.p_tx_mw + static_cast<double>(listen) * p.p_listen_mw +
            static_cast<double>(sleep) * p.p_sleep_mw) /
           e;
  }
};

inline std::map<int, StateTimes> integrate_states(std::span<const mac::MacEvent> events) {
  struct Cursor {
    mac::Mode mode = mac::Mode::sleep;
    mac::Ticks since = 0;
    bool closed = false;
    StateTimes times;
  };
  std::map<int, Cursor> cur;
  auto charge = [](Cursor& c, mac::Ticks until) {
    if (until < c.since) throw DomainError("event log not time-ordered");
    const mac::Ticks dt = until - c.since;
    switch (c.mode) {
      case mac::Mode::transmit: c.times.tx += dt; break;
      case mac::Mode::listen: c.times.listen += dt; break;
      case mac::Mode::sleep: c.times.sleep += dt; break;
    }
    c.since = until;
  };
  for (const auto& e : events) {
    Cursor& c = cur[e.node];
    if (c.closed) continue;
    std::optional<mac::Mode> next;
    switch (e.kind) {
      case mac::EventKind::wake: next = mac::Mode::listen; break;
      case mac::EventKind::tx_start: next = mac::Mode::transmit; break;
      case mac::EventKind::tx_end: next = mac::Mode::listen; break;
      case mac::EventKind::sleep: next = mac::Mode::sleep; break;
      case mac::EventKind::end:
        charge(c, e.time);
        c.closed = true;
        continue;
      default: break;
    }
    if (next) {
      charge(c, e.time);
      c.mode = *next;
    }
  }
  std::map<int, StateTimes> out;
  for (auto& [node, c] : cur) out[node] = c.times;
  return out;
}

}  // namespace taclink::trace
