#pragma once

#include <cmath>
#include <string>

#include "taclink/error.hpp"

namespace taclink::energy {

// Draw per radio state. The battery is an ideal energy reservoir: no
// discharge curve, no temperature derating.
struct PowerProfile {
  double p_tx_mw = 400.0;
  double p_listen_mw = 40.0;
  double p_sleep_mw = 5.0;
  double battery_capacity_mah = 500.0;
  double battery_voltage_v = 3.7;

  friend bool operator==(const PowerProfile&, const PowerProfile&) = default;
};

inline void validate(const PowerProfile& p) {
  if (!(p.p_sleep_mw >= 0)) throw ConfigError("power.p_sleep_mw", "must be >= 0");
  if (!(p.p_listen_mw >= p.p_sleep_mw)) throw ConfigError("power.p_listen_mw", "must be >= p_sleep_mw");
  if (!(p.p_tx_mw >= p.p_listen_mw)) throw ConfigError("power.p_tx_mw", "must be >= p_listen_mw");
  if (!(p.battery_capacity_mah > 0)) throw ConfigError("power.battery_capacity_mah", "must be > 0");
  if (!(p.battery_voltage_v > 0)) throw ConfigError("power.battery_voltage_v", "must be > 0");
}

/// Two-state model: D * P_tx + (1 - D) * P_sleep.
inline double average_power_mw(double duty_cycle_tx, const PowerProfile& p) {
  if (!(duty_cycle_tx >= 0.0 && duty_cycle_tx <= 1.0))
    throw DomainError("duty cycle must be in [0, 1], got " + std::to_string(duty_cycle_tx));
  return duty_cycle_tx * p.p_tx_mw + (1.0 - duty_cycle_tx) * p.p_sleep_mw;
}

struct StateFractions {
  double tx = 0;
  double listen = 0;
  double sleep = 1;
};

/// Three-state extension: the receiver's listen time is charged at
/// P_listen instead of P_sleep. Fractions must sum to one.
inline double average_power_mw(const StateFractions& f, const PowerProfile& p) {
  for (double x : {f.tx, f.listen, f.sleep})
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("state fractions must be in [0, 1]");
  if (std::abs(f.tx + f.listen + f.sleep - 1.0) > 1e-9) throw DomainError("state fractions must sum to 1");
  return f.tx * p.p_tx_mw + f.listen * p.p_listen_mw + f.sleep * p.p_sleep_mw;
}

inline double battery_energy_mwh(const PowerProfile& p) { return p.battery_capacity_mah * p.battery_voltage_v; }

inline double battery_life_hours(double avg_power_mw, const PowerProfile& p) {
  if (!(avg_power_mw > 0)) throw DomainError("average power must be > 0");
  return battery_energy_mwh(p) / avg_power_mw;
}

}  // namespace taclink::energy
