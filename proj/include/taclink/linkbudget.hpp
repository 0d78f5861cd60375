#pragma once

// Free-space link budget in the log domain: path loss, received power,
// margin against receiver sensitivity and the maximum closing range.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>

#include "taclink/error.hpp"
#include "taclink/phy.hpp"

namespace taclink::linkbudget {

// FSPL constant for d in km and f in MHz: 20*log10(4*pi*1e9/c).
inline constexpr double kFsplConstantDb = 32.44;
inline constexpr double kRegulatoryMinDbm = 0.0;
inline constexpr double kRegulatoryMaxDbm = 30.0;
inline constexpr double kSensitivityFloorDbm = -148.0;
// Below one metre the far-field loss expression is meaningless at
// sub-GHz carriers, so max_range refuses to report anything shorter.
inline constexpr double kMinRangeKm = 0.001;

struct LinkParams {
  double tx_power_dbm = 17.0;
  double tx_gain_dbi = 2.0;
  double rx_gain_dbi = 2.0;
  double system_loss_db = 5.0;
  double carrier_freq_mhz = 868.0;
  double distance_km = 1.5;
  // Empty: resolve from the sensitivity table for the active PhyConfig.
  std::optional<double> rx_sensitivity_dbm;
  bool allow_out_of_envelope = false;

  friend bool operator==(const LinkParams&, const LinkParams&) = default;
};

struct BudgetResult {
  double path_loss_db = 0;
  double rx_power_dbm = 0;
  double link_margin_db = 0;
  bool feasible = false;
};

inline void validate(const LinkParams& p) {
  if (!(p.distance_km > 0) || !std::isfinite(p.distance_km))
    throw DomainError("distance_km must be positive and finite");
  if (!(p.carrier_freq_mhz > 0) || !std::isfinite(p.carrier_freq_mhz))
    throw DomainError("carrier_freq_mhz must be positive and finite");
  if (!(p.system_loss_db >= 0)) throw DomainError("system_loss_db must be >= 0");
  if (!p.allow_out_of_envelope &&
      (p.tx_power_dbm < kRegulatoryMinDbm || p.tx_power_dbm > kRegulatoryMaxDbm))
    throw DomainError("tx_power_dbm outside [0, 30] dBm envelope");
}

inline double fspl_db(double distance_km, double carrier_freq_mhz) {
  if (!(distance_km > 0)) throw DomainError("fspl: distance_km must be > 0");
  if (!(carrier_freq_mhz > 0)) throw DomainError("fspl: carrier_freq_mhz must be > 0");
  return 20.0 * std::log10(distance_km) + 20.0 * std::log10(carrier_freq_mhz) + kFsplConstantDb;
}

inline double received_power_dbm(const LinkParams& p) {
  validate(p);
  return p.tx_power_dbm + p.tx_gain_dbi + p.rx_gain_dbi - fspl_db(p.distance_km, p.carrier_freq_mhz) -
         p.system_loss_db;
}

inline double link_margin_db(double rx_power_dbm, double sensitivity_dbm) {
  return rx_power_dbm - sensitivity_dbm;
}

/// Receiver sensitivity per (SF, bandwidth). The default rows follow the
/// usual 125 kHz datasheet shape; every bandwidth doubling costs 3 dB.
class SensitivityTable {
public:
  SensitivityTable() = default;

  static SensitivityTable datasheet_default() {
    static constexpr std::pair<int, double> k125[] = {
        {7, -123.0}, {8, -126.0}, {9, -129.0}, {10, -132.0}, {11, -134.5}, {12, -137.0}};
    SensitivityTable t;
    for (auto [sf, dbm] : k125) {
      t.set(sf, 125000, dbm);
      t.set(sf, 250000, dbm + 3.0);
      t.set(sf, 500000, dbm + 6.0);
    }
    return t;
  }

  /// Every (SF, BW) maps to the same value; used for the conservative
  /// fixed-sensitivity analyses.
  static SensitivityTable flat(double dbm) {
    SensitivityTable t;
    for (int sf = 7; sf <= 12; ++sf)
      for (std::uint32_t bw : {125000u, 250000u, 500000u}) t.set(sf, bw, dbm);
    return t;
  }

  void set(int sf, std::uint32_t bw, double dbm) {
    if (dbm < kSensitivityFloorDbm)
      throw ConfigError("sensitivity", "below the -148 dBm floor: " + std::to_string(dbm));
    rows_[{sf, bw}] = dbm;
  }

  std::optional<double> find(int sf, std::uint32_t bw) const {
    auto it = rows_.find({sf, bw});
    if (it == rows_.end()) return std::nullopt;
    return it->second;
  }

  const std::map<std::pair<int, std::uint32_t>, double>& rows() const { return rows_; }

  /// True when sensitivity strictly improves with SF for every bandwidth.
  bool strictly_monotone() const {
    for (auto it = rows_.begin(); it != rows_.end(); ++it) {
      auto next = rows_.find({it->first.first + 1, it->first.second});
      if (next != rows_.end() && !(next->second < it->second)) return false;
    }
    return true;
  }

private:
  std::map<std::pair<int, std::uint32_t>, double> rows_;
};

inline double sensitivity_for(const phy::PhyConfig& cfg,
                              const SensitivityTable& table = SensitivityTable::datasheet_default()) {
  phy::validate(cfg);
  auto v = table.find(cfg.spreading_factor, cfg.bandwidth_hz);
  if (!v)
    throw ConfigError("sensitivity", "no entry for SF" + std::to_string(cfg.spreading_factor) + "/" +
                                         std::to_string(cfg.bandwidth_hz) + " Hz");
  return *v;
}

inline double resolve_sensitivity(const LinkParams& p, const phy::PhyConfig& cfg,
                                  const SensitivityTable& table = SensitivityTable::datasheet_default()) {
  return p.rx_sensitivity_dbm ? *p.rx_sensitivity_dbm : sensitivity_for(cfg, table);
}

inline BudgetResult evaluate(const LinkParams& p, const phy::PhyConfig& cfg, double margin_threshold_db = 0.0,
                             const SensitivityTable& table = SensitivityTable::datasheet_default()) {
  BudgetResult r;
  r.path_loss_db = fspl_db(p.distance_km, p.carrier_freq_mhz);
  r.rx_power_dbm = received_power_dbm(p);
  r.link_margin_db = link_margin_db(r.rx_power_dbm, resolve_sensitivity(p, cfg, table));
  r.feasible = r.link_margin_db >= margin_threshold_db;
  return r;
}

/// Largest distance at which the margin still meets `margin_threshold_db`.
/// `p.distance_km` is ignored. Closed-form inversion of the FSPL log term.
inline double max_range_km(const LinkParams& p, const phy::PhyConfig& cfg, double margin_threshold_db,
                           const SensitivityTable& table = SensitivityTable::datasheet_default()) {
  if (!std::isfinite(margin_threshold_db)) throw DomainError("margin threshold must be finite");
  LinkParams probe = p;
  probe.distance_km = 1.0;
  validate(probe);
  const double sensitivity = resolve_sensitivity(p, cfg, table);
  // Margin at 1 km; every decade of distance costs 20 dB.
  const double margin_at_1km = link_margin_db(received_power_dbm(probe), sensitivity);
  const double range = std::pow(10.0, (margin_at_1km - margin_threshold_db) / 20.0);
  if (!(range >= kMinRangeKm) || !std::isfinite(range))
    throw DomainError("link never closes: margin threshold unreachable at any usable distance");
  return range;
}

}  // namespace taclink::linkbudget
