#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ripen/errors.hpp"
#include "ripen/topology.hpp"

namespace ripen {

enum class Band : std::uint8_t { ETSI = 0, FCC = 1 };
enum class Sweep : std::uint8_t { Power = 0, FrequencyFixedPower = 1, FrequencyTurnOn = 2 };
enum class AutoTune : std::uint8_t { On = 0, Off = 1 };

inline constexpr std::array<Band, 2> kBands{Band::ETSI, Band::FCC};
inline constexpr std::array<AutoTune, 2> kAutoTuneStates{AutoTune::On, AutoTune::Off};

// Reader channel plans: 4 ETSI channels and 26 FCC channels at 1 MHz.
inline const std::vector<double>& channel_grid(Band b) {
  static const std::vector<double> etsi{865.7, 866.3, 866.9, 867.5};
  static const std::vector<double> fcc = [] {
    std::vector<double> v;
    for (int f = 903; f <= 928; ++f) v.push_back(f);
    return v;
  }();
  return b == Band::ETSI ? etsi : fcc;
}

// Carrier used for the power sweep in each band.
inline double power_sweep_frequency(Band b) { return b == Band::ETSI ? 866.9 : 915.0; }

inline Band band_of_frequency(double mhz) {
  if (mhz >= 865.0 && mhz <= 868.0) return Band::ETSI;
  if (mhz >= 902.0 && mhz <= 928.0) return Band::FCC;
  throw DataError("frequency outside ETSI/FCC bands: " + std::to_string(mhz));
}

inline std::string_view to_string(Band b) { return b == Band::ETSI ? "ETSI" : "FCC"; }
inline std::string_view to_string(AutoTune a) { return a == AutoTune::On ? "on" : "off"; }
inline std::string_view to_string(Sweep s) {
  switch (s) {
    case Sweep::Power: return "power";
    case Sweep::FrequencyFixedPower: return "freq";
    case Sweep::FrequencyTurnOn: return "turnon";
  }
  return "?";
}

inline Band band_from_string(std::string_view s) {
  if (s == "ETSI") return Band::ETSI;
  if (s == "FCC") return Band::FCC;
  throw DataError("bad band '" + std::string(s) + "'");
}
inline AutoTune autotune_from_string(std::string_view s) {
  if (s == "on") return AutoTune::On;
  if (s == "off") return AutoTune::Off;
  throw DataError("bad auto-tuning state '" + std::string(s) + "'");
}
inline Sweep sweep_from_string(std::string_view s) {
  if (s == "power") return Sweep::Power;
  if (s == "freq") return Sweep::FrequencyFixedPower;
  if (s == "turnon") return Sweep::FrequencyTurnOn;
  throw DataError("bad sweep '" + std::string(s) + "'");
}

// One of the eight interrogation modalities: four base modes times two AT states.
// Power sweeps stay inside one band; frequency sweeps cover both bands.
struct InterrogationModality {
  Sweep sweep = Sweep::Power;
  AutoTune autotune = AutoTune::On;
  std::optional<Band> band;

  auto operator<=>(const InterrogationModality&) const = default;

  // Position in the catalogue, 0..7.
  int index() const {
    int base = 0;
    switch (sweep) {
      case Sweep::Power: base = band == Band::FCC ? 1 : 0; break;
      case Sweep::FrequencyFixedPower: base = 2; break;
      case Sweep::FrequencyTurnOn: base = 3; break;
    }
    return static_cast<int>(autotune) * 4 + base;
  }

  bool measures_turn_on() const { return sweep == Sweep::FrequencyTurnOn; }
};

inline constexpr double kFixedSweepPowerDbm = 30.0;

inline const std::array<InterrogationModality, 8>& modality_catalogue() {
  static const std::array<InterrogationModality, 8> cat = [] {
    std::array<InterrogationModality, 8> c{};
    for (auto at : kAutoTuneStates) {
      const int o = static_cast<int>(at) * 4;
      c[o + 0] = {Sweep::Power, at, Band::ETSI};
      c[o + 1] = {Sweep::Power, at, Band::FCC};
      c[o + 2] = {Sweep::FrequencyFixedPower, at, std::nullopt};
      c[o + 3] = {Sweep::FrequencyTurnOn, at, std::nullopt};
    }
    return c;
  }();
  return cat;
}

struct RfSample {
  TagAddress address;
  InterrogationModality modality;
  double frequency_mhz = 0.0;
  double power_in_dbm = 0.0;
  std::optional<double> turn_on_dbm;
  std::optional<double> rssi_dbm;
  std::optional<double> phase_deg;  // [0, 360)
  std::int64_t timestamp_ms = 0;    // simulated time since campaign start
  bool read_ok = false;

  bool operator==(const RfSample&) const = default;

  double timestamp_s() const { return static_cast<double>(timestamp_ms) / 1000.0; }

  bool consistent() const {
    if (!read_ok) return !turn_on_dbm && !rssi_dbm && !phase_deg;
    if (turn_on_dbm && !modality.measures_turn_on()) return false;
    if (phase_deg && !(*phase_deg >= 0.0 && *phase_deg < 360.0)) return false;
    return true;
  }
};

// All samples of one measurement cycle.
struct ScanLog {
  int day = 1;           // 1-based
  int cycle = 1;         // 1-based within the day
  int global_cycle = 0;  // 0-based across the campaign
  std::int64_t start_ms = 0;
  std::vector<RfSample> samples;

  bool operator==(const ScanLog&) const = default;
};

}  // namespace ripen
