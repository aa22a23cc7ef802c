#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ripen/csv.hpp"
#include "ripen/sample.hpp"

namespace ripen {

inline constexpr std::string_view kScanLogHeader =
    "day,cycle,timestamp_s,mux,port,slot,position,band,at,sweep,freq_mhz,pin_dbm,read_ok,"
    "turnon_dbm,rssi_dbm,phase_deg";

inline void write_scanlog_csv(std::ostream& os, std::span<const ScanLog> logs) {
  os << kScanLogHeader << '\n';
  std::string line;
  for (const auto& log : logs) {
    for (const auto& s : log.samples) {
      line.clear();
      line += std::to_string(log.day);
      line += ',';
      line += std::to_string(log.cycle);
      line += ',';
      line += csv::fmt(s.timestamp_s());
      line += ',';
      line += std::to_string(s.address.mux);
      line += ',';
      line += std::to_string(s.address.antenna_port);
      line += ',';
      line += std::to_string(s.address.fruit_slot);
      line += ',';
      line += to_char(s.address.position);
      line += ',';
      line += to_string(band_of_frequency(s.frequency_mhz));
      line += ',';
      line += to_string(s.modality.autotune);
      line += ',';
      line += to_string(s.modality.sweep);
      line += ',';
      line += csv::fmt(s.frequency_mhz);
      line += ',';
      line += csv::fmt(s.power_in_dbm);
      line += ',';
      line += s.read_ok ? '1' : '0';
      line += ',';
      line += csv::fmt(s.turn_on_dbm);
      line += ',';
      line += csv::fmt(s.rssi_dbm);
      line += ',';
      line += csv::fmt(s.phase_deg);
      line += '\n';
      os << line;
    }
  }
}

inline std::vector<ScanLog> read_scanlog_csv(const std::string& path) {
  csv::Reader r(path, kScanLogHeader);
  std::vector<ScanLog> logs;
  std::vector<std::string_view> f;
  int cycles_per_day = 1;
  while (r.next(f)) {
    const int day = static_cast<int>(csv::to_int(f[0], "day"));
    const int cycle = static_cast<int>(csv::to_int(f[1], "cycle"));
    if (day < 1 || cycle < 1) throw DataError(path + ": day and cycle are 1-based");
    if (logs.empty() || logs.back().day != day || logs.back().cycle != cycle) {
      if (!logs.empty() && std::pair(day, cycle) <= std::pair(logs.back().day, logs.back().cycle))
        throw DataError(path + ":" + std::to_string(r.line_number()) + ": cycles out of order");
      ScanLog log;
      log.day = day;
      log.cycle = cycle;
      logs.push_back(std::move(log));
    }
    cycles_per_day = std::max(cycles_per_day, cycle);

    RfSample s;
    s.timestamp_ms = std::llround(csv::to_double(f[2], "timestamp_s") * 1000.0);
    s.address = TagAddress{static_cast<int>(csv::to_int(f[3], "mux")),
                           static_cast<int>(csv::to_int(f[4], "port")),
                           static_cast<int>(csv::to_int(f[5], "slot")), tag_position_from(f[6])};
    require_valid(s.address);
    const Band band = band_from_string(f[7]);
    s.modality.autotune = autotune_from_string(f[8]);
    s.modality.sweep = sweep_from_string(f[9]);
    if (s.modality.sweep == Sweep::Power) s.modality.band = band;
    s.frequency_mhz = csv::to_double(f[10], "freq_mhz");
    if (band_of_frequency(s.frequency_mhz) != band)
      throw DataError(path + ":" + std::to_string(r.line_number()) + ": band does not match frequency");
    s.power_in_dbm = csv::to_double(f[11], "pin_dbm");
    if (f[12] != "0" && f[12] != "1") throw DataError(path + ": read_ok must be 0 or 1");
    s.read_ok = f[12] == "1";
    s.turn_on_dbm = csv::to_opt_double(f[13], "turnon_dbm");
    s.rssi_dbm = csv::to_opt_double(f[14], "rssi_dbm");
    s.phase_deg = csv::to_opt_double(f[15], "phase_deg");
    if (!s.consistent())
      throw DataError(path + ":" + std::to_string(r.line_number()) + ": inconsistent indicator fields");
    logs.back().samples.push_back(std::move(s));
  }
  for (auto& log : logs) {
    log.global_cycle = (log.day - 1) * cycles_per_day + (log.cycle - 1);
    log.start_ms = log.samples.front().timestamp_ms;
  }
  return logs;
}

}  // namespace ripen
