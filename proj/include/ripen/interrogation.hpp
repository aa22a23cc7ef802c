#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <vector>

#include "ripen/channel.hpp"
#include "ripen/errors.hpp"
#include "ripen/ripening.hpp"
#include "ripen/sample.hpp"
#include "ripen/topology.hpp"

namespace ripen {

struct ScanConfig {
  std::vector<FruitId> fruits;  // region of the trolley to monitor, empty = all 128
  double per_tag_budget_s = 35.0;
  int query_dwell_ms = 15;
  double power_min_dbm = 10.0;
  double power_max_dbm = 30.0;
  double power_step_db = 1.0;
  double fixed_power_dbm = kFixedSweepPowerDbm;
  TurnOnRamp ramp{};
  double rssi_resolution_db = 0.1;
  double phase_resolution_deg = 0.1;

  std::vector<FruitId> selected_fruits() const {
    if (!fruits.empty()) {
      std::set<FruitId> s(fruits.begin(), fruits.end());
      return {s.begin(), s.end()};
    }
    std::vector<FruitId> all;
    for (int f = 1; f <= kFruitCount; ++f) all.push_back(FruitId{f});
    return all;
  }

  std::vector<TagAddress> selected_tags() const {
    std::vector<TagAddress> out;
    for (auto f : selected_fruits())
      for (auto p : kTagPositions) out.push_back(address_of(f, p));
    std::sort(out.begin(), out.end());
    return out;
  }

  std::int64_t per_tag_budget_ms() const { return std::llround(per_tag_budget_s * 1000.0); }

  std::int64_t scan_duration_ms() const {
    return per_tag_budget_ms() * static_cast<std::int64_t>(selected_tags().size());
  }

  int power_points() const {
    return static_cast<int>(std::floor((power_max_dbm - power_min_dbm) / power_step_db + 1e-9)) + 1;
  }

  // Reader queries for one tag when every turn-on ramp runs to the end.
  int worst_case_queries_per_tag() const {
    int per_at = 2 * power_points();
    per_at += static_cast<int>(channel_grid(Band::ETSI).size() + channel_grid(Band::FCC).size());
    per_at += static_cast<int>(channel_grid(Band::ETSI).size() + channel_grid(Band::FCC).size()) *
              ramp.worst_case_queries();
    return 2 * per_at;
  }

  void validate() const {
    ramp.validate();
    if (!(power_step_db > 0.0 && power_min_dbm <= power_max_dbm))
      throw ConfigError("invalid power sweep range");
    if (query_dwell_ms <= 0 || per_tag_budget_s <= 0.0)
      throw ConfigError("dwell time and per-tag budget must be positive");
    for (auto f : fruits)
      if (f.ordinal < 1 || f.ordinal > kFruitCount)
        throw ConfigError("selected fruit out of range: " + std::to_string(f.ordinal));
    const auto worst = static_cast<std::int64_t>(worst_case_queries_per_tag()) * query_dwell_ms;
    if (worst > per_tag_budget_ms())
      throw ConfigError("worst-case tag interrogation takes " + std::to_string(worst) +
                        " ms, over the per-tag budget of " + std::to_string(per_tag_budget_ms()) +
                        " ms");
  }
};

struct PlannedQuery {
  InterrogationModality modality;
  double frequency_mhz;
  double power_dbm;
};

// Queries issued to one tag in one cycle, in execution order.
inline std::vector<PlannedQuery> tag_plan(const ScanConfig& cfg) {
  std::vector<PlannedQuery> plan;
  for (const auto& m : modality_catalogue()) {
    switch (m.sweep) {
      case Sweep::Power:
        for (int i = 0; i < cfg.power_points(); ++i)
          plan.push_back({m, power_sweep_frequency(*m.band), cfg.power_min_dbm + i * cfg.power_step_db});
        break;
      case Sweep::FrequencyFixedPower:
      case Sweep::FrequencyTurnOn:
        for (auto b : kBands)
          for (double f : channel_grid(b))
            plan.push_back({m, f, m.sweep == Sweep::FrequencyTurnOn ? cfg.ramp.start_dbm
                                                                     : cfg.fixed_power_dbm});
        break;
    }
  }
  return plan;
}

struct CalendarEntry {
  int day = 1;
  int cycle = 1;
  int global_cycle = 0;
  std::int64_t start_ms = 0;

  bool operator==(const CalendarEntry&) const = default;
};

inline constexpr std::int64_t kDayMs = 24LL * 3600 * 1000;

// Evenly spaced cycles; windows of length scan_duration never overlap.
inline std::vector<CalendarEntry> schedule_daily(int cycles_per_day, int days,
                                                 std::int64_t scan_duration_ms) {
  if (cycles_per_day < 1) throw ConfigError("cycles_per_day must be >= 1");
  if (days < 1) throw ConfigError("days must be >= 1");
  if (scan_duration_ms * cycles_per_day > kDayMs)
    throw ConfigError(std::to_string(cycles_per_day) + " scans of " +
                      std::to_string(scan_duration_ms / 1000) + " s do not fit in one day");
  const std::int64_t spacing = kDayMs / cycles_per_day;
  std::vector<CalendarEntry> cal;
  for (int d = 0; d < days; ++d)
    for (int c = 0; c < cycles_per_day; ++c)
      cal.push_back({d + 1, c + 1, d * cycles_per_day + c, d * kDayMs + c * spacing});
  return cal;
}

// Anything that can answer reader queries: the simulator or a recorded log.
class IndicatorSource {
 public:
  virtual ~IndicatorSource() = default;
  virtual void begin_tag(const TagAddress& a, const CalendarEntry& when, std::int64_t slot_start_ms) = 0;
  // Returns the sample; a source may keep the engine's timestamp or supply its own.
  virtual Observation query(const TagAddress& a, const PlannedQuery& q, const CalendarEntry& when,
                            std::uint64_t counter, std::int64_t now_ms) = 0;
};

// Simulated room: fruit trajectories plus the channel model.
class SimulatedSource final : public IndicatorSource {
 public:
  SimulatedSource(const ChannelModel& channel, std::map<FruitId, ShTrajectory> trajectories,
                  TurnOnRamp ramp)
      : channel_(channel), trajectories_(std::move(trajectories)), ramp_(ramp) {}

  void begin_tag(const TagAddress& a, const CalendarEntry& when, std::int64_t slot_start_ms) override {
    cycle_state_ = channel_.cycle_state(a, when.global_cycle);
    const auto it = trajectories_.find(fruit_of(a));
    if (it == trajectories_.end())
      throw DataError("no trajectory for fruit " + std::to_string(fruit_of(a).ordinal));
    const double hours = static_cast<double>(slot_start_ms) / 3.6e6;
    local_sh_ = it->second.sh(hours - channel_.tag(a).onset_delay_hours);
  }

  Observation query(const TagAddress& a, const PlannedQuery& q, const CalendarEntry& when,
                    std::uint64_t counter, std::int64_t now_ms) override {
    auto obs = channel_.observe(a, local_sh_, q.modality, q.frequency_mhz, q.power_dbm,
                                when.global_cycle, counter, cycle_state_, ramp_);
    obs.sample.timestamp_ms = now_ms;
    return obs;
  }

 private:
  const ChannelModel& channel_;
  std::map<FruitId, ShTrajectory> trajectories_;
  TurnOnRamp ramp_;
  CycleState cycle_state_{};
  double local_sh_ = 1.0;
};

// Replays a recorded sample stream in order, checking it matches the scan plan.
class ReplaySource final : public IndicatorSource {
 public:
  explicit ReplaySource(std::vector<RfSample> samples) : samples_(std::move(samples)) {}

  // A tag counts as complete once the scan moves on to the next one.
  void begin_tag(const TagAddress& a, const CalendarEntry&, std::int64_t) override {
    if (current_) last_complete_ = current_;
    current_ = a;
  }

  Observation query(const TagAddress& a, const PlannedQuery& q, const CalendarEntry&,
                    std::uint64_t, std::int64_t) override {
    if (next_ >= samples_.size()) {
      std::string last = last_complete_ ? to_string(*last_complete_) : std::string("none");
      throw TruncationError("replay exhausted; last complete address " + last);
    }
    const RfSample& s = samples_[next_];
    if (s.address != a || s.modality != q.modality || s.frequency_mhz != q.frequency_mhz)
      throw DataError("replay sample " + std::to_string(next_) + " does not match scan plan at " +
                      to_string(a));
    ++next_;
    return Observation{s, 0};
  }

  std::size_t consumed() const { return next_; }

 private:
  std::vector<RfSample> samples_;
  std::size_t next_ = 0;
  std::optional<TagAddress> current_;
  std::optional<TagAddress> last_complete_;
};

inline double quantize(double v, double step) { return std::round(v / step) * step; }

// One measurement cycle over the selected region. Each tag occupies a fixed slot of
// per_tag_budget_s and is queried only through its own antenna.
inline ScanLog run_scan(const TagList& tags, IndicatorSource& source, const ScanConfig& cfg,
                        const CalendarEntry& when) {
  cfg.validate();
  const auto selected = cfg.selected_tags();
  for (const auto& a : selected)
    if (!tags.contains(a)) throw AddressError("tag list does not cover " + to_string(a));

  const auto plan = tag_plan(cfg);
  ScanLog log;
  log.day = when.day;
  log.cycle = when.cycle;
  log.global_cycle = when.global_cycle;
  log.start_ms = when.start_ms;
  log.samples.reserve(selected.size() * plan.size());

  std::int64_t slot = when.start_ms;
  std::int64_t last_ts = when.start_ms;
  for (const auto& a : selected) {
    source.begin_tag(a, when, slot);
    std::int64_t now = slot;
    for (std::size_t i = 0; i < plan.size(); ++i) {
      auto obs = source.query(a, plan[i], when, i, now);
      auto& s = obs.sample;
      if (s.address != a) throw DataError("sample attributed to a foreign tag");
      if (s.rssi_dbm) s.rssi_dbm = quantize(*s.rssi_dbm, cfg.rssi_resolution_db);
      if (s.phase_deg) {
        double ph = quantize(*s.phase_deg, cfg.phase_resolution_deg);
        s.phase_deg = ph >= 360.0 ? ph - 360.0 : ph;
      }
      if (s.timestamp_ms < last_ts) throw DataError("non-monotonic timestamps in scan");
      last_ts = s.timestamp_ms;
      now = std::max(now, s.timestamp_ms) + static_cast<std::int64_t>(obs.queries) * cfg.query_dwell_ms;
      log.samples.push_back(std::move(s));
    }
    if (now - slot > cfg.per_tag_budget_ms())
      throw ConfigError("tag " + to_string(a) + " exceeded its interrogation budget");
    slot += cfg.per_tag_budget_ms();
  }
  return log;
}

inline std::vector<ScanLog> run_campaign(const TagList& tags, IndicatorSource& source,
                                         const ScanConfig& cfg,
                                         std::span<const CalendarEntry> calendar) {
  std::vector<ScanLog> logs;
  logs.reserve(calendar.size());
  for (const auto& when : calendar) logs.push_back(run_scan(tags, source, cfg, when));
  return logs;
}

}  // namespace ripen
