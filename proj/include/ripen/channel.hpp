#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ripen/errors.hpp"
#include "ripen/rng.hpp"
#include "ripen/sample.hpp"
#include "ripen/topology.hpp"

namespace ripen {

struct Spread {
  double mean = 0.0;
  double sd = 0.0;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// Cohort-wide parameters of the stochastic indicator model. Every indicator is
// baseline(f, P) + sensitivity * (1 - SH) + noise; the tag-specific baselines and
// sensitivities are drawn once per tag from the ranges below.
struct ChannelParams {
  bool loaded = true;

  // Baselines. Turn-on is a detuning bowl around the tag's resonance.
  Range turn_on_base_dbm{7.0, 11.0};
  Range turn_on_curvature_db{1.0, 2.5};  // rise at 60 MHz detuning, AT off
  Range resonance_mhz{895.0, 925.0};
  Range rssi_loaded_dbm{-62.0, -54.0};  // at 30 dBm on the power-sweep carrier
  Range rssi_unloaded_dbm{-60.0, -53.0};
  Range rssi_power_slope{0.30, 0.45};     // dB per dB of P_in
  Range rssi_freq_slope{-0.05, 0.05};     // dB per MHz
  Range phase_freq_slope{-2.0, -1.0};     // deg per MHz
  Range phase_power_slope{-1.5, -0.5};    // deg per dB
  double autotune_curvature_scale = 0.4;  // AT on flattens the turn-on bowl

  // Sensitivities per unit of (1 - SH).
  Spread turn_on_sensitivity{6.0, 1.5};
  Spread resonance_sensitivity{-20.0, 5.0};
  Spread rssi_sensitivity{-8.0, 2.0};
  Spread rssi_power_slope_sensitivity{-0.2, 0.05};
  Spread rssi_freq_slope_sensitivity{0.03, 0.01};
  Spread phase_sensitivity{-40.0, 10.0};
  Spread phase_power_slope_sensitivity{0.8, 0.2};
  double autotune_sensitivity_scale = 0.7;

  // Local ripening onset. Tag A follows the fruit unless its onset is delayed;
  // B and C always draw their own delay.
  double basal_delay_probability = 0.3;
  double max_onset_delay_hours = 18.0;

  // Per-query noise.
  double turn_on_noise_db = 0.25;
  double rssi_noise_db = 0.5;
  double phase_noise_deg = 2.0;
  // Per (tag, cycle) common-mode drift.
  double turn_on_cycle_db = 0.1;
  double rssi_cycle_db = 0.3;
  double phase_cycle_deg = 1.5;
  // Per (tag, cycle) jitter of the ripeness seen by the antenna, in SH units.
  double ripeness_jitter = 0.01;

  double miss_probability = 0.015;             // per query
  double tag_outage_probability = 0.005;       // per tag and cycle
  double antenna_outage_probability = 0.055;   // per antenna and cycle
  double reader_max_power_dbm = 30.0;

  void validate() const {
    auto prob = [](double p, const char* what) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must be in [0, 1]");
    };
    prob(miss_probability, "miss_probability");
    prob(tag_outage_probability, "tag_outage_probability");
    prob(antenna_outage_probability, "antenna_outage_probability");
    prob(basal_delay_probability, "basal_delay_probability");
    for (double s : {turn_on_noise_db, rssi_noise_db, phase_noise_deg, turn_on_cycle_db,
                     rssi_cycle_db, phase_cycle_deg, ripeness_jitter, max_onset_delay_hours})
      if (!(s >= 0.0)) throw ConfigError("noise and delay parameters must be non-negative");
    for (const Range* r : {&turn_on_base_dbm, &turn_on_curvature_db, &resonance_mhz,
                           &rssi_loaded_dbm, &rssi_unloaded_dbm, &rssi_power_slope,
                           &rssi_freq_slope, &phase_freq_slope, &phase_power_slope})
      if (!(r->lo <= r->hi)) throw ConfigError("channel range with lo > hi");
  }
};

// Parameters of one tag in one auto-tuning state.
struct TagResponse {
  double turn_on_base = 0.0;
  double turn_on_curvature = 0.0;
  double resonance = 900.0;
  double rssi_base = -60.0;
  double rssi_power_slope = 0.4;
  double rssi_freq_slope = 0.0;
  double phase_base = 0.0;
  double phase_freq_slope = 0.0;
  double phase_power_slope = 0.0;

  double s_turn_on = 0.0;
  double s_resonance = 0.0;
  double s_rssi = 0.0;
  double s_rssi_power_slope = 0.0;
  double s_rssi_freq_slope = 0.0;
  double s_phase = 0.0;
  double s_phase_power_slope = 0.0;
};

struct TagChannel {
  std::array<TagResponse, 2> response;  // indexed by AutoTune
  double onset_delay_hours = 0.0;
};

// Per (tag, cycle) state shared by every query of that tag in that cycle.
struct CycleState {
  double turn_on_offset = 0.0;
  double rssi_offset = 0.0;
  double phase_offset = 0.0;
  double ripeness_jitter = 0.0;
  bool outage = false;
};

// Ascending power ramp used to measure turn-on power: coarse steps until the
// first reply, then fine steps inside the last coarse interval.
struct TurnOnRamp {
  double start_dbm = 5.0;
  double max_dbm = 30.0;
  double coarse_step_db = 1.0;
  double fine_step_db = 0.25;

  int coarse_points() const {
    return static_cast<int>(std::floor((max_dbm - start_dbm) / coarse_step_db + 1e-9)) + 1;
  }
  int fine_points() const {
    return static_cast<int>(std::llround(coarse_step_db / fine_step_db)) - 1;
  }
  int worst_case_queries() const { return coarse_points() + fine_points(); }

  void validate() const {
    if (!(coarse_step_db > 0.0 && fine_step_db > 0.0 && fine_step_db <= coarse_step_db &&
          start_dbm <= max_dbm))
      throw ConfigError("invalid turn-on ramp");
  }
};

struct Observation {
  RfSample sample;
  int queries = 1;  // reader queries spent, for time accounting
};

inline double wrap_degrees(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w < 0.0) w += 360.0;
  if (w >= 360.0) w -= 360.0;
  return w;
}

class ChannelModel {
 public:
  ChannelModel(ChannelParams params, std::uint64_t seed) : params_(std::move(params)), seed_(seed) {
    params_.validate();
    tags_.reserve(kTagCount);
    for (const auto& a : enumerate_addresses()) tags_.push_back(draw_tag(a));
  }

  const ChannelParams& params() const { return params_; }
  std::uint64_t seed() const { return seed_; }

  const TagChannel& tag(const TagAddress& a) const {
    require_valid(a);
    return tags_[static_cast<std::size_t>(a.scan_index())];
  }

  // Overrides the drawn parameters of one tag (used to build degenerate channels).
  void set_tag(const TagAddress& a, const TagChannel& t) {
    require_valid(a);
    tags_[static_cast<std::size_t>(a.scan_index())] = t;
  }

  CycleState cycle_state(const TagAddress& a, int global_cycle) const {
    KeyedRng rng(mix_key({seed_, 0x636DULL, static_cast<std::uint64_t>(a.scan_index()),
                          static_cast<std::uint64_t>(global_cycle)}));
    CycleState s;
    s.turn_on_offset = rng.normal(0.0, params_.turn_on_cycle_db);
    s.rssi_offset = rng.normal(0.0, params_.rssi_cycle_db);
    s.phase_offset = rng.normal(0.0, params_.phase_cycle_deg);
    s.ripeness_jitter = params_.loaded ? rng.normal(0.0, params_.ripeness_jitter) : 0.0;
    const bool tag_out = rng.bernoulli(params_.tag_outage_probability);
    KeyedRng ant(mix_key({seed_, 0x616E74ULL, static_cast<std::uint64_t>(a.antenna_index()),
                          static_cast<std::uint64_t>(global_cycle)}));
    s.outage = tag_out || ant.bernoulli(params_.antenna_outage_probability);
    return s;
  }

  // Ripeness (1 - SH) driving the indicators; zero for an empty cavity.
  double ripeness(double sh, const CycleState& cs) const {
    if (!params_.loaded) return 0.0;
    return (1.0 - sh) + cs.ripeness_jitter;
  }

  // Noise-free indicator means for ripeness r = 1 - SH.
  double mean_turn_on(const TagAddress& a, AutoTune at, double f, double r) const {
    const auto& t = response(a, at);
    const double detune = (f - (t.resonance + t.s_resonance * r)) / 60.0;
    return t.turn_on_base + t.turn_on_curvature * detune * detune + t.s_turn_on * r;
  }
  double mean_rssi(const TagAddress& a, AutoTune at, double f, double p, double r) const {
    const auto& t = response(a, at);
    const double fref = power_sweep_frequency(band_of_frequency(f));
    return t.rssi_base + (t.rssi_power_slope + t.s_rssi_power_slope * r) * (p - 30.0) +
           (t.rssi_freq_slope + t.s_rssi_freq_slope * r) * (f - fref) + t.s_rssi * r;
  }
  double mean_phase(const TagAddress& a, AutoTune at, double f, double p, double r) const {
    const auto& t = response(a, at);
    return t.phase_base + t.phase_freq_slope * (f - 866.9) +
           (t.phase_power_slope + t.s_phase_power_slope * r) * (p - 30.0) + t.s_phase * r;
  }

  // One interrogation of tag `a` whose local Shore value is `sh`. For turn-on
  // modalities the ramp is executed and its result reported in turn_on_dbm.
  // Deterministic in (seed, address, cycle, modality, counter).
  Observation observe(const TagAddress& a, double sh, const InterrogationModality& m,
                      double freq_mhz, double power_dbm, int global_cycle, std::uint64_t counter,
                      const CycleState& cs, const TurnOnRamp& ramp = {}) const {
    KeyedRng rng(mix_key({seed_, 0x71ULL, static_cast<std::uint64_t>(a.scan_index()),
                          static_cast<std::uint64_t>(global_cycle),
                          static_cast<std::uint64_t>(m.index()), counter}));
    const double r = ripeness(sh, cs);
    Observation obs;
    obs.sample.address = a;
    obs.sample.modality = m;
    obs.sample.frequency_mhz = freq_mhz;
    obs.sample.power_in_dbm = power_dbm;

    const double threshold =
        mean_turn_on(a, m.autotune, freq_mhz, r) + cs.turn_on_offset +
        rng.normal(0.0, params_.turn_on_noise_db);

    auto replies = [&](double p) {
      const bool missed = rng.bernoulli(params_.miss_probability);
      return !cs.outage && !missed && p >= threshold;
    };

    if (m.measures_turn_on()) {
      obs.queries = 0;
      std::optional<double> found;
      const int coarse = ramp.coarse_points();
      for (int i = 0; i < coarse && !found; ++i) {
        const double p = ramp.start_dbm + i * ramp.coarse_step_db;
        ++obs.queries;
        if (!replies(p)) continue;
        found = p;
        if (i > 0) {
          for (int k = 1; k <= ramp.fine_points(); ++k) {
            const double q = p - ramp.coarse_step_db + k * ramp.fine_step_db;
            ++obs.queries;
            if (replies(q)) {
              found = q;
              break;
            }
          }
        }
      }
      obs.sample.read_ok = found.has_value();
      if (found) {
        obs.sample.turn_on_dbm = *found;
        obs.sample.power_in_dbm = *found;
      } else {
        obs.sample.power_in_dbm = ramp.start_dbm + (coarse - 1) * ramp.coarse_step_db;
      }
      return obs;
    }

    if (!replies(power_dbm)) return obs;
    obs.sample.read_ok = true;
    obs.sample.rssi_dbm = mean_rssi(a, m.autotune, freq_mhz, power_dbm, r) + cs.rssi_offset +
                          rng.normal(0.0, params_.rssi_noise_db);
    obs.sample.phase_deg =
        wrap_degrees(mean_phase(a, m.autotune, freq_mhz, power_dbm, r) + cs.phase_offset +
                     rng.normal(0.0, params_.phase_noise_deg));
    return obs;
  }

 private:
  const TagResponse& response(const TagAddress& a, AutoTune at) const {
    return tag(a).response[static_cast<std::size_t>(at)];
  }

  TagChannel draw_tag(const TagAddress& a) const {
    KeyedRng rng(mix_key({seed_, 0x746167ULL, static_cast<std::uint64_t>(a.scan_index())}));
    const auto& p = params_;
    auto u = [&](const Range& r) { return rng.uniform(r.lo, r.hi); };
    auto n = [&](const Spread& s) { return rng.normal(s.mean, s.sd); };
    TagChannel tc;
    for (auto at : kAutoTuneStates) {
      TagResponse t;
      const bool on = at == AutoTune::On;
      t.turn_on_base = u(p.turn_on_base_dbm);
      t.turn_on_curvature = u(p.turn_on_curvature_db) * (on ? p.autotune_curvature_scale : 1.0);
      t.resonance = u(p.resonance_mhz);
      t.rssi_base = u(p.loaded ? p.rssi_loaded_dbm : p.rssi_unloaded_dbm);
      t.rssi_power_slope = u(p.rssi_power_slope);
      t.rssi_freq_slope = u(p.rssi_freq_slope);
      t.phase_base = rng.uniform(0.0, 360.0);
      t.phase_freq_slope = u(p.phase_freq_slope);
      t.phase_power_slope = u(p.phase_power_slope);
      const double scale = on ? p.autotune_sensitivity_scale : 1.0;
      t.s_turn_on = scale * n(p.turn_on_sensitivity);
      t.s_resonance = scale * n(p.resonance_sensitivity);
      t.s_rssi = scale * n(p.rssi_sensitivity);
      t.s_rssi_power_slope = scale * n(p.rssi_power_slope_sensitivity);
      t.s_rssi_freq_slope = scale * n(p.rssi_freq_slope_sensitivity);
      t.s_phase = scale * n(p.phase_sensitivity);
      t.s_phase_power_slope = scale * n(p.phase_power_slope_sensitivity);
      tc.response[static_cast<std::size_t>(at)] = t;
    }
    const bool delayed = a.position != TagPosition::A || rng.bernoulli(p.basal_delay_probability);
    tc.onset_delay_hours = delayed ? rng.uniform(0.0, p.max_onset_delay_hours) : 0.0;
    return tc;
  }

  ChannelParams params_;
  std::uint64_t seed_;
  std::vector<TagChannel> tags_;
};

}  // namespace ripen
