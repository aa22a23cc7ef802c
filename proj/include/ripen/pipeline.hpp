#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ripen/csv.hpp"
#include "ripen/errors.hpp"
#include "ripen/sample.hpp"
#include "ripen/topology.hpp"

namespace ripen {

inline constexpr int kFeatureCount = 28;
inline constexpr int kFeatureKinds = 7;
inline constexpr std::string_view kCatalogueVersion = "fc-1";

enum class Normalization { Ratio, Difference, Phase };

enum class FeatureKind {
  TurnOnMean = 1,
  RssiMean = 2,
  PhaseMean = 3,
  RssiPowerSlope = 4,
  PhasePowerSlope = 5,
  RssiFrequencySlope = 6,
  MinTurnOnFrequency = 7,
};

struct FeatureDef {
  int id;  // 1..28
  Band band;
  AutoTune autotune;
  FeatureKind kind;
  std::string_view name;
  std::string_view units;
  Normalization normalization;
};

inline std::string_view to_string(Normalization n) {
  switch (n) {
    case Normalization::Ratio: return "ratio";
    case Normalization::Difference: return "difference";
    case Normalization::Phase: return "phase-difference";
  }
  return "?";
}

// Four measurement contexts (band x AT) times seven indicators each.
inline const std::array<FeatureDef, kFeatureCount>& feature_catalogue() {
  static const std::array<FeatureDef, kFeatureCount> cat = [] {
    struct Kind {
      FeatureKind kind;
      std::string_view name, units;
      Normalization norm;
    };
    constexpr std::array<Kind, kFeatureKinds> kinds{{
        {FeatureKind::TurnOnMean, "mean turn-on power over the band grid", "dBm", Normalization::Difference},
        {FeatureKind::RssiMean, "mean RSSI at 30 dBm over the band grid", "dBm", Normalization::Difference},
        {FeatureKind::PhaseMean, "circular mean phase at 30 dBm over the band grid", "deg", Normalization::Phase},
        {FeatureKind::RssiPowerSlope, "least-squares slope of RSSI vs P_in (power sweep)", "dB/dB", Normalization::Ratio},
        {FeatureKind::PhasePowerSlope, "least-squares slope of phase vs P_in (power sweep)", "deg/dB", Normalization::Ratio},
        {FeatureKind::RssiFrequencySlope, "least-squares slope of RSSI vs frequency at 30 dBm", "dB/MHz", Normalization::Difference},
        {FeatureKind::MinTurnOnFrequency, "frequency of minimum turn-on power", "MHz", Normalization::Difference},
    }};
    std::array<FeatureDef, kFeatureCount> c{};
    int id = 1;
    for (auto band : kBands)
      for (auto at : kAutoTuneStates)
        for (const auto& k : kinds) {
          c[static_cast<std::size_t>(id - 1)] = {id, band, at, k.kind, k.name, k.units, k.norm};
          ++id;
        }
    return c;
  }();
  return cat;
}

inline const FeatureDef& feature_def(int id) {
  if (id < 1 || id > kFeatureCount) throw ContractError("feature id out of range: " + std::to_string(id));
  return feature_catalogue()[static_cast<std::size_t>(id - 1)];
}

inline int feature_id(Band band, AutoTune at, FeatureKind kind) {
  return (static_cast<int>(band) * 2 + static_cast<int>(at)) * kFeatureKinds + static_cast<int>(kind);
}

inline std::string catalogue_text() {
  std::string out = "# feature catalogue ";
  out += kCatalogueVersion;
  out += "\n# id,band,at,units,normalization,definition\n";
  for (const auto& f : feature_catalogue()) {
    char id[8];
    std::snprintf(id, sizeof id, "f%02d", f.id);
    out += id;
    out += ',';
    out += to_string(f.band);
    out += ',';
    out += to_string(f.autotune);
    out += ',';
    out += f.units;
    out += ',';
    out += to_string(f.normalization);
    out += ',';
    out += f.name;
    out += '\n';
  }
  return out;
}

// Difference of two angles mapped to (-180, 180].
inline double angle_diff(double a, double b) {
  double d = std::fmod(a - b, 360.0);
  if (d <= -180.0) d += 360.0;
  if (d > 180.0) d -= 360.0;
  return d;
}

inline double circular_mean_deg(std::span<const double> deg) {
  double s = 0.0, c = 0.0;
  for (double d : deg) {
    const double r = d * std::numbers::pi / 180.0;
    s += std::sin(r);
    c += std::cos(r);
  }
  double m = std::atan2(s, c) * 180.0 / std::numbers::pi;
  if (m < 0.0) m += 360.0;
  if (m >= 360.0) m -= 360.0;
  return m;
}

// Ordinary least-squares slope; nullopt with fewer than two distinct x.
inline std::optional<double> ls_slope(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0) return std::nullopt;
  return sxy / sxx;
}

struct SeriesPoint {
  int cycle = 0;  // global, 0-based
  double value = 0.0;
  bool operator==(const SeriesPoint&) const = default;
};

// One feature of one tag over time; cycles without a value are gaps.
struct IndicatorSeries {
  FruitId fruit;
  TagPosition position = TagPosition::A;
  int feature_id = 1;
  std::vector<SeriesPoint> points;
  Normalization normalization = Normalization::Difference;
  bool normalization_fallback = false;  // ratio series whose first value was zero
};

using TagFeatures = std::array<std::optional<double>, kFeatureCount>;

namespace detail {

struct XY {
  double x, y;
  bool operator<(const XY& o) const { return x < o.x || (x == o.x && y < o.y); }
};

inline std::optional<double> slope_of(std::vector<XY> pts) {
  std::sort(pts.begin(), pts.end());
  std::vector<double> x, y;
  for (auto& p : pts) {
    x.push_back(p.x);
    y.push_back(p.y);
  }
  return ls_slope(x, y);
}

inline std::optional<double> mean_of(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double d : v) s += d;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

// The 28 features of one tag from the samples of one cycle. Missing reads leave
// the affected features empty.
inline TagFeatures tag_features(std::span<const RfSample> samples) {
  struct Ctx {
    std::vector<detail::XY> turn_on;    // (freq, turn-on)
    std::vector<detail::XY> rssi_freq;  // (freq, rssi) at fixed power
    std::vector<double> phase_fixed;
    std::vector<detail::XY> rssi_pow;   // (power, rssi)
    std::vector<detail::XY> phase_pow;  // (power, phase)
  };
  std::array<Ctx, 4> ctx;
  for (const auto& s : samples) {
    if (!s.read_ok) continue;
    const Band band = band_of_frequency(s.frequency_mhz);
    auto& c = ctx[static_cast<std::size_t>(static_cast<int>(band) * 2 + static_cast<int>(s.modality.autotune))];
    switch (s.modality.sweep) {
      case Sweep::FrequencyTurnOn:
        if (s.turn_on_dbm) c.turn_on.push_back({s.frequency_mhz, *s.turn_on_dbm});
        break;
      case Sweep::FrequencyFixedPower:
        if (s.rssi_dbm) c.rssi_freq.push_back({s.frequency_mhz, *s.rssi_dbm});
        if (s.phase_deg) c.phase_fixed.push_back(*s.phase_deg);
        break;
      case Sweep::Power:
        if (s.rssi_dbm) c.rssi_pow.push_back({s.power_in_dbm, *s.rssi_dbm});
        if (s.phase_deg) c.phase_pow.push_back({s.power_in_dbm, *s.phase_deg});
        break;
    }
  }

  TagFeatures out{};
  for (auto band : kBands)
    for (auto at : kAutoTuneStates) {
      auto& c = ctx[static_cast<std::size_t>(static_cast<int>(band) * 2 + static_cast<int>(at))];
      auto set = [&](FeatureKind k, std::optional<double> v) {
        out[static_cast<std::size_t>(feature_id(band, at, k) - 1)] = v;
      };
      std::vector<double> to;
      for (auto& p : c.turn_on) to.push_back(p.y);
      set(FeatureKind::TurnOnMean, detail::mean_of(to));
      if (!c.turn_on.empty()) {
        std::sort(c.turn_on.begin(), c.turn_on.end(),
                  [](const auto& a, const auto& b) { return a.y < b.y || (a.y == b.y && a.x < b.x); });
        set(FeatureKind::MinTurnOnFrequency, c.turn_on.front().x);
      }
      std::vector<double> rs;
      for (auto& p : c.rssi_freq) rs.push_back(p.y);
      set(FeatureKind::RssiMean, detail::mean_of(rs));
      set(FeatureKind::RssiFrequencySlope, detail::slope_of(c.rssi_freq));
      if (!c.phase_fixed.empty()) {
        std::sort(c.phase_fixed.begin(), c.phase_fixed.end());
        set(FeatureKind::PhaseMean, circular_mean_deg(c.phase_fixed));
      }
      set(FeatureKind::RssiPowerSlope, detail::slope_of(c.rssi_pow));
      if (!c.phase_pow.empty()) {
        std::vector<double> ph;
        for (auto& p : c.phase_pow) ph.push_back(p.y);
        std::sort(ph.begin(), ph.end());
        const double ref = circular_mean_deg(ph);
        std::vector<detail::XY> unwrapped;
        for (auto& p : c.phase_pow) unwrapped.push_back({p.x, ref + angle_diff(p.y, ref)});
        set(FeatureKind::PhasePowerSlope, detail::slope_of(std::move(unwrapped)));
      }
    }
  return out;
}

struct SeriesKey {
  FruitId fruit;
  TagPosition position;
  int feature_id;
  auto operator<=>(const SeriesKey&) const = default;
};

using SeriesSet = std::map<SeriesKey, IndicatorSeries>;

// Raw per-cycle feature series for every tag and feature present in the logs.
inline SeriesSet extract_features(std::span<const ScanLog> logs) {
  if (logs.empty()) throw DataError("scan log has no cycles");
  SeriesSet out;
  for (const auto& log : logs) {
    std::map<TagAddress, std::vector<RfSample>> by_tag;
    for (const auto& s : log.samples) by_tag[s.address].push_back(s);
    for (const auto& [addr, samples] : by_tag) {
      const auto feats = tag_features(samples);
      for (int id = 1; id <= kFeatureCount; ++id) {
        SeriesKey key{fruit_of(addr), addr.position, id};
        auto [it, fresh] = out.try_emplace(key);
        if (fresh) {
          it->second.fruit = key.fruit;
          it->second.position = key.position;
          it->second.feature_id = id;
          it->second.normalization = feature_def(id).normalization;
        }
        const auto& v = feats[static_cast<std::size_t>(id - 1)];
        if (!v) continue;
        auto& pts = it->second.points;
        if (!pts.empty() && pts.back().cycle >= log.global_cycle)
          throw DataError("scan log cycles are not strictly increasing");
        pts.push_back({log.global_cycle, *v});
      }
    }
  }
  return out;
}

// Causal trailing mean over the cycles (c - window, c]; gaps are skipped and the
// first cycles average whatever prefix exists. Phase series use a circular mean.
inline IndicatorSeries moving_average(const IndicatorSeries& in, int window = 7) {
  if (window < 1) throw ConfigError("moving-average window must be >= 1");
  IndicatorSeries out = in;
  const auto& p = in.points;
  const bool phase = feature_def(in.feature_id).normalization == Normalization::Phase;
  std::size_t lo = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (p[lo].cycle <= p[i].cycle - window) ++lo;
    double sum = 0.0;
    for (std::size_t j = lo; j <= i; ++j) sum += phase ? angle_diff(p[j].value, p[i].value) : p[j].value;
    const double n = static_cast<double>(i - lo + 1);
    double v = sum / n;
    if (phase) {
      v = std::fmod(p[i].value + v, 360.0);
      if (v < 0.0) v += 360.0;
    }
    out.points[i].value = v;
  }
  return out;
}

// Expresses the series relative to its first value: ratio, dB/unit difference or
// modular phase difference per the catalogue.
inline IndicatorSeries normalize_initial(const IndicatorSeries& in) {
  if (in.points.empty())
    throw DataError("series for fruit " + std::to_string(in.fruit.ordinal) + " feature " +
                    std::to_string(in.feature_id) + " has no valid value");
  IndicatorSeries out = in;
  out.normalization = feature_def(in.feature_id).normalization;
  const double first = in.points.front().value;
  if (out.normalization == Normalization::Ratio && first == 0.0) {
    out.normalization = Normalization::Difference;
    out.normalization_fallback = true;
  }
  for (auto& pt : out.points) {
    switch (out.normalization) {
      case Normalization::Ratio: pt.value = pt.value / first; break;
      case Normalization::Difference: pt.value = pt.value - first; break;
      case Normalization::Phase: pt.value = angle_diff(pt.value, first); break;
    }
  }
  return out;
}

enum class ModelSource { A = 0, BC = 1 };

inline std::string_view to_string(ModelSource s) { return s == ModelSource::A ? "A" : "BC"; }

inline ModelSource model_source_from(std::string_view s) {
  if (s == "A") return ModelSource::A;
  if (s == "BC") return ModelSource::BC;
  throw DataError("bad model source '" + std::string(s) + "'");
}

struct FeatureVector {
  FruitId fruit;
  int cycle = 0;  // global, 0-based
  ModelSource source = ModelSource::A;
  TagFeatures values{};

  bool operator==(const FeatureVector&) const = default;

  bool empty() const {
    return std::none_of(values.begin(), values.end(), [](const auto& v) { return v.has_value(); });
  }

  bool has(std::span<const int> ids) const {
    return std::all_of(ids.begin(), ids.end(),
                       [&](int id) { return values[static_cast<std::size_t>(id - 1)].has_value(); });
  }

  std::optional<double> operator[](int id) const { return values[static_cast<std::size_t>(id - 1)]; }
};

// Element-wise mean of the B and C streams; a value present in only one stream
// passes through, and a cycle with neither stays empty.
inline std::vector<FeatureVector> combine_bc(std::span<const FeatureVector> b,
                                             std::span<const FeatureVector> c) {
  if (b.size() != c.size()) throw ContractError("B and C streams are not aligned");
  std::vector<FeatureVector> out;
  out.reserve(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b[i].cycle != c[i].cycle || b[i].fruit != c[i].fruit)
      throw ContractError("B and C streams are not aligned at index " + std::to_string(i));
    FeatureVector v;
    v.fruit = b[i].fruit;
    v.cycle = b[i].cycle;
    v.source = ModelSource::BC;
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      const auto& x = b[i].values[k];
      const auto& y = c[i].values[k];
      if (x && y) v.values[k] = 0.5 * (*x + *y);
      else if (x) v.values[k] = x;
      else if (y) v.values[k] = y;
    }
    out.push_back(v);
  }
  return out;
}

// Filtered, normalized model inputs of one fruit over the campaign cycles.
struct FruitFeatures {
  FruitId fruit;
  std::vector<FeatureVector> a;   // one entry per campaign cycle
  std::vector<FeatureVector> bc;  // aligned with `a`
  int normalization_fallbacks = 0;
};

struct CycleInfo {
  int global_cycle = 0;
  int day = 1;
  int cycle = 1;
  auto operator<=>(const CycleInfo&) const = default;
};

struct FeatureSet {
  std::vector<CycleInfo> cycles;  // campaign cycles in order
  std::map<FruitId, FruitFeatures> fruits;
};

inline FeatureSet build_features(std::span<const ScanLog> logs, int window = 7) {
  const SeriesSet raw = extract_features(logs);
  FeatureSet fs;
  for (const auto& log : logs) fs.cycles.push_back({log.global_cycle, log.day, log.cycle});

  std::map<int, std::size_t> slot_of;
  for (std::size_t i = 0; i < fs.cycles.size(); ++i) slot_of[fs.cycles[i].global_cycle] = i;

  std::map<FruitId, std::array<std::vector<FeatureVector>, 3>> per_tag;
  for (const auto& [key, series] : raw) {
    auto& streams = per_tag[key.fruit];
    auto& stream = streams[static_cast<std::size_t>(key.position)];
    if (stream.empty()) {
      for (const auto& ci : fs.cycles) {
        FeatureVector v;
        v.fruit = key.fruit;
        v.cycle = ci.global_cycle;
        v.source = key.position == TagPosition::A ? ModelSource::A : ModelSource::BC;
        stream.push_back(v);
      }
    }
    if (series.points.empty()) continue;
    const auto norm = normalize_initial(moving_average(series, window));
    if (norm.normalization_fallback) ++fs.fruits[key.fruit].normalization_fallbacks;
    for (const auto& pt : norm.points)
      stream[slot_of.at(pt.cycle)].values[static_cast<std::size_t>(key.feature_id - 1)] = pt.value;
  }

  for (auto& [fruit, streams] : per_tag) {
    auto& ff = fs.fruits[fruit];
    ff.fruit = fruit;
    for (auto& s : streams)
      if (s.empty())
        for (const auto& ci : fs.cycles) s.push_back(FeatureVector{fruit, ci.global_cycle, ModelSource::BC, {}});
    ff.a = std::move(streams[0]);
    for (auto& v : ff.a) v.source = ModelSource::A;
    ff.bc = combine_bc(streams[1], streams[2]);
  }
  return fs;
}

inline constexpr std::string_view kFeatureMatrixHeader =
    "fruit_id,cycle,model_source,f01,f02,f03,f04,f05,f06,f07,f08,f09,f10,f11,f12,f13,f14,f15,f16,"
    "f17,f18,f19,f20,f21,f22,f23,f24,f25,f26,f27,f28";

inline void write_feature_matrix_csv(std::ostream& os, const FeatureSet& fs) {
  os << kFeatureMatrixHeader << '\n';
  for (const auto& [fruit, ff] : fs.fruits)
    for (const auto* stream : {&ff.a, &ff.bc})
      for (const auto& v : *stream) {
        os << fruit.ordinal << ',' << v.cycle << ',' << to_string(v.source);
        for (const auto& x : v.values) os << ',' << csv::fmt(x);
        os << '\n';
      }
}

inline std::vector<FeatureVector> read_feature_matrix_csv(const std::string& path) {
  csv::Reader r(path, kFeatureMatrixHeader);
  std::vector<FeatureVector> out;
  std::vector<std::string_view> f;
  while (r.next(f)) {
    FeatureVector v;
    v.fruit = FruitId{static_cast<int>(csv::to_int(f[0], "fruit_id"))};
    v.cycle = static_cast<int>(csv::to_int(f[1], "cycle"));
    v.source = model_source_from(f[2]);
    for (std::size_t k = 0; k < kFeatureCount; ++k) v.values[k] = csv::to_opt_double(f[3 + k], "feature");
    out.push_back(v);
  }
  return out;
}

}  // namespace ripen
