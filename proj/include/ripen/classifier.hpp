#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "ripen/csv.hpp"
#include "ripen/pipeline.hpp"
#include "ripen/ripening.hpp"
#include "ripen/svm.hpp"

namespace ripen {

// Output of one binary model at one threshold.
enum class Vote : std::uint8_t { Zero, One, Missing };
// Combined decision at one threshold.
enum class Fused : std::uint8_t { Zero, One, Abstain };

inline Vote vote_of(int label) { return label ? Vote::One : Vote::Zero; }

// Logic OR over the outputs that are present.
inline Fused fuse(Vote a, Vote bc) {
  if (a == Vote::One || bc == Vote::One) return Fused::One;
  if (a == Vote::Zero || bc == Vote::Zero) return Fused::Zero;
  return Fused::Abstain;
}

struct LatchedState {
  int value = 0;           // 0 or 1
  bool corrected = false;  // differs from the raw decision
};

// Once a threshold is passed it stays passed. Leading abstentions take the
// unripe prior; later ones inherit the latch.
inline std::vector<LatchedState> enforce_monotonic(std::span<const Fused> raw) {
  std::vector<LatchedState> out;
  out.reserve(raw.size());
  int latch = 0;
  for (auto f : raw) {
    if (f == Fused::One) latch = 1;
    const int raw_value = f == Fused::One ? 1 : 0;
    out.push_back({latch, f == Fused::Abstain || raw_value != latch});
  }
  return out;
}

struct ClassDecision {
  std::optional<RipeningClass> cls;    // empty on discordance abstention
  RipeningClass repaired_class = RipeningClass::C1;
  std::array<int, 3> states{};         // after hierarchy repair
  bool repaired = false;
};

// States ordered as thresholds 0.9, 0.8, 0.7. Passing a lower threshold implies
// the higher ones; with repair disabled such a pattern abstains instead.
inline ClassDecision map_decisions(const std::array<int, 3>& states, bool repair_hierarchy = true) {
  ClassDecision d;
  d.states = states;
  for (int k = 1; k >= 0; --k) {
    const auto uk = static_cast<std::size_t>(k);
    if (d.states[uk + 1] == 1 && d.states[uk] == 0) {
      d.states[uk] = 1;
      d.repaired = true;
    }
  }
  int passed = 0;
  for (int s : d.states) passed += s;
  d.repaired_class = class_from_ordinal(1 + passed);
  if (!d.repaired || repair_hierarchy) d.cls = d.repaired_class;
  return d;
}

struct ClassifierConfig {
  bool repair_hierarchy = true;
};

struct CycleVotes {
  std::array<Vote, 3> a{Vote::Missing, Vote::Missing, Vote::Missing};
  std::array<Vote, 3> bc{Vote::Missing, Vote::Missing, Vote::Missing};
};

struct ThresholdDecision {
  double threshold = 0.9;
  Vote output_a = Vote::Missing;
  Vote output_bc = Vote::Missing;
  Fused fused = Fused::Abstain;
};

struct RipenessReport {
  FruitId fruit;
  CycleInfo when;
  std::array<ThresholdDecision, 3> decisions{};
  std::array<int, 3> states{};                 // latched and repaired
  std::optional<RipeningClass> cls;            // empty when abstaining
  RipeningClass latched_class = RipeningClass::C1;
  bool abstain = false;
  bool enforced = false;
};

// Runs fusion, latching and class mapping over one fruit's cycles in order.
inline std::vector<RipenessReport> classify_fruit(FruitId fruit, std::span<const CycleInfo> cycles,
                                                  std::span<const CycleVotes> votes,
                                                  const ClassifierConfig& cfg = {}) {
  if (cycles.size() != votes.size()) throw ContractError("votes and cycles are not aligned");
  const std::size_t n = votes.size();
  std::array<std::vector<Fused>, 3> fused;
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t c = 0; c < n; ++c) fused[t].push_back(fuse(votes[c].a[t], votes[c].bc[t]));
  std::array<std::vector<LatchedState>, 3> latched;
  for (std::size_t t = 0; t < 3; ++t) latched[t] = enforce_monotonic(fused[t]);

  std::vector<RipenessReport> out(n);
  for (std::size_t c = 0; c < n; ++c) {
    auto& r = out[c];
    r.fruit = fruit;
    r.when = cycles[c];
    std::array<int, 3> st{};
    bool raw_abstain = false;
    for (std::size_t t = 0; t < 3; ++t) {
      r.decisions[t] = {kThresholds[t], votes[c].a[t], votes[c].bc[t], fused[t][c]};
      st[t] = latched[t][c].value;
      r.enforced = r.enforced || latched[t][c].corrected;
      raw_abstain = raw_abstain || fused[t][c] == Fused::Abstain;
    }
    const auto d = map_decisions(st, cfg.repair_hierarchy);
    r.states = d.states;
    r.latched_class = d.repaired_class;
    r.enforced = r.enforced || d.repaired;
    r.abstain = raw_abstain || !d.cls;
    if (!r.abstain) r.cls = d.cls;
  }
  return out;
}

struct DailyReport {
  FruitId fruit;
  int day = 1;
  std::optional<RipeningClass> cls;
  bool tie_broken = false;
};

// Statistical mode of the non-abstaining cycle classes; ties go to the riper class.
inline DailyReport daily_mode(std::span<const RipenessReport> day_reports) {
  DailyReport d;
  if (day_reports.empty()) return d;
  d.fruit = day_reports.front().fruit;
  d.day = day_reports.front().when.day;
  std::array<int, 5> count{};
  for (const auto& r : day_reports)
    if (r.cls) ++count[static_cast<std::size_t>(ordinal(*r.cls))];
  int best = 0, best_n = 0, n_best = 0;
  for (int k = 1; k <= 4; ++k) {
    const int c = count[static_cast<std::size_t>(k)];
    if (c == 0) continue;
    if (c > best_n) {
      best = k;
      best_n = c;
      n_best = 1;
    } else if (c == best_n) {
      best = k;
      ++n_best;
    }
  }
  if (best == 0) return d;
  d.cls = class_from_ordinal(best);
  d.tie_broken = n_best > 1;
  return d;
}

// Groups consecutive reports by day.
inline std::vector<DailyReport> daily_reports(std::span<const RipenessReport> reports) {
  std::vector<DailyReport> out;
  std::size_t i = 0;
  while (i < reports.size()) {
    std::size_t j = i;
    while (j < reports.size() && reports[j].fruit == reports[i].fruit &&
           reports[j].when.day == reports[i].when.day)
      ++j;
    out.push_back(daily_mode(reports.subspan(i, j - i)));
    i = j;
  }
  return out;
}

// The six models of a deployment: [source][threshold].
struct ModelBundle {
  std::array<std::array<SvmModel, 3>, 2> models;
};

inline Vote vote(const SvmModel& m, const FeatureVector& v) {
  if (!v.has(m.feature_ids)) return Vote::Missing;
  return vote_of(predict(m, v).label);
}

inline std::vector<CycleVotes> cast_votes(const ModelBundle& b, const FruitFeatures& ff) {
  std::vector<CycleVotes> out(ff.a.size());
  for (std::size_t c = 0; c < ff.a.size(); ++c)
    for (std::size_t t = 0; t < 3; ++t) {
      out[c].a[t] = vote(b.models[0][t], ff.a[c]);
      out[c].bc[t] = vote(b.models[1][t], ff.bc[c]);
    }
  return out;
}

inline constexpr std::string_view kReportHeader =
    "fruit_id,day,cycle,th09,th08,th07,class,abstain,enforced";
inline constexpr std::string_view kDailyHeader = "fruit_id,day,class,abstain,tie_broken";

inline void write_reports_csv(std::ostream& os, std::span<const RipenessReport> reports) {
  os << kReportHeader << '\n';
  for (const auto& r : reports) {
    os << r.fruit.ordinal << ',' << r.when.day << ',' << r.when.cycle << ',' << r.states[0] << ','
       << r.states[1] << ',' << r.states[2] << ',' << (r.cls ? to_string(*r.cls) : "") << ','
       << (r.abstain ? 1 : 0) << ',' << (r.enforced ? 1 : 0) << '\n';
  }
}

inline void write_daily_csv(std::ostream& os, std::span<const DailyReport> days) {
  os << kDailyHeader << '\n';
  for (const auto& d : days)
    os << d.fruit.ordinal << ',' << d.day << ',' << (d.cls ? to_string(*d.cls) : "") << ','
       << (d.cls ? 0 : 1) << ',' << (d.tie_broken ? 1 : 0) << '\n';
}

// Row of a report CSV as read back.
struct ReportRow {
  FruitId fruit;
  int day = 1;
  int cycle = 1;
  std::array<int, 3> states{};
  std::optional<RipeningClass> cls;
  bool abstain = false;
  bool enforced = false;
  bool operator==(const ReportRow&) const = default;
};

inline ReportRow to_row(const RipenessReport& r) {
  return {r.fruit, r.when.day, r.when.cycle, r.states, r.cls, r.abstain, r.enforced};
}

inline std::vector<ReportRow> read_reports_csv(const std::string& path) {
  csv::Reader rd(path, kReportHeader);
  std::vector<ReportRow> out;
  std::vector<std::string_view> f;
  auto flag = [&](std::string_view s) {
    if (s != "0" && s != "1") throw DataError(path + ": expected 0/1 flag");
    return s == "1";
  };
  while (rd.next(f)) {
    ReportRow r;
    r.fruit = FruitId{static_cast<int>(csv::to_int(f[0], "fruit_id"))};
    r.day = static_cast<int>(csv::to_int(f[1], "day"));
    r.cycle = static_cast<int>(csv::to_int(f[2], "cycle"));
    for (std::size_t t = 0; t < 3; ++t) r.states[t] = flag(f[3 + t]) ? 1 : 0;
    if (!f[6].empty()) r.cls = class_from_string(f[6]);
    r.abstain = flag(f[7]);
    r.enforced = flag(f[8]);
    out.push_back(r);
  }
  return out;
}

}  // namespace ripen
