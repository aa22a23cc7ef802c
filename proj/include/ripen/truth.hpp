#pragma once

#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ripen/csv.hpp"
#include "ripen/interrogation.hpp"
#include "ripen/pipeline.hpp"
#include "ripen/ripening.hpp"

namespace ripen {

struct TruthPoint {
  CycleInfo when;
  double sh = 1.0;
  RipeningClass true_class = RipeningClass::C1;
  bool operator==(const TruthPoint&) const = default;
};

// Ground-truth Shore values per fruit, one point per campaign cycle.
using GroundTruth = std::map<FruitId, std::vector<TruthPoint>>;

// SH of each fruit when its first tag is interrogated in each cycle.
inline GroundTruth ground_truth(const std::map<FruitId, ShTrajectory>& trajectories,
                                const ScanConfig& scan, std::span<const CalendarEntry> calendar) {
  const auto tags = scan.selected_tags();
  std::map<FruitId, std::int64_t> offset_ms;
  for (std::size_t i = 0; i < tags.size(); ++i)
    if (tags[i].position == TagPosition::A)
      offset_ms[fruit_of(tags[i])] = static_cast<std::int64_t>(i) * scan.per_tag_budget_ms();
  GroundTruth gt;
  for (const auto& [fruit, off] : offset_ms) {
    const auto& traj = trajectories.at(fruit);
    auto& pts = gt[fruit];
    for (const auto& c : calendar) {
      const double sh = traj.sh(static_cast<double>(c.start_ms + off) / 3.6e6);
      pts.push_back({{c.global_cycle, c.day, c.cycle}, sh, classify_sh(sh)});
    }
  }
  return gt;
}

inline constexpr std::string_view kTruthHeader = "fruit_id,day,cycle,sh,true_class";

inline void write_truth_csv(std::ostream& os, const GroundTruth& gt) {
  os << kTruthHeader << '\n';
  for (const auto& [fruit, pts] : gt)
    for (const auto& p : pts)
      os << fruit.ordinal << ',' << p.when.day << ',' << p.when.cycle << ',' << csv::fmt(p.sh) << ','
         << to_string(p.true_class) << '\n';
}

inline GroundTruth read_truth_csv(const std::string& path) {
  csv::Reader r(path, kTruthHeader);
  struct Row {
    FruitId fruit;
    TruthPoint p;
  };
  std::vector<Row> rows;
  std::vector<std::string_view> f;
  int cycles_per_day = 1;
  while (r.next(f)) {
    Row row;
    row.fruit = FruitId{static_cast<int>(csv::to_int(f[0], "fruit_id"))};
    row.p.when.day = static_cast<int>(csv::to_int(f[1], "day"));
    row.p.when.cycle = static_cast<int>(csv::to_int(f[2], "cycle"));
    row.p.sh = csv::to_double(f[3], "sh");
    row.p.true_class = class_from_string(f[4]);
    if (row.p.when.day < 1 || row.p.when.cycle < 1) throw DataError(path + ": day and cycle are 1-based");
    if (classify_sh(row.p.sh) != row.p.true_class)
      throw DataError(path + ":" + std::to_string(r.line_number()) + ": class does not match sh");
    cycles_per_day = std::max(cycles_per_day, row.p.when.cycle);
    rows.push_back(row);
  }
  GroundTruth gt;
  for (auto& row : rows) {
    row.p.when.global_cycle = (row.p.when.day - 1) * cycles_per_day + (row.p.when.cycle - 1);
    gt[row.fruit].push_back(row.p);
  }
  return gt;
}

// Checks that features and truth describe the same fruits and cycles.
inline void check_alignment(const FeatureSet& fs, const GroundTruth& gt) {
  if (fs.fruits.empty()) throw DataError("scan log contains no fruits");
  for (const auto& [fruit, ff] : fs.fruits) {
    auto it = gt.find(fruit);
    if (it == gt.end()) throw DataError("no ground truth for fruit " + std::to_string(fruit.ordinal));
    const auto& pts = it->second;
    if (pts.size() != fs.cycles.size())
      throw DataError("fruit " + std::to_string(fruit.ordinal) + ": ground truth has " +
                      std::to_string(pts.size()) + " cycles, scan log has " +
                      std::to_string(fs.cycles.size()));
    for (std::size_t c = 0; c < pts.size(); ++c)
      if (pts[c].when != fs.cycles[c])
        throw DataError("fruit " + std::to_string(fruit.ordinal) + ": ground truth day " +
                        std::to_string(pts[c].when.day) + " cycle " + std::to_string(pts[c].when.cycle) +
                        " does not match scan log day " + std::to_string(fs.cycles[c].day) +
                        " cycle " + std::to_string(fs.cycles[c].cycle));
  }
  for (const auto& [fruit, pts] : gt)
    if (!fs.fruits.count(fruit))
      throw DataError("ground truth fruit " + std::to_string(fruit.ordinal) + " absent from scan log");
}

}  // namespace ripen
