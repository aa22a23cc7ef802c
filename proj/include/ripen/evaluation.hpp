#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ripen/auc.hpp"
#include "ripen/classifier.hpp"
#include "ripen/svm.hpp"
#include "ripen/truth.hpp"

namespace ripen {

enum class ModelTag { A = 0, BC = 1, Fused = 2 };

inline std::string_view to_string(ModelTag m) {
  switch (m) {
    case ModelTag::A: return "A";
    case ModelTag::BC: return "BC";
    case ModelTag::Fused: return "A_OR_BC";
  }
  return "?";
}

struct ConfusionMatrix {
  long tn = 0, fp = 0, fn = 0, tp = 0;
  double threshold = 0.9;
  ModelTag model = ModelTag::Fused;

  long total() const { return tn + fp + fn + tp; }

  void add(int actual, int predicted) {
    if (actual == 0) (predicted == 0 ? tn : fp) += 1;
    else (predicted == 0 ? fn : tp) += 1;
  }
};

struct Accuracy {
  std::optional<double> row0;     // TN / (TN + FP)
  std::optional<double> row1;     // TP / (FN + TP)
  std::optional<double> overall;  // (TP + TN) / total
};

inline Accuracy accuracy(const ConfusionMatrix& cm) {
  Accuracy a;
  if (cm.tn + cm.fp > 0) a.row0 = static_cast<double>(cm.tn) / static_cast<double>(cm.tn + cm.fp);
  if (cm.fn + cm.tp > 0) a.row1 = static_cast<double>(cm.tp) / static_cast<double>(cm.fn + cm.tp);
  if (cm.total() > 0) a.overall = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  return a;
}

struct SelectionConfig {
  int k_a = 5;
  int k_bc = 10;
  bool per_fold = true;  // false: rank once on all fruits
};

struct LofoConfig {
  SelectionConfig selection;
  SvmParams svm;
  ClassifierConfig classifier;
};

// Six trained models plus the rankings that chose their inputs.
struct TrainedBundle {
  ModelBundle bundle;
  std::array<std::array<AucRanking, 3>, 2> rankings;
};

namespace detail {

inline std::vector<LabeledVector> labeled(const FeatureSet& fs, const GroundTruth& gt,
                                          std::span<const FruitId> fruits, ModelSource src,
                                          std::size_t threshold_index) {
  std::vector<LabeledVector> out;
  for (auto f : fruits) {
    const auto& ff = fs.fruits.at(f);
    const auto& stream = src == ModelSource::A ? ff.a : ff.bc;
    const auto& truth = gt.at(f);
    for (std::size_t c = 0; c < stream.size(); ++c)
      if (!stream[c].empty()) out.push_back({&stream[c], crossed(truth[c].sh, threshold_index) ? 1 : 0});
  }
  return out;
}

}  // namespace detail

// Ranks features, picks the top k and trains one SVM per (source, threshold).
// `fixed_ids`, when given, bypasses the ranking for feature choice.
inline TrainedBundle train_bundle(const FeatureSet& fs, const GroundTruth& gt,
                                  std::span<const FruitId> fruits, const LofoConfig& cfg,
                                  std::optional<int> fold = std::nullopt,
                                  const std::array<std::array<std::vector<int>, 3>, 2>* fixed_ids = nullptr) {
  TrainedBundle tb;
  for (auto src : {ModelSource::A, ModelSource::BC}) {
    const auto s = static_cast<std::size_t>(src);
    const int k = src == ModelSource::A ? cfg.selection.k_a : cfg.selection.k_bc;
    for (std::size_t t = 0; t < 3; ++t) {
      const auto train = detail::labeled(fs, gt, fruits, src, t);
      tb.rankings[s][t] = rank_features(train, kThresholds[t], src);
      const auto ids = fixed_ids ? (*fixed_ids)[s][t] : select_top(tb.rankings[s][t], k);
      std::vector<std::vector<double>> x;
      std::vector<int> y;
      for (const auto& lv : train) {
        if (!lv.features->has(ids)) continue;
        x.push_back(gather(*lv.features, ids));
        y.push_back(lv.label);
      }
      auto& m = tb.bundle.models[s][t];
      m = train_svm(x, y, ids, cfg.svm);
      m.fold = fold;
      m.threshold = kThresholds[t];
      m.source = std::string(to_string(src));
    }
  }
  return tb;
}

inline bool both_labels(const GroundTruth& gt, std::span<const FruitId> fruits, std::size_t t) {
  bool pos = false, neg = false;
  for (auto f : fruits)
    for (const auto& p : gt.at(f)) (crossed(p.sh, t) ? pos : neg) = true;
  return pos && neg;
}

struct FoldResult {
  FruitId held_out;
  std::vector<FruitId> train_fruits;
  bool skipped = false;
  std::string reason;
  std::array<std::array<std::vector<int>, 3>, 2> selected{};
};

// Per held-out fruit, the report streams of the three model variants.
struct FruitOutcome {
  std::array<std::vector<RipenessReport>, 3> reports;  // indexed by ModelTag
};

struct LofoResult {
  std::vector<CycleInfo> cycles;
  std::vector<FoldResult> folds;
  std::map<FruitId, FruitOutcome> outcomes;
  std::array<std::array<ConfusionMatrix, 3>, 3> confusion{};  // [model][threshold]
  long evaluations = 0;
  long abstained = 0;

  double abstention_rate() const {
    return evaluations > 0 ? static_cast<double>(abstained) / static_cast<double>(evaluations) : 0.0;
  }
};

// Reports for the three variants from a fruit's votes.
inline std::array<std::vector<RipenessReport>, 3> variant_reports(FruitId fruit,
                                                                  std::span<const CycleInfo> cycles,
                                                                  std::span<const CycleVotes> votes,
                                                                  const ClassifierConfig& cc) {
  std::vector<CycleVotes> only_a(votes.begin(), votes.end()), only_bc(votes.begin(), votes.end());
  for (auto& v : only_a) v.bc = {Vote::Missing, Vote::Missing, Vote::Missing};
  for (auto& v : only_bc) v.a = {Vote::Missing, Vote::Missing, Vote::Missing};
  return {classify_fruit(fruit, cycles, only_a, cc), classify_fruit(fruit, cycles, only_bc, cc),
          classify_fruit(fruit, cycles, votes, cc)};
}

// Leave-One-Fruit-Out: every fruit is held out once, in ascending id order.
inline LofoResult lofo_cv(const FeatureSet& fs, const GroundTruth& gt, const LofoConfig& cfg) {
  check_alignment(fs, gt);
  if (fs.fruits.size() < 2) throw DataError("LOFO needs at least two fruits");
  std::vector<FruitId> all;
  for (const auto& [f, _] : fs.fruits) all.push_back(f);

  std::optional<std::array<std::array<std::vector<int>, 3>, 2>> global_ids;
  if (!cfg.selection.per_fold) {
    const auto tb = train_bundle(fs, gt, all, cfg);
    global_ids.emplace();
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t t = 0; t < 3; ++t) (*global_ids)[s][t] = tb.bundle.models[s][t].feature_ids;
  }

  LofoResult res;
  res.cycles = fs.cycles;
  for (std::size_t m = 0; m < 3; ++m)
    for (std::size_t t = 0; t < 3; ++t) {
      res.confusion[m][t].model = static_cast<ModelTag>(m);
      res.confusion[m][t].threshold = kThresholds[t];
    }

  for (std::size_t k = 0; k < all.size(); ++k) {
    FoldResult fold;
    fold.held_out = all[k];
    for (auto f : all)
      if (f != all[k]) fold.train_fruits.push_back(f);
    for (std::size_t t = 0; t < 3 && !fold.skipped; ++t)
      if (!both_labels(gt, fold.train_fruits, t)) {
        fold.skipped = true;
        fold.reason = "training set has a single label at threshold " + threshold_label(kThresholds[t]);
      }
    if (fold.skipped) {
      res.folds.push_back(std::move(fold));
      continue;
    }
    const auto tb = train_bundle(fs, gt, fold.train_fruits, cfg, static_cast<int>(k),
                                 global_ids ? &*global_ids : nullptr);
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t t = 0; t < 3; ++t) fold.selected[s][t] = tb.bundle.models[s][t].feature_ids;

    const auto& ff = fs.fruits.at(all[k]);
    const auto votes = cast_votes(tb.bundle, ff);
    auto& out = res.outcomes[all[k]];
    out.reports = variant_reports(all[k], fs.cycles, votes, cfg.classifier);

    const auto& truth = gt.at(all[k]);
    for (std::size_t c = 0; c < fs.cycles.size(); ++c) {
      ++res.evaluations;
      if (out.reports[2][c].abstain) ++res.abstained;
      for (std::size_t m = 0; m < 3; ++m) {
        const auto& r = out.reports[m][c];
        if (r.abstain) continue;
        for (std::size_t t = 0; t < 3; ++t)
          res.confusion[m][t].add(crossed(truth[c].sh, t) ? 1 : 0, r.states[t]);
      }
    }
    res.folds.push_back(std::move(fold));
  }
  return res;
}

// Day on which the daily-mode true class first passes threshold t.
inline std::optional<int> switching_day(std::span<const TruthPoint> truth, std::size_t t) {
  std::size_t i = 0;
  while (i < truth.size()) {
    std::size_t j = i;
    std::array<int, 5> count{};
    while (j < truth.size() && truth[j].when.day == truth[i].when.day) {
      ++count[static_cast<std::size_t>(ordinal(truth[j].true_class))];
      ++j;
    }
    int best = 1, best_n = -1;
    for (int k = 1; k <= 4; ++k)
      if (count[static_cast<std::size_t>(k)] >= best_n && count[static_cast<std::size_t>(k)] > 0) {
        best = k;
        best_n = count[static_cast<std::size_t>(k)];
      }
    if (best >= static_cast<int>(t) + 2) return truth[i].when.day;
    i = j;
  }
  return std::nullopt;
}

struct SwitchingDayHistogram {
  double threshold = 0.9;
  std::map<int, long> bins;  // D = D_i - D_0 -> misclassifications
  long total = 0;            // non-abstained evaluations
  long correct = 0;
  long never_crossing_errors = 0;  // errors of fruits without a switching day
  std::vector<FruitId> never_crossing_fruits;

  // Accuracy when errors within |D| <= tolerance_days are forgiven; 0 forgives nothing.
  double accuracy(int tolerance_days) const {
    if (total == 0) return 0.0;
    long forgiven = 0;
    for (const auto& [d, n] : bins)
      if (tolerance_days > 0 && std::abs(d) <= tolerance_days) forgiven += n;
    return static_cast<double>(correct + forgiven) / static_cast<double>(total);
  }

  long errors() const {
    long e = never_crossing_errors;
    for (const auto& [d, n] : bins) e += n;
    return e;
  }
};

using ReportsByFruit = std::map<FruitId, std::vector<RipenessReport>>;

inline std::array<SwitchingDayHistogram, 3> switching_day_analysis(const ReportsByFruit& reports,
                                                                   const GroundTruth& gt) {
  std::array<SwitchingDayHistogram, 3> out;
  for (std::size_t t = 0; t < 3; ++t) {
    auto& h = out[t];
    h.threshold = kThresholds[t];
    for (const auto& [fruit, rs] : reports) {
      const auto& truth = gt.at(fruit);
      const auto d0 = switching_day(truth, t);
      if (!d0) h.never_crossing_fruits.push_back(fruit);
      for (std::size_t c = 0; c < rs.size(); ++c) {
        if (rs[c].abstain) continue;
        ++h.total;
        const int actual = crossed(truth[c].sh, t) ? 1 : 0;
        if (rs[c].states[t] == actual) {
          ++h.correct;
          continue;
        }
        if (d0) ++h.bins[rs[c].when.day - *d0];
        else ++h.never_crossing_errors;
      }
    }
  }
  return out;
}

struct ShDistanceRecord {
  FruitId fruit;
  double threshold;
  double sh;
  double d;  // sh - threshold
  bool correct;
};

struct ShDistanceResult {
  std::vector<ShDistanceRecord> records;

  // Accuracy at one threshold when errors with |d| <= band * threshold are forgiven.
  double accuracy(std::size_t t, double band) const {
    long total = 0, ok = 0;
    for (const auto& r : records) {
      if (r.threshold != kThresholds[t]) continue;
      ++total;
      if (r.correct || std::abs(r.d) <= band * r.threshold) ++ok;
    }
    return total ? static_cast<double>(ok) / static_cast<double>(total) : 0.0;
  }

  long errors_within(std::size_t t, double band) const {
    long n = 0;
    for (const auto& r : records)
      if (r.threshold == kThresholds[t] && !r.correct && std::abs(r.d) <= band * r.threshold) ++n;
    return n;
  }
};

inline ShDistanceResult sh_distance_analysis(const ReportsByFruit& reports, const GroundTruth& gt) {
  ShDistanceResult res;
  for (std::size_t t = 0; t < 3; ++t)
    for (const auto& [fruit, rs] : reports) {
      const auto& truth = gt.at(fruit);
      for (std::size_t c = 0; c < rs.size(); ++c) {
        if (rs[c].abstain) continue;
        const int actual = crossed(truth[c].sh, t) ? 1 : 0;
        res.records.push_back({fruit, kThresholds[t], truth[c].sh, truth[c].sh - kThresholds[t],
                               rs[c].states[t] == actual});
      }
    }
  return res;
}

struct EvolutionRow {
  CycleInfo when;
  long fruits = 0;
  std::array<long, 4> counts{};  // C1..C4 by latched class
  long abstained = 0;            // raw abstentions, reported alongside

  double share(RipeningClass c) const {
    return fruits ? static_cast<double>(counts[static_cast<std::size_t>(ordinal(c) - 1)]) /
                        static_cast<double>(fruits)
                  : 0.0;
  }
  double abstain_share() const {
    return fruits ? static_cast<double>(abstained) / static_cast<double>(fruits) : 0.0;
  }
};

// Class shares per cycle regardless of correctness. Every fruit is counted under
// its latched class, so abstaining cycles carry the last decision forward.
inline std::vector<EvolutionRow> evolution_summary(const ReportsByFruit& reports) {
  std::map<int, EvolutionRow> rows;
  for (const auto& [fruit, rs] : reports)
    for (const auto& r : rs) {
      auto& row = rows[r.when.global_cycle];
      row.when = r.when;
      ++row.fruits;
      ++row.counts[static_cast<std::size_t>(ordinal(r.latched_class) - 1)];
      if (r.abstain) ++row.abstained;
    }
  std::vector<EvolutionRow> out;
  for (auto& [_, row] : rows) out.push_back(row);
  return out;
}

inline ReportsByFruit reports_of(const LofoResult& res, ModelTag m) {
  ReportsByFruit out;
  for (const auto& [f, o] : res.outcomes) out[f] = o.reports[static_cast<std::size_t>(m)];
  return out;
}

}  // namespace ripen
