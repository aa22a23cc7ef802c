#include <gtest/gtest.h>

#include <set>

#include "ripen/evaluation.hpp"
#include "ripen/experiment.hpp"

using namespace ripen;

namespace {

ExperimentConfig small_config(int fruits, int days = 7, std::uint64_t seed = 1) {
  ExperimentConfig c;
  c.seed = seed;
  c.days = days;
  for (int f = 1; f <= fruits; ++f) c.scan.fruits.push_back(FruitId{f});
  return c;
}

struct Run {
  Simulation sim;
  FeatureSet fs;
  LofoResult lofo;
};

Run run(const ExperimentConfig& c) {
  Run r;
  r.sim = simulate(c);
  r.fs = build_features(r.sim.logs, c.window);
  r.lofo = lofo_cv(r.fs, r.sim.truth, c.lofo);
  return r;
}

const Run& cohort32() {
  static const Run r = run(small_config(32));
  return r;
}

}  // namespace

TEST(Accuracy, Examples) {
  ConfusionMatrix cm{9, 1, 1, 9};
  auto a = accuracy(cm);
  EXPECT_DOUBLE_EQ(*a.row0, 0.9);
  EXPECT_DOUBLE_EQ(*a.row1, 0.9);
  EXPECT_DOUBLE_EQ(*a.overall, 0.9);

  a = accuracy({50, 0, 0, 50});
  EXPECT_DOUBLE_EQ(*a.row0, 1.0);
  EXPECT_DOUBLE_EQ(*a.row1, 1.0);
  EXPECT_DOUBLE_EQ(*a.overall, 1.0);

  a = accuracy({77, 23, 5, 95});
  EXPECT_DOUBLE_EQ(*a.row0, 0.77);
  EXPECT_DOUBLE_EQ(*a.row1, 0.95);
  EXPECT_DOUBLE_EQ(*a.overall, 0.86);
}

TEST(Accuracy, EmptyRowsAreUndefined) {
  const auto a = accuracy({0, 0, 3, 7});
  EXPECT_FALSE(a.row0.has_value());
  EXPECT_DOUBLE_EQ(*a.row1, 0.7);
  EXPECT_FALSE(accuracy({}).overall.has_value());
}

TEST(Accuracy, AddCountsCells) {
  ConfusionMatrix cm;
  cm.add(0, 0);
  cm.add(0, 1);
  cm.add(1, 0);
  cm.add(1, 1);
  cm.add(1, 1);
  EXPECT_EQ(cm.tn, 1);
  EXPECT_EQ(cm.fp, 1);
  EXPECT_EQ(cm.fn, 1);
  EXPECT_EQ(cm.tp, 2);
  EXPECT_EQ(cm.total(), 5);
}

TEST(Lofo, OneFoldPerFruitInIdOrder) {
  const auto& r = cohort32();
  ASSERT_EQ(r.lofo.folds.size(), 32u);
  for (std::size_t k = 0; k < 32; ++k) {
    const auto& f = r.lofo.folds[k];
    EXPECT_EQ(f.held_out.ordinal, static_cast<int>(k) + 1);
    EXPECT_EQ(f.train_fruits.size(), 31u);
    EXPECT_EQ(std::count(f.train_fruits.begin(), f.train_fruits.end(), f.held_out), 0);
  }
}

TEST(Lofo, AccountingIsConsistent) {
  const auto& r = cohort32();
  long evaluated_folds = 0;
  for (const auto& f : r.lofo.folds) evaluated_folds += f.skipped ? 0 : 1;
  const long cycles = static_cast<long>(r.fs.cycles.size());
  EXPECT_EQ(cycles, 28);
  EXPECT_EQ(r.lofo.evaluations, evaluated_folds * cycles);
  long abstained = 0;
  for (const auto& [f, o] : r.lofo.outcomes)
    for (const auto& rep : o.reports[2]) abstained += rep.abstain ? 1 : 0;
  EXPECT_EQ(abstained, r.lofo.abstained);
  for (std::size_t m = 0; m < 3; ++m) {
    long classified = 0;
    for (const auto& [f, o] : r.lofo.outcomes)
      for (const auto& rep : o.reports[m]) classified += rep.abstain ? 0 : 1;
    for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(r.lofo.confusion[m][t].total(), classified);
  }
  EXPECT_EQ(r.lofo.confusion[2][0].total() + r.lofo.abstained, r.lofo.evaluations);
}

TEST(Lofo, HeldOutFruitDoesNotInfluenceItsFold) {
  const auto& r = cohort32();
  const FruitId held{5};
  auto fs = r.fs;
  for (auto* stream : {&fs.fruits.at(held).a, &fs.fruits.at(held).bc})
    for (auto& v : *stream)
      for (auto& x : v.values)
        if (x) *x = -*x * 1000.0 + 17.0;
  const auto& fold = r.lofo.folds[4];
  ASSERT_EQ(fold.held_out, held);
  LofoConfig cfg;
  const auto a = train_bundle(r.fs, r.sim.truth, fold.train_fruits, cfg, 4);
  const auto b = train_bundle(fs, r.sim.truth, fold.train_fruits, cfg, 4);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t t = 0; t < 3; ++t) {
      EXPECT_EQ(a.bundle.models[s][t].feature_ids, fold.selected[s][t]);
      EXPECT_EQ(to_json(a.bundle.models[s][t]), to_json(b.bundle.models[s][t]));
    }
}

TEST(Lofo, SingleLabelTrainingSetIsSkippedWithReason) {
  auto c = small_config(3, 1);
  const auto sim = simulate(c);
  const auto fs = build_features(sim.logs, c.window);
  const auto res = lofo_cv(fs, sim.truth, c.lofo);
  ASSERT_EQ(res.folds.size(), 3u);
  for (const auto& f : res.folds) {
    EXPECT_TRUE(f.skipped);
    EXPECT_NE(f.reason.find("single label"), std::string::npos);
  }
  EXPECT_EQ(res.evaluations, 0);
}

TEST(Lofo, NeedsTwoFruits) {
  auto c = small_config(1, 2);
  const auto sim = simulate(c);
  EXPECT_THROW(lofo_cv(build_features(sim.logs, c.window), sim.truth, c.lofo), DataError);
}

TEST(Lofo, GlobalSelectionUsesOneFeatureSet) {
  auto c = small_config(12);
  c.lofo.selection.per_fold = false;
  const auto r = run(c);
  const auto& first = r.lofo.folds.front().selected;
  for (const auto& f : r.lofo.folds)
    if (!f.skipped) EXPECT_EQ(f.selected, first);
}

TEST(Lofo, CleanHighContrastCohortIsNearlyPerfect) {
  auto c = small_config(16);
  auto& ch = c.channel;
  ch.turn_on_noise_db = ch.rssi_noise_db = ch.phase_noise_deg = 0.0;
  ch.turn_on_cycle_db = ch.rssi_cycle_db = ch.phase_cycle_deg = 0.0;
  ch.ripeness_jitter = 0.0;
  ch.miss_probability = ch.tag_outage_probability = ch.antenna_outage_probability = 0.0;
  ch.basal_delay_probability = 0.0;
  ch.max_onset_delay_hours = 0.0;
  ch.turn_on_sensitivity = {20.0, 0.0};
  ch.rssi_sensitivity = {-25.0, 0.0};
  ch.phase_sensitivity = {-120.0, 0.0};
  const auto r = run(c);
  EXPECT_EQ(r.lofo.abstained, 0);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_GE(*accuracy(r.lofo.confusion[2][t]).overall, 0.95) << t;
}

TEST(SwitchingDay, FirstDayWhoseModePasses) {
  auto pt = [](int day, int cycle, double sh) { return TruthPoint{{0, day, cycle}, sh, classify_sh(sh)}; };
  std::vector<TruthPoint> truth{pt(1, 1, 0.95), pt(1, 2, 0.85), pt(2, 1, 0.85), pt(2, 2, 0.75),
                                pt(3, 1, 0.65), pt(3, 2, 0.6)};
  EXPECT_EQ(*switching_day(truth, 0), 1);  // tie C1/C2 goes to the riper class
  EXPECT_EQ(*switching_day(truth, 1), 2);
  EXPECT_EQ(*switching_day(truth, 2), 3);
  std::vector<TruthPoint> firm{pt(1, 1, 0.95), pt(2, 1, 0.93)};
  EXPECT_FALSE(switching_day(firm, 0).has_value());
}

TEST(SwitchingDay, ToleranceIsMonotoneAndZeroIsBaseline) {
  const auto& r = cohort32();
  const auto fused = reports_of(r.lofo, ModelTag::Fused);
  const auto h = switching_day_analysis(fused, r.sim.truth);
  for (std::size_t t = 0; t < 3; ++t) {
    const auto base = *accuracy(r.lofo.confusion[2][t]).overall;
    EXPECT_DOUBLE_EQ(h[t].accuracy(0), base);
    EXPECT_EQ(h[t].total, r.lofo.confusion[2][t].total());
    EXPECT_EQ(h[t].errors(), r.lofo.confusion[2][t].fp + r.lofo.confusion[2][t].fn);
    double prev = h[t].accuracy(0);
    for (int d = 1; d <= 7; ++d) {
      const double a = h[t].accuracy(d);
      EXPECT_GE(a, prev);
      long within = 0;
      for (const auto& [k, n] : h[t].bins)
        if (std::abs(k) <= d) within += n;
      if (within > 0) EXPECT_GT(a, base);
      prev = a;
    }
    EXPECT_LE(prev, 1.0);
  }
}

TEST(ShDistance, BandIsMonotoneAndZeroIsBaseline) {
  const auto& r = cohort32();
  const auto sh = sh_distance_analysis(reports_of(r.lofo, ModelTag::Fused), r.sim.truth);
  for (std::size_t t = 0; t < 3; ++t) {
    const auto base = *accuracy(r.lofo.confusion[2][t]).overall;
    EXPECT_DOUBLE_EQ(sh.accuracy(t, 0.0), base);
    EXPECT_EQ(sh.errors_within(t, 0.0), 0);
    double prev = base;
    for (double band : {0.01, 0.05, 0.10, 0.2}) {
      const double a = sh.accuracy(t, band);
      EXPECT_GE(a, prev);
      if (sh.errors_within(t, band) > 0) EXPECT_GT(a, base);
      prev = a;
    }
  }
}

TEST(Evolution, SharesPartitionAndProgress) {
  const auto& r = cohort32();
  const auto rows = evolution_summary(reports_of(r.lofo, ModelTag::Fused));
  ASSERT_EQ(rows.size(), 28u);
  EXPECT_GE(rows.front().share(RipeningClass::C1), 0.9);
  double prev_c1 = 1.0, prev_c4 = 0.0;
  for (const auto& row : rows) {
    EXPECT_EQ(row.fruits, static_cast<long>(r.lofo.outcomes.size()));
    double sum = 0.0;
    for (int k = 1; k <= 4; ++k) sum += row.share(class_from_ordinal(k));
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_LE(row.share(RipeningClass::C1), prev_c1 + 1e-12);
    EXPECT_GE(row.share(RipeningClass::C4), prev_c4 - 1e-12);
    EXPECT_GE(row.abstain_share(), 0.0);
    EXPECT_LE(row.abstain_share(), 1.0);
    prev_c1 = row.share(RipeningClass::C1);
    prev_c4 = row.share(RipeningClass::C4);
  }
  EXPECT_GT(rows.back().share(RipeningClass::C4), 0.5);
}

TEST(Variants, FusedPassesWheneverEitherSourcePasses) {
  const auto& r = cohort32();
  for (const auto& [f, o] : r.lofo.outcomes)
    for (std::size_t c = 0; c < o.reports[2].size(); ++c)
      for (std::size_t t = 0; t < 3; ++t)
        EXPECT_GE(o.reports[2][c].states[t], std::max(o.reports[0][c].states[t], o.reports[1][c].states[t]));
}
