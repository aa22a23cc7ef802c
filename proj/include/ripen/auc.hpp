#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ripen/csv.hpp"
#include "ripen/errors.hpp"
#include "ripen/pipeline.hpp"

namespace ripen {

struct ScoredLabel {
  double value;
  int label;  // 0 or 1
};

// Mann-Whitney AUC: P(pos > neg) + 0.5 P(pos == neg), counted exactly by tie groups.
inline double auc(std::span<const ScoredLabel> scores) {
  std::vector<ScoredLabel> s(scores.begin(), scores.end());
  std::uint64_t pos = 0, neg = 0;
  for (const auto& x : s) {
    if (x.label != 0 && x.label != 1) throw DataError("AUC labels must be 0 or 1");
    (x.label ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0) throw DataError("AUC undefined: only one class present");
  std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.value < b.value; });

  // Twice the number of (pos, neg) wins, so ties stay integral.
  std::uint64_t twice_wins = 0;
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    std::uint64_t gp = 0, gn = 0;
    while (j < s.size() && s[j].value == s[i].value) {
      (s[j].label ? gp : gn) += 1;
      ++j;
    }
    twice_wins += 2 * gp * neg_below + gp * gn;
    neg_below += gn;
    i = j;
  }
  return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

inline double effective_auc(double a) { return std::max(a, 1.0 - a); }

struct RankedFeature {
  int feature_id;
  double auc;  // raw, before folding around 0.5
};

struct AucRanking {
  double threshold = 0.9;
  ModelSource source = ModelSource::A;
  std::vector<RankedFeature> entries;  // descending effective AUC, ties by feature id
  std::vector<int> undefined;          // features without both labels present
};

struct LabeledVector {
  const FeatureVector* features;
  int label;
};

// Ranks all catalogue features by AUC over the training vectors.
inline AucRanking rank_features(std::span<const LabeledVector> train, double threshold,
                                ModelSource source) {
  AucRanking r;
  r.threshold = threshold;
  r.source = source;
  std::vector<ScoredLabel> scores;
  for (int id = 1; id <= kFeatureCount; ++id) {
    scores.clear();
    bool has_pos = false, has_neg = false;
    for (const auto& lv : train) {
      if (auto v = (*lv.features)[id]) {
        scores.push_back({*v, lv.label});
        (lv.label ? has_pos : has_neg) = true;
      }
    }
    if (!has_pos || !has_neg) {
      r.undefined.push_back(id);
      continue;
    }
    r.entries.push_back({id, auc(scores)});
  }
  std::stable_sort(r.entries.begin(), r.entries.end(), [](const auto& a, const auto& b) {
    const double ea = effective_auc(a.auc), eb = effective_auc(b.auc);
    if (ea != eb) return ea > eb;
    return a.feature_id < b.feature_id;
  });
  return r;
}

// Feature ids of the k best-ranked features, in ascending id order.
inline std::vector<int> select_top(const AucRanking& ranking, int k) {
  if (k < 1 || k > kFeatureCount) throw ConfigError("k must be in [1, 28]");
  if (static_cast<int>(ranking.entries.size()) < k)
    throw DataError("feature selection needs " + std::to_string(k) + " features, only " +
                    std::to_string(ranking.entries.size()) + " have a defined AUC");
  std::vector<int> ids;
  for (int i = 0; i < k; ++i) ids.push_back(ranking.entries[static_cast<std::size_t>(i)].feature_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline std::string threshold_label(double th) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%.1f", th);
  return buf;
}

inline constexpr std::string_view kRankingHeader = "threshold,model,rank,feature_id,auc";

inline void write_ranking_csv(std::ostream& os, std::span<const AucRanking> rankings) {
  os << kRankingHeader << '\n';
  for (const auto& r : rankings) {
    int rank = 1;
    for (const auto& e : r.entries)
      os << threshold_label(r.threshold) << ',' << to_string(r.source) << ',' << rank++ << ','
         << e.feature_id << ',' << csv::fmt(e.auc) << '\n';
  }
}

}  // namespace ripen
