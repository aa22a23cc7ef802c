#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "oracles/auc_oracle.hpp"
#include "oracles/cases.hpp"
#include "oracles/qp_oracle.hpp"
#include "ripen/experiment.hpp"

using namespace ripen;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Criterion {
  int id;
  std::string name;
  bool pass = true;
  std::vector<std::string> notes{};

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

ExperimentConfig calibrated(std::uint64_t seed) {
  auto c = load_config((fs::path(CONFIG_DIR) / "training32.json").string());
  c.seed = seed;
  return c;
}

struct SeedRun {
  ExperimentConfig config;
  Simulation sim;
  EvaluationBundle eval;
  double seconds = 0.0;
};

SeedRun run_seed(std::uint64_t seed) {
  const auto t0 = Clock::now();
  SeedRun r;
  r.config = calibrated(seed);
  r.sim = simulate(r.config);
  r.eval = evaluate(r.config, r.sim.logs, r.sim.truth);
  r.seconds = seconds_since(t0);
  return r;
}

Criterion addressing_and_timing() {
  Criterion k{1, "addressing and timing"};
  auto t0 = Clock::now();
  const ScanConfig cfg;
  const auto tags = cfg.selected_tags();
  std::set<TagAddress> unique(tags.begin(), tags.end());
  std::set<int> plan_modalities;
  for (const auto& q : tag_plan(cfg)) plan_modalities.insert(q.modality.index());
  const auto duration = cfg.scan_duration_ms();
  const double accounting_s = seconds_since(t0);
  k.check(tags.size() == 384 && unique.size() == 384, "384 distinct tag addresses");
  k.check(plan_modalities.size() == 8, "per-tag plan spans 8 modalities");
  k.check(duration == 384LL * 35 * 1000, fmt("scan duration %.0f s = 384 x 35 s", duration / 1000.0));
  k.check(duration <= 4LL * 3600 * 1000, "scan fits in 4 h");
  k.check(accounting_s < 1.0, fmt("accounting runtime %.4f s < 1 s", accounting_s));

  t0 = Clock::now();
  std::map<FruitId, ShTrajectory> traj;
  for (auto f : cfg.selected_fruits()) traj[f] = generate_trajectory(f, CohortProfile{}, 1);
  const ChannelModel ch(ChannelParams{}, 1);
  SimulatedSource src(ch, traj, cfg.ramp);
  const auto log = run_scan(TagList::full_trolley(), src, cfg, CalendarEntry{});
  const double scan_s = seconds_since(t0);
  std::map<TagAddress, std::set<int>> seen;
  std::int64_t last = 0;
  for (const auto& s : log.samples) {
    seen[s.address].insert(s.modality.index());
    last = std::max(last, s.timestamp_ms);
  }
  bool all_eight = seen.size() == 384;
  for (const auto& [a, m] : seen) all_eight = all_eight && m.size() == 8;
  k.check(all_eight, "simulated scan queried 384 tags x 8 modalities");
  k.check(last < duration, "all queries inside the scan window");
  k.check(scan_s < 60.0, fmt("full simulated scan %.2f s < 60 s", scan_s));
  return k;
}

Criterion svm_oracle() {
  Criterion k{2, "SMO vs QP oracle"};
  const auto t0 = Clock::now();
  int objective_ok = 0, labels_ok = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto ds = cases::svm_dataset(seed);
    std::vector<int> ids;
    for (std::size_t j = 0; j < ds.x[0].size(); ++j) ids.push_back(static_cast<int>(j) + 1);
    SvmParams p;
    p.tolerance = 1e-8;
    const auto m = train_svm(ds.x, ds.y, ids, p);
    const auto ref = oracle::solve(ds.x, ds.y, p.C);
    const double rel = std::abs(m.info.dual_objective - ref.objective) / std::abs(ref.objective);
    worst = std::max(worst, rel);
    objective_ok += rel <= 1e-3;
    bool same = true;
    for (const auto& q : cases::probe_grid(ds, seed)) same = same && predict(m, q).label == (ref.decision(q) > 0.0);
    labels_ok += same;
  }
  const double s = seconds_since(t0);
  k.check(objective_ok == 50, fmt("%.0f/50 objectives within 1e-3 (worst %.2e)", objective_ok, worst));
  k.check(labels_ok == 50, fmt("%.0f/50 datasets with identical probe labels", labels_ok));
  k.check(s < 60.0, fmt("runtime %.2f s < 60 s", s));
  return k;
}

Criterion auc_oracle() {
  Criterion k{3, "AUC vs pair counting"};
  const auto t0 = Clock::now();
  int ok = 0;
  double worst = 0.0;
  std::vector<double> v;
  std::vector<int> l;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    cases::auc_case(seed, v, l);
    std::vector<ScoredLabel> s;
    for (std::size_t i = 0; i < v.size(); ++i) s.push_back({v[i], l[i]});
    const double e = std::abs(auc(s) - oracle::pairwise_auc(v, l));
    worst = std::max(worst, e);
    ok += e <= 1e-12;
  }
  const double s = seconds_since(t0);
  k.check(ok == 100, fmt("%.0f/100 score sets exact (worst %.1e)", ok, worst));
  k.check(s < 10.0, fmt("runtime %.3f s < 10 s", s));
  return k;
}

Criterion dataset_shape(const SeedRun& r) {
  Criterion k{4, "dataset shape"};
  const auto fs = build_features(r.sim.logs, r.config.window);
  k.check(fs.fruits.size() == 32, fmt("%.0f fruits", static_cast<double>(fs.fruits.size())));
  k.check(fs.cycles.size() == 28, fmt("%.0f cycles (7 days x 4)", static_cast<double>(fs.cycles.size())));
  k.check(fs.fruits.size() * fs.cycles.size() == 896, "896 fruit-evaluations");
  k.check(r.eval.lofo.evaluations == 896, fmt("LOFO evaluated %.0f", static_cast<double>(r.eval.lofo.evaluations)));
  std::set<int> ids;
  for (const auto& [f, ff] : fs.fruits)
    for (const auto& v : ff.a)
      for (std::size_t j = 0; j < v.values.size(); ++j)
        if (v.values[j]) ids.insert(static_cast<int>(j) + 1);
  k.check(kFeatureCount == 28 && ids.size() == 28, fmt("%.0f features per tag", static_cast<double>(ids.size())));
  return k;
}

Criterion abstention(const std::vector<SeedRun>& runs) {
  Criterion k{5, "abstention calibration"};
  for (const auto& r : runs) {
    const double a = r.eval.lofo.abstention_rate();
    k.check(a >= 0.03 && a <= 0.09, fmt("seed %.0f: abstention %.2f%% in [3%%, 9%%]", r.config.seed, 100 * a));
  }
  return k;
}

Criterion accuracy_band(const std::vector<SeedRun>& runs) {
  Criterion k{6, "accuracy band"};
  for (const auto& r : runs) {
    const auto& cm = r.eval.lofo.confusion;
    for (std::size_t t = 0; t < 3; ++t) {
      const double a = *accuracy(cm[0][t]).overall;
      const double bc = *accuracy(cm[1][t]).overall;
      const double fused = *accuracy(cm[2][t]).overall;
      const double th = kThresholds[t];
      k.check(fused >= 0.75, fmt("TH %.1f fused %.1f%% >= 75%% (seed %.0f)", th, 100 * fused, r.config.seed));
      k.check(fused >= std::max(a, bc) - 0.02,
              fmt("TH %.1f fused >= max(A, BC) - 2pp (max %.1f%%, seed %.0f)", th, 100 * std::max(a, bc),
                  r.config.seed));
      const auto& h = r.eval.switching[t];
      const double d0 = h.accuracy(0), d1 = h.accuracy(1);
      long day_band = 0;
      for (const auto& [d, n] : h.bins)
        if (std::abs(d) <= 1) day_band += n;
      k.check(d0 == fused && (day_band > 0 ? d1 > d0 : d1 >= d0),
              fmt("TH %.1f acc(+-1 day) %.1f%% vs %.1f%%", th, 100 * d1, 100 * d0));
      const double s0 = r.eval.sh.accuracy(t, 0.0), s5 = r.eval.sh.accuracy(t, 0.05);
      k.check(s0 == fused && (r.eval.sh.errors_within(t, 0.05) > 0 ? s5 > s0 : s5 >= s0),
              fmt("TH %.1f acc(+-5%% SH) %.1f%% vs %.1f%%", th, 100 * s5, 100 * s0));
    }
    k.check(r.seconds <= 900.0, fmt("seed %.0f end-to-end %.1f s <= 15 min", r.config.seed, r.seconds));
  }
  return k;
}

Criterion locality(const std::vector<SeedRun>& runs) {
  Criterion k{7, "error locality"};
  for (const auto& r : runs)
    for (std::size_t t = 0; t < 3; ++t) {
      const auto& h = r.eval.switching[t];
      const double loc = error_locality(h, 1);
      k.check(loc >= 0.5, fmt("seed %.0f TH %.1f: %.1f%% of switching-day errors within |D| <= 1",
                              r.config.seed, kThresholds[t], 100 * loc));
    }
  return k;
}

Criterion invariants(const std::vector<SeedRun>& runs) {
  Criterion k{8, "invariants"};
  long series = 0, latch_bad = 0, folds = 0, leak_bad = 0, account_bad = 0;
  for (const auto& r : runs) {
    const auto fs = build_features(r.sim.logs, r.config.window);
    const auto& lofo = r.eval.lofo;
    for (const auto& [fruit, o] : lofo.outcomes)
      for (const auto& reports : o.reports) {
        ++series;
        std::array<int, 3> prev{};
        int prev_class = 1;
        for (const auto& rep : reports) {
          for (std::size_t t = 0; t < 3; ++t) {
            if (rep.states[t] < prev[t]) ++latch_bad;
            prev[t] = rep.states[t];
          }
          if (ordinal(rep.latched_class) < prev_class) ++latch_bad;
          prev_class = ordinal(rep.latched_class);
        }
      }

    for (std::size_t i = 0; i < lofo.folds.size(); ++i) {
      const auto& fold = lofo.folds[i];
      if (fold.skipped) continue;
      ++folds;
      bool ok = std::find(fold.train_fruits.begin(), fold.train_fruits.end(), fold.held_out) ==
                    fold.train_fruits.end() &&
                fold.train_fruits.size() + 1 == fs.fruits.size();
      // Retrain with the held-out fruit's features scrambled; nothing may change.
      auto scrambled = fs;
      for (auto* stream : {&scrambled.fruits.at(fold.held_out).a, &scrambled.fruits.at(fold.held_out).bc})
        for (auto& v : *stream)
          for (auto& x : v.values)
            if (x) *x = 1e3 - 7.0 * *x;
      const auto tb = train_bundle(scrambled, r.sim.truth, fold.train_fruits, r.config.lofo, static_cast<int>(i));
      for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t t = 0; t < 3; ++t) ok = ok && tb.bundle.models[s][t].feature_ids == fold.selected[s][t];
      const auto votes = cast_votes(tb.bundle, fs.fruits.at(fold.held_out));
      const auto again = variant_reports(fold.held_out, fs.cycles, votes, r.config.lofo.classifier);
      const auto& orig = lofo.outcomes.at(fold.held_out).reports;
      for (std::size_t m = 0; m < 3; ++m)
        for (std::size_t c = 0; c < again[m].size(); ++c) ok = ok && to_row(again[m][c]) == to_row(orig[m][c]);
      leak_bad += !ok;
    }

    long classified = 0, abstained = 0, total = 0;
    for (const auto& [fruit, o] : lofo.outcomes)
      for (const auto& rep : o.reports[2]) {
        ++total;
        (rep.abstain ? abstained : classified) += 1;
        if (rep.abstain == rep.cls.has_value()) ++account_bad;
      }
    if (classified + abstained != total || total != lofo.evaluations || abstained != lofo.abstained ||
        lofo.confusion[2][0].total() != classified)
      ++account_bad;
  }
  k.check(latch_bad == 0, fmt("%.0f report series monotone (%.0f violations)", series, latch_bad));
  k.check(leak_bad == 0, fmt("%.0f folds leak-free (%.0f failures)", folds, leak_bad));
  k.check(account_bad == 0, "classified + abstained = total");

  // Empty cavity replay: 15 days x 4 cycles, raw turn-on feature per tag.
  auto c = calibrated(1);
  c.days = 15;
  c.channel.loaded = false;
  const auto empty = simulate(c);
  const auto raw = extract_features(empty.logs);
  double worst_p2p = 0.0;
  long tags = 0;
  for (const auto& [key, s] : raw) {
    if (key.feature_id != 1 || s.points.empty()) continue;
    ++tags;
    double lo = 1e300, hi = -1e300;
    for (const auto& p : s.points) {
      lo = std::min(lo, p.value);
      hi = std::max(hi, p.value);
    }
    worst_p2p = std::max(worst_p2p, hi - lo);
  }
  k.check(tags == 96 && worst_p2p <= 1.5,
          fmt("empty cavity turn-on peak-to-peak %.2f dB <= 1.5 dB over %.0f tags", worst_p2p, tags));

  long reads = 0, inside = 0;
  for (const auto& r : runs)
    for (const auto& log : r.sim.logs)
      for (const auto& s : log.samples)
        if (s.rssi_dbm) {
          ++reads;
          inside += *s.rssi_dbm >= -75.0 && *s.rssi_dbm <= -50.0;
        }
  const double frac = reads ? static_cast<double>(inside) / static_cast<double>(reads) : 0.0;
  k.check(frac >= 0.99, fmt("loaded RSSI within [-75, -50] dBm for %.3f%% of %.0f reads", 100 * frac, reads));
  return k;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) {
      std::ifstream in(e.path(), std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      out[fs::relative(e.path(), dir).string()] = ss.str();
    }
  return out;
}

int run(const std::string& args) {
  const std::string cmd = std::string(RIPENCTL_PATH) + " " + args + " >/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Criterion determinism() {
  Criterion k{9, "determinism"};
  const auto root = fs::temp_directory_path() / "ripen_acceptance_determinism";
  fs::remove_all(root);
  const auto cfg = (fs::path(CONFIG_DIR) / "training32.json").string();
  for (const char* tag : {"a", "b"}) {
    const auto d = (root / tag).string();
    const int rc = run("simulate --config " + cfg + " --out " + d + "/sim") +
                   run("train --config " + cfg + " --in " + d + "/sim --out " + d + "/models") +
                   run("evaluate --config " + cfg + " --in " + d + "/sim --out " + d + "/eval");
    k.check(rc == 0, std::string("run ") + tag + " exited cleanly");
  }
  const auto a = snapshot(root / "a"), b = snapshot(root / "b");
  k.check(!a.empty() && a.size() == b.size(), fmt("%.0f files per run", static_cast<double>(a.size())));
  long differing = 0;
  for (const auto& [name, bytes] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second != bytes) {
      ++differing;
      k.notes.push_back("     differs: " + name);
    }
  }
  k.check(differing == 0, "simulate + train + evaluate bundles byte-identical");
  fs::remove_all(root);
  return k;
}

}  // namespace

int main() {
  std::vector<Criterion> results;
  try {
    results.push_back(addressing_and_timing());
    results.push_back(svm_oracle());
    results.push_back(auc_oracle());
    std::vector<SeedRun> runs;
    for (std::uint64_t seed : {1, 2, 3}) runs.push_back(run_seed(seed));
    results.push_back(dataset_shape(runs.front()));
    results.push_back(abstention(runs));
    results.push_back(accuracy_band(runs));
    results.push_back(locality(runs));
    results.push_back(invariants(runs));
    results.push_back(determinism());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  bool all = true;
  for (const auto& r : results) {
    for (const auto& n : r.notes) std::cout << "    " << n << '\n';
    std::cout << (r.pass ? "PASS" : "FAIL") << " criterion " << r.id << ": " << r.name << "\n\n";
    all = all && r.pass;
  }
  return all ? 0 : 1;
}
