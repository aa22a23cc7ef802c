#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ripen/channel.hpp"
#include "ripen/evaluation.hpp"
#include "ripen/interrogation.hpp"
#include "ripen/scanlog_io.hpp"

namespace ripen {

inline void to_json(nlohmann::json& j, const Range& r) { j = nlohmann::json::array({r.lo, r.hi}); }
inline void from_json(const nlohmann::json& j, Range& r) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("range must be [lo, hi]");
  r = {j[0].get<double>(), j[1].get<double>()};
}
inline void to_json(nlohmann::json& j, const Spread& s) { j = {{"mean", s.mean}, {"sd", s.sd}}; }
inline void from_json(const nlohmann::json& j, Spread& s) {
  s = {j.at("mean").get<double>(), j.at("sd").get<double>()};
}

template <class F>
void visit_fields(ChannelParams& p, F&& f) {
  f("loaded", p.loaded);
  f("turn_on_base_dbm", p.turn_on_base_dbm);
  f("turn_on_curvature_db", p.turn_on_curvature_db);
  f("resonance_mhz", p.resonance_mhz);
  f("rssi_loaded_dbm", p.rssi_loaded_dbm);
  f("rssi_unloaded_dbm", p.rssi_unloaded_dbm);
  f("rssi_power_slope", p.rssi_power_slope);
  f("rssi_freq_slope", p.rssi_freq_slope);
  f("phase_freq_slope", p.phase_freq_slope);
  f("phase_power_slope", p.phase_power_slope);
  f("autotune_curvature_scale", p.autotune_curvature_scale);
  f("turn_on_sensitivity", p.turn_on_sensitivity);
  f("resonance_sensitivity", p.resonance_sensitivity);
  f("rssi_sensitivity", p.rssi_sensitivity);
  f("rssi_power_slope_sensitivity", p.rssi_power_slope_sensitivity);
  f("rssi_freq_slope_sensitivity", p.rssi_freq_slope_sensitivity);
  f("phase_sensitivity", p.phase_sensitivity);
  f("phase_power_slope_sensitivity", p.phase_power_slope_sensitivity);
  f("autotune_sensitivity_scale", p.autotune_sensitivity_scale);
  f("basal_delay_probability", p.basal_delay_probability);
  f("max_onset_delay_hours", p.max_onset_delay_hours);
  f("turn_on_noise_db", p.turn_on_noise_db);
  f("rssi_noise_db", p.rssi_noise_db);
  f("phase_noise_deg", p.phase_noise_deg);
  f("turn_on_cycle_db", p.turn_on_cycle_db);
  f("rssi_cycle_db", p.rssi_cycle_db);
  f("phase_cycle_deg", p.phase_cycle_deg);
  f("ripeness_jitter", p.ripeness_jitter);
  f("miss_probability", p.miss_probability);
  f("tag_outage_probability", p.tag_outage_probability);
  f("antenna_outage_probability", p.antenna_outage_probability);
  f("reader_max_power_dbm", p.reader_max_power_dbm);
}

struct EvaluationTolerances {
  std::vector<int> days{0, 1, 2};
  std::vector<double> sh_bands{0.0, 0.05, 0.10};
};

// Everything a run depends on. Outputs are a pure function of this value.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  CohortProfile cohort;
  int days = 7;
  int cycles_per_day = 4;
  ChannelParams channel;
  ScanConfig scan;
  int window = 7;
  LofoConfig lofo;
  EvaluationTolerances tolerances;
  std::string output_dir = "out";

  void validate() const {
    cohort.validate();
    channel.validate();
    scan.validate();
    if (days < 1 || cycles_per_day < 1) throw ConfigError("days and cycles_per_day must be >= 1");
    if (window < 1) throw ConfigError("moving-average window must be >= 1");
    if (lofo.selection.k_a < 1 || lofo.selection.k_a > kFeatureCount || lofo.selection.k_bc < 1 ||
        lofo.selection.k_bc > kFeatureCount)
      throw ConfigError("k must be in [1, 28]");
    if (!(lofo.svm.C > 0.0)) throw ConfigError("SVM C must be positive");
    if (lofo.svm.gamma && !(*lofo.svm.gamma > 0.0)) throw ConfigError("SVM gamma must be positive");
    if (!(lofo.svm.tolerance > 0.0)) throw ConfigError("SVM tolerance must be positive");
    for (int d : tolerances.days)
      if (d < 0) throw ConfigError("day tolerances must be non-negative");
    for (double b : tolerances.sh_bands)
      if (!(b >= 0.0)) throw ConfigError("SH bands must be non-negative");
    schedule_daily(cycles_per_day, days, scan.scan_duration_ms());
  }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  json channel = json::object();
  ChannelParams cp = c.channel;
  visit_fields(cp, [&](const char* name, auto& v) { channel[name] = v; });
  json fruits = json::array();
  for (auto f : c.scan.fruits) fruits.push_back(f.ordinal);
  return {
      {"seed", c.seed},
      {"cohort",
       {{"regime", to_string(c.cohort.regime)},
        {"median_c4_days", c.cohort.median_c4_days ? json(*c.cohort.median_c4_days) : json(nullptr)},
        {"sh_min_lo", c.cohort.sh_min_lo},
        {"sh_min_hi", c.cohort.sh_min_hi},
        {"lambda_log_sd", c.cohort.lambda_log_sd},
        {"days", c.days},
        {"cycles_per_day", c.cycles_per_day}}},
      {"channel", channel},
      {"scan",
       {{"fruits", fruits},
        {"per_tag_budget_s", c.scan.per_tag_budget_s},
        {"query_dwell_ms", c.scan.query_dwell_ms},
        {"power_min_dbm", c.scan.power_min_dbm},
        {"power_max_dbm", c.scan.power_max_dbm},
        {"power_step_db", c.scan.power_step_db},
        {"fixed_power_dbm", c.scan.fixed_power_dbm},
        {"ramp",
         {{"start_dbm", c.scan.ramp.start_dbm},
          {"max_dbm", c.scan.ramp.max_dbm},
          {"coarse_step_db", c.scan.ramp.coarse_step_db},
          {"fine_step_db", c.scan.ramp.fine_step_db}}},
        {"rssi_resolution_db", c.scan.rssi_resolution_db},
        {"phase_resolution_deg", c.scan.phase_resolution_deg}}},
      {"pipeline", {{"window", c.window}, {"catalogue_version", kCatalogueVersion}}},
      {"selection",
       {{"k_a", c.lofo.selection.k_a},
        {"k_bc", c.lofo.selection.k_bc},
        {"per_fold", c.lofo.selection.per_fold}}},
      {"svm",
       {{"C", c.lofo.svm.C},
        {"gamma", c.lofo.svm.gamma ? json(*c.lofo.svm.gamma) : json(nullptr)},
        {"tolerance", c.lofo.svm.tolerance},
        {"max_iter_factor", c.lofo.svm.max_iter_factor}}},
      {"classifier", {{"repair_hierarchy", c.lofo.classifier.repair_hierarchy}}},
      {"evaluation", {{"day_tolerances", c.tolerances.days}, {"sh_bands", c.tolerances.sh_bands}}},
      {"output_dir", c.output_dir},
  };
}

namespace detail {

// Reads known keys of a JSON object, rejecting anything unrecognised.
class Section {
 public:
  Section(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + " must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, _] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config key " + name_ + "." + k);
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad value for " + name_ + "." + key + ": " + e.what());
    }
  }

  template <class T>
  void get_optional(const std::string& key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) out.reset();
    else {
      T v{};
      get(key, v);
      out = v;
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const nlohmann::json& at(const std::string& key) const { return j_.at(key); }

 private:
  const nlohmann::json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  detail::Section top(j, "config");
  top.get("seed", c.seed);
  top.get("output_dir", c.output_dir);
  if (top.has("cohort")) {
    detail::Section s(top.at("cohort"), "cohort");
    std::string regime = to_string(c.cohort.regime);
    s.get("regime", regime);
    c.cohort.regime = regime_from_string(regime);
    s.get_optional("median_c4_days", c.cohort.median_c4_days);
    s.get("sh_min_lo", c.cohort.sh_min_lo);
    s.get("sh_min_hi", c.cohort.sh_min_hi);
    s.get("lambda_log_sd", c.cohort.lambda_log_sd);
    s.get("days", c.days);
    s.get("cycles_per_day", c.cycles_per_day);
  }
  if (top.has("channel")) {
    detail::Section s(top.at("channel"), "channel");
    visit_fields(c.channel, [&](const char* name, auto& v) { s.get(name, v); });
  }
  if (top.has("scan")) {
    detail::Section s(top.at("scan"), "scan");
    std::vector<int> fruits;
    s.get("fruits", fruits);
    std::optional<int> count;
    s.get_optional("fruit_count", count);
    if (count && !fruits.empty()) throw ConfigError("scan.fruits and scan.fruit_count are exclusive");
    if (count) {
      if (*count < 1 || *count > kFruitCount) throw ConfigError("scan.fruit_count must be in [1, 128]");
      for (int f = 1; f <= *count; ++f) fruits.push_back(f);
    }
    for (int f : fruits) c.scan.fruits.push_back(FruitId{f});
    s.get("per_tag_budget_s", c.scan.per_tag_budget_s);
    s.get("query_dwell_ms", c.scan.query_dwell_ms);
    s.get("power_min_dbm", c.scan.power_min_dbm);
    s.get("power_max_dbm", c.scan.power_max_dbm);
    s.get("power_step_db", c.scan.power_step_db);
    s.get("fixed_power_dbm", c.scan.fixed_power_dbm);
    s.get("rssi_resolution_db", c.scan.rssi_resolution_db);
    s.get("phase_resolution_deg", c.scan.phase_resolution_deg);
    if (s.has("ramp")) {
      detail::Section r(s.at("ramp"), "scan.ramp");
      r.get("start_dbm", c.scan.ramp.start_dbm);
      r.get("max_dbm", c.scan.ramp.max_dbm);
      r.get("coarse_step_db", c.scan.ramp.coarse_step_db);
      r.get("fine_step_db", c.scan.ramp.fine_step_db);
    }
  }
  if (top.has("pipeline")) {
    detail::Section s(top.at("pipeline"), "pipeline");
    s.get("window", c.window);
    std::string version(kCatalogueVersion);
    s.get("catalogue_version", version);
    if (version != kCatalogueVersion)
      throw ConfigError("config asks for feature catalogue " + version + ", this build provides " +
                        std::string(kCatalogueVersion));
  }
  if (top.has("selection")) {
    detail::Section s(top.at("selection"), "selection");
    s.get("k_a", c.lofo.selection.k_a);
    s.get("k_bc", c.lofo.selection.k_bc);
    s.get("per_fold", c.lofo.selection.per_fold);
  }
  if (top.has("svm")) {
    detail::Section s(top.at("svm"), "svm");
    s.get("C", c.lofo.svm.C);
    s.get_optional("gamma", c.lofo.svm.gamma);
    s.get("tolerance", c.lofo.svm.tolerance);
    s.get("max_iter_factor", c.lofo.svm.max_iter_factor);
  }
  if (top.has("classifier")) {
    detail::Section s(top.at("classifier"), "classifier");
    s.get("repair_hierarchy", c.lofo.classifier.repair_hierarchy);
  }
  if (top.has("evaluation")) {
    detail::Section s(top.at("evaluation"), "evaluation");
    s.get("day_tolerances", c.tolerances.days);
    s.get("sh_bands", c.tolerances.sh_bands);
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string config_hash(const ExperimentConfig& c) {
  const auto text = to_json(c).dump();
  return hex64(fnv1a64(text.data(), text.size()));
}

namespace fs = std::filesystem;

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

inline void write_text(const fs::path& p, const std::string& text) {
  auto out = csv::open_out(p.string());
  out << text;
  if (!out) throw IoError("failed writing " + p.string());
}

inline void write_json(const fs::path& p, const nlohmann::json& j) { write_text(p, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

inline nlohmann::json manifest(const ExperimentConfig& c, std::string_view kind) {
  return {{"bundle", kind}, {"config_hash", config_hash(c)}, {"catalogue_version", kCatalogueVersion}};
}

inline void write_config(const fs::path& dir, const ExperimentConfig& c) {
  write_json(dir / "config.json", to_json(c));
}

// ---- simulate ----

struct Simulation {
  std::map<FruitId, ShTrajectory> trajectories;
  std::vector<CalendarEntry> calendar;
  std::vector<ScanLog> logs;
  GroundTruth truth;
};

inline Simulation simulate(const ExperimentConfig& c) {
  c.validate();
  Simulation sim;
  for (auto f : c.scan.selected_fruits()) sim.trajectories[f] = generate_trajectory(f, c.cohort, c.seed);
  sim.calendar = schedule_daily(c.cycles_per_day, c.days, c.scan.scan_duration_ms());
  const ChannelModel channel(c.channel, c.seed);
  SimulatedSource source(channel, sim.trajectories, c.scan.ramp);
  sim.logs = run_campaign(TagList::full_trolley(), source, c.scan, sim.calendar);
  sim.truth = ground_truth(sim.trajectories, c.scan, sim.calendar);
  return sim;
}

struct SimulationSummary {
  int fruits = 0;
  int days = 0;
  int cycles = 0;
  long evaluations = 0;
  std::size_t samples = 0;
  std::array<std::array<double, 3>, 3> crossing_days{};  // [threshold] -> min, median, max
  std::array<int, 3> never_crossing{};
};

inline SimulationSummary summarize(const ExperimentConfig& c, const Simulation& sim) {
  SimulationSummary s;
  s.fruits = static_cast<int>(sim.trajectories.size());
  s.days = c.days;
  s.cycles = static_cast<int>(sim.calendar.size());
  s.evaluations = static_cast<long>(s.fruits) * s.cycles;
  for (const auto& l : sim.logs) s.samples += l.samples.size();
  for (std::size_t t = 0; t < 3; ++t) {
    std::vector<double> d;
    for (const auto& [_, tr] : sim.trajectories) {
      if (auto h = tr.crossing_hours(kThresholds[t])) d.push_back(*h / 24.0);
      else ++s.never_crossing[t];
    }
    if (d.empty()) continue;
    std::sort(d.begin(), d.end());
    const double med = d.size() % 2 ? d[d.size() / 2] : 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]);
    s.crossing_days[t] = {d.front(), med, d.back()};
  }
  return s;
}

inline void print_summary(std::ostream& os, const SimulationSummary& s) {
  char buf[160];
  os << "fruits " << s.fruits << ", days " << s.days << ", cycles " << s.cycles << ", fruit-evaluations "
     << s.evaluations << ", samples " << s.samples << '\n';
  for (std::size_t t = 0; t < 3; ++t) {
    std::snprintf(buf, sizeof buf, "crossing SH<%.1f: min %.2f d, median %.2f d, max %.2f d, never %d\n",
                  kThresholds[t], s.crossing_days[t][0], s.crossing_days[t][1], s.crossing_days[t][2],
                  s.never_crossing[t]);
    os << buf;
  }
}

inline SimulationSummary cmd_simulate(const ExperimentConfig& c, const fs::path& out_dir,
                                      std::ostream& log) {
  const auto sim = simulate(c);
  ensure_dir(out_dir);
  {
    auto os = csv::open_out((out_dir / "scanlog.csv").string());
    write_scanlog_csv(os, sim.logs);
  }
  {
    auto os = csv::open_out((out_dir / "ground_truth.csv").string());
    write_truth_csv(os, sim.truth);
  }
  {
    auto os = csv::open_out((out_dir / "tag_list.csv").string());
    TagList::full_trolley().write_csv(os);
  }
  write_config(out_dir, c);
  write_json(out_dir / "manifest.json", manifest(c, "simulation"));
  const auto s = summarize(c, sim);
  print_summary(log, s);
  return s;
}

// ---- train ----

inline std::string model_file_name(ModelSource src, std::size_t t) {
  static const char* th[] = {"09", "08", "07"};
  return "model_" + std::string(to_string(src)) + "_th" + th[t] + ".json";
}

inline std::vector<FruitId> fruits_of(const FeatureSet& fs) {
  std::vector<FruitId> out;
  for (const auto& [f, _] : fs.fruits) out.push_back(f);
  return out;
}

inline TrainedBundle cmd_train(const ExperimentConfig& c, const std::string& scanlog,
                               const std::string& truth, const fs::path& out_dir, std::ostream& log) {
  c.validate();
  const auto logs = read_scanlog_csv(scanlog);
  const auto gt = read_truth_csv(truth);
  const auto feats = build_features(logs, c.window);
  check_alignment(feats, gt);
  const auto fruits = fruits_of(feats);
  for (std::size_t t = 0; t < 3; ++t)
    if (!both_labels(gt, fruits, t))
      throw DataError("training data has a single label at threshold " + threshold_label(kThresholds[t]));
  const auto tb = train_bundle(feats, gt, fruits, c.lofo);

  ensure_dir(out_dir);
  for (auto src : {ModelSource::A, ModelSource::BC})
    for (std::size_t t = 0; t < 3; ++t)
      write_json(out_dir / model_file_name(src, t),
                 to_json(tb.bundle.models[static_cast<std::size_t>(src)][t]));
  {
    std::vector<AucRanking> all;
    for (const auto& per_src : tb.rankings)
      for (const auto& r : per_src) all.push_back(r);
    auto os = csv::open_out((out_dir / "selection.csv").string());
    write_ranking_csv(os, all);
  }
  write_config(out_dir, c);
  auto m = manifest(c, "models");
  m["window"] = c.window;
  m["repair_hierarchy"] = c.lofo.classifier.repair_hierarchy;
  write_json(out_dir / "manifest.json", m);

  log << "trained 6 models on " << fruits.size() << " fruits x " << feats.cycles.size() << " cycles\n";
  for (auto src : {ModelSource::A, ModelSource::BC})
    for (std::size_t t = 0; t < 3; ++t) {
      const auto& mdl = tb.bundle.models[static_cast<std::size_t>(src)][t];
      log << "  " << to_string(src) << " TH " << threshold_label(kThresholds[t]) << ": features";
      for (int id : mdl.feature_ids) log << ' ' << id;
      log << ", support vectors " << mdl.support_vectors.size() << '\n';
    }
  return tb;
}

// ---- classify ----

struct LoadedModels {
  ModelBundle bundle;
  int window = 7;
  ClassifierConfig classifier;
};

inline LoadedModels load_models(const fs::path& dir) {
  const auto m = read_json(dir / "manifest.json");
  const auto version = m.value("catalogue_version", std::string{});
  if (version != kCatalogueVersion)
    throw ContractError("models use feature catalogue '" + version + "', this build provides " +
                        std::string(kCatalogueVersion));
  LoadedModels lm;
  lm.window = m.value("window", 7);
  lm.classifier.repair_hierarchy = m.value("repair_hierarchy", true);
  for (auto src : {ModelSource::A, ModelSource::BC})
    for (std::size_t t = 0; t < 3; ++t)
      lm.bundle.models[static_cast<std::size_t>(src)][t] =
          svm_from_json(read_json(dir / model_file_name(src, t)));
  return lm;
}

struct Classification {
  std::vector<RipenessReport> reports;
  std::vector<DailyReport> daily;
  long abstained = 0;
};

inline Classification classify(const LoadedModels& lm, std::span<const ScanLog> logs) {
  const auto feats = build_features(logs, lm.window);
  if (feats.fruits.empty()) throw DataError("scan log contains no fruits");
  Classification out;
  for (const auto& [fruit, ff] : feats.fruits) {
    const auto votes = cast_votes(lm.bundle, ff);
    auto rs = classify_fruit(fruit, feats.cycles, votes, lm.classifier);
    auto daily = daily_reports(rs);
    for (const auto& r : rs) out.abstained += r.abstain ? 1 : 0;
    out.reports.insert(out.reports.end(), rs.begin(), rs.end());
    out.daily.insert(out.daily.end(), daily.begin(), daily.end());
  }
  return out;
}

inline Classification cmd_classify(const fs::path& models_dir, const std::string& scanlog,
                                   const fs::path& out_dir, std::ostream& log) {
  const auto lm = load_models(models_dir);
  const auto logs = read_scanlog_csv(scanlog);
  const auto res = classify(lm, logs);
  ensure_dir(out_dir);
  {
    auto os = csv::open_out((out_dir / "reports.csv").string());
    write_reports_csv(os, res.reports);
  }
  {
    auto os = csv::open_out((out_dir / "daily.csv").string());
    write_daily_csv(os, res.daily);
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "classified %zu fruit-evaluations, abstained %ld (%.2f%%)\n",
                res.reports.size(), res.abstained,
                res.reports.empty() ? 0.0 : 100.0 * static_cast<double>(res.abstained) /
                                                 static_cast<double>(res.reports.size()));
  log << buf;
  return res;
}

// ---- evaluate ----

struct EvaluationBundle {
  LofoResult lofo;
  std::array<SwitchingDayHistogram, 3> switching;  // fused model
  ShDistanceResult sh;
  std::vector<EvolutionRow> evolution;
  nlohmann::json summary;
};

inline double error_locality(const SwitchingDayHistogram& h, int within_days = 1) {
  long near = 0, all = 0;
  for (const auto& [d, n] : h.bins) {
    all += n;
    if (std::abs(d) <= within_days) near += n;
  }
  return all ? static_cast<double>(near) / static_cast<double>(all) : 1.0;
}

inline nlohmann::json opt_json(std::optional<double> v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline EvaluationBundle evaluate(const ExperimentConfig& c, std::span<const ScanLog> logs,
                                 const GroundTruth& gt) {
  c.validate();
  const auto feats = build_features(logs, c.window);
  check_alignment(feats, gt);
  EvaluationBundle b;
  b.lofo = lofo_cv(feats, gt, c.lofo);
  const auto fused = reports_of(b.lofo, ModelTag::Fused);
  b.switching = switching_day_analysis(fused, gt);
  b.sh = sh_distance_analysis(fused, gt);
  b.evolution = evolution_summary(fused);

  using nlohmann::json;
  json& s = b.summary;
  s["config_hash"] = config_hash(c);
  s["catalogue_version"] = kCatalogueVersion;
  s["fruits"] = feats.fruits.size();
  s["cycles"] = feats.cycles.size();
  s["evaluations"] = b.lofo.evaluations;
  s["abstained"] = b.lofo.abstained;
  s["classified"] = b.lofo.evaluations - b.lofo.abstained;
  s["abstention_rate"] = b.lofo.abstention_rate();
  long skipped = 0;
  for (const auto& f : b.lofo.folds) skipped += f.skipped ? 1 : 0;
  s["folds"] = b.lofo.folds.size();
  s["skipped_folds"] = skipped;
  for (std::size_t m = 0; m < 3; ++m)
    for (std::size_t t = 0; t < 3; ++t) {
      const auto& cm = b.lofo.confusion[m][t];
      const auto a = accuracy(cm);
      s["accuracy"][std::string(to_string(static_cast<ModelTag>(m)))][threshold_label(kThresholds[t])] = {
          {"tn", cm.tn}, {"fp", cm.fp}, {"fn", cm.fn}, {"tp", cm.tp},
          {"row0", opt_json(a.row0)}, {"row1", opt_json(a.row1)}, {"overall", opt_json(a.overall)}};
    }
  for (std::size_t t = 0; t < 3; ++t) {
    const auto th = threshold_label(kThresholds[t]);
    const auto& h = b.switching[t];
    for (int d : c.tolerances.days) s["tolerant_accuracy_days"][th][std::to_string(d)] = h.accuracy(d);
    for (double band : c.tolerances.sh_bands)
      s["tolerant_accuracy_sh"][th][csv::fmt(band)] = b.sh.accuracy(t, band);
    s["switching_day"][th] = {{"errors", h.errors()},
                              {"never_crossing_fruits", h.never_crossing_fruits.size()},
                              {"never_crossing_errors", h.never_crossing_errors},
                              {"locality_within_1_day", error_locality(h)}};
  }
  return b;
}

inline void write_evaluation_bundle(const fs::path& dir, const ExperimentConfig& c,
                                    const EvaluationBundle& b) {
  ensure_dir(dir);
  {
    auto os = csv::open_out((dir / "confusion.csv").string());
    os << "model,threshold,tn,fp,fn,tp,acc_row0,acc_row1,acc_overall\n";
    for (std::size_t m = 0; m < 3; ++m)
      for (std::size_t t = 0; t < 3; ++t) {
        const auto& cm = b.lofo.confusion[m][t];
        const auto a = accuracy(cm);
        os << to_string(cm.model) << ',' << threshold_label(cm.threshold) << ',' << cm.tn << ',' << cm.fp
           << ',' << cm.fn << ',' << cm.tp << ',' << csv::fmt(a.row0) << ',' << csv::fmt(a.row1) << ','
           << csv::fmt(a.overall) << '\n';
      }
  }
  {
    auto os = csv::open_out((dir / "switching_day.csv").string());
    os << "threshold,d,errors\n";
    for (const auto& h : b.switching)
      for (const auto& [d, n] : h.bins) os << threshold_label(h.threshold) << ',' << d << ',' << n << '\n';
  }
  {
    auto os = csv::open_out((dir / "sh_errors.csv").string());
    os << "fruit_id,threshold,sh,d,correct\n";
    for (const auto& r : b.sh.records)
      os << r.fruit.ordinal << ',' << threshold_label(r.threshold) << ',' << csv::fmt(r.sh) << ','
         << csv::fmt(r.d) << ',' << (r.correct ? 1 : 0) << '\n';
  }
  {
    auto os = csv::open_out((dir / "evolution.csv").string());
    os << "day,cycle,fruits,c1,c2,c3,c4,abstain\n";
    for (const auto& r : b.evolution)
      os << r.when.day << ',' << r.when.cycle << ',' << r.fruits << ','
         << csv::fmt(r.share(RipeningClass::C1)) << ',' << csv::fmt(r.share(RipeningClass::C2)) << ','
         << csv::fmt(r.share(RipeningClass::C3)) << ',' << csv::fmt(r.share(RipeningClass::C4)) << ','
         << csv::fmt(r.abstain_share()) << '\n';
  }
  {
    std::vector<RipenessReport> all;
    for (const auto& [_, o] : b.lofo.outcomes)
      all.insert(all.end(), o.reports[2].begin(), o.reports[2].end());
    auto os = csv::open_out((dir / "reports.csv").string());
    write_reports_csv(os, all);
  }
  {
    auto os = csv::open_out((dir / "folds.csv").string());
    os << "fold,held_out,train_fruits,skipped,reason,model,threshold,features\n";
    for (std::size_t k = 0; k < b.lofo.folds.size(); ++k) {
      const auto& f = b.lofo.folds[k];
      for (auto src : {ModelSource::A, ModelSource::BC})
        for (std::size_t t = 0; t < 3; ++t) {
          os << k << ',' << f.held_out.ordinal << ',' << f.train_fruits.size() << ',' << (f.skipped ? 1 : 0)
             << ',' << f.reason << ',' << to_string(src) << ',' << threshold_label(kThresholds[t]) << ',';
          const auto& ids = f.selected[static_cast<std::size_t>(src)][t];
          for (std::size_t i = 0; i < ids.size(); ++i) os << (i ? ";" : "") << ids[i];
          os << '\n';
        }
    }
  }
  {
    std::map<std::tuple<int, std::size_t, int>, int> freq;
    for (const auto& f : b.lofo.folds)
      for (int s = 0; s < 2; ++s)
        for (std::size_t t = 0; t < 3; ++t)
          for (int id : f.selected[static_cast<std::size_t>(s)][t]) ++freq[{s, t, id}];
    auto os = csv::open_out((dir / "selection_frequency.csv").string());
    os << "model,threshold,feature_id,folds\n";
    for (const auto& [key, n] : freq)
      os << to_string(static_cast<ModelSource>(std::get<0>(key))) << ','
         << threshold_label(kThresholds[std::get<1>(key)]) << ',' << std::get<2>(key) << ',' << n << '\n';
  }
  write_json(dir / "summary.json", b.summary);
  write_config(dir, c);
  write_json(dir / "manifest.json", manifest(c, "evaluation"));
}

inline void print_headline(std::ostream& os, const ExperimentConfig& c, const EvaluationBundle& b) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "evaluations %ld, abstained %ld (%.2f%%)\n", b.lofo.evaluations,
                b.lofo.abstained, 100.0 * b.lofo.abstention_rate());
  os << buf;
  for (std::size_t t = 0; t < 3; ++t) {
    os << "TH " << threshold_label(kThresholds[t]) << ":";
    for (std::size_t m = 0; m < 3; ++m) {
      const auto a = accuracy(b.lofo.confusion[m][t]);
      std::snprintf(buf, sizeof buf, " %s %.1f%%", std::string(to_string(static_cast<ModelTag>(m))).c_str(),
                    a.overall ? 100.0 * *a.overall : 0.0);
      os << buf;
    }
    for (int d : c.tolerances.days) {
      std::snprintf(buf, sizeof buf, " | +-%dd %.1f%%", d, 100.0 * b.switching[t].accuracy(d));
      os << buf;
    }
    for (double band : c.tolerances.sh_bands) {
      std::snprintf(buf, sizeof buf, " | +-%g%%SH %.1f%%", 100.0 * band, 100.0 * b.sh.accuracy(t, band));
      os << buf;
    }
    os << '\n';
  }
}

inline EvaluationBundle cmd_evaluate(const ExperimentConfig& c, const std::string& scanlog,
                                     const std::string& truth, const fs::path& out_dir,
                                     std::ostream& log) {
  const auto logs = read_scanlog_csv(scanlog);
  const auto gt = read_truth_csv(truth);
  auto b = evaluate(c, logs, gt);
  write_evaluation_bundle(out_dir, c, b);
  print_headline(log, c, b);
  return b;
}

}  // namespace ripen
