#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ripen/experiment.hpp"
#include "ripen/scanlog_io.hpp"

using namespace ripen;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("ripen_exp_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig small(int fruits = 8, int days = 7, std::uint64_t seed = 3) {
  ExperimentConfig c;
  c.seed = seed;
  c.days = days;
  for (int f = 1; f <= fruits; ++f) c.scan.fruits.push_back(FruitId{f});
  return c;
}

// Runs simulate and train into dir, returning the path of the model directory.
fs::path simulate_and_train(const ExperimentConfig& c, const fs::path& dir) {
  std::ostringstream log;
  cmd_simulate(c, dir / "sim", log);
  cmd_train(c, (dir / "sim" / "scanlog.csv").string(), (dir / "sim" / "ground_truth.csv").string(),
            dir / "models", log);
  return dir / "models";
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RIPENCTL_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  auto c = small(5, 3, 99);
  c.cohort.regime = Regime::Accelerated;
  c.cohort.median_c4_days = 3.5;
  c.channel.miss_probability = 0.02;
  c.channel.rssi_sensitivity = {-7.0, 1.0};
  c.lofo.selection.per_fold = false;
  c.lofo.svm.gamma = 0.3;
  c.tolerances.sh_bands = {0.0, 0.2};
  const auto j = to_json(c);
  const auto back = config_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"default.json", "training32.json"}) {
    const auto c = load_config((fs::path(CONFIG_DIR) / name).string());
    EXPECT_NO_THROW(c.validate());
  }
  EXPECT_EQ(load_config((fs::path(CONFIG_DIR) / "default.json").string()).scan.selected_fruits().size(), 128u);
  EXPECT_EQ(load_config((fs::path(CONFIG_DIR) / "training32.json").string()).scan.selected_fruits().size(), 32u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  using nlohmann::json;
  EXPECT_THROW(config_from_json(json{{"sed", 1}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"channel", {{"miss_prob", 0.1}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"seed", "one"}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"scan", {{"fruit_count", 4}, {"fruits", {1, 2}}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"pipeline", {{"catalogue_version", "fc-0"}}}}), ConfigError);
  auto c = config_from_json(json{{"cohort", {{"cycles_per_day", 7}}}});
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Simulate, SameSeedGivesIdenticalFiles) {
  const auto c = small(4, 2);
  const auto d = scratch("sim_det");
  std::ostringstream log;
  cmd_simulate(c, d / "a", log);
  cmd_simulate(c, d / "b", log);
  for (const char* f : {"scanlog.csv", "ground_truth.csv", "tag_list.csv", "config.json", "manifest.json"}) {
    ASSERT_TRUE(fs::exists(d / "a" / f)) << f;
    EXPECT_EQ(slurp(d / "a" / f), slurp(d / "b" / f)) << f;
  }
  auto c2 = c;
  c2.seed = 4;
  cmd_simulate(c2, d / "c", log);
  EXPECT_NE(slurp(d / "a" / "scanlog.csv"), slurp(d / "c" / "scanlog.csv"));
  fs::remove_all(d);
}

TEST(Simulate, FilesRoundTrip) {
  const auto c = small(3, 2);
  const auto d = scratch("sim_rt");
  std::ostringstream log;
  cmd_simulate(c, d, log);
  const auto sim = simulate(c);
  EXPECT_EQ(read_scanlog_csv((d / "scanlog.csv").string()), sim.logs);
  EXPECT_EQ(read_truth_csv((d / "ground_truth.csv").string()), sim.truth);
  EXPECT_EQ(sim.logs.size(), 8u);
  EXPECT_EQ(sim.truth.size(), 3u);
  fs::remove_all(d);
}

TEST(Train, WritesSixModelsDeterministically) {
  const auto c = small();
  const auto d = scratch("train_det");
  const auto m1 = simulate_and_train(c, d / "1");
  const auto m2 = simulate_and_train(c, d / "2");
  int models = 0;
  for (auto src : {ModelSource::A, ModelSource::BC})
    for (std::size_t t = 0; t < 3; ++t) {
      const auto name = model_file_name(src, t);
      ASSERT_TRUE(fs::exists(m1 / name)) << name;
      EXPECT_EQ(slurp(m1 / name), slurp(m2 / name));
      ++models;
    }
  EXPECT_EQ(models, 6);
  EXPECT_EQ(slurp(m1 / "selection.csv"), slurp(m2 / "selection.csv"));
  const auto lm = load_models(m1);
  EXPECT_EQ(lm.bundle.models[0][0].feature_ids.size(), 5u);
  EXPECT_EQ(lm.bundle.models[1][2].feature_ids.size(), 10u);
  fs::remove_all(d);
}

TEST(Train, SingleLabelDataIsRejected) {
  const auto c = small(4, 1);
  const auto d = scratch("train_single");
  EXPECT_THROW(simulate_and_train(c, d), DataError);
  fs::remove_all(d);
}

TEST(Train, MissingTruthColumnIsRejected) {
  const auto c = small(3, 2);
  const auto d = scratch("train_col");
  std::ostringstream log;
  cmd_simulate(c, d, log);
  {
    std::ofstream os(d / "bad_truth.csv");
    os << "fruit_id,day,cycle,sh\n1,1,1,1\n";
  }
  EXPECT_THROW(cmd_train(c, (d / "scanlog.csv").string(), (d / "bad_truth.csv").string(), d / "m", log),
               DataError);
  fs::remove_all(d);
}

TEST(Train, EmptyScanLogIsRejected) {
  const auto c = small(3, 2);
  const auto d = scratch("train_empty");
  std::ostringstream log;
  cmd_simulate(c, d, log);
  {
    std::ofstream os(d / "empty.csv");
    os << kScanLogHeader << '\n';
  }
  EXPECT_THROW(cmd_train(c, (d / "empty.csv").string(), (d / "ground_truth.csv").string(), d / "m", log),
               DataError);
  fs::remove_all(d);
}

TEST(Classify, CatalogueMismatchIsAContractError) {
  const auto c = small();
  const auto d = scratch("cls_cat");
  const auto models = simulate_and_train(c, d);
  auto m = read_json(models / "manifest.json");
  m["catalogue_version"] = "fc-0";
  write_json(models / "manifest.json", m);
  EXPECT_THROW(load_models(models), ContractError);
  fs::remove_all(d);
}

TEST(Classify, ReproducesReportsAndCountsAbstentions) {
  const auto c = small();
  const auto d = scratch("cls_rep");
  const auto models = simulate_and_train(c, d);
  std::ostringstream log;
  const auto a = cmd_classify(models, (d / "sim" / "scanlog.csv").string(), d / "out1", log);
  const auto b = cmd_classify(models, (d / "sim" / "scanlog.csv").string(), d / "out2", log);
  EXPECT_EQ(slurp(d / "out1" / "reports.csv"), slurp(d / "out2" / "reports.csv"));
  EXPECT_EQ(slurp(d / "out1" / "daily.csv"), slurp(d / "out2" / "daily.csv"));
  EXPECT_EQ(a.reports.size(), 8u * 28u);
  EXPECT_EQ(a.daily.size(), 8u * 7u);
  long abstained = 0;
  for (const auto& r : a.reports) abstained += r.abstain ? 1 : 0;
  EXPECT_EQ(abstained, a.abstained);
  const auto rows = read_reports_csv((d / "out1" / "reports.csv").string());
  ASSERT_EQ(rows.size(), a.reports.size());
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i], to_row(a.reports[i]));
  fs::remove_all(d);
}

TEST(Classify, AllMissedLogAbstainsEverywhere) {
  const auto c = small();
  const auto d = scratch("cls_miss");
  const auto models = simulate_and_train(c, d);
  auto dead = small(4, 2, 11);
  dead.channel.miss_probability = 1.0;
  const auto sim = simulate(dead);
  const auto res = classify(load_models(models), sim.logs);
  EXPECT_EQ(res.reports.size(), 4u * 8u);
  EXPECT_EQ(res.abstained, static_cast<long>(res.reports.size()));
  for (const auto& day : res.daily) EXPECT_FALSE(day.cls.has_value());
  fs::remove_all(d);
}

TEST(Classify, FreshCohortIsUnripeOnDayOne) {
  const auto c = small(16);
  const auto d = scratch("cls_fresh");
  const auto models = simulate_and_train(c, d);
  auto fresh = small(16, 1, 21);
  fresh.cohort.median_c4_days = 60.0;
  fresh.channel.miss_probability = fresh.channel.tag_outage_probability = 0.0;
  fresh.channel.antenna_outage_probability = 0.0;
  const auto sim = simulate(fresh);
  const auto res = classify(load_models(models), sim.logs);
  ASSERT_EQ(res.daily.size(), 16u);
  for (const auto& day : res.daily) {
    ASSERT_TRUE(day.cls.has_value());
    EXPECT_EQ(*day.cls, RipeningClass::C1) << day.fruit.ordinal;
  }
  fs::remove_all(d);
}

TEST(Evaluate, BundleIsCompleteAndDeterministic) {
  const auto c = small(8);
  const auto d = scratch("eval_det");
  std::ostringstream log;
  cmd_simulate(c, d / "sim", log);
  const auto scan = (d / "sim" / "scanlog.csv").string();
  const auto truth = (d / "sim" / "ground_truth.csv").string();
  const auto b = cmd_evaluate(c, scan, truth, d / "e1", log);
  cmd_evaluate(c, scan, truth, d / "e2", log);
  for (const char* f : {"confusion.csv", "switching_day.csv", "sh_errors.csv", "evolution.csv", "reports.csv",
                        "folds.csv", "selection_frequency.csv", "summary.json", "config.json", "manifest.json"}) {
    ASSERT_TRUE(fs::exists(d / "e1" / f)) << f;
    EXPECT_EQ(slurp(d / "e1" / f), slurp(d / "e2" / f)) << f;
  }
  const auto s = read_json(d / "e1" / "summary.json");
  EXPECT_EQ(s.at("evaluations").get<long>(), b.lofo.evaluations);
  EXPECT_EQ(s.at("classified").get<long>() + s.at("abstained").get<long>(), s.at("evaluations").get<long>());
  EXPECT_EQ(s.at("config_hash").get<std::string>(), config_hash(c));
  fs::remove_all(d);
}

TEST(Cli, ExitCodes) {
  const auto d = scratch("cli");
  {
    std::ofstream os(d / "cfg.json");
    os << R"({"seed":5,"cohort":{"days":7,"cycles_per_day":4},"scan":{"fruit_count":6}})";
  }
  {
    std::ofstream os(d / "bad.json");
    os << R"({"seed":5,"cohort":{"dayz":7}})";
  }
  const auto cfg = (d / "cfg.json").string();
  const auto out = d.string();
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("simulate --config " + (d / "bad.json").string() + " --out " + out + "/x"), 2);
  EXPECT_EQ(run_cli("simulate --config " + cfg + " --out " + out + "/sim"), 0);
  EXPECT_TRUE(fs::exists(d / "sim" / "scanlog.csv"));
  EXPECT_EQ(run_cli("train --config " + cfg + " --in " + out + "/sim --out " + out + "/models"), 0);
  EXPECT_EQ(run_cli("classify --config " + cfg + " --models " + out + "/models --in " + out + "/sim --out " +
                    out + "/cls"),
            0);
  EXPECT_TRUE(fs::exists(d / "cls" / "reports.csv"));
  EXPECT_EQ(run_cli("classify --config " + cfg + " --in " + out + "/sim --out " + out + "/cls"), 2);
  EXPECT_EQ(run_cli("train --config " + cfg + " --in " + out + "/nowhere --out " + out + "/m2"), 3);
  EXPECT_EQ(run_cli("evaluate --config " + cfg + " --seed 5 --in " + out + "/sim --out " + out + "/eval"), 0);
  EXPECT_TRUE(fs::exists(d / "eval" / "summary.json"));
  fs::remove_all(d);
}
