#include <CLI11.hpp>
#include <iostream>

#include "ripen/experiment.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config (JSON)");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--seed", c.seed, "overrides the config seed");
}

ripen::ExperimentConfig resolve(const Common& c) {
  auto cfg = c.config.empty() ? ripen::ExperimentConfig{} : ripen::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

std::string out_dir(const Common& c, const ripen::ExperimentConfig& cfg) {
  return c.out.empty() ? cfg.output_dir : c.out;
}

// Either --in <simulation dir> or explicit --scanlog / --truth files.
struct Inputs {
  std::string in;
  std::string scanlog;
  std::string truth;

  std::string scanlog_path() const {
    if (!scanlog.empty()) return scanlog;
    if (in.empty()) throw ripen::ConfigError("no scan log given (--in or --scanlog)");
    return (std::filesystem::path(in) / "scanlog.csv").string();
  }
  std::string truth_path() const {
    if (!truth.empty()) return truth;
    if (in.empty()) throw ripen::ConfigError("no ground truth given (--in or --truth)");
    return (std::filesystem::path(in) / "ground_truth.csv").string();
  }
};

void add_inputs(CLI::App* cmd, Inputs& in, bool truth) {
  cmd->add_option("--in", in.in, "directory written by simulate");
  cmd->add_option("--scanlog", in.scanlog, "scan log CSV");
  if (truth) cmd->add_option("--truth", in.truth, "ground truth CSV");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RFID ripening monitor: simulate, train, classify, evaluate"};
  app.require_subcommand(1);

  Common c_sim, c_train, c_cls, c_eval;
  Inputs i_train, i_cls, i_eval;
  std::string models;

  auto* sim = app.add_subcommand("simulate", "simulate a ripening campaign and its scan logs");
  add_common(sim, c_sim);
  auto* train = app.add_subcommand("train", "train the six threshold models");
  add_common(train, c_train);
  add_inputs(train, i_train, true);
  auto* cls = app.add_subcommand("classify", "classify a scan log with trained models");
  add_common(cls, c_cls);
  add_inputs(cls, i_cls, false);
  cls->add_option("--models", models, "directory written by train")->required();
  auto* eval = app.add_subcommand("evaluate", "leave-one-fruit-out evaluation");
  add_common(eval, c_eval);
  add_inputs(eval, i_eval, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*sim) {
      const auto cfg = resolve(c_sim);
      ripen::cmd_simulate(cfg, out_dir(c_sim, cfg), std::cout);
    } else if (*train) {
      const auto cfg = resolve(c_train);
      ripen::cmd_train(cfg, i_train.scanlog_path(), i_train.truth_path(), out_dir(c_train, cfg), std::cout);
    } else if (*cls) {
      const auto cfg = resolve(c_cls);
      ripen::cmd_classify(models, i_cls.scanlog_path(), out_dir(c_cls, cfg), std::cout);
    } else if (*eval) {
      const auto cfg = resolve(c_eval);
      ripen::cmd_evaluate(cfg, i_eval.scanlog_path(), i_eval.truth_path(), out_dir(c_eval, cfg), std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ripen::exit_code_for(e);
  }
  return 0;
}
