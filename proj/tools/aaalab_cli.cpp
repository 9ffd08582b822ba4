// Command-line front end: train the toy model, calibrate the defense
// temperature, run attack x defense grids, sweep AAA hyperparameters,
// and re-emit per-sample loss traces.
//
// Exit codes: 0 success, 1 usage error, 2 invariant violation.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aaalab/harness.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key = value config file");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "master seed (u64)");
  cmd->add_option("--set", args.overrides,
                  "config override key=value (repeatable)");
}

aaalab::ExperimentConfig build_config(const CommonArgs& args) {
  aaalab::ExperimentConfig cfg;
  if (!args.config_path.empty())
    cfg = aaalab::ExperimentConfig::from_file(args.config_path);
  for (const std::string& ov : args.overrides) {
    const std::size_t eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + ov + "'");
    cfg.set(aaalab::detail::trim(ov.substr(0, eq)),
            aaalab::detail::trim(ov.substr(eq + 1)));
  }
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (!args.seed.empty()) cfg.set("seed", args.seed);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Toy lab for score-based query attacks and the AAA "
               "logit post-processing defense"};
  app.require_subcommand(1);

  CommonArgs train_args, calibrate_args, attack_args, sweep_args, trace_args;
  CLI::App* train = app.add_subcommand(
      "train", "train the toy classifier and save its weights");
  add_common(train, train_args);
  CLI::App* calibrate = app.add_subcommand(
      "calibrate", "tune the defense temperature against validation ECE");
  add_common(calibrate, calibrate_args);
  CLI::App* attack = app.add_subcommand(
      "attack", "run the attack x defense grid, emit traces and reports");
  add_common(attack, attack_args);
  CLI::App* sweep = app.add_subcommand(
      "sweep", "rerun the AAA cell over a hyperparameter grid");
  add_common(sweep, sweep_args);
  CLI::App* trace = app.add_subcommand(
      "trace", "re-emit the per-query loss CSV for one sample");
  add_common(trace, trace_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) {
      const auto cfg = build_config(train_args);
      const auto out = aaalab::cmd_train(cfg);
      std::printf("weights: %s\n", out.weights_path.c_str());
      std::printf("train accuracy: %.4f\n", out.train_accuracy);
      std::printf("test accuracy: %.4f\n", out.test_accuracy);
    } else if (calibrate->parsed()) {
      const auto cfg = build_config(calibrate_args);
      const auto out = aaalab::cmd_calibrate(cfg);
      std::printf("tuned temperature: %g\n", out.temperature);
      std::printf("ece at T=1: %.6f\n", out.ece_before);
      std::printf("ece at T*:  %.6f\n", out.ece_after);
    } else if (attack->parsed()) {
      const auto cfg = build_config(attack_args);
      const auto cells = aaalab::cmd_attack(cfg);
      for (const auto& cell : cells) {
        std::printf("%s/%s: clean %.4f ece %.4f aq %.1f", to_string(cell.defense),
                    to_string(cell.method), cell.clean_accuracy,
                    cell.ece_value, cell.avg_queries);
        for (const auto& [cp, acc] : cell.adv_accuracy)
          std::printf(" adv@%d %.4f", cp, acc);
        std::printf("\n");
      }
    } else if (sweep->parsed()) {
      const auto cfg = build_config(sweep_args);
      const auto rows = aaalab::cmd_sweep(cfg);
      for (const auto& r : rows)
        std::printf("%s=%g: clean %.4f ece %.4f adv %.4f\n",
                    cfg.sweep_param.c_str(), r.value, r.clean_accuracy,
                    r.ece_value, r.adv_accuracy);
    } else if (trace->parsed()) {
      const auto cfg = build_config(trace_args);
      const std::string path = aaalab::cmd_trace(cfg);
      std::printf("trace: %s\n", path.c_str());
    }
  } catch (const aaalab::invariant_error& e) {
    std::fprintf(stderr, "invariant violation: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
