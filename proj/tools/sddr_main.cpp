#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sddr/errors.hpp"
#include "sddr/experiment.hpp"
#include "sddr/scenario.hpp"

namespace {

std::vector<sddr::SddrMode> parse_modes(const std::vector<std::string>& names) {
  std::vector<sddr::SddrMode> modes;
  for (const auto& name : names) modes.push_back(sddr::sddr_mode_from_string(name));
  return modes;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SDDR class-incremental learning engine"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";

  auto* run_cmd = app.add_subcommand("run", "Run one experiment per configured seed");
  run_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run_cmd->add_option("--out", out_dir, "Output directory");

  auto* ablate_cmd = app.add_subcommand("ablate", "Grid over sddr_mode x n x m x seeds");
  std::vector<std::string> mode_names{"off", "both"};
  std::vector<int> n_values{100};
  std::vector<std::size_t> m_values{20};
  std::vector<std::uint64_t> seed_values;
  ablate_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
  ablate_cmd->add_option("--out", out_dir, "Output directory");
  ablate_cmd->add_option("--modes", mode_names, "sddr modes")->delimiter(',');
  ablate_cmd->add_option("--n", n_values, "synthetic samples per class")->delimiter(',');
  ablate_cmd->add_option("--m", m_values, "memory exemplars per class")->delimiter(',');
  ablate_cmd->add_option("--seeds", seed_values, "run seeds")->delimiter(',');

  auto* gen_cmd = app.add_subcommand("gen", "Populate the offline synthetic store");
  std::string gen_root;
  gen_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
  gen_cmd->add_option("--root", gen_root, "Store root (defaults to synthetic.offline_root)");

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Loss gradient suite");
  int trials = 100;
  gradcheck_cmd->add_option("--trials", trials, "Number of randomized trials");

  auto* scenario_cmd = app.add_subcommand("scenario", "Print the class split table");
  scenario_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      sddr::ExperimentConfig cfg = sddr::load_config(config_path);
      sddr::execute_run(cfg, out_dir);
      std::cout << "wrote " << out_dir << "/results.csv\n";
    } else if (ablate_cmd->parsed()) {
      sddr::ExperimentConfig cfg = sddr::load_config(config_path);
      sddr::AblateGrid grid;
      grid.modes = parse_modes(mode_names);
      grid.n_values = n_values;
      grid.m_values = m_values;
      grid.seeds = seed_values.empty() ? cfg.run_seeds : seed_values;
      sddr::execute_ablate(cfg, grid, out_dir);
      std::cout << "wrote " << out_dir << "/results.csv\n";
    } else if (gen_cmd->parsed()) {
      sddr::ExperimentConfig cfg = sddr::load_config(config_path);
      std::string root = gen_root.empty() ? cfg.synthetic.offline_root : gen_root;
      if (root.empty()) throw sddr::ConfigError("gen needs --root or synthetic.offline_root");
      sddr::execute_gen(cfg, root);
      std::cout << "wrote offline store at " << root << "\n";
    } else if (gradcheck_cmd->parsed()) {
      sddr::GradCheckReport report = sddr::run_gradient_suite(trials, sddr::kDefaultSeed);
      std::printf("gradcheck: %d trials, max relative error %.3e\n", report.trials,
                  report.max_rel_error);
      if (report.max_rel_error >= 1e-5) {
        std::fprintf(stderr, "gradcheck FAILED (threshold 1e-5)\n");
        return 1;
      }
    } else if (scenario_cmd->parsed()) {
      sddr::ExperimentConfig cfg = sddr::load_config(config_path);
      sddr::Scenario scenario =
          sddr::build_scenario(cfg.scenario.num_classes, cfg.scenario.num_steps,
                               cfg.scenario.seed, cfg.scenario.base_fraction);
      std::printf("step  size  cumulative  classes\n");
      for (const auto& step : scenario.steps) {
        std::printf("%4d  %4zu  %10d  ", step.step_index, step.class_ids.size(),
                    scenario.cumulative_count(step.step_index));
        for (std::size_t i = 0; i < step.class_ids.size(); ++i) {
          std::printf("%s%d", i == 0 ? "" : ",", step.class_ids[i]);
        }
        std::printf("\n");
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
