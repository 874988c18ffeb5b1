#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sddr/config.hpp"
#include "sddr/synthetic.hpp"
#include "sddr/trainers.hpp"

namespace sddr {

struct TaskData {
  Dataset train;
  Dataset test;
  std::shared_ptr<const ClassSampler> sampler;  // null for cifar100
};

TaskData build_task(const ExperimentConfig& cfg, std::uint64_t run_seed);
std::unique_ptr<GenerativeSource> build_source(const ExperimentConfig& cfg, const TaskData& task);
RunPlan build_plan(const ExperimentConfig& cfg, std::uint64_t run_seed);

struct SingleRun {
  std::string run_id;
  std::uint64_t seed = 0;
  ExperimentConfig config;
  RunOutput output;
};

SingleRun run_one(const ExperimentConfig& cfg, std::uint64_t run_seed,
                  const RunHooks* hooks = nullptr);

// results.csv body; columns fixed:
// run_id,method,sddr_mode,n,m,T,seed,step,n_classes_seen,top1_overall,top1_base,top1_new,aia_so_far
std::string results_csv(const std::vector<SingleRun>& runs);
std::string report_markdown(const std::vector<SingleRun>& runs);

// Write temp + rename, so interrupted runs never leave a half-written file.
void atomic_write(const std::string& path, const std::string& content);

// `run`: every seed in the config, artifacts in out_dir.
void execute_run(const ExperimentConfig& cfg, const std::string& out_dir);

struct AblateGrid {
  std::vector<SddrMode> modes;
  std::vector<int> n_values;
  std::vector<std::size_t> m_values;
  std::vector<std::uint64_t> seeds;
};

// Grid over sddr_mode x n x m x seeds; runs share nothing mutable, so they
// may execute in parallel (capped by SDDR_THREADS); rows land in grid order.
void execute_ablate(const ExperimentConfig& cfg, const AblateGrid& grid,
                    const std::string& out_dir);

// `gen`: populate the offline synthetic store for every class of the task.
void execute_gen(const ExperimentConfig& cfg, const std::string& root);

// Worker cap from SDDR_THREADS (>= 1).
unsigned thread_cap();

struct GradCheckReport {
  double max_rel_error = 0.0;
  int trials = 0;
};

// Randomized small networks through every implemented loss (iCaRL BCE +
// distillation, LUCIR CE + cosine feature distillation + margin, plain CE)
// against central finite differences.
GradCheckReport run_gradient_suite(int trials, std::uint64_t seed, double h = 1e-6);

}  // namespace sddr
