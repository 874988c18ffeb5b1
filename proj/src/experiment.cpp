#include "sddr/experiment.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "sddr/errors.hpp"
#include "sddr/eval.hpp"
#include "sddr/scenario.hpp"

namespace sddr {

namespace fs = std::filesystem;

TaskData build_task(const ExperimentConfig& cfg, std::uint64_t run_seed) {
  std::uint64_t task_seed = mix_seed({run_seed, 0x7461736bULL});
  TaskData task;
  switch (cfg.task.kind) {
    case TaskKind::Gaussian: {
      auto [train, test] =
          make_gaussian_task(cfg.scenario.num_classes, cfg.task.dim, cfg.task.separation,
                             cfg.task.per_class_train, cfg.task.per_class_test, task_seed);
      task.train = std::move(train);
      task.test = std::move(test);
      task.sampler = std::make_shared<GaussianSampler>(make_gaussian_means(
          cfg.scenario.num_classes, cfg.task.dim, cfg.task.separation, task_seed));
      break;
    }
    case TaskKind::Glyph: {
      auto [train, test] = make_glyph_task(cfg.scenario.num_classes, cfg.task.glyph,
                                           cfg.task.per_class_train, cfg.task.per_class_test,
                                           task_seed);
      task.train = std::move(train);
      task.test = std::move(test);
      task.sampler = std::make_shared<GlyphSampler>(cfg.scenario.num_classes, cfg.task.glyph);
      break;
    }
    case TaskKind::Cifar100: {
      auto [train, test] =
          load_cifar100(cfg.task.train_path, cfg.task.test_path, cfg.task.labels_path);
      task.train = std::move(train);
      task.test = std::move(test);
      break;
    }
  }
  return task;
}

std::unique_ptr<GenerativeSource> build_source(const ExperimentConfig& cfg, const TaskData& task) {
  switch (cfg.synthetic.backend) {
    case BackendKind::Oracle:
      if (task.sampler == nullptr) {
        throw ConfigError("oracle backend needs a task with a known class distribution");
      }
      return std::make_unique<OracleSource>(task.sampler, cfg.synthetic.sigma);
    case BackendKind::Offline:
      return std::make_unique<OfflineSource>(cfg.synthetic.offline_root);
    case BackendKind::Remote: {
      std::map<int, LabelSpec> specs;
      for (const auto& spec : task.train.labels) specs[spec.class_id] = spec;
      return std::make_unique<RemoteSource>(cfg.synthetic.remote, cfg.synthetic.params,
                                            std::move(specs));
    }
  }
  throw ConfigError("unknown synthetic backend");
}

RunPlan build_plan(const ExperimentConfig& cfg, std::uint64_t run_seed) {
  RunPlan plan;
  plan.trainer = cfg.trainer;
  plan.hidden_dims = cfg.hidden_dims;
  plan.memory_per_class = cfg.memory.per_class;
  plan.memory_policy = cfg.memory.policy;
  plan.synth_per_class = cfg.synthetic.n;
  plan.gen_params = cfg.synthetic.params;
  plan.gen_params.seed = mix_seed({run_seed, cfg.synthetic.params.seed, 0x67656eULL});
  plan.run_seed = run_seed;
  return plan;
}

SingleRun run_one(const ExperimentConfig& cfg, std::uint64_t run_seed, const RunHooks* hooks) {
  TaskData task = build_task(cfg, run_seed);
  Scenario scenario =
      build_scenario(cfg.scenario.num_classes, cfg.scenario.num_steps, cfg.scenario.seed,
                     cfg.scenario.base_fraction);
  assign_train_indices(scenario, task.train);
  std::unique_ptr<GenerativeSource> source;
  if (cfg.trainer.sddr_mode != SddrMode::Off) source = build_source(cfg, task);
  RunPlan plan = build_plan(cfg, run_seed);

  SingleRun run;
  run.seed = run_seed;
  run.config = cfg;
  std::ostringstream id;
  id << to_string(cfg.trainer.method) << "-" << to_string(cfg.trainer.sddr_mode) << "-n"
     << cfg.synthetic.n << "-m" << cfg.memory.per_class << "-s" << run_seed;
  run.run_id = id.str();
  run.output = run_incremental(scenario, task.train, task.test, plan, source.get(), hooks);
  return run;
}

namespace {

std::string fmt_acc(const Fraction& f) {
  if (!f.defined()) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", f.value());
  return buf;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string results_csv(const std::vector<SingleRun>& runs) {
  std::ostringstream out;
  out << "run_id,method,sddr_mode,n,m,T,seed,step,n_classes_seen,top1_overall,top1_base,"
         "top1_new,aia_so_far\n";
  for (const auto& run : runs) {
    const auto& cfg = run.config;
    double acc_sum = 0.0;
    for (const auto& step : run.output.report.steps) {
      acc_sum += step.overall.value();
      out << run.run_id << "," << to_string(cfg.trainer.method) << ","
          << to_string(cfg.trainer.sddr_mode) << "," << cfg.synthetic.n << ","
          << cfg.memory.per_class << "," << cfg.scenario.num_steps << "," << run.seed << ","
          << step.step << "," << step.per_class.size() << "," << fmt_acc(step.overall) << ","
          << fmt_acc(step.base) << "," << fmt_acc(step.incremental) << ","
          << fmt_double(acc_sum / (step.step + 1)) << "\n";
    }
  }
  return out.str();
}

std::string report_markdown(const std::vector<SingleRun>& runs) {
  std::ostringstream out;
  out << "# Run report\n";
  for (const auto& run : runs) {
    out << "\n## " << run.run_id << "\n\n";
    out << "| step | classes seen | top-1 overall | top-1 base | top-1 new |\n";
    out << "|-----:|-------------:|--------------:|-----------:|----------:|\n";
    for (const auto& step : run.output.report.steps) {
      out << "| " << step.step << " | " << step.per_class.size() << " | "
          << fmt_acc(step.overall) << " | " << fmt_acc(step.base) << " | "
          << fmt_acc(step.incremental) << " |\n";
    }
    out << "\nAverage incremental accuracy: "
        << fmt_double(run.output.report.average_incremental_accuracy) << "\n";
  }
  return out.str();
}

void atomic_write(const std::string& path, const std::string& content) {
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
  }
  fs::rename(tmp, target);
}

unsigned thread_cap() {
  const char* env = std::getenv("SDDR_THREADS");
  if (env == nullptr) return std::max(1u, std::thread::hardware_concurrency());
  long v = std::strtol(env, nullptr, 10);
  return v >= 1 ? static_cast<unsigned>(v) : 1u;
}

void execute_run(const ExperimentConfig& cfg, const std::string& out_dir) {
  std::vector<SingleRun> runs;
  for (std::uint64_t seed : cfg.run_seeds) runs.push_back(run_one(cfg, seed));
  atomic_write((fs::path(out_dir) / "results.csv").string(), results_csv(runs));
  atomic_write((fs::path(out_dir) / "report.md").string(), report_markdown(runs));
  for (const auto& run : runs) {
    atomic_write((fs::path(out_dir) / (run.run_id + ".memory.json")).string(),
                 run.output.memory.to_json_index() + "\n");
    atomic_write((fs::path(out_dir) / (run.run_id + ".manifest.json")).string(),
                 run.output.store.manifest_json() + "\n");
  }
}

void execute_ablate(const ExperimentConfig& cfg, const AblateGrid& grid,
                    const std::string& out_dir) {
  std::vector<ExperimentConfig> configs;
  std::vector<std::uint64_t> seeds;
  for (SddrMode mode : grid.modes) {
    for (int n : grid.n_values) {
      for (std::size_t m : grid.m_values) {
        for (std::uint64_t seed : grid.seeds) {
          ExperimentConfig variant = cfg;
          variant.trainer.sddr_mode = mode;
          variant.synthetic.n = n;
          variant.memory.per_class = mode == SddrMode::SyntheticMemory ? 0 : m;
          configs.push_back(std::move(variant));
          seeds.push_back(seed);
        }
      }
    }
  }
  std::vector<SingleRun> runs(configs.size());
  unsigned workers = std::min<unsigned>(thread_cap(), static_cast<unsigned>(configs.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < configs.size(); ++i) runs[i] = run_one(configs[i], seeds[i]);
  } else {
    std::vector<std::thread> threads;
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        try {
          while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= configs.size()) break;
            runs[i] = run_one(configs[i], seeds[i]);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  atomic_write((fs::path(out_dir) / "results.csv").string(), results_csv(runs));
  atomic_write((fs::path(out_dir) / "report.md").string(), report_markdown(runs));
}

void execute_gen(const ExperimentConfig& cfg, const std::string& root) {
  std::uint64_t seed = cfg.run_seeds.front();
  TaskData task = build_task(cfg, seed);
  ExperimentConfig source_cfg = cfg;
  if (source_cfg.synthetic.backend == BackendKind::Offline) {
    // Populating an offline store needs a producing backend behind it.
    source_cfg.synthetic.backend = BackendKind::Oracle;
  }
  std::unique_ptr<GenerativeSource> source = build_source(source_cfg, task);
  RunPlan plan = build_plan(cfg, seed);
  SyntheticStore store;
  update_synthetic(store, *source, task.train.labels, cfg.synthetic.n, plan.gen_params);
  write_offline_store(root, store);
}

GradCheckReport run_gradient_suite(int trials, std::uint64_t seed, double h) {
  GradCheckReport report;
  report.trials = trials;
  for (int trial = 0; trial < trials; ++trial) {
    SplitMix64 rng(mix_seed({seed, static_cast<std::uint64_t>(trial), 0x676331ULL}));
    std::size_t input_dim = 4, feature_dim = 4;
    std::size_t old_classes = 4, total_classes = 6;
    std::size_t batch = 6;
    bool incremental = trial % 4 != 0;  // every fourth trial is a base step

    MixedBatch mixed;
    mixed.data = Tensor::zeros({batch, input_dim});
    for (std::size_t i = 0; i < mixed.data.size(); ++i) mixed.data[i] = rng.next_normal();
    for (std::size_t b = 0; b < batch; ++b) {
      std::size_t limit = incremental ? total_classes : old_classes;
      mixed.labels.push_back(static_cast<int>(rng.next_below(limit)));
      double pick = rng.next_double();
      Origin origin =
          !incremental ? Origin::Real
                       : (pick < 0.4 ? Origin::Real
                                     : (pick < 0.7 ? Origin::Exemplar : Origin::Synthetic));
      mixed.origins.push_back(origin);
      // Exemplars carry old-class labels; the margin term depends on it.
      if (origin == Origin::Exemplar) {
        mixed.labels.back() = static_cast<int>(rng.next_below(old_classes));
      }
    }
    mixed.real_count = batch;

    SddrMode modes[] = {SddrMode::Off, SddrMode::Distill, SddrMode::DistillWoNew,
                        SddrMode::Replay, SddrMode::Both};
    SddrMode mode = modes[static_cast<std::size_t>(trial) % 5];

    for (Method method : {Method::Icarl, Method::Lucir, Method::Finetune}) {
      TrainerConfig cfg;
      cfg.method = method;
      cfg.sddr_mode = incremental ? mode : SddrMode::Off;
      std::size_t classes = incremental ? total_classes : old_classes;
      std::uint64_t net_seed = mix_seed({seed, static_cast<std::uint64_t>(trial),
                                         static_cast<std::uint64_t>(method)});
      Network net = make_network(input_dim, {8, feature_dim}, cfg.head_kind(), classes, net_seed);
      std::optional<ModelSnapshot> snapshot;
      if (incremental) {
        Network old_net =
            make_network(input_dim, {8, feature_dim}, cfg.head_kind(), old_classes,
                         mix_seed({net_seed, 0x6f6c64ULL}));
        snapshot = ModelSnapshot{std::move(old_net), old_classes};
      }
      int t = incremental ? 1 : 0;
      LossFn loss_fn = [&](const Network& n) {
        MethodLoss loss = method_loss(n, snapshot ? &*snapshot : nullptr, mixed, cfg, t);
        return LossEval{loss.breakdown.total, std::move(loss.grads)};
      };
      report.max_rel_error = std::max(report.max_rel_error, finite_diff_check(net, loss_fn, h));
    }
  }
  return report;
}

}  // namespace sddr
