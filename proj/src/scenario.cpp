#include "sddr/scenario.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "sddr/errors.hpp"

namespace sddr {

int Scenario::cumulative_count(int t) const {
  int n = 0;
  for (int i = 0; i <= t; ++i) n += static_cast<int>(steps[static_cast<std::size_t>(i)].class_ids.size());
  return n;
}

std::vector<int> Scenario::classes_through(int t) const {
  std::vector<int> out;
  for (int i = 0; i <= t; ++i) {
    const auto& ids = steps[static_cast<std::size_t>(i)].class_ids;
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

Scenario build_scenario(int num_classes, int num_incremental_steps, std::uint64_t seed,
                        double base_fraction) {
  if (num_classes < 2) throw ConfigError("scenario needs at least 2 classes");
  if (num_incremental_steps < 1) throw ConfigError("scenario needs at least 1 incremental step");
  int base = static_cast<int>(std::ceil(num_classes * base_fraction));
  int remaining = num_classes - base;
  if (remaining < num_incremental_steps) {
    throw ConfigError("infeasible split: C=" + std::to_string(num_classes) +
                      ", T=" + std::to_string(num_incremental_steps) + " leaves only " +
                      std::to_string(remaining) + " classes for the incremental steps");
  }

  Scenario scenario;
  scenario.seed = seed;
  scenario.num_classes = num_classes;
  scenario.class_order.resize(static_cast<std::size_t>(num_classes));
  std::iota(scenario.class_order.begin(), scenario.class_order.end(), 0);
  SplitMix64 rng(seed);
  fisher_yates(scenario.class_order, rng);

  int quotient = remaining / num_incremental_steps;
  int remainder = remaining % num_incremental_steps;
  std::size_t cursor = 0;
  for (int t = 0; t <= num_incremental_steps; ++t) {
    int count = t == 0 ? base : quotient + (t <= remainder ? 1 : 0);
    StepSpec step;
    step.step_index = t;
    step.class_ids.assign(scenario.class_order.begin() + static_cast<std::ptrdiff_t>(cursor),
                          scenario.class_order.begin() + static_cast<std::ptrdiff_t>(cursor) + count);
    cursor += static_cast<std::size_t>(count);
    scenario.steps.push_back(std::move(step));
  }
  return scenario;
}

void assign_train_indices(Scenario& scenario, const Dataset& train) {
  for (auto& step : scenario.steps) {
    step.train_indices = train.indices_of_classes(step.class_ids);
  }
}

}  // namespace sddr
