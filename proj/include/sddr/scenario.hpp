#pragma once

#include <cstdint>
#include <vector>

#include "sddr/data.hpp"

namespace sddr {

struct StepSpec {
  int step_index = 0;
  std::vector<int> class_ids;               // Y_t
  std::vector<std::size_t> train_indices;   // indices into the train dataset
};

// The T+1-step class partition: a base step with ceil(C * base_fraction)
// classes followed by T incremental steps over the remaining classes.
struct Scenario {
  std::uint64_t seed = kDefaultSeed;
  int num_classes = 0;
  std::vector<int> class_order;  // permutation of 0..C-1
  std::vector<StepSpec> steps;   // length T+1

  int num_incremental_steps() const { return static_cast<int>(steps.size()) - 1; }
  // N_t: classes encountered through step t, inclusive.
  int cumulative_count(int t) const;
  // All class ids of steps 0..t.
  std::vector<int> classes_through(int t) const;
};

// Class order is a Fisher-Yates shuffle of 0..C-1 driven by a splitmix64
// stream seeded with `seed`. Remaining classes split into T consecutive
// groups; a remainder r gives one extra class to each of the first r
// incremental steps.
Scenario build_scenario(int num_classes, int num_incremental_steps, std::uint64_t seed,
                        double base_fraction = 0.5);

// Fills per-step train sample indices from the dataset.
void assign_train_indices(Scenario& scenario, const Dataset& train);

}  // namespace sddr
