#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sddr/data.hpp"
#include "sddr/nn.hpp"

namespace sddr {

enum class ExemplarPolicy { Herding, Random };

struct Exemplar {
  std::size_t dataset_index = 0;  // index into the full train dataset
  Sample sample;                  // origin is always Real data
};

// Growing per-class store of real exemplars. Classes are added once, at the
// end of their step, and never re-selected or shrunk.
class ReplayMemory {
 public:
  ReplayMemory() = default;
  explicit ReplayMemory(ExemplarPolicy policy) : policy_(policy) {}

  ExemplarPolicy policy() const { return policy_; }
  const std::map<int, std::vector<Exemplar>>& per_class() const { return per_class_; }
  std::size_t total_size() const;
  bool empty() const { return per_class_.empty(); }
  bool has_class(int class_id) const { return per_class_.count(class_id) > 0; }

  // Selects up to `capacity_per_class` exemplars for each new class in
  // dataset_t under the end-of-step model. Herding greedily keeps the
  // selected set's normalized feature mean close to the class mean; ties go
  // to the lowest sample index. `dataset_indices` maps dataset_t rows back
  // to positions in the full train set.
  void update(const Dataset& train, const std::vector<std::size_t>& step_indices,
              const Network& net, std::size_t capacity_per_class, std::uint64_t seed = 0);

  // JSON index {class_id: [dataset indices]} for run resumption.
  std::string to_json_index() const;

 private:
  std::map<int, std::vector<Exemplar>> per_class_;
  ExemplarPolicy policy_ = ExemplarPolicy::Herding;
};

// Greedy herding over L2-normalized feature rows; returns selected row
// indices in pick order. Exposed so tests can compare against a from-scratch
// oracle.
std::vector<std::size_t> herding_select(const std::vector<std::vector<double>>& features,
                                        std::size_t capacity);

// One shuffled traversal of a fixed sample pool, emitted in batches of
// `batch_size`; the last batch of an epoch may be short.
class EpochSampler {
 public:
  struct Entry {
    const Sample* sample;
    Origin origin;
  };

  EpochSampler(std::vector<Entry> pool, std::size_t batch_size, SplitMix64* rng);

  std::size_t pool_size() const { return pool_.size(); }
  std::size_t batches_per_epoch() const;
  // Starts a new shuffled pass.
  void begin_epoch();
  // Next batch of the current epoch; empty when the epoch is exhausted.
  std::vector<Entry> next_batch();

 private:
  std::vector<Entry> pool_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t batch_size_;
  SplitMix64* rng_;
};

// Pool over D_t union M: step samples tagged Real, memory samples tagged
// Exemplar.
std::vector<EpochSampler::Entry> real_pool(const Dataset& train,
                                           const std::vector<std::size_t>& step_indices,
                                           const ReplayMemory& memory);

}  // namespace sddr
