#include "sddr/memory.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "sddr/errors.hpp"

namespace sddr {

std::size_t ReplayMemory::total_size() const {
  std::size_t n = 0;
  for (const auto& [c, list] : per_class_) n += list.size();
  return n;
}

namespace {

std::vector<double> l2_normalize(const double* v, std::size_t n) {
  double norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) norm += v[i] * v[i];
  norm = std::sqrt(norm);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = norm > 0.0 ? v[i] / norm : 0.0;
  return out;
}

}  // namespace

std::vector<std::size_t> herding_select(const std::vector<std::vector<double>>& features,
                                        std::size_t capacity) {
  std::size_t n = features.size();
  std::size_t k = std::min(capacity, n);
  if (n == 0) return {};
  std::size_t dim = features[0].size();
  std::vector<double> mean(dim, 0.0);
  for (const auto& f : features) {
    for (std::size_t i = 0; i < dim; ++i) mean[i] += f[i];
  }
  for (auto& m : mean) m /= static_cast<double>(n);

  std::vector<std::size_t> picked;
  std::vector<bool> used(n, false);
  std::vector<double> sum(dim, 0.0);  // sum of selected features
  for (std::size_t j = 1; j <= k; ++j) {
    double best = 0.0;
    std::size_t best_idx = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      double dist = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        double candidate_mean = (sum[d] + features[i][d]) / static_cast<double>(j);
        double diff = mean[d] - candidate_mean;
        dist += diff * diff;
      }
      if (best_idx == n || dist < best) {  // strict: ties keep the lowest index
        best = dist;
        best_idx = i;
      }
    }
    used[best_idx] = true;
    picked.push_back(best_idx);
    for (std::size_t d = 0; d < dim; ++d) sum[d] += features[best_idx][d];
  }
  return picked;
}

void ReplayMemory::update(const Dataset& train, const std::vector<std::size_t>& step_indices,
                          const Network& net, std::size_t capacity_per_class,
                          std::uint64_t seed) {
  // Group the step's samples by class, preserving dataset order.
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t idx : step_indices) by_class[train.samples[idx].label].push_back(idx);
  for (const auto& [class_id, indices] : by_class) {
    if (per_class_.count(class_id) > 0) {
      throw ConfigError("memory update: class " + std::to_string(class_id) +
                        " already has exemplars");
    }
    if (indices.empty()) {
      throw ConfigError("memory update: class " + std::to_string(class_id) + " has no samples");
    }
    std::vector<std::size_t> picks;
    if (policy_ == ExemplarPolicy::Herding) {
      std::vector<std::vector<double>> feats;
      feats.reserve(indices.size());
      std::size_t width = train.samples[indices[0]].data.size();
      Tensor batch = Tensor::zeros({indices.size(), width});
      for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto& vals = train.samples[indices[r]].data.values();
        std::copy(vals.begin(), vals.end(), batch.data() + r * width);
      }
      Tensor features = forward(net, batch).features;
      std::size_t fdim = net.feature_dim();
      for (std::size_t r = 0; r < indices.size(); ++r) {
        feats.push_back(l2_normalize(features.data() + r * fdim, fdim));
      }
      picks = herding_select(feats, capacity_per_class);
    } else {
      picks.resize(indices.size());
      std::iota(picks.begin(), picks.end(), 0);
      SplitMix64 rng(mix_seed({seed, static_cast<std::uint64_t>(class_id), 0x6d656dULL}));
      fisher_yates(picks, rng);
      picks.resize(std::min(capacity_per_class, picks.size()));
    }
    std::vector<Exemplar> list;
    for (std::size_t p : picks) {
      list.push_back({indices[p], train.samples[indices[p]]});
    }
    per_class_[class_id] = std::move(list);
  }
}

std::string ReplayMemory::to_json_index() const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [class_id, list] : per_class_) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& ex : list) arr.push_back(ex.dataset_index);
    doc[std::to_string(class_id)] = std::move(arr);
  }
  return doc.dump(2);
}

EpochSampler::EpochSampler(std::vector<Entry> pool, std::size_t batch_size, SplitMix64* rng)
    : pool_(std::move(pool)), batch_size_(batch_size), rng_(rng) {
  if (batch_size_ == 0) throw ConfigError("batch size must be positive");
  if (pool_.empty()) throw ConfigError("epoch sampler needs a nonempty pool");
  order_.resize(pool_.size());
  std::iota(order_.begin(), order_.end(), 0);
  cursor_ = pool_.size();  // begin_epoch required before first batch
}

std::size_t EpochSampler::batches_per_epoch() const {
  return (pool_.size() + batch_size_ - 1) / batch_size_;
}

void EpochSampler::begin_epoch() {
  fisher_yates(order_, *rng_);
  cursor_ = 0;
}

std::vector<EpochSampler::Entry> EpochSampler::next_batch() {
  std::vector<Entry> batch;
  std::size_t end = std::min(cursor_ + batch_size_, pool_.size());
  for (; cursor_ < end; ++cursor_) batch.push_back(pool_[order_[cursor_]]);
  return batch;
}

std::vector<EpochSampler::Entry> real_pool(const Dataset& train,
                                           const std::vector<std::size_t>& step_indices,
                                           const ReplayMemory& memory) {
  std::vector<EpochSampler::Entry> pool;
  for (std::size_t idx : step_indices) pool.push_back({&train.samples[idx], Origin::Real});
  for (const auto& [class_id, list] : memory.per_class()) {
    for (const auto& ex : list) pool.push_back({&ex.sample, Origin::Exemplar});
  }
  return pool;
}

}  // namespace sddr
