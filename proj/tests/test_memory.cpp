#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "sddr/errors.hpp"
#include "sddr/memory.hpp"
#include "sddr/rng.hpp"

using namespace sddr;

namespace {

// From-scratch greedy oracle: at each pick, exhaustively tries every
// remaining row and keeps the one minimizing ||mu - mean(selected + row)||,
// ties to the lowest index.
std::vector<std::size_t> greedy_oracle(const std::vector<std::vector<double>>& rows,
                                       std::size_t capacity) {
  const std::size_t n = rows.size();
  const std::size_t d = rows.empty() ? 0 : rows[0].size();
  std::vector<double> mu(d, 0.0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < d; ++i) mu[i] += r[i] / double(n);
  std::vector<std::size_t> picked;
  std::vector<bool> used(n, false);
  while (picked.size() < std::min(capacity, n)) {
    double best = 0.0;
    std::size_t best_i = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      double dist = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        double mean_k = rows[i][k];
        for (std::size_t j : picked) mean_k += rows[j][k];
        mean_k /= double(picked.size() + 1);
        dist += (mu[k] - mean_k) * (mu[k] - mean_k);
      }
      if (best_i == n || dist < best) {
        best = dist;
        best_i = i;
      }
    }
    used[best_i] = true;
    picked.push_back(best_i);
  }
  return picked;
}

std::vector<std::vector<double>> random_rows(std::size_t n, std::size_t d, SplitMix64& rng) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(d));
  for (auto& r : rows) {
    double norm = 0.0;
    for (auto& v : r) {
      v = rng.next_normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : r) v /= norm > 0 ? norm : 1.0;
  }
  return rows;
}

Network identity_net(std::size_t dim) {
  Network net = make_network(dim, {dim}, HeadKind::Linear, 2, 1);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) net.layers[0].weights.at(i, j) = i == j ? 1.0 : 0.0;
    net.layers[0].bias[i] = 0.0;
  }
  return net;
}

}  // namespace

TEST_CASE("herding tie-break picks the lowest index") {
  // Both rows are unit vectors equidistant from the mean.
  std::vector<std::vector<double>> rows = {{1.0, 0.0}, {0.0, 1.0}};
  auto picks = herding_select(rows, 1);
  REQUIRE(picks.size() == 1);
  CHECK(picks[0] == 0);
}

TEST_CASE("capacity at least class size selects everything in greedy order") {
  SplitMix64 rng(11);
  auto rows = random_rows(3, 4, rng);
  auto picks = herding_select(rows, 3);
  CHECK(picks.size() == 3);
  std::set<std::size_t> unique(picks.begin(), picks.end());
  CHECK(unique.size() == 3);
  CHECK(picks == greedy_oracle(rows, 3));
}

TEST_CASE("herding matches the exhaustive greedy oracle") {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    SplitMix64 rng(seed);
    std::size_t n = 2 + rng.next_below(11);  // up to 12 rows
    std::size_t m = 1 + rng.next_below(4);   // capacity up to 4
    auto rows = random_rows(n, 3, rng);
    CAPTURE(seed);
    CHECK(herding_select(rows, m) == greedy_oracle(rows, m));
  }
}

TEST_CASE("herding output is prefix-greedy") {
  SplitMix64 rng(77);
  auto rows = random_rows(10, 3, rng);
  auto full = herding_select(rows, 4);
  for (std::size_t j = 1; j <= 4; ++j) {
    auto prefix = herding_select(rows, j);
    CHECK(std::equal(prefix.begin(), prefix.end(), full.begin()));
  }
}

TEST_CASE("memory update stores m exemplars per class with dataset indices") {
  Dataset train;
  SplitMix64 rng(5);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 8; ++i) {
      Sample s;
      s.label = c;
      s.data = Tensor::from({2}, {rng.next_normal() + 3.0 * c, rng.next_normal()});
      train.samples.push_back(std::move(s));
    }
  }
  std::vector<std::size_t> step0 = train.indices_of_classes({0, 1});
  std::vector<std::size_t> step1 = train.indices_of_classes({2});
  Network net = identity_net(2);
  ReplayMemory mem(ExemplarPolicy::Herding);
  mem.update(train, step0, net, 4);
  CHECK(mem.total_size() == 8);
  mem.update(train, step1, net, 4);
  CHECK(mem.total_size() == 12);
  for (const auto& [cid, exemplars] : mem.per_class()) {
    CHECK(exemplars.size() == 4);
    std::set<std::size_t> seen;
    for (const auto& ex : exemplars) {
      CHECK(seen.insert(ex.dataset_index).second);  // no duplicates
      CHECK(train.samples[ex.dataset_index].label == cid);
      CHECK(ex.sample.data == train.samples[ex.dataset_index].data);
    }
  }
  // Re-adding an already-stored class is rejected.
  CHECK_THROWS_AS(mem.update(train, step0, net, 4), ConfigError);
}

TEST_CASE("memory update is deterministic") {
  Dataset train;
  SplitMix64 rng(6);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 10; ++i) {
      Sample s;
      s.label = c;
      s.data = Tensor::from({3}, {rng.next_normal(), rng.next_normal(), rng.next_normal()});
      train.samples.push_back(std::move(s));
    }
  Network net = make_network(3, {4}, HeadKind::Linear, 2, 2);
  auto run = [&](ExemplarPolicy policy) {
    ReplayMemory mem(policy);
    mem.update(train, train.indices_of_classes({0, 1}), net, 3, 9);
    return mem.to_json_index();
  };
  CHECK(run(ExemplarPolicy::Herding) == run(ExemplarPolicy::Herding));
  CHECK(run(ExemplarPolicy::Random) == run(ExemplarPolicy::Random));
}

TEST_CASE("epoch sampler partitions a 256-sample pool into two full batches") {
  std::vector<Sample> samples(256);
  for (std::size_t i = 0; i < 256; ++i) {
    samples[i].label = static_cast<int>(i);
    samples[i].data = Tensor::from({1}, {double(i)});
  }
  std::vector<EpochSampler::Entry> pool;
  for (auto& s : samples) pool.push_back({&s, Origin::Real});
  SplitMix64 rng(3);
  EpochSampler sampler(std::move(pool), 128, &rng);
  CHECK(sampler.batches_per_epoch() == 2);
  sampler.begin_epoch();
  std::set<int> seen;
  for (int b = 0; b < 2; ++b) {
    auto batch = sampler.next_batch();
    CHECK(batch.size() == 128);
    for (const auto& e : batch) CHECK(seen.insert(e.sample->label).second);
  }
  CHECK(sampler.next_batch().empty());
  CHECK(seen.size() == 256);
}

TEST_CASE("epoch sampler final batch may be short") {
  std::vector<Sample> samples(5);
  for (auto& s : samples) s.data = Tensor::from({1}, {0.0});
  std::vector<EpochSampler::Entry> pool;
  for (auto& s : samples) pool.push_back({&s, Origin::Real});
  SplitMix64 rng(3);
  EpochSampler sampler(std::move(pool), 2, &rng);
  CHECK(sampler.batches_per_epoch() == 3);
  sampler.begin_epoch();
  CHECK(sampler.next_batch().size() == 2);
  CHECK(sampler.next_batch().size() == 2);
  CHECK(sampler.next_batch().size() == 1);
}

TEST_CASE("fixed seed yields an identical batch sequence") {
  std::vector<Sample> samples(16);
  for (std::size_t i = 0; i < 16; ++i) samples[i].data = Tensor::from({1}, {double(i)});
  auto sequence = [&](std::uint64_t seed) {
    std::vector<EpochSampler::Entry> pool;
    for (auto& s : samples) pool.push_back({&s, Origin::Real});
    SplitMix64 rng(seed);
    EpochSampler sampler(std::move(pool), 4, &rng);
    std::vector<double> order;
    for (int e = 0; e < 3; ++e) {
      sampler.begin_epoch();
      while (true) {
        auto batch = sampler.next_batch();
        if (batch.empty()) break;
        for (const auto& entry : batch) order.push_back(entry.sample->data[0]);
      }
    }
    return order;
  };
  CHECK(sequence(8) == sequence(8));
  CHECK(sequence(8) != sequence(9));
}

TEST_CASE("real pool tags step data Real and memory Exemplar") {
  Dataset train;
  SplitMix64 rng(4);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 6; ++i) {
      Sample s;
      s.label = c;
      s.data = Tensor::from({2}, {rng.next_normal(), rng.next_normal()});
      train.samples.push_back(std::move(s));
    }
  Network net = identity_net(2);
  ReplayMemory mem;
  mem.update(train, train.indices_of_classes({0}), net, 2);
  std::vector<std::size_t> step1 = train.indices_of_classes({1});
  auto pool = real_pool(train, step1, mem);
  CHECK(pool.size() == 6 + 2);
  std::size_t real = 0, exemplar = 0;
  for (const auto& e : pool) {
    if (e.origin == Origin::Real) {
      ++real;
      CHECK(e.sample->label == 1);
    } else {
      REQUIRE(e.origin == Origin::Exemplar);
      ++exemplar;
      CHECK(e.sample->label == 0);
    }
  }
  CHECK(real == 6);
  CHECK(exemplar == 2);
}
