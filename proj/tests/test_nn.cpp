#include <doctest.h>

#include <cmath>

#include "sddr/errors.hpp"
#include "sddr/nn.hpp"
#include "sddr/rng.hpp"

using namespace sddr;

namespace {

Network identity_body(std::size_t dim, HeadKind head, std::size_t classes) {
  Network net = make_network(dim, {dim}, head, classes, 1);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) net.layers[0].weights.at(i, j) = i == j ? 1.0 : 0.0;
    net.layers[0].bias[i] = 0.0;
  }
  return net;
}

}  // namespace

TEST_CASE("zero-weight linear head maps everything to zero logits") {
  Network net = identity_body(3, HeadKind::Linear, 4);
  auto& head = std::get<LinearHead>(net.head);
  for (auto& w : head.weights.values()) w = 0.0;
  for (auto& b : head.bias.values()) b = 0.0;
  Tensor batch = Tensor::from({2, 3}, {1.0, -2.0, 3.0, 0.5, 0.0, -7.0});
  ForwardResult out = forward(net, batch);
  for (double v : out.logits.values()) CHECK(v == 0.0);
}

TEST_CASE("cosine head: feature equal to a weight row gives logit eta") {
  Network net = identity_body(3, HeadKind::Cosine, 2);
  auto& head = std::get<CosineHead>(net.head);
  head.eta = 4.0;
  head.class_weights.at(0, 0) = 0.3;
  head.class_weights.at(0, 1) = -1.2;
  head.class_weights.at(0, 2) = 0.7;
  Tensor batch = Tensor::from({1, 3}, {0.3, -1.2, 0.7});
  ForwardResult out = forward(net, batch);
  CHECK(out.logits.at(0, 0) == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("single identity layer passes features through") {
  Network net = identity_body(2, HeadKind::Linear, 2);
  Tensor batch = Tensor::from({1, 2}, {1.0, 2.0});
  ForwardResult out = forward(net, batch);
  CHECK(out.features.at(0, 0) == 1.0);
  CHECK(out.features.at(0, 1) == 2.0);
}

TEST_CASE("forward is pure: repeated calls bit-identical") {
  Network net = make_network(5, {8, 4}, HeadKind::Cosine, 3, 42);
  SplitMix64 rng(9);
  Tensor batch = Tensor::zeros({4, 5});
  for (auto& v : batch.values()) v = rng.next_normal();
  ForwardResult a = forward(net, batch);
  ForwardResult b = forward(net, batch);
  CHECK(a.logits == b.logits);
  CHECK(a.features == b.features);
}

TEST_CASE("cosine logits bounded by eta") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Network net = make_network(4, {6, 3}, HeadKind::Cosine, 5, seed);
    double eta = std::get<CosineHead>(net.head).eta;
    SplitMix64 rng(seed + 100);
    Tensor batch = Tensor::zeros({8, 4});
    for (auto& v : batch.values()) v = 10.0 * rng.next_normal();
    ForwardResult out = forward(net, batch);
    for (double logit : out.logits.values()) {
      CHECK(std::fabs(logit) <= eta + 1e-12);
    }
  }
}

TEST_CASE("sgd update rule") {
  SUBCASE("plain step") {
    double p = 1.0, g = 1.0, v = 0.0;
    sgd_update(&p, &g, &v, 1, 0.1, 0.0, 0.0);
    CHECK(p == doctest::Approx(0.9));
  }
  SUBCASE("momentum accumulates across two steps") {
    double p = 1.0, g = 1.0, v = 0.0;
    sgd_update(&p, &g, &v, 1, 0.1, 0.9, 0.0);
    CHECK(p == doctest::Approx(0.9));
    sgd_update(&p, &g, &v, 1, 0.1, 0.9, 0.0);
    CHECK(p == doctest::Approx(0.71));
  }
  SUBCASE("zero gradient leaves param, velocity decays") {
    double p = 0.5, g = 0.0, v = 1.0;
    sgd_update(&p, &g, &v, 1, 0.0, 0.9, 0.0);
    CHECK(p == 0.5);
    CHECK(v == doctest::Approx(0.9));
  }
}

TEST_CASE("lr schedule multiplies entries with epoch <= e") {
  SgdConfig cfg{0.05, 0.9, 1e-4, {{25, 0.1}, {35, 0.1}}};
  CHECK(cfg.lr_at(0) == doctest::Approx(0.05));
  CHECK(cfg.lr_at(25) == doctest::Approx(0.005));
  CHECK(cfg.lr_at(40) == doctest::Approx(0.0005));
}

TEST_CASE("sgd with lr=0 leaves parameters bit-identical") {
  Network net = make_network(3, {5, 2}, HeadKind::Cosine, 2, 7);
  Network before = net;
  Gradients grads = zero_gradients(net);
  for (auto& t : grads.layer_weights)
    for (auto& v : t.values()) v = 1.0;
  SgdConfig cfg{0.0, 0.9, 0.0, {}};
  SgdState state;
  sgd_step(net, grads, cfg, state, 0);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    CHECK(net.layers[i].weights == before.layers[i].weights);
    CHECK(net.layers[i].bias == before.layers[i].bias);
  }
}

TEST_CASE("non-finite gradient raises with parameter path") {
  Network net = make_network(3, {2}, HeadKind::Linear, 2, 7);
  Gradients grads = zero_gradients(net);
  grads.layer_weights[0][0] = std::nan("");
  SgdConfig cfg;
  SgdState state;
  CHECK_THROWS_WITH_AS(sgd_step(net, grads, cfg, state, 0),
                       doctest::Contains("layers[0].weights"), TrainingError);
}

TEST_CASE("finite differences: quadratic loss is exact") {
  Network net = make_network(4, {5, 3}, HeadKind::Linear, 2, 11);
  LossFn quad = [](const Network& n) {
    Network copy = n;
    LossEval eval;
    eval.grads = zero_gradients(n);
    double value = 0.0;
    auto blocks = param_blocks(copy);
    std::size_t offset = 0;
    std::vector<double> flat;
    for (const auto& block : blocks) {
      for (std::size_t i = 0; i < block.count; ++i) {
        value += 0.5 * block.values[i] * block.values[i];
        flat.push_back(block.values[i]);
      }
      offset += block.count;
    }
    // Gradient of ||theta||^2/2 is theta itself; write it back blockwise.
    std::size_t k = 0;
    for (std::size_t li = 0; li < eval.grads.layer_weights.size(); ++li) {
      for (auto& v : eval.grads.layer_weights[li].values()) v = flat[k++];
      for (auto& v : eval.grads.layer_bias[li].values()) v = flat[k++];
    }
    for (auto& v : eval.grads.head_weights.values()) v = flat[k++];
    for (auto& v : eval.grads.head_bias.values()) v = flat[k++];
    eval.value = value;
    return eval;
  };
  CHECK(finite_diff_check(net, quad, 1e-6) < 1e-7);
}

TEST_CASE("finite differences: softmax cross-entropy on random nets") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (HeadKind kind : {HeadKind::Linear, HeadKind::Cosine}) {
      Network net = make_network(4, {8, 4}, kind, 3, seed);
      SplitMix64 rng(seed * 31 + 7);
      Tensor batch = Tensor::zeros({5, 4});
      for (auto& v : batch.values()) v = rng.next_normal();
      std::vector<std::size_t> labels(5);
      for (auto& l : labels) l = rng.next_below(3);
      LossFn ce = [&](const Network& n) {
        ForwardCache cache = forward_cached(n, batch);
        const Tensor& z = cache.out.logits;
        Tensor dlogits = Tensor::zeros(z.shape());
        double value = 0.0;
        const std::size_t B = z.dim(0), C = z.dim(1);
        for (std::size_t b = 0; b < B; ++b) {
          double zmax = z.at(b, 0);
          for (std::size_t c = 1; c < C; ++c) zmax = std::max(zmax, z.at(b, c));
          double denom = 0.0;
          for (std::size_t c = 0; c < C; ++c) denom += std::exp(z.at(b, c) - zmax);
          value += (std::log(denom) - (z.at(b, labels[b]) - zmax)) / double(B);
          for (std::size_t c = 0; c < C; ++c) {
            double p = std::exp(z.at(b, c) - zmax) / denom;
            dlogits.at(b, c) = (p - (c == labels[b] ? 1.0 : 0.0)) / double(B);
          }
        }
        LossEval eval;
        eval.value = value;
        eval.grads = backward(n, cache, dlogits);
        return eval;
      };
      CHECK(finite_diff_check(net, ce, 1e-6) < 1e-5);
    }
  }
}

TEST_CASE("head extension preserves old-class logits") {
  for (HeadKind kind : {HeadKind::Linear, HeadKind::Cosine}) {
    Network net = make_network(4, {6, 3}, kind, 3, 5);
    SplitMix64 rng(3);
    Tensor batch = Tensor::zeros({2, 4});
    for (auto& v : batch.values()) v = rng.next_normal();
    Tensor before = forward(net, batch).logits;
    extend_head(net, 5, 5);
    CHECK(net.num_classes() == 5);
    Tensor after = forward(net, batch).logits;
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t c = 0; c < 3; ++c) CHECK(after.at(b, c) == before.at(b, c));
    }
  }
}

TEST_CASE("eta clamped to floor after update") {
  Network net = make_network(2, {2}, HeadKind::Cosine, 2, 3);
  std::get<CosineHead>(net.head).eta = 0.02;
  Gradients grads = zero_gradients(net);
  grads.head_eta = 100.0;  // would drive eta strongly negative
  SgdConfig cfg{1.0, 0.0, 0.0, {}};
  SgdState state;
  sgd_step(net, grads, cfg, state, 0);
  CHECK(std::get<CosineHead>(net.head).eta == kEtaFloor);
}

TEST_CASE("forward rejects dimension mismatch") {
  Network net = make_network(4, {3}, HeadKind::Linear, 2, 1);
  CHECK_THROWS_AS(forward(net, Tensor::zeros({1, 5})), ConfigError);
}
