#include <doctest.h>

#include <cmath>
#include <memory>

#include "sddr/errors.hpp"
#include "sddr/trainers.hpp"

using namespace sddr;

namespace {

LabelSpec spec_of(int id) {
  LabelSpec s;
  s.class_id = id;
  s.name = "class-" + std::to_string(id);
  s.lemmas = {s.name};
  return s;
}

std::vector<Origin> origins_all(std::size_t n, Origin o) { return std::vector<Origin>(n, o); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Pool entries over a dataset's samples, all tagged Real.
std::vector<EpochSampler::Entry> pool_of(const Dataset& ds) {
  std::vector<EpochSampler::Entry> pool;
  for (const auto& s : ds.samples) pool.push_back({&s, Origin::Real});
  return pool;
}

}  // namespace

TEST_CASE("mode masks follow the ablation table") {
  std::vector<Origin> origins = {Origin::Real, Origin::Exemplar, Origin::Synthetic};
  struct Row {
    SddrMode mode;
    std::vector<char> cls, dis;
  };
  // columns: [new-class real, exemplar, synthetic]
  std::vector<Row> table = {
      {SddrMode::Off, {1, 1, 0}, {1, 1, 0}},
      {SddrMode::Distill, {1, 1, 0}, {1, 1, 1}},
      {SddrMode::DistillWoNew, {1, 1, 0}, {0, 1, 1}},
      {SddrMode::Replay, {1, 1, 1}, {1, 1, 0}},
      {SddrMode::Both, {1, 1, 1}, {1, 1, 1}},
      {SddrMode::SyntheticMemory, {1, 1, 1}, {1, 1, 1}},
  };
  for (const auto& row : table) {
    CAPTURE(static_cast<int>(row.mode));
    LossMasks masks = mode_masks(origins, row.mode);
    CHECK(masks.classification == row.cls);
    CHECK(masks.distill == row.dis);
    // Margin membership: exemplars only, never synthetic, in every mode.
    CHECK(masks.margin == std::vector<char>{0, 1, 0});
  }
}

TEST_CASE("icarl reduces to one-hot bce at the base step") {
  // Single sample, 2 classes, logits (0, 0): BCE = -ln(0.5) - ln(0.5) = 2 ln 2.
  Tensor logits = Tensor::zeros({1, 2});
  LossMasks masks = mode_masks(origins_all(1, Origin::Real), SddrMode::Off);
  auto res = icarl_loss(logits, nullptr, {0}, 0, masks);
  CHECK(res.breakdown.classification == doctest::Approx(2.0 * std::log(2.0)));
  CHECK(res.breakdown.distillation == 0.0);
  // Gradients: sigmoid(0) - target = +-0.5.
  CHECK(res.dlogits.at(0, 0) == doctest::Approx(-0.5));
  CHECK(res.dlogits.at(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("icarl distillation closed form: old sigmoids (0.8, 0.3), logits 0") {
  // distill = -[0.8 ln 0.5 + 0.2 ln 0.5] - [0.3 ln 0.5 + 0.7 ln 0.5] = 2 ln 2.
  Tensor logits = Tensor::zeros({1, 3});
  Tensor old_logits = Tensor::from({1, 2}, {std::log(0.8 / 0.2), std::log(0.3 / 0.7)});
  LossMasks masks = mode_masks(origins_all(1, Origin::Exemplar), SddrMode::Off);
  auto res = icarl_loss(logits, &old_logits, {2}, 2, masks);
  CHECK(res.breakdown.distillation == doctest::Approx(2.0 * std::log(2.0)));
  // Gradient on old columns: sigmoid(0) - old sigmoid.
  CHECK(res.dlogits.at(0, 0) == doctest::Approx(0.5 - 0.8));
  CHECK(res.dlogits.at(0, 1) == doctest::Approx(0.5 - 0.3));
}

TEST_CASE("icarl distillation is stationary when sigmoids match the old model") {
  Tensor old_logits = Tensor::from({1, 2}, {0.7, -1.2});
  Tensor logits = Tensor::from({1, 3}, {0.7, -1.2, 4.0});
  LossMasks masks = mode_masks(origins_all(1, Origin::Exemplar), SddrMode::Off);
  auto res = icarl_loss(logits, &old_logits, {2}, 2, masks);
  CHECK(res.dlogits.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(res.dlogits.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  // New column still pulls toward its one-hot target.
  CHECK(res.dlogits.at(0, 2) == doctest::Approx(sigmoid(4.0) - 1.0));
}

TEST_CASE("lucir distillation vanishes when features equal the old features") {
  Tensor features = Tensor::from({2, 3}, {1.0, 2.0, 3.0, -1.0, 0.5, 2.0});
  Tensor old_features = features;
  CosineHead head;
  head.class_weights = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  head.eta = 5.0;
  Tensor cos_logits = Tensor::zeros({2, 3});
  LossMasks masks = mode_masks(origins_all(2, Origin::Real), SddrMode::Off);
  auto res = lucir_loss(features, &old_features, cos_logits, head, {2, 2}, 2, LucirParams{},
                        masks);
  CHECK(std::fabs(res.breakdown.distillation) < 1e-10);
}

TEST_CASE("lucir margin term is zero when the hinge is inactive") {
  // Feature aligned with its ground-truth weight row and orthogonal to the
  // new-class row: score gap 1.0 >= margin 0.5.
  Tensor features = Tensor::from({1, 2}, {2.0, 0.0});
  CosineHead head;
  head.class_weights = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
  Tensor cos_logits = Tensor::zeros({1, 2});
  LossMasks masks;
  masks.classification = {1};
  masks.distill = {0};
  masks.margin = {1};
  Tensor old_features = features;
  auto res = lucir_loss(features, &old_features, cos_logits, head, {0}, 1, LucirParams{}, masks);
  CHECK(res.breakdown.margin == 0.0);
}

TEST_CASE("lucir margin term activates when a negative outranks the target") {
  // Feature aligned with the NEW class row, exemplar labeled class 0.
  Tensor features = Tensor::from({1, 2}, {0.0, 2.0});
  CosineHead head;
  head.class_weights = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
  Tensor cos_logits = Tensor::zeros({1, 2});
  LossMasks masks;
  masks.classification = {1};
  masks.distill = {0};
  masks.margin = {1};
  Tensor old_features = features;
  LucirParams params;  // margin 0.5, top_k 2 (only 1 new class available)
  auto res = lucir_loss(features, &old_features, cos_logits, head, {0}, 1, params, masks);
  // hinge = margin - <f,w_0> + <f,w_1> = 0.5 - 0 + 1 = 1.5
  CHECK(res.breakdown.margin == doctest::Approx(1.5));
}

TEST_CASE("lucir lambda scales with the old/new class ratio") {
  // 50 old, 10 new: lambda = 5 * sqrt(5). Measured through the loss value:
  // distillation term = lambda * mean(1 - cos).
  Tensor features = Tensor::from({1, 2}, {1.0, 0.0});
  Tensor old_features = Tensor::from({1, 2}, {0.0, 1.0});  // cos = 0 -> term = lambda
  CosineHead head;
  head.class_weights = Tensor::from({60, 2}, std::vector<double>(120, 0.5));
  Tensor cos_logits = Tensor::zeros({1, 60});
  LossMasks masks;
  masks.classification = {0};
  masks.distill = {1};
  masks.margin = {0};
  auto res = lucir_loss(features, &old_features, cos_logits, head, {55}, 50, LucirParams{},
                        masks);
  CHECK(res.breakdown.distillation == doctest::Approx(5.0 * std::sqrt(5.0)));
}

TEST_CASE("softmax ce averages over the classification mask only") {
  Tensor logits = Tensor::from({2, 2}, {0.0, 0.0, 100.0, 0.0});
  LossMasks masks;
  masks.classification = {1, 0};  // second sample excluded
  masks.distill = {0, 0};
  masks.margin = {0, 0};
  auto res = softmax_ce_loss(logits, {0, 1}, masks);
  CHECK(res.breakdown.classification == doctest::Approx(std::log(2.0)));
  CHECK(res.dlogits.at(1, 0) == 0.0);
  CHECK(res.dlogits.at(1, 1) == 0.0);
}

TEST_CASE("assemble_batch adds no synthetic samples at the base step") {
  auto [train, test] = make_gaussian_task(4, 3, 4.0, 6, 2, 3);
  SyntheticStore store;
  OracleSource source(std::make_shared<GaussianSampler>(make_gaussian_means(4, 3, 4.0, 3)), 0.0);
  update_synthetic(store, source, {spec_of(0), spec_of(1)}, 8, GenerationParams{});
  TrainerConfig cfg;
  cfg.sddr_mode = SddrMode::Both;
  cfg.synth_batch_size = 4;
  SplitMix64 rng(1);
  auto id_column = [](int c) { return c; };
  auto pool = pool_of(train);
  std::vector<EpochSampler::Entry> entries(pool.begin(), pool.begin() + 6);

  MixedBatch base = assemble_batch(entries, &store, cfg, 0, rng, id_column);
  CHECK(base.data.dim(0) == 6);
  CHECK(base.real_count == 6);
  for (Origin o : base.origins) CHECK(o != Origin::Synthetic);

  MixedBatch later = assemble_batch(entries, &store, cfg, 2, rng, id_column);
  CHECK(later.data.dim(0) == 10);
  CHECK(later.real_count == 6);
  std::size_t synth = 0;
  for (Origin o : later.origins)
    if (o == Origin::Synthetic) ++synth;
  CHECK(synth == 4);
  // Synthetic half comes after the real half.
  for (std::size_t i = 0; i < 6; ++i) CHECK(later.origins[i] != Origin::Synthetic);

  // off mode ignores the store entirely.
  cfg.sddr_mode = SddrMode::Off;
  MixedBatch off = assemble_batch(entries, &store, cfg, 2, rng, id_column);
  CHECK(off.data.dim(0) == 6);
}

TEST_CASE("train_step with lr zero leaves the network bit-identical") {
  auto [train, test] = make_gaussian_task(3, 4, 4.0, 8, 2, 5);
  TrainerConfig cfg;
  cfg.method = Method::Lucir;
  cfg.sgd = SgdConfig{0.0, 0.9, 0.0, {}};
  Network net = make_network(4, {5, 3}, HeadKind::Cosine, 3, 2);
  Network before = net;
  SplitMix64 rng(1);
  auto pool = pool_of(train);
  std::vector<EpochSampler::Entry> entries(pool.begin(), pool.begin() + 8);
  MixedBatch batch = assemble_batch(entries, nullptr, cfg, 0, rng, [](int c) { return c; });
  SgdState state;
  train_step(net, nullptr, batch, cfg, 0, 0, state);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    CHECK(net.layers[i].weights == before.layers[i].weights);
  }
  CHECK(std::get<CosineHead>(net.head).class_weights ==
        std::get<CosineHead>(before.head).class_weights);
}

TEST_CASE("mode off and mode both coincide at the base step") {
  auto [train, test] = make_gaussian_task(3, 4, 4.0, 8, 2, 5);
  auto run_mode = [&](SddrMode mode) {
    TrainerConfig cfg;
    cfg.method = Method::Icarl;
    cfg.sddr_mode = mode;
    Network net = make_network(4, {5, 3}, HeadKind::Linear, 3, 2);
    SplitMix64 rng(4);
    auto pool = pool_of(train);
    std::vector<EpochSampler::Entry> entries(pool.begin(), pool.begin() + 8);
    MixedBatch batch = assemble_batch(entries, nullptr, cfg, 0, rng, [](int c) { return c; });
    SgdState state;
    train_step(net, nullptr, batch, cfg, 0, 0, state);
    return net;
  };
  Network off = run_mode(SddrMode::Off);
  Network both = run_mode(SddrMode::Both);
  for (std::size_t i = 0; i < off.layers.size(); ++i) {
    CHECK(off.layers[i].weights == both.layers[i].weights);
  }
}

TEST_CASE("composite method losses pass the finite difference check") {
  auto [train, test] = make_gaussian_task(4, 4, 4.0, 4, 1, 5);
  SyntheticStore store;
  OracleSource source(std::make_shared<GaussianSampler>(make_gaussian_means(4, 4, 4.0, 5)), 1.0);
  update_synthetic(store, source, {spec_of(0), spec_of(1)}, 6, GenerationParams{});
  for (Method method : {Method::Icarl, Method::Lucir, Method::Finetune}) {
    TrainerConfig cfg;
    cfg.method = method;
    cfg.sddr_mode = SddrMode::Both;
    cfg.synth_batch_size = 4;
    Network net = make_network(4, {8, 4}, cfg.head_kind(), 4, 3);
    ModelSnapshot snapshot;
    snapshot.net = make_network(4, {8, 4}, cfg.head_kind(), 2, 11);
    snapshot.class_count = 2;
    SplitMix64 rng(9);
    auto pool = pool_of(train);
    std::vector<EpochSampler::Entry> entries(pool.begin(), pool.begin() + 6);
    MixedBatch batch = assemble_batch(entries, &store, cfg, 1, rng, [](int c) { return c; });
    LossFn fn = [&](const Network& n) {
      MethodLoss ml = method_loss(n, &snapshot, batch, cfg, 1);
      return LossEval{ml.breakdown.total, std::move(ml.grads)};
    };
    CAPTURE(static_cast<int>(method));
    CHECK(finite_diff_check(net, fn, 1e-6) < 1e-5);
  }
}

TEST_CASE("two separable classes per step train to high accuracy") {
  Scenario scenario = build_scenario(4, 1, 17);
  auto [train, test] = make_gaussian_task(4, 6, 8.0, 40, 20, 17);
  assign_train_indices(scenario, train);
  RunPlan plan;
  plan.trainer.method = Method::Lucir;
  plan.trainer.sddr_mode = SddrMode::Off;
  plan.trainer.epochs = 25;
  plan.trainer.real_batch_size = 32;
  plan.memory_per_class = 20;
  plan.hidden_dims = {16, 8};
  plan.run_seed = 17;
  RunOutput out = run_incremental(scenario, train, test, plan, nullptr);
  REQUIRE(out.report.steps.size() == 2);
  CHECK(out.report.final_accuracy > 0.95);
  CHECK(out.snapshots.size() == 2);
  CHECK(out.memory.total_size() == 4 * 20);
}

TEST_CASE("finetuning without memory forgets the base classes") {
  Scenario scenario = build_scenario(10, 5, 1993);
  auto [train, test] = make_gaussian_task(10, 8, 6.0, 30, 15, 1993);
  assign_train_indices(scenario, train);
  RunPlan plan;
  plan.trainer.method = Method::Finetune;
  plan.trainer.sddr_mode = SddrMode::Off;
  plan.trainer.epochs = 20;
  plan.trainer.real_batch_size = 32;
  plan.memory_per_class = 0;
  plan.hidden_dims = {32, 16};
  plan.run_seed = 1993;
  RunOutput out = run_incremental(scenario, train, test, plan, nullptr);
  REQUIRE(out.report.steps.size() == 6);
  CHECK(out.report.steps.back().base.value() < 0.2);
}

TEST_CASE("runs are bit-deterministic in config and seed") {
  Scenario scenario = build_scenario(6, 2, 3);
  auto [train, test] = make_gaussian_task(6, 5, 5.0, 12, 6, 3);
  assign_train_indices(scenario, train);
  auto source_sampler = std::make_shared<GaussianSampler>(make_gaussian_means(6, 5, 5.0, 3));
  RunPlan plan;
  plan.trainer.method = Method::Icarl;
  plan.trainer.sddr_mode = SddrMode::Both;
  plan.trainer.epochs = 3;
  plan.trainer.real_batch_size = 16;
  plan.trainer.synth_batch_size = 16;
  plan.memory_per_class = 3;
  plan.synth_per_class = 10;
  plan.hidden_dims = {8, 4};
  plan.run_seed = 3;
  auto run_once = [&] {
    OracleSource source(source_sampler, 0.5);
    return run_incremental(scenario, train, test, plan, &source);
  };
  RunOutput a = run_once();
  RunOutput b = run_once();
  REQUIRE(a.report.steps.size() == b.report.steps.size());
  for (std::size_t t = 0; t < a.report.steps.size(); ++t) {
    CHECK(a.report.steps[t].overall.correct == b.report.steps[t].overall.correct);
  }
  for (std::size_t t = 0; t < a.snapshots.size(); ++t) {
    for (std::size_t l = 0; l < a.snapshots[t].layers.size(); ++l) {
      CHECK(a.snapshots[t].layers[l].weights == b.snapshots[t].layers[l].weights);
    }
  }
  CHECK(a.store.manifest_json() == b.store.manifest_json());
  // The synthetic store grows to n * N_t, real memory to m * N_t.
  CHECK(a.store.total_size() == 10 * 6);
  CHECK(a.memory.total_size() == 3 * 6);
}

TEST_CASE("synthetic memory mode requires m = 0") {
  Scenario scenario = build_scenario(4, 1, 5);
  auto [train, test] = make_gaussian_task(4, 4, 5.0, 8, 4, 5);
  assign_train_indices(scenario, train);
  OracleSource source(std::make_shared<GaussianSampler>(make_gaussian_means(4, 4, 5.0, 5)), 0.0);
  RunPlan plan;
  plan.trainer.method = Method::Icarl;
  plan.trainer.sddr_mode = SddrMode::SyntheticMemory;
  plan.trainer.epochs = 1;
  plan.memory_per_class = 5;  // invalid: replay memory must stay empty
  plan.run_seed = 5;
  CHECK_THROWS_AS(run_incremental(scenario, train, test, plan, &source), ConfigError);
}

TEST_CASE("modes other than off require a generative source") {
  Scenario scenario = build_scenario(4, 1, 5);
  auto [train, test] = make_gaussian_task(4, 4, 5.0, 8, 4, 5);
  assign_train_indices(scenario, train);
  RunPlan plan;
  plan.trainer.sddr_mode = SddrMode::Both;
  CHECK_THROWS_AS(run_incremental(scenario, train, test, plan, nullptr), ConfigError);
}
