#include "sddr/trainers.hpp"

#include <algorithm>
#include <cmath>

#include "sddr/errors.hpp"

namespace sddr {

namespace {

bool is_real(Origin o) { return o == Origin::Real || o == Origin::Exemplar; }

// Accumulates g * d(cos(a, b))/da into da (and db when not null), with the
// same epsilon-guarded normalization the cosine head uses.
void add_cos_grad(const double* a, const double* b, std::size_t n, double g, double* da,
                  double* db) {
  double araw = 0.0, braw = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    araw += a[i] * a[i];
    braw += b[i] * b[i];
    dot += a[i] * b[i];
  }
  araw = std::sqrt(araw);
  braw = std::sqrt(braw);
  double an = araw + kCosineNormEps;
  double bn = braw + kCosineNormEps;
  double inv = 1.0 / (an * bn);
  for (std::size_t i = 0; i < n; ++i) da[i] += g * b[i] * inv;
  if (araw > 0.0) {
    double k = g * dot / (araw * an * an * bn);
    for (std::size_t i = 0; i < n; ++i) da[i] -= k * a[i];
  }
  if (db != nullptr) {
    for (std::size_t i = 0; i < n; ++i) db[i] += g * a[i] * inv;
    if (braw > 0.0) {
      double k = g * dot / (braw * bn * bn * an);
      for (std::size_t i = 0; i < n; ++i) db[i] -= k * b[i];
    }
  }
}

double cos_sim(const double* a, const double* b, std::size_t n) {
  double araw = 0.0, braw = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    araw += a[i] * a[i];
    braw += b[i] * b[i];
    dot += a[i] * b[i];
  }
  return dot / ((std::sqrt(araw) + kCosineNormEps) * (std::sqrt(braw) + kCosineNormEps));
}

}  // namespace

LossMasks mode_masks(const std::vector<Origin>& origins, SddrMode mode) {
  LossMasks masks;
  std::size_t n = origins.size();
  masks.classification.resize(n);
  masks.distill.resize(n);
  masks.margin.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Origin o = origins[i];
    bool real = is_real(o);
    char cls = 0, dis = 0;
    switch (mode) {
      case SddrMode::Off:
        cls = real;
        dis = real;
        break;
      case SddrMode::Distill:
        cls = real;
        dis = 1;
        break;
      case SddrMode::DistillWoNew:
        cls = real;
        dis = o == Origin::Exemplar || o == Origin::Synthetic;
        break;
      case SddrMode::Replay:
        cls = 1;
        dis = real;
        break;
      case SddrMode::Both:
        cls = 1;
        dis = 1;
        break;
      case SddrMode::SyntheticMemory:
        cls = 1;
        dis = 1;
        break;
    }
    masks.classification[i] = cls;
    masks.distill[i] = dis;
    masks.margin[i] = o == Origin::Exemplar;  // never synthetic, in any mode
  }
  return masks;
}

MixedBatch assemble_batch(const std::vector<EpochSampler::Entry>& real_entries,
                          const SyntheticStore* store, const TrainerConfig& cfg, int t,
                          SplitMix64& synth_rng,
                          const std::function<int(int)>& class_to_column) {
  bool wants_synth = cfg.uses_store(t) && cfg.sddr_mode != SddrMode::SyntheticMemory;
  std::vector<Sample> synth;
  if (wants_synth) {
    if (store == nullptr || store->total_size() == 0) {
      throw ConfigError("sddr mode requires a populated synthetic store at step " +
                        std::to_string(t));
    }
    synth = sample_synthetic_batch(*store, cfg.synth_batch_size, synth_rng);
  }

  std::size_t width = real_entries.empty() ? synth.front().data.size()
                                           : real_entries.front().sample->data.size();
  std::size_t total = real_entries.size() + synth.size();
  MixedBatch batch;
  batch.data = Tensor::zeros({total, width});
  batch.labels.reserve(total);
  batch.origins.reserve(total);
  batch.real_count = real_entries.size();
  std::size_t row = 0;
  for (const auto& entry : real_entries) {
    std::copy(entry.sample->data.values().begin(), entry.sample->data.values().end(),
              batch.data.data() + row * width);
    batch.labels.push_back(class_to_column(entry.sample->label));
    batch.origins.push_back(entry.origin);
    ++row;
  }
  for (const auto& sample : synth) {
    std::copy(sample.data.values().begin(), sample.data.values().end(),
              batch.data.data() + row * width);
    batch.labels.push_back(class_to_column(sample.label));
    batch.origins.push_back(Origin::Synthetic);
    ++row;
  }
  return batch;
}

IcarlLossResult icarl_loss(const Tensor& logits, const Tensor* old_logits,
                           const std::vector<int>& labels, std::size_t old_class_count,
                           LossMasks masks) {
  std::size_t b_count = logits.dim(0);
  std::size_t n_classes = logits.dim(1);
  if (old_class_count > 0 && old_logits == nullptr) {
    throw TrainingError("icarl: old logits required when old classes exist");
  }
  IcarlLossResult res;
  res.dlogits = Tensor::zeros(logits.shape());
  double inv_b = 1.0 / static_cast<double>(b_count);
  // Stable BCE on logit z with target p: max(z,0) - z*p + log(1+exp(-|z|)).
  auto bce = [](double z, double p) {
    return std::max(z, 0.0) - z * p + std::log1p(std::exp(-std::fabs(z)));
  };
  auto sigmoid = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  for (std::size_t b = 0; b < b_count; ++b) {
    bool distilled = masks.distill[b] != 0 && old_class_count > 0;
    bool classified = masks.classification[b] != 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
      double z = logits.at(b, c);
      if (c < old_class_count && distilled) {
        double target = sigmoid(old_logits->at(b, c));
        res.breakdown.distillation += bce(z, target) * inv_b;
        res.dlogits.at(b, c) += (sigmoid(z) - target) * inv_b;
      } else if (classified) {
        double target = static_cast<int>(c) == labels[b] ? 1.0 : 0.0;
        res.breakdown.classification += bce(z, target) * inv_b;
        res.dlogits.at(b, c) += (sigmoid(z) - target) * inv_b;
      }
    }
  }
  res.breakdown.total = res.breakdown.classification + res.breakdown.distillation;
  if (!std::isfinite(res.breakdown.total)) throw TrainingError("icarl: non-finite loss");
  res.breakdown.masks = std::move(masks);
  return res;
}

CeLossResult softmax_ce_loss(const Tensor& logits, const std::vector<int>& labels,
                             LossMasks masks) {
  std::size_t b_count = logits.dim(0);
  std::size_t n_classes = logits.dim(1);
  CeLossResult res;
  res.dlogits = Tensor::zeros(logits.shape());
  std::size_t masked = 0;
  for (std::size_t b = 0; b < b_count; ++b) masked += masks.classification[b] != 0;
  if (masked > 0) {
    double inv = 1.0 / static_cast<double>(masked);
    for (std::size_t b = 0; b < b_count; ++b) {
      if (masks.classification[b] == 0) continue;
      double mx = logits.at(b, 0);
      for (std::size_t c = 1; c < n_classes; ++c) mx = std::max(mx, logits.at(b, c));
      double denom = 0.0;
      for (std::size_t c = 0; c < n_classes; ++c) denom += std::exp(logits.at(b, c) - mx);
      auto label = static_cast<std::size_t>(labels[b]);
      res.breakdown.classification +=
          (std::log(denom) - (logits.at(b, label) - mx)) * inv;
      for (std::size_t c = 0; c < n_classes; ++c) {
        double p = std::exp(logits.at(b, c) - mx) / denom;
        res.dlogits.at(b, c) += (p - (c == label ? 1.0 : 0.0)) * inv;
      }
    }
  }
  res.breakdown.total = res.breakdown.classification;
  if (!std::isfinite(res.breakdown.total)) throw TrainingError("non-finite classification loss");
  res.breakdown.masks = std::move(masks);
  return res;
}

LucirLossResult lucir_loss(const Tensor& features, const Tensor* old_features,
                           const Tensor& cos_logits, const CosineHead& head,
                           const std::vector<int>& labels, std::size_t old_class_count,
                           const LucirParams& params, LossMasks masks) {
  std::size_t b_count = features.dim(0);
  std::size_t fdim = features.dim(1);
  std::size_t n_classes = cos_logits.dim(1);
  if (old_class_count > 0 && old_features == nullptr) {
    throw TrainingError("lucir: old features required when old classes exist");
  }

  LucirLossResult res;
  // Classification: softmax CE over the cosine logits.
  CeLossResult ce = softmax_ce_loss(cos_logits, labels, masks);
  res.breakdown.classification = ce.breakdown.classification;
  res.dlogits = std::move(ce.dlogits);
  masks = std::move(ce.breakdown.masks);
  res.dfeatures = Tensor::zeros(features.shape());
  res.dclass_weights = Tensor::zeros(head.class_weights.shape());

  // Feature distillation: lambda_t * mean(1 - cos(f, f_old)).
  if (old_class_count > 0) {
    std::size_t new_count = n_classes - old_class_count;
    double lambda = params.lambda_base *
                    std::sqrt(static_cast<double>(old_class_count) /
                              static_cast<double>(new_count));
    std::size_t masked = 0;
    for (std::size_t b = 0; b < b_count; ++b) masked += masks.distill[b] != 0;
    if (masked > 0) {
      double scale = lambda / static_cast<double>(masked);
      for (std::size_t b = 0; b < b_count; ++b) {
        if (masks.distill[b] == 0) continue;
        const double* f = features.data() + b * fdim;
        const double* fo = old_features->data() + b * fdim;
        res.breakdown.distillation += scale * (1.0 - cos_sim(f, fo, fdim));
        add_cos_grad(f, fo, fdim, -scale, res.dfeatures.data() + b * fdim, nullptr);
      }
    }

    // Margin ranking over real exemplars of old classes: for the top_k new
    // columns by normalized score, hinge(margin - s_gt + s_neg).
    std::size_t margin_count = 0;
    for (std::size_t b = 0; b < b_count; ++b) margin_count += masks.margin[b] != 0;
    if (margin_count > 0 && new_count > 0) {
      double inv = 1.0 / static_cast<double>(margin_count);
      for (std::size_t b = 0; b < b_count; ++b) {
        if (masks.margin[b] == 0) continue;
        auto gt = static_cast<std::size_t>(labels[b]);
        if (gt >= old_class_count) continue;  // exemplars are old-class by construction
        const double* f = features.data() + b * fdim;
        const double* wgt = head.class_weights.data() + gt * fdim;
        double s_gt = cos_sim(f, wgt, fdim);
        // Scores of the new-class columns.
        std::vector<std::pair<double, std::size_t>> scores;
        for (std::size_t c = old_class_count; c < n_classes; ++c) {
          scores.emplace_back(cos_sim(f, head.class_weights.data() + c * fdim, fdim), c);
        }
        std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(params.top_k),
                                              scores.size());
        std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(k),
                          scores.end(), [](const auto& a, const auto& b) {
                            return a.first > b.first ||
                                   (a.first == b.first && a.second < b.second);
                          });
        for (std::size_t i = 0; i < k; ++i) {
          double hinge = params.margin - s_gt + scores[i].first;
          if (hinge <= 0.0) continue;
          res.breakdown.margin += hinge * inv;
          std::size_t neg = scores[i].second;
          add_cos_grad(f, wgt, fdim, -inv, res.dfeatures.data() + b * fdim,
                       res.dclass_weights.data() + gt * fdim);
          add_cos_grad(f, head.class_weights.data() + neg * fdim, fdim, inv,
                       res.dfeatures.data() + b * fdim,
                       res.dclass_weights.data() + neg * fdim);
        }
      }
    }
  }
  res.breakdown.total =
      res.breakdown.classification + res.breakdown.distillation + res.breakdown.margin;
  if (!std::isfinite(res.breakdown.total)) throw TrainingError("lucir: non-finite loss");
  res.breakdown.masks = std::move(masks);
  return res;
}

MethodLoss method_loss(const Network& net, const ModelSnapshot* snapshot, const MixedBatch& batch,
                       const TrainerConfig& cfg, int t) {
  if (t > 0 && snapshot == nullptr && cfg.method != Method::Finetune) {
    throw TrainingError("snapshot required at step " + std::to_string(t));
  }
  ForwardCache cache = forward_cached(net, batch.data);
  LossMasks masks = mode_masks(batch.origins, cfg.sddr_mode);
  std::size_t old_count = snapshot != nullptr ? snapshot->class_count : 0;

  MethodLoss out;
  switch (cfg.method) {
    case Method::Finetune: {
      CeLossResult res = softmax_ce_loss(cache.out.logits, batch.labels, std::move(masks));
      out.breakdown = std::move(res.breakdown);
      out.grads = backward(net, cache, res.dlogits);
      break;
    }
    case Method::Icarl: {
      Tensor old_logits;
      if (old_count > 0) old_logits = forward(snapshot->net, batch.data).logits;
      IcarlLossResult res = icarl_loss(cache.out.logits, old_count > 0 ? &old_logits : nullptr,
                                       batch.labels, old_count, std::move(masks));
      out.breakdown = std::move(res.breakdown);
      out.grads = backward(net, cache, res.dlogits);
      break;
    }
    case Method::Lucir: {
      Tensor old_features;
      if (old_count > 0) old_features = forward(snapshot->net, batch.data).features;
      LucirLossResult res =
          lucir_loss(cache.out.features, old_count > 0 ? &old_features : nullptr,
                     cache.out.logits, net.cosine_head(), batch.labels, old_count, cfg.lucir,
                     std::move(masks));
      out.breakdown = std::move(res.breakdown);
      out.grads = backward(net, cache, res.dlogits, &res.dfeatures);
      for (std::size_t i = 0; i < out.grads.head_weights.size(); ++i) {
        out.grads.head_weights[i] += res.dclass_weights[i];
      }
      break;
    }
  }
  return out;
}

LossBreakdown train_step(Network& net, const ModelSnapshot* snapshot, const MixedBatch& batch,
                         const TrainerConfig& cfg, int t, int epoch, SgdState& state) {
  MethodLoss loss = method_loss(net, snapshot, batch, cfg, t);
  sgd_step(net, loss.grads, cfg.sgd, state, epoch);
  return loss.breakdown;
}

RunOutput run_incremental(const Scenario& scenario, const Dataset& train, const Dataset& test,
                          const RunPlan& plan, const GenerativeSource* source,
                          const RunHooks* hooks) {
  const TrainerConfig& cfg = plan.trainer;
  if (cfg.sddr_mode == SddrMode::SyntheticMemory && plan.memory_per_class != 0) {
    throw ConfigError("synthetic_memory mode requires m = 0 real exemplars");
  }
  if (cfg.sddr_mode != SddrMode::Off && source == nullptr) {
    throw ConfigError("sddr mode requires a generative source");
  }
  std::vector<int> column_to_class = scenario.class_order;
  std::vector<int> class_to_col(static_cast<std::size_t>(scenario.num_classes), -1);
  for (std::size_t i = 0; i < column_to_class.size(); ++i) {
    class_to_col[static_cast<std::size_t>(column_to_class[i])] = static_cast<int>(i);
  }
  auto to_col = [&class_to_col](int class_id) { return class_to_col[static_cast<std::size_t>(class_id)]; };

  RunOutput out;
  out.memory = ReplayMemory(plan.memory_policy);
  std::size_t input_dim = train.samples.front().data.size();
  Network net;
  std::vector<StepMetrics> metrics;

  int total_steps = static_cast<int>(scenario.steps.size());
  for (int t = 0; t < total_steps; ++t) {
    try {
      const StepSpec& step = scenario.steps[static_cast<std::size_t>(t)];
      auto n_seen = static_cast<std::size_t>(scenario.cumulative_count(t));
      std::optional<ModelSnapshot> snapshot;
      if (t == 0) {
        net = make_network(input_dim, plan.hidden_dims, cfg.head_kind(), n_seen, plan.run_seed);
      } else {
        snapshot = ModelSnapshot{net, net.num_classes()};
        extend_head(net, n_seen, plan.run_seed);
      }

      std::vector<EpochSampler::Entry> pool;
      if (cfg.sddr_mode == SddrMode::SyntheticMemory && t > 0) {
        for (std::size_t idx : step.train_indices) {
          pool.push_back({&train.samples[idx], Origin::Real});
        }
        for (const auto& [class_id, samples] : out.store.per_class()) {
          for (const auto& s : samples) pool.push_back({&s, Origin::Synthetic});
        }
      } else {
        pool = real_pool(train, step.train_indices, out.memory);
      }

      SplitMix64 shuffle_rng(mix_seed({plan.run_seed, static_cast<std::uint64_t>(t), 0x73687566ULL}));
      SplitMix64 synth_rng(mix_seed({plan.run_seed, static_cast<std::uint64_t>(t), 0x73796eULL}));
      EpochSampler sampler(std::move(pool), cfg.real_batch_size, &shuffle_rng);
      SgdState sgd_state;
      for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        sampler.begin_epoch();
        while (true) {
          std::vector<EpochSampler::Entry> real_part = sampler.next_batch();
          if (real_part.empty()) break;
          MixedBatch batch = assemble_batch(real_part, &out.store, cfg, t, synth_rng, to_col);
          LossBreakdown breakdown =
              train_step(net, snapshot ? &*snapshot : nullptr, batch, cfg, t, epoch, sgd_state);
          if (hooks != nullptr && hooks->on_batch) hooks->on_batch(t, breakdown);
        }
      }

      // Algorithm order: memory update, then synthetic update, then eval.
      if (plan.memory_per_class > 0 && cfg.sddr_mode != SddrMode::SyntheticMemory) {
        out.memory.update(train, step.train_indices, net, plan.memory_per_class,
                          mix_seed({plan.run_seed, static_cast<std::uint64_t>(t), 0x6d656dULL}));
      }
      if (source != nullptr) {
        std::vector<LabelSpec> specs;
        for (int class_id : step.class_ids) specs.push_back(train.label_spec(class_id));
        update_synthetic(out.store, *source, specs, plan.synth_per_class, plan.gen_params);
      }

      metrics.push_back(evaluate_step(net, test, scenario.classes_through(t),
                                      scenario.steps.front().class_ids, column_to_class,
                                      cfg.effective_classifier(),
                                      &out.memory, t));
      out.snapshots.push_back(net);
    } catch (const std::exception& e) {
      throw TrainingError("run aborted at step " + std::to_string(t) + ": " + e.what());
    }
  }
  out.report = RunReport::build(std::move(metrics), scenario.num_incremental_steps());
  return out;
}

}  // namespace sddr
