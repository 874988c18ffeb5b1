#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "sddr/eval.hpp"
#include "sddr/memory.hpp"
#include "sddr/nn.hpp"
#include "sddr/scenario.hpp"
#include "sddr/synthetic.hpp"

namespace sddr {

enum class Method { Icarl, Lucir, Finetune };

// Ablation modes for the synthetic store S:
//   off              plain D_t union M batching, S unused
//   distill          S enters the distillation loss only
//   distill_wo_new   like distill, and new-class real samples leave the
//                    distillation term (exemplars + synthetic only)
//   replay           S enters the classification loss only
//   both             S enters both losses
//   synthetic_memory S replaces the real replay memory (m = 0)
enum class SddrMode { Off, Distill, DistillWoNew, Replay, Both, SyntheticMemory };

struct LucirParams {
  double lambda_base = 5.0;
  double margin = 0.5;
  int top_k = 2;
};

struct TrainerConfig {
  Method method = Method::Lucir;
  SddrMode sddr_mode = SddrMode::Off;
  int epochs = 40;
  std::size_t real_batch_size = 128;
  std::size_t synth_batch_size = 128;
  LucirParams lucir;
  SgdConfig sgd{0.05, 0.9, 1e-4, {{25, 0.1}, {35, 0.1}}};
  // Defaults to the method's native classifier: NME for iCaRL, the
  // cosine-softmax head for LUCIR, softmax for finetune.
  std::optional<ClassifierKind> eval_classifier;

  ClassifierKind effective_classifier() const {
    if (eval_classifier) return *eval_classifier;
    return method == Method::Icarl ? ClassifierKind::Nme : ClassifierKind::Softmax;
  }
  HeadKind head_kind() const {
    return method == Method::Lucir ? HeadKind::Cosine : HeadKind::Linear;
  }
  bool uses_store(int t) const {
    return t > 0 && sddr_mode != SddrMode::Off;
  }
};

// Frozen copy of the model at the end of the previous step.
struct ModelSnapshot {
  Network net;
  std::size_t class_count = 0;
};

// Per-sample membership in each loss term, recorded for every batch.
struct LossMasks {
  std::vector<char> classification;
  std::vector<char> distill;
  std::vector<char> margin;
};

LossMasks mode_masks(const std::vector<Origin>& origins, SddrMode mode);

struct LossBreakdown {
  double classification = 0.0;
  double distillation = 0.0;
  double margin = 0.0;
  double total = 0.0;
  LossMasks masks;
};

// Real part first (origins Real/Exemplar, or Synthetic in synthetic-memory
// mode), synthetic half appended after it.
struct MixedBatch {
  Tensor data;  // [B, input_dim]
  std::vector<int> labels;  // head column labels
  std::vector<Origin> origins;
  std::size_t real_count = 0;
};

MixedBatch assemble_batch(const std::vector<EpochSampler::Entry>& real_entries,
                          const SyntheticStore* store, const TrainerConfig& cfg, int t,
                          SplitMix64& synth_rng,
                          const std::function<int(int)>& class_to_column);

// iCaRL: per-sample per-class binary cross-entropy on sigmoid outputs. For
// old-class columns of samples in the distill mask the target is the old
// model's sigmoid; everywhere else (for samples in the classification mask)
// the target is one-hot. Both terms divided by batch size.
struct IcarlLossResult {
  LossBreakdown breakdown;
  Tensor dlogits;
};
IcarlLossResult icarl_loss(const Tensor& logits, const Tensor* old_logits,
                           const std::vector<int>& labels, std::size_t old_class_count,
                           LossMasks masks);

// LUCIR: softmax cross-entropy on the cosine logits over the classification
// mask, plus lambda_t * mean(1 - cos(f, f_old)) over the distill mask, plus
// a margin ranking term over real exemplars of old classes against their
// top-k hardest new-class columns. lambda_t = lambda_base *
// sqrt(old / new_in_step).
struct LucirLossResult {
  LossBreakdown breakdown;
  Tensor dlogits;
  Tensor dfeatures;
  Tensor dclass_weights;
};
LucirLossResult lucir_loss(const Tensor& features, const Tensor* old_features,
                           const Tensor& cos_logits, const CosineHead& head,
                           const std::vector<int>& labels, std::size_t old_class_count,
                           const LucirParams& params, LossMasks masks);

// Plain softmax cross-entropy over the classification mask (finetune).
struct CeLossResult {
  LossBreakdown breakdown;
  Tensor dlogits;
};
CeLossResult softmax_ce_loss(const Tensor& logits, const std::vector<int>& labels,
                             LossMasks masks);

// Method loss with mode masks applied, plus parameter gradients; the
// gradient-check suite runs through this same path.
struct MethodLoss {
  LossBreakdown breakdown;
  Gradients grads;
};
MethodLoss method_loss(const Network& net, const ModelSnapshot* snapshot, const MixedBatch& batch,
                       const TrainerConfig& cfg, int t);

// One SGD update from the method loss.
LossBreakdown train_step(Network& net, const ModelSnapshot* snapshot, const MixedBatch& batch,
                         const TrainerConfig& cfg, int t, int epoch, SgdState& state);

struct RunPlan {
  TrainerConfig trainer;
  std::vector<std::size_t> hidden_dims{32, 16};
  std::size_t memory_per_class = 20;
  ExemplarPolicy memory_policy = ExemplarPolicy::Herding;
  int synth_per_class = 100;  // n
  GenerationParams gen_params;
  std::uint64_t run_seed = kDefaultSeed;
};

struct RunHooks {
  std::function<void(int step, const LossBreakdown&)> on_batch;
};

struct RunOutput {
  std::vector<Network> snapshots;  // end-of-step models, length T+1
  RunReport report;
  ReplayMemory memory;
  SyntheticStore store;
};

// Full incremental loop: per step extend the head, train E epochs on mixed
// batches, update the replay memory, update the synthetic store, evaluate.
RunOutput run_incremental(const Scenario& scenario, const Dataset& train, const Dataset& test,
                          const RunPlan& plan, const GenerativeSource* source,
                          const RunHooks* hooks = nullptr);

}  // namespace sddr
